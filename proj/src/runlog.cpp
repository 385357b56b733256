#include "gacd/runlog.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace gacd {

using nlohmann::json;

json ResultRecord::to_json() const {
    return json{{"run_id", run_id},       {"config_hash", config_hash},
                {"stage", stage},         {"metrics", metrics},
                {"timestamp", timestamp}, {"code_version", code_version}};
}

ResultRecord ResultRecord::from_json(const json& j) {
    ResultRecord r;
    r.run_id = j.at("run_id").get<std::string>();
    r.config_hash = j.at("config_hash").get<uint64_t>();
    r.stage = j.at("stage").get<std::string>();
    r.metrics = j.at("metrics");
    r.timestamp = j.value("timestamp", "");
    r.code_version = j.value("code_version", "");
    return r;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

void append_record(const std::string& path, const ResultRecord& rec) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::app);
    if (!out) throw std::runtime_error("cannot append to record log: " + path);
    out << rec.to_json().dump() << "\n";
    out.flush();
}

std::vector<ResultRecord> read_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read record log: " + path);
    std::vector<ResultRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(ResultRecord::from_json(json::parse(line)));
    }
    return out;
}

std::string render_report(const std::vector<ResultRecord>& records) {
    struct Row {
        std::string name;
        std::string stage;
        double nat;
        double adv;
        bool has_adv;
    };
    std::vector<Row> rows;
    int num_classes = -1;
    for (const ResultRecord& r : records) {
        if (!r.metrics.contains("natural_pct")) continue;
        if (r.metrics.contains("num_classes")) {
            const int k = r.metrics.at("num_classes").get<int>();
            if (num_classes >= 0 && k != num_classes)
                throw std::runtime_error("refusing to mix records with conflicting class counts (" +
                                         std::to_string(num_classes) + " vs " + std::to_string(k) +
                                         ")");
            num_classes = k;
        }
        Row row;
        row.name = r.run_id;
        row.stage = r.stage;
        row.nat = r.metrics.at("natural_pct").get<double>();
        row.has_adv = r.metrics.contains("adversarial_pct");
        row.adv = row.has_adv ? r.metrics.at("adversarial_pct").get<double>() : 0.0;
        rows.push_back(row);
    }

    size_t name_w = 10;
    for (const Row& r : rows) name_w = std::max(name_w, r.name.size() + r.stage.size() + 3);

    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(name_w)) << "Method" << std::right
       << std::setw(9) << "Nat." << std::setw(9) << "Adv." << "\n";
    os << std::string(name_w + 18, '-') << "\n";
    os << std::fixed << std::setprecision(2);
    for (const Row& r : rows) {
        os << std::left << std::setw(static_cast<int>(name_w)) << (r.name + " [" + r.stage + "]")
           << std::right << std::setw(9) << r.nat;
        if (r.has_adv)
            os << std::setw(9) << r.adv;
        else
            os << std::setw(9) << "-";
        os << "\n";
    }
    return os.str();
}

}  // namespace gacd
