#ifndef GACD_RUNLOG_HPP
#define GACD_RUNLOG_HPP

#include <json.hpp>
#include <string>
#include <vector>

#include "gacd/common.hpp"

namespace gacd {

inline constexpr const char* kCodeVersion = "gacd/0.1.0";

// One line of the append-only results log. Every record carries the config
// hash of the run that produced it.
struct ResultRecord {
    std::string run_id;
    uint64_t config_hash = 0;
    std::string stage;  // distill | finetune | eval | transfer | analyze
    nlohmann::json metrics;
    std::string timestamp;
    std::string code_version = kCodeVersion;

    nlohmann::json to_json() const;
    static ResultRecord from_json(const nlohmann::json& j);
};

std::string utc_timestamp();

// Appends one JSONL line (creates parent directories).
void append_record(const std::string& path, const ResultRecord& rec);
std::vector<ResultRecord> read_records(const std::string& path);

// Renders eval/transfer records as an aligned Nat./Adv. table. Throws when
// records disagree on class count.
std::string render_report(const std::vector<ResultRecord>& records);

}  // namespace gacd

#endif  // GACD_RUNLOG_HPP
