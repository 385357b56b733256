#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sys/wait.h>

#include "gacd/data.hpp"
#include "gacd/nn/model.hpp"
#include "gacd/runlog.hpp"

using namespace gacd;
namespace fs = std::filesystem;

namespace {

const fs::path kWork = "/tmp/gacd_cli_test";

int run_cli(const std::string& args) {
    const std::string cmd =
        std::string(GACD_CLI_PATH) + " " + args + " >> " + (kWork / "cli.log").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void write_config() {
    nlohmann::json cfg = {
        {"seed", 5},
        {"output_dir", (kWork / "out").string()},
        {"dataset", {{"name", "fixture"}, {"transfer_name", "fixture_shift"}}},
        {"teacher", {{"checkpoint", (kWork / "teacher.ckpt").string()}}},
        {"student", {{"arch", "tiny_cnn"}, {"embed_dim", 32}}},
        {"critic", {{"temperature", 0.5}, {"negatives", 16}}},
        {"distill",
         {{"epochs", 1}, {"batch_size", 128}, {"lr", 0.0005}, {"momentum", 0.5},
          {"weight_decay", 0.0}, {"teacher_head_lr_scale", 0.01}}},
        {"scatter", {{"steps", 2}}},
        {"eval_attack", {{"steps", 3}}},
        {"kd", {{"epochs", 1}, {"batch_size", 128}, {"lr", 0.01}}},
        {"finetune",
         {{"epochs", 1}, {"batch_size", 128}, {"lr", 0.01},
          {"attack", {{"epsilon", 0.0}, {"step_size", 0.0}}}}},
        {"probe", {{"epochs", 2}, {"batch_size", 128}, {"attack", {{"steps", 2}}}}},
    };
    std::ofstream out(kWork / "cfg.json");
    out << cfg.dump(2);
}

}  // namespace

TEST_CASE("cli pipeline runs hermetically end to end") {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    write_config();
    const std::string cfg = " --config " + (kWork / "cfg.json").string();

    // validation failures exit nonzero before touching outputs
    CHECK(run_cli("distill --config /nonexistent.json") != 0);
    CHECK(run_cli("distill" + cfg) != 0);  // teacher checkpoint missing
    CHECK_FALSE(fs::exists(kWork / "out" / "records.jsonl"));

    // provide a teacher and run the stages
    Dataset probe_shape = ingest_dataset("fixture", "");
    Classifier teacher(nn::Backbone::make("tiny_cnn", probe_shape.shape, 3), 2, 3);
    teacher.save_file((kWork / "teacher.ckpt").string(), 0);

    CHECK(run_cli("distill" + cfg) == 0);
    CHECK(fs::exists(kWork / "out" / "distill_latest.ckpt"));

    // resume with a conflicting config is refused
    CHECK(run_cli("distill" + cfg + " --resume --set distill.lr=0.9") != 0);

    CHECK(run_cli("kd-baseline" + cfg) == 0);
    CHECK(run_cli("finetune --scratch --out undefended.ckpt" + cfg) == 0);
    CHECK(run_cli("finetune" + cfg) == 0);  // from distill_latest.ckpt
    CHECK(fs::exists(kWork / "out" / "finetuned.ckpt"));

    const std::string model = " --model " + (kWork / "out" / "finetuned.ckpt").string();
    CHECK(run_cli("eval --run-id e1" + cfg + model) == 0);
    CHECK(run_cli("eval --run-id e2" + cfg + model) == 0);
    CHECK(run_cli("eval --no-attack" + cfg + model) == 0);
    CHECK(run_cli("transfer" + cfg + " --model " +
                  (kWork / "out" / "distill_latest.ckpt").string()) == 0);
    CHECK(run_cli("analyze" + cfg + model) == 0);

    // repeated eval with the same seed gives identical metrics
    auto records = read_records((kWork / "out" / "records.jsonl").string());
    nlohmann::json m1, m2;
    int evals = 0, distills = 0, transfers = 0, analyzes = 0;
    for (const ResultRecord& r : records) {
        CHECK(r.config_hash != 0);
        if (r.stage == "eval" && r.run_id == "e1") m1 = r.metrics;
        if (r.stage == "eval" && r.run_id == "e2") m2 = r.metrics;
        evals += r.stage == "eval";
        distills += r.stage == "distill";
        transfers += r.stage == "transfer";
        analyzes += r.stage == "analyze";
    }
    CHECK(evals == 3);
    CHECK(distills >= 2);  // gacd epochs + kd epochs
    CHECK(transfers == 1);
    CHECK(analyzes == 1);
    CHECK(m1 == m2);

    // analysis artifacts carry the config hash
    bool found_dump = false;
    for (const auto& entry : fs::directory_iterator(kWork / "out"))
        if (entry.path().filename().string().rfind("features_", 0) == 0) found_dump = true;
    CHECK(found_dump);

    // report renders one table over the collected records
    const std::string report_log = (kWork / "report.txt").string();
    const std::string cmd = std::string(GACD_CLI_PATH) + " report " +
                            (kWork / "out").string() + " > " + report_log + " 2>&1";
    REQUIRE(std::system(cmd.c_str()) == 0);
    std::ifstream in(report_log);
    std::string text((std::istreambuf_iterator<char>(in)), {});
    CHECK(text.find("Nat.") != std::string::npos);
    CHECK(text.find("Adv.") != std::string::npos);
    CHECK(text.find("e1 [eval]") != std::string::npos);
}
