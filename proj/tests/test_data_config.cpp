#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gacd/config.hpp"
#include "gacd/data.hpp"
#include "gacd/runlog.hpp"

using namespace gacd;
namespace fs = std::filesystem;

namespace {

const fs::path kTmp = "/tmp/gacd_data_test";

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("fixture dataset loads hermetically with the documented shape") {
    Dataset ds = ingest_dataset("fixture", "");
    CHECK(ds.num_classes == 2);
    CHECK(ds.shape.channels == 3);
    CHECK(ds.shape.height == 32);
    CHECK(ds.shape.width == 32);
    CHECK(ds.train.size() == 512);  // 2 classes x 256
    CHECK(ds.test.size() == 128);
    CHECK(ds.train.x.minCoeff() >= 0.0);
    CHECK(ds.train.x.maxCoeff() <= 1.0);

    int class0 = 0;
    for (int y : ds.train.y) class0 += (y == 0) ? 1 : 0;
    CHECK(class0 == 256);

    // deterministic generation, stable checksums
    Dataset again = ingest_dataset("fixture", "");
    CHECK(again.train.checksum == ds.train.checksum);
    CHECK(again.test.checksum == ds.test.checksum);

    Dataset shifted = ingest_dataset("fixture_shift", "");
    CHECK(shifted.train.checksum != ds.train.checksum);
    CHECK(shifted.num_classes == 2);
}

TEST_CASE("unknown dataset names list the supported ones") {
    try {
        ingest_dataset("imagenet", "/nowhere");
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("cifar10") != std::string::npos);
        CHECK(msg.find("fixture") != std::string::npos);
    }
}

TEST_CASE("cifar10 loader parses the canonical record layout") {
    const fs::path dir = kTmp / "cifar10";
    fs::remove_all(dir);
    auto rng = subrng(77, {1});
    std::uniform_int_distribution<int> byte(0, 255);

    std::vector<unsigned char> expected_first_record;
    for (int b = 1; b <= 5; ++b) {
        std::vector<unsigned char> buf;
        for (int rec = 0; rec < 4; ++rec) {
            buf.push_back(static_cast<unsigned char>(rec % 10));  // label
            for (int i = 0; i < 3072; ++i) buf.push_back(static_cast<unsigned char>(byte(rng)));
        }
        if (b == 1) expected_first_record.assign(buf.begin(), buf.begin() + 3073);
        write_bytes(dir / ("data_batch_" + std::to_string(b) + ".bin"), buf);
    }
    std::vector<unsigned char> testbuf;
    for (int rec = 0; rec < 3; ++rec) {
        testbuf.push_back(7);
        for (int i = 0; i < 3072; ++i) testbuf.push_back(static_cast<unsigned char>(byte(rng)));
    }
    write_bytes(dir / "test_batch.bin", testbuf);

    Dataset ds = ingest_dataset("cifar10", dir.string());
    CHECK(ds.train.size() == 20);
    CHECK(ds.test.size() == 3);
    CHECK(ds.num_classes == 10);
    CHECK(ds.train.y[0] == 0);
    CHECK(ds.train.y[1] == 1);
    CHECK(ds.test.y[0] == 7);
    // pixel scaling: byte/255
    CHECK(ds.train.x(0, 0) == doctest::Approx(expected_first_record[1] / 255.0).epsilon(1e-12));
    CHECK(ds.train.x(3071, 0) ==
          doctest::Approx(expected_first_record[3072] / 255.0).epsilon(1e-12));
}

TEST_CASE("cifar10 loader rejects corrupt and missing archives") {
    const fs::path dir = kTmp / "cifar10_bad";
    fs::remove_all(dir);
    CHECK_THROWS_WITH_AS(ingest_dataset("cifar10", dir.string()),
                         doctest::Contains("missing dataset file"), std::runtime_error);

    for (int b = 1; b <= 5; ++b)
        write_bytes(dir / ("data_batch_" + std::to_string(b) + ".bin"),
                    std::vector<unsigned char>(3073));
    write_bytes(dir / "test_batch.bin", std::vector<unsigned char>(100));  // truncated
    CHECK_THROWS_WITH_AS(ingest_dataset("cifar10", dir.string()), doctest::Contains("corrupt"),
                         std::runtime_error);
}

TEST_CASE("cifar100 loader reads the fine label") {
    const fs::path dir = kTmp / "cifar100";
    fs::remove_all(dir);
    std::vector<unsigned char> buf;
    for (int rec = 0; rec < 2; ++rec) {
        buf.push_back(3);                                        // coarse
        buf.push_back(static_cast<unsigned char>(42 + rec));     // fine
        for (int i = 0; i < 3072; ++i) buf.push_back(static_cast<unsigned char>(i % 256));
    }
    write_bytes(dir / "train.bin", buf);
    write_bytes(dir / "test.bin", buf);

    Dataset ds = ingest_dataset("cifar100", dir.string());
    CHECK(ds.num_classes == 100);
    CHECK(ds.train.y[0] == 42);
    CHECK(ds.train.y[1] == 43);
}

TEST_CASE("stl10 loader transposes column-major planes and shifts labels") {
    const fs::path dir = kTmp / "stl10";
    fs::remove_all(dir);
    const int img_bytes = 3 * 96 * 96;
    std::vector<unsigned char> xs(static_cast<size_t>(img_bytes), 0);
    // channel 1, column 2, row 5 in the stored column-major plane
    xs[1 * 96 * 96 + 2 * 96 + 5] = 200;
    write_bytes(dir / "train_X.bin", xs);
    write_bytes(dir / "train_y.bin", {10});
    write_bytes(dir / "test_X.bin", xs);
    write_bytes(dir / "test_y.bin", {1});

    Dataset ds = ingest_dataset("stl10", dir.string());
    CHECK(ds.shape.height == 96);
    CHECK(ds.train.y[0] == 9);  // labels are 1-based on disk
    CHECK(ds.test.y[0] == 0);
    // row-major position: channel 1, row 5, col 2
    CHECK(ds.train.x((1 * 96 + 5) * 96 + 2, 0) == doctest::Approx(200.0 / 255.0));
    CHECK(ds.train.x.sum() == doctest::Approx(200.0 / 255.0));  // single lit pixel

    write_bytes(dir / "train_y.bin", {11});
    CHECK_THROWS_WITH_AS(ingest_dataset("stl10", dir.string()),
                         doctest::Contains("label out of range"), std::runtime_error);
}

TEST_CASE("bilinear resize preserves constants and range") {
    Matrix img(2 * 4 * 4, 2);
    img.col(0).setConstant(0.37);
    auto rng = subrng(77, {2});
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (int i = 0; i < img.rows(); ++i) img(i, 1) = dist(rng);

    Matrix resized = resize_bilinear(img, {2, 4, 4}, {2, 8, 8});
    CHECK(resized.rows() == 2 * 8 * 8);
    for (int i = 0; i < 2 * 8 * 8; ++i) CHECK(resized(i, 0) == doctest::Approx(0.37).epsilon(1e-12));
    CHECK(resized.col(1).minCoeff() >= 0.0);
    CHECK(resized.col(1).maxCoeff() <= 1.0);

    // same-size resize is the identity
    Matrix same = resize_bilinear(img, {2, 4, 4}, {2, 4, 4});
    CHECK((same - img).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("config defaults mirror the published hyper-parameters") {
    ExperimentConfig cfg;
    CHECK(cfg.critic(50000).negatives == 16384);
    CHECK(cfg.critic(50000).temperature == doctest::Approx(0.1));
    CHECK(cfg.eval_budget().epsilon == doctest::Approx(8.0 / 255.0));
    CHECK(cfg.eval_budget().steps == 20);
    CHECK(cfg.finetune_budget().steps == 7);
    CHECK(cfg.probe_budget().steps == 7);
    CHECK(cfg.scatter_budget().steps == 7);
    CHECK_FALSE(cfg.scatter_budget().random_start);
    CHECK(cfg.ot().entropic_lambda == doctest::Approx(0.01));
    CHECK(cfg.ot().iterations == 50);
    CHECK(cfg.embed_dim() == 128);
    CHECK(cfg.bank_momentum() == doctest::Approx(0.5));
    CHECK(cfg.reweighting());
    CHECK(cfg.probe_section().epochs == 30);
}

TEST_CASE("dotted overrides change values and the config hash") {
    ExperimentConfig cfg = ExperimentConfig::from_json({{"seed", 5}});
    const uint64_t h0 = cfg.hash();
    cfg.apply_override("critic.negatives=128");
    CHECK(cfg.critic(1000).negatives == 128);
    CHECK(cfg.hash() != h0);
    cfg.apply_override("dataset.name=fixture");
    CHECK(cfg.dataset_name() == "fixture");
    cfg.apply_override("distill.reweighting=false");
    CHECK_FALSE(cfg.reweighting());
    CHECK_THROWS_AS(cfg.apply_override("no_equals_sign"), std::invalid_argument);
}

TEST_CASE("config hash is insensitive to key order") {
    ExperimentConfig a = ExperimentConfig::from_json({{"seed", 5}, {"output_dir", "x"}});
    ExperimentConfig b = ExperimentConfig::from_json({{"output_dir", "x"}, {"seed", 5}});
    CHECK(a.hash() == b.hash());
}

TEST_CASE("result records append, read back, and render") {
    const std::string path = (kTmp / "records.jsonl").string();
    fs::remove(path);

    ResultRecord r1;
    r1.run_id = "gacd-tiny";
    r1.config_hash = 0x1234;
    r1.stage = "eval";
    r1.timestamp = utc_timestamp();
    r1.metrics = {{"natural_pct", 81.25}, {"adversarial_pct", 40.62}, {"num_classes", 2}};
    append_record(path, r1);

    ResultRecord r2 = r1;
    r2.run_id = "kd-tiny";
    r2.metrics = {{"natural_pct", 83.59}, {"adversarial_pct", 12.50}, {"num_classes", 2}};
    append_record(path, r2);

    auto records = read_records(path);
    REQUIRE(records.size() == 2);
    CHECK(records[0].run_id == "gacd-tiny");
    CHECK(records[0].config_hash == 0x1234);
    CHECK(records[1].metrics.at("natural_pct").get<double>() == doctest::Approx(83.59));

    const std::string table = render_report(records);
    CHECK(table.find("Nat.") != std::string::npos);
    CHECK(table.find("Adv.") != std::string::npos);
    CHECK(table.find("gacd-tiny") != std::string::npos);
    CHECK(table.find("40.62") != std::string::npos);

    ResultRecord r3 = r1;
    r3.metrics = {{"natural_pct", 50.0}, {"num_classes", 10}};
    records.push_back(r3);
    CHECK_THROWS_WITH_AS(render_report(records), doctest::Contains("class counts"),
                         std::runtime_error);
}
