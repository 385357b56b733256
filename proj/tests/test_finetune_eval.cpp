#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gacd/finetune_eval.hpp"
#include "test_util.hpp"

using namespace gacd;

namespace {

// Two-pixel dataset: class c lights pixel c. A hand-weighted mlp separates
// it perfectly, giving an exact oracle for the accuracy arithmetic.
Dataset two_pixel_dataset(int per_class) {
    Dataset ds;
    ds.id = "twopixel";
    ds.shape = {1, 2, 2};  // 4 pixels, only first two used
    ds.num_classes = 2;
    const int n = 2 * per_class;
    auto fill = [&](DatasetSplit& split) {
        split.x = Matrix::Zero(4, n);
        split.y.resize(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) {
            const int cls = i % 2;
            split.x(cls, i) = 1.0;
            split.y[static_cast<size_t>(i)] = cls;
        }
        split.checksum = split_checksum(split.x, split.y);
    };
    fill(ds.train);
    fill(ds.test);
    return ds;
}

Classifier perfect_two_pixel_model() {
    nn::Backbone backbone = nn::Backbone::make("mlp", {1, 2, 2}, 1);
    // Layer 0: first two hidden units copy the two informative pixels.
    auto params = backbone.params();
    params[0]->setZero();  // 128 x 4 weight
    (*params[0])(0, 0) = 10.0;
    (*params[0])(1, 1) = 10.0;
    params[1]->setZero();  // bias
    params[2]->setZero();  // 64 x 128
    (*params[2])(0, 0) = 1.0;
    (*params[2])(1, 1) = 1.0;
    params[3]->setZero();

    Classifier clf(std::move(backbone), 2, 1);
    clf.head().weight().setZero();
    clf.head().weight()(0, 0) = 5.0;
    clf.head().weight()(1, 1) = 5.0;
    clf.head().bias().setZero();
    return clf;
}

}  // namespace

TEST_CASE("perfect oracle model scores 100 percent natural accuracy") {
    Dataset ds = two_pixel_dataset(8);
    Classifier model = perfect_two_pixel_model();
    EvalReport report = evaluate(model, ds, ds.test, std::nullopt, 1, "oracle");
    CHECK(report.natural_pct == 100.0);
    CHECK_FALSE(report.has_adversarial);
    CHECK(report.model_id == "oracle");
}

TEST_CASE("constant-output model scores chance on a balanced set") {
    // 10-class balanced synthetic set, model always answers class 3
    Dataset ds;
    ds.id = "balanced10";
    ds.shape = {1, 2, 2};
    ds.num_classes = 10;
    ds.test.x = Matrix::Zero(4, 50);
    ds.test.y.resize(50);
    for (int i = 0; i < 50; ++i) ds.test.y[static_cast<size_t>(i)] = i % 10;
    ds.train = ds.test;

    Classifier model(nn::Backbone::make("mlp", {1, 2, 2}, 2), 10, 2);
    model.head().weight().setZero();
    model.head().bias().setZero();
    model.head().bias()(3, 0) = 1.0;
    EvalReport report = evaluate(model, ds, ds.test, std::nullopt, 1, "constant");
    CHECK(report.natural_pct == doctest::Approx(10.0));
}

TEST_CASE("evaluate rejects label/class-count mismatches") {
    Dataset ds = two_pixel_dataset(4);
    ds.test.y[1] = 7;  // out of the model's range
    Classifier model = perfect_two_pixel_model();
    CHECK_THROWS_WITH_AS(evaluate(model, ds, ds.test, std::nullopt, 1, "m"),
                         doctest::Contains("class count"), std::invalid_argument);

    DatasetSplit empty;
    CHECK_THROWS_AS(evaluate(model, ds, empty, std::nullopt, 1, "m"), std::invalid_argument);
}

TEST_CASE("adversarial evaluation reports the attack and dominance holds") {
    Dataset ds = two_pixel_dataset(8);
    Classifier model = perfect_two_pixel_model();
    AttackBudget pgd7{8.0 / 255.0, 7, 2.0 / 255.0, false};
    EvalReport report = evaluate(model, ds, ds.test, pgd7, 3, "oracle");
    CHECK(report.has_adversarial);
    CHECK(report.adversarial_pct <= report.natural_pct);
    CHECK(report.attack_desc.find("pgd-7") != std::string::npos);
}

TEST_CASE("attack strength ordering: pgd-20 <= pgd-1 <= natural") {
    Dataset ds = two_pixel_dataset(16);
    FinetuneConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 8;
    cfg.sgd = nn::SgdConfig{0.2, 0.9, 0.0, 100, 0.1};
    cfg.attack = AttackBudget{0.0, 1, 0.0, false};
    cfg.seed = 5;
    Classifier model = adversarial_finetune(nn::Backbone::make("mlp", ds.shape, 5), 2, ds, cfg);

    EvalReport nat = evaluate(model, ds, ds.test, std::nullopt, 1, "m");
    AttackBudget pgd1{8.0 / 255.0, 1, 8.0 / 255.0, false};
    AttackBudget pgd20{8.0 / 255.0, 20, 2.0 / 255.0, false};
    EvalReport r1 = evaluate(model, ds, ds.test, pgd1, 1, "m");
    EvalReport r20 = evaluate(model, ds, ds.test, pgd20, 1, "m");
    CHECK(r20.adversarial_pct <= r1.adversarial_pct);
    CHECK(r1.adversarial_pct <= nat.natural_pct);
}

TEST_CASE("evaluation is deterministic under a fixed seed") {
    Dataset ds = testutil::small_fixture(16, 16);
    Classifier model(nn::Backbone::make("tiny_cnn", ds.shape, 4), 2, 4);
    AttackBudget budget{8.0 / 255.0, 3, 4.0 / 255.0, false};
    EvalReport a = evaluate(model, ds, ds.test, budget, 11, "m");
    EvalReport b = evaluate(model, ds, ds.test, budget, 11, "m");
    CHECK(a.natural_pct == b.natural_pct);
    CHECK(a.adversarial_pct == b.adversarial_pct);
}

TEST_CASE("zero-epoch fine-tune leaves backbone at init and head fresh") {
    Dataset ds = testutil::small_fixture(16, 8);
    nn::Backbone init = nn::Backbone::make("tiny_cnn", ds.shape, 21);
    const uint64_t init_hash = init.params_hash();

    FinetuneConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 21;
    Classifier tuned = adversarial_finetune(init, 2, ds, cfg);
    CHECK(tuned.backbone().params_hash() == init_hash);

    Classifier fresh(init, 2, splitmix64(cfg.seed ^ 0xaf7ull));
    CHECK(tuned.params_hash() == fresh.params_hash());
}

TEST_CASE("natural training (epsilon 0) learns the two-pixel task") {
    Dataset ds = two_pixel_dataset(16);
    FinetuneConfig cfg;
    cfg.epochs = 6;
    cfg.batch_size = 8;
    cfg.sgd = nn::SgdConfig{0.2, 0.9, 0.0, 100, 0.1};
    cfg.attack = AttackBudget{0.0, 1, 0.0, false};  // epsilon 0: plain training
    cfg.seed = 5;
    std::vector<FinetuneEpochRecord> log;
    Classifier model = adversarial_finetune(nn::Backbone::make("mlp", ds.shape, 5), 2, ds, cfg, &log);
    EvalReport report = evaluate(model, ds, ds.test, std::nullopt, 1, "nat");
    CHECK(report.natural_pct > 90.0);
    REQUIRE(log.size() == 6);
    CHECK(log.back().mean_loss < log.front().mean_loss);
}

TEST_CASE("constant-feature backbone probes at the majority-class rate") {
    // transfer set: train 75% class 0, test 60% class 0
    Dataset transfer;
    transfer.id = "skewed";
    transfer.shape = {1, 2, 2};
    transfer.num_classes = 2;
    transfer.train.x = Matrix::Zero(4, 32);
    transfer.train.y.assign(32, 0);
    for (int i = 24; i < 32; ++i) transfer.train.y[static_cast<size_t>(i)] = 1;
    transfer.test.x = Matrix::Zero(4, 20);
    transfer.test.y.assign(20, 0);
    for (int i = 12; i < 20; ++i) transfer.test.y[static_cast<size_t>(i)] = 1;

    nn::Backbone constant = nn::Backbone::make("mlp", transfer.shape, 9);
    for (Matrix* p : constant.params()) p->setZero();  // features identically zero

    ProbeConfig cfg;
    cfg.epochs = 10;
    cfg.batch_size = 8;
    cfg.attack = AttackBudget{8.0 / 255.0, 2, 4.0 / 255.0, false};
    EvalReport report = linear_probe_transfer(constant, transfer, cfg, "const");
    CHECK(report.natural_pct == doctest::Approx(60.0));  // majority-class frequency
}

TEST_CASE("probe training never touches the backbone") {
    Dataset ds = testutil::small_fixture(32, 16);
    nn::Backbone backbone = nn::Backbone::make("tiny_cnn", ds.shape, 31);
    const uint64_t before = backbone.params_hash();
    ProbeConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 16;
    cfg.attack = AttackBudget{8.0 / 255.0, 2, 4.0 / 255.0, false};
    EvalReport report = linear_probe_transfer(backbone, ds, cfg, "frozen");
    CHECK(backbone.params_hash() == before);
    CHECK(report.natural_pct >= 0.0);
    CHECK(report.has_adversarial);
}

TEST_CASE("probe resizes a transfer set with a different resolution") {
    Dataset ds = testutil::small_fixture(32, 8);
    // pretend the transfer set is 16x16: downsample the fixture
    Dataset transfer = ds;
    transfer.shape = {3, 16, 16};
    transfer.train.x = resize_bilinear(ds.train.x, ds.shape, transfer.shape);
    transfer.test.x = resize_bilinear(ds.test.x, ds.shape, transfer.shape);

    nn::Backbone backbone = nn::Backbone::make("tiny_cnn", ds.shape, 33);  // expects 32x32
    ProbeConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.attack = AttackBudget{8.0 / 255.0, 2, 4.0 / 255.0, false};
    EvalReport report = linear_probe_transfer(backbone, transfer, cfg, "resized");
    CHECK(report.natural_pct >= 0.0);
    CHECK(report.natural_pct <= 100.0);
}
