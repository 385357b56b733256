#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gacd/analysis.hpp"
#include "test_util.hpp"

using namespace gacd;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("identical logit channels correlate at exactly one") {
    auto rng = subrng(61, {1});
    Matrix base = testutil::random_matrix(1, 200, rng);
    Matrix series(3, 200);
    series.row(0) = base;
    series.row(1) = base;
    series.row(2) = base;
    CorrelationMatrix m = pearson_correlation(series);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(m.values(i, j) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("independent channels decorrelate within sampling error") {
    auto rng = subrng(61, {2});
    Matrix series = testutil::random_matrix(4, 10000, rng);
    CorrelationMatrix m = pearson_correlation(series);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            if (i == j)
                CHECK(m.values(i, j) == 1.0);
            else
                CHECK(std::abs(m.values(i, j)) < 0.05);
        }
    CHECK_FALSE(m.had_zero_variance);
}

TEST_CASE("zero-variance channels flag and correlate as zero") {
    auto rng = subrng(61, {3});
    Matrix series = testutil::random_matrix(3, 50, rng);
    series.row(1).setConstant(4.2);
    CorrelationMatrix m = pearson_correlation(series);
    CHECK(m.had_zero_variance);
    CHECK(m.values(0, 1) == 0.0);
    CHECK(m.values(1, 2) == 0.0);
    CHECK(m.values(1, 1) == 1.0);
}

TEST_CASE("model correlation matrices are symmetric with unit diagonal") {
    Dataset ds = testutil::small_fixture(32, 32);
    Classifier model(nn::Backbone::make("tiny_cnn", ds.shape, 8), 2, 8);
    CorrelationMatrix m = logits_correlation(model, ds, ds.test);
    CHECK((m.values - m.values.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    for (int i = 0; i < 2; ++i) CHECK(std::abs(m.values(i, i) - 1.0) < 1e-10);
    CHECK(m.values.maxCoeff() <= 1.0);
    CHECK(m.values.minCoeff() >= -1.0);

    // attacked variant runs the same contract
    AttackBudget budget{8.0 / 255.0, 2, 4.0 / 255.0, false};
    CorrelationMatrix adv = logits_correlation(model, ds, ds.test, budget, 5);
    CHECK((adv.values - adv.values.transpose()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("correlation difference: self is zero, permutation invariant") {
    auto rng = subrng(61, {4});
    Matrix series = testutil::random_matrix(5, 300, rng);
    CorrelationMatrix a = pearson_correlation(series);
    CorrelationDiff self = correlation_difference(a, a);
    CHECK(self.mean_off_diagonal == 0.0);
    CHECK(self.abs_diff.maxCoeff() == 0.0);

    Matrix other = testutil::random_matrix(5, 300, rng);
    CorrelationMatrix b = pearson_correlation(other);
    CorrelationDiff diff = correlation_difference(a, b);
    CHECK(diff.mean_off_diagonal > 0.0);

    // reorder classes the same way on both sides
    std::vector<int> perm = {3, 1, 4, 0, 2};
    Matrix pa(5, 5), pb(5, 5);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            pa(i, j) = a.values(perm[i], perm[j]);
            pb(i, j) = b.values(perm[i], perm[j]);
        }
    CorrelationDiff permuted = correlation_difference({pa, false}, {pb, false});
    CHECK(permuted.mean_off_diagonal == doctest::Approx(diff.mean_off_diagonal).epsilon(1e-12));

    CorrelationMatrix small{Matrix::Identity(3, 3), false};
    CHECK_THROWS_AS(correlation_difference(a, small), std::invalid_argument);
}

TEST_CASE("feature export writes the documented sampling scheme") {
    Dataset ds = testutil::small_fixture(64, 64);
    Classifier model(nn::Backbone::make("tiny_cnn", ds.shape, 9), 2, 9);
    AttackBudget budget{8.0 / 255.0, 2, 4.0 / 255.0, false};
    const std::string path = "/tmp/gacd_test_features.tsv";

    // bird/truck/adv-truck analogue: class0, class1, class1 attacked toward class0
    std::vector<ExportGroup> groups = {
        {0, 20, false, 0}, {1, 20, false, 0}, {1, 20, true, 0}};
    ExportStats stats = export_features(model, ds, groups, budget, 17, path, 0xc0ffee);
    CHECK(stats.rows == 60);
    CHECK(stats.attack_failures == 0);

    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line.find("gacd-features v1") != std::string::npos);
    CHECK(line.find("dim=" + std::to_string(model.backbone().feature_dim())) != std::string::npos);
    std::getline(in, line);
    CHECK(line.rfind("id\tclass\tvariant", 0) == 0);
    int rows = 0, adversarial_rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++rows;
        if (line.find("\tadversarial\t") != std::string::npos) ++adversarial_rows;
    }
    CHECK(rows == 60);
    CHECK(adversarial_rows == 20);
}

TEST_CASE("empty export is a header-only file") {
    Dataset ds = testutil::small_fixture(16, 16);
    Classifier model(nn::Backbone::make("tiny_cnn", ds.shape, 9), 2, 9);
    const std::string path = "/tmp/gacd_test_features_empty.tsv";
    std::vector<ExportGroup> groups = {{0, 0, false, 0}};
    ExportStats stats =
        export_features(model, ds, groups, AttackBudget{0.0, 1, 0.0, false}, 1, path, 0);
    CHECK(stats.rows == 0);
    std::ifstream in(path);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) ++lines;
    CHECK(lines == 2);  // comment + column header
}

TEST_CASE("re-export with the same seed is byte-identical") {
    Dataset ds = testutil::small_fixture(32, 32);
    Classifier model(nn::Backbone::make("tiny_cnn", ds.shape, 10), 2, 10);
    AttackBudget budget{8.0 / 255.0, 2, 4.0 / 255.0, false};
    std::vector<ExportGroup> groups = {{0, 10, false, 0}, {1, 10, true, 0}};

    const std::string p1 = "/tmp/gacd_test_features_a.tsv";
    const std::string p2 = "/tmp/gacd_test_features_b.tsv";
    export_features(model, ds, groups, budget, 23, p1, 0x11);
    export_features(model, ds, groups, budget, 23, p2, 0x11);
    CHECK(slurp(p1) == slurp(p2));

    const std::string p3 = "/tmp/gacd_test_features_c.tsv";
    export_features(model, ds, groups, budget, 24, p3, 0x11);
    CHECK(slurp(p1) != slurp(p3));
}

TEST_CASE("export validates class bounds") {
    Dataset ds = testutil::small_fixture(16, 16);
    Classifier model(nn::Backbone::make("tiny_cnn", ds.shape, 9), 2, 9);
    std::vector<ExportGroup> bad = {{5, 3, false, 0}};
    CHECK_THROWS_AS(export_features(model, ds, bad, AttackBudget{0.0, 1, 0.0, false}, 1,
                                    "/tmp/gacd_test_features_bad.tsv", 0),
                    std::invalid_argument);
}

TEST_CASE("correlation matrices persist with the config hash") {
    auto rng = subrng(61, {5});
    CorrelationMatrix m = pearson_correlation(testutil::random_matrix(3, 100, rng));
    const std::string path = "/tmp/gacd_test_corr.tsv";
    save_correlation(path, m, 0xdead);
    const std::string content = slurp(path);
    CHECK(content.find("gacd-correlation v1 k=3") != std::string::npos);
    CHECK(content.find("000000000000dead") != std::string::npos);
}
