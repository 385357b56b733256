#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gacd/embeddings.hpp"
#include "test_util.hpp"

using namespace gacd;

namespace {

ProjectionHead identity_head(int d) {
    ProjectionHead head;
    head.weight = Matrix::Identity(d, d);
    return head;
}

}  // namespace

TEST_CASE("identity projection normalizes (3,4) to (0.6,0.8)") {
    Vector feats = Vector::Zero(8);
    feats(0) = 3.0;
    feats(1) = 4.0;
    Vector emb = project_and_normalize(feats, identity_head(8));
    CHECK(emb(0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(emb(1) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(emb.tail(6).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("identity projection leaves unit vectors unchanged") {
    Vector e1 = Vector::Zero(5);
    e1(0) = 1.0;
    Vector emb = project_and_normalize(e1, identity_head(5));
    CHECK((emb - e1).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("random head matches straight-line matrix-vector oracle") {
    auto rng = subrng(11, {1});
    for (int trial = 0; trial < 20; ++trial) {
        Matrix w = testutil::random_matrix(4, 8, rng);
        Vector feats = testutil::random_matrix(8, 1, rng).col(0);
        ProjectionHead head{w, true};
        Vector emb = project_and_normalize(feats, head);

        // Independent scalar-loop evaluation.
        Vector raw = Vector::Zero(4);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 8; ++j) raw(i) += w(i, j) * feats(j);
        double norm = 0.0;
        for (int i = 0; i < 4; ++i) norm += raw(i) * raw(i);
        norm = std::sqrt(norm);

        CHECK(std::abs(emb.norm() - 1.0) < 1e-6);
        for (int i = 0; i < 4; ++i) CHECK(emb(i) == doctest::Approx(raw(i) / norm).epsilon(1e-10));
    }
}

TEST_CASE("degenerate projection is an error, not a division by zero") {
    ProjectionHead head;
    head.weight = Matrix::Zero(4, 8);
    Vector feats = Vector::Ones(8);
    CHECK_THROWS_AS(project_and_normalize(feats, head), std::domain_error);
}

TEST_CASE("non-finite features are rejected") {
    Vector feats = Vector::Ones(4);
    feats(2) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(project_and_normalize(feats, identity_head(4)), std::invalid_argument);
}

TEST_CASE("normalization and scale invariance properties") {
    auto rng = subrng(12, {2});
    for (int trial = 0; trial < 50; ++trial) {
        ProjectionHead head = ProjectionHead::random(16, 32, rng);
        Vector feats = testutil::random_matrix(32, 1, rng).col(0);
        Vector emb = project_and_normalize(feats, head);
        CHECK(std::abs(emb.norm() - 1.0) < 1e-5);

        std::uniform_real_distribution<double> cdist(0.1, 100.0);
        const double c = cdist(rng);
        Vector emb_scaled = project_and_normalize(Vector(c * feats), head);
        CHECK((emb_scaled - emb).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("projection backward matches finite differences") {
    auto rng = subrng(13, {3});
    ProjectionHead head = ProjectionHead::random(6, 10, rng);
    Matrix feats = testutil::random_matrix(10, 3, rng);
    Matrix cotangent = testutil::random_matrix(6, 3, rng);

    auto loss = [&]() {
        ProjectionTape tape = project_forward(feats, head);
        return (tape.embeddings.array() * cotangent.array()).sum();
    };

    ProjectionTape tape = project_forward(feats, head);
    Matrix gweight = Matrix::Zero(6, 10);
    Matrix gfeats = project_backward(tape, head, cotangent, gweight);

    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 3; ++j) {
            const double fd = testutil::central_diff(feats, i, j, loss);
            CHECK(testutil::rel_err(gfeats(i, j), fd) < 1e-5);
        }
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 10; ++j) {
            const double fd = testutil::central_diff(head.weight, i, j, loss);
            CHECK(testutil::rel_err(gweight(i, j), fd) < 1e-5);
        }
}

TEST_CASE("teacher weight saturates to 1 on a dominant logit") {
    Vector logits = Vector::Constant(10, -1e4);
    logits(3) = 1e4;
    CHECK(std::abs(teacher_weight(logits, 3) - 1.0) < 1e-12);
}

TEST_CASE("teacher weight is uniform on equal logits") {
    Vector logits = Vector::Constant(10, 0.7);
    CHECK(teacher_weight(logits, 4) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("teacher weight matches high-precision softmax oracle") {
    Vector logits(3);
    logits << 2.0, 1.0, 0.0;
    // exp(2)/(exp(2)+exp(1)+exp(0)), straight-line evaluation
    CHECK(teacher_weight(logits, 0) == doctest::Approx(0.665240955775).epsilon(1e-9));
}

TEST_CASE("teacher weights sum to one over all classes") {
    auto rng = subrng(14, {4});
    for (int trial = 0; trial < 20; ++trial) {
        Vector logits = testutil::random_matrix(7, 1, rng, 3.0).col(0);
        double total = 0.0;
        for (int y = 0; y < 7; ++y) total += teacher_weight(logits, y);
        CHECK(std::abs(total - 1.0) < 1e-6);
    }
}

TEST_CASE("teacher weight strictly increases in the true-class logit") {
    Vector logits(5);
    logits << 0.3, -0.2, 1.1, 0.0, -0.5;
    double prev = teacher_weight(logits, 1);
    for (int step = 1; step <= 8; ++step) {
        logits(1) += 0.25;
        const double cur = teacher_weight(logits, 1);
        CHECK(cur > prev);
        prev = cur;
    }
}

TEST_CASE("teacher weight rejects bad inputs") {
    Vector logits = Vector::Ones(4);
    CHECK_THROWS_AS(teacher_weight(logits, -1), std::out_of_range);
    CHECK_THROWS_AS(teacher_weight(logits, 4), std::out_of_range);
    logits(0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(teacher_weight(logits, 1), std::invalid_argument);
}
