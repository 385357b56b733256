#include "gacd/embeddings.hpp"

namespace gacd {

namespace {
constexpr Scalar kDegenerateNorm = 1e-12;
}

ProjectionHead ProjectionHead::random(int embed_dim, int feature_dim, std::mt19937_64& rng) {
    std::normal_distribution<Scalar> dist(0.0, 1.0 / std::sqrt(static_cast<Scalar>(feature_dim)));
    ProjectionHead head;
    head.weight.resize(embed_dim, feature_dim);
    for (Eigen::Index j = 0; j < head.weight.cols(); ++j)
        for (Eigen::Index i = 0; i < head.weight.rows(); ++i) head.weight(i, j) = dist(rng);
    return head;
}

void ProjectionHead::save(BinaryWriter& w) const {
    w.mat(weight);
    w.u32(trainable ? 1 : 0);
}

ProjectionHead ProjectionHead::load(BinaryReader& r) {
    ProjectionHead head;
    head.weight = r.mat();
    head.trainable = r.u32() != 0;
    return head;
}

Vector project_and_normalize(const Vector& feats, const ProjectionHead& head) {
    if (!all_finite(feats)) throw std::invalid_argument("non-finite features");
    if (feats.size() != head.feature_dim())
        throw std::invalid_argument("feature dimension does not match projection head");
    Vector raw = head.weight * feats;
    const Scalar norm = raw.norm();
    if (norm < kDegenerateNorm) throw std::domain_error("degenerate projection: zero vector");
    return raw / norm;
}

Matrix project_and_normalize_batch(const Matrix& feats, const ProjectionHead& head) {
    Matrix out(head.embed_dim(), feats.cols());
    for (Eigen::Index j = 0; j < feats.cols(); ++j)
        out.col(j) = project_and_normalize(Vector(feats.col(j)), head);
    return out;
}

ProjectionTape project_forward(const Matrix& feats, const ProjectionHead& head) {
    ProjectionTape tape;
    tape.feats = feats;
    tape.raw = head.weight * feats;
    tape.embeddings.resize(tape.raw.rows(), tape.raw.cols());
    for (Eigen::Index j = 0; j < tape.raw.cols(); ++j) {
        const Scalar norm = tape.raw.col(j).norm();
        if (norm < kDegenerateNorm) throw std::domain_error("degenerate projection: zero vector");
        tape.embeddings.col(j) = tape.raw.col(j) / norm;
    }
    return tape;
}

Matrix project_backward(const ProjectionTape& tape, const ProjectionHead& head,
                        const Matrix& gembeddings, Matrix& gweight) {
    // d(u/‖u‖)/du applied to the cotangent: (g − e(e·g)) / ‖u‖.
    Matrix graw(tape.raw.rows(), tape.raw.cols());
    for (Eigen::Index j = 0; j < tape.raw.cols(); ++j) {
        const Scalar norm = tape.raw.col(j).norm();
        const Vector e = tape.embeddings.col(j);
        const Vector g = gembeddings.col(j);
        graw.col(j) = (g - e * e.dot(g)) / norm;
    }
    gweight += graw * tape.feats.transpose();
    return head.weight.transpose() * graw;
}

Scalar teacher_weight(const Vector& teacher_logits, int true_label) {
    if (!all_finite(teacher_logits)) throw std::invalid_argument("non-finite logits");
    if (true_label < 0 || true_label >= teacher_logits.size())
        throw std::out_of_range("true_label outside logit range");
    const Scalar mx = teacher_logits.maxCoeff();
    const Vector e = (teacher_logits.array() - mx).exp();
    return e(true_label) / e.sum();
}

}  // namespace gacd
