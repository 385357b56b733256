#ifndef GACD_EMBEDDINGS_HPP
#define GACD_EMBEDDINGS_HPP

#include <random>

#include "gacd/common.hpp"
#include "gacd/serialize.hpp"

namespace gacd {

// Linear map from backbone penultimate features into the shared unit-sphere
// embedding space. No bias, so embeddings are scale invariant in the input.
struct ProjectionHead {
    Matrix weight;  // embed_dim × feature_dim
    bool trainable = true;

    static ProjectionHead random(int embed_dim, int feature_dim, std::mt19937_64& rng);

    int embed_dim() const { return static_cast<int>(weight.rows()); }
    int feature_dim() const { return static_cast<int>(weight.cols()); }

    void save(BinaryWriter& w) const;
    static ProjectionHead load(BinaryReader& r);
};

// head(feats) / ‖head(feats)‖. Throws on a degenerate (near-zero) projection.
Vector project_and_normalize(const Vector& feats, const ProjectionHead& head);
Matrix project_and_normalize_batch(const Matrix& feats, const ProjectionHead& head);

// Forward pass that keeps intermediates for the training backward.
struct ProjectionTape {
    Matrix feats;       // feature_dim × n
    Matrix raw;         // embed_dim × n, pre-normalization
    Matrix embeddings;  // embed_dim × n, unit columns
};

ProjectionTape project_forward(const Matrix& feats, const ProjectionHead& head);

// Chain rule through normalization and the linear map. Accumulates the head
// weight gradient and returns dLoss/dfeats.
Matrix project_backward(const ProjectionTape& tape, const ProjectionHead& head,
                        const Matrix& gembeddings, Matrix& gweight);

// Teacher's softmax probability of the true class (temperature 1); the
// per-sample weight w_t of the reweighted objective.
Scalar teacher_weight(const Vector& teacher_logits, int true_label);

}  // namespace gacd

#endif  // GACD_EMBEDDINGS_HPP
