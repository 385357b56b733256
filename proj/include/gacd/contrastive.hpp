#ifndef GACD_CONTRASTIVE_HPP
#define GACD_CONTRASTIVE_HPP

#include <random>
#include <vector>

#include "gacd/common.hpp"
#include "gacd/serialize.hpp"

namespace gacd {

struct CriticConfig {
    Scalar temperature = 0.1;
    int negatives = 16384;    // k
    int cardinality = 50000;  // M, dataset size
    // |logit| is clamped here before exponentiation; keeps log(1-h) finite.
    Scalar logit_clamp = 50.0;

    void validate() const;
};

// Critic logit: t·s/T − log(k/M). critic_h is its sigmoid, i.e. the
// closed-form posterior e^{t·s/T} / (e^{t·s/T} + k/M) in a form that never
// overflows.
Scalar critic_logit(const Vector& t, const Vector& s, const CriticConfig& cfg);
Scalar critic_h(const Vector& t, const Vector& s, const CriticConfig& cfg);

// One anchor's contrastive sample set: the congruent pair plus k incongruent
// pairs, all embeddings unit-norm, negatives from classes other than the
// anchor's.
struct SamplePairSet {
    Vector anchor;     // teacher t+
    Vector positive;   // student s+
    Matrix negatives;  // embed_dim × k, student embeddings
    Scalar weight = 1.0;

    // Enforces the documented invariants; used at module boundaries and in
    // tests, not in the training hot path.
    void validate(const CriticConfig& cfg) const;
};

struct NceResult {
    Scalar value = 0.0;          // ℓ(h, w) ≤ 0
    Scalar log_posterior = 0.0;  // log h(t+, s+), the MI-bound contribution
    int saturated = 0;           // logits hit the clamp
    Matrix grad_anchor;          // dℓ/dt+          (embed_dim × 1)
    Matrix grad_positive;        // dℓ/ds+          (embed_dim × 1)
    Matrix grad_negatives;       // dℓ/ds_i-        (embed_dim × k)
};

// Sample-reweighted NCE log-likelihood of one pair set:
//   ℓ = w·[ log h(t+,s+) + Σ_i log(1 − h(t+,s_i−)) ].
// The factored form keeps ℓ(w) = w·ℓ(1) exact in floating point.
Scalar reweighted_nce_objective(const SamplePairSet& pairs, const CriticConfig& cfg,
                                Scalar* log_posterior = nullptr, int* saturated = nullptr);

// Same likelihood plus analytic gradients w.r.t. every embedding.
NceResult reweighted_nce_with_grads(const SamplePairSet& pairs, const CriticConfig& cfg);

// MI(t;s) ≥ log(k) + E log q(C=1|t,s), natural log.
Scalar mi_lower_bound(Scalar expected_log_posterior, int k);

// Per-instance store of momentum-updated student embeddings, the source of
// the k class-exclusive negatives each iteration.
class MemoryBank {
public:
    MemoryBank() = default;
    static MemoryBank init(int size, int embed_dim, const std::vector<int>& labels,
                           Scalar momentum, uint64_t seed);

    // k indices/embeddings with labels different from anchor_class, uniform
    // with replacement by default. Throws when nothing is eligible, or when
    // replacement is disabled and fewer than k instances are eligible.
    void sample_negatives(int anchor_class, int k, std::mt19937_64& rng, Matrix& out_embeddings,
                          std::vector<int>& out_indices, bool with_replacement = true) const;

    // slot ← normalize(m·old + (1−m)·fresh). The overload without m uses the
    // bank's stored momentum; m = 1 leaves the slot direction unchanged.
    void update(int index, const Vector& fresh_embedding);
    void update(int index, const Vector& fresh_embedding, Scalar m);

    const Matrix& slots() const { return slots_; }
    const std::vector<int>& labels() const { return labels_; }
    Scalar momentum() const { return momentum_; }
    int size() const { return static_cast<int>(slots_.cols()); }
    int embed_dim() const { return static_cast<int>(slots_.rows()); }
    Vector slot(int index) const { return slots_.col(index); }

    void save(BinaryWriter& w) const;
    static MemoryBank load(BinaryReader& r);

private:
    Matrix slots_;  // embed_dim × M, unit columns
    std::vector<int> labels_;
    Scalar momentum_ = 0.5;
    // Indices grouped by class for O(1) class-exclusive draws.
    std::vector<int> class_order_;
    std::vector<int> class_offset_;  // per class: start in class_order_
    std::vector<int> class_count_;
    void build_class_index();
};

}  // namespace gacd

#endif  // GACD_CONTRASTIVE_HPP
