#ifndef GACD_ATTACKS_HPP
#define GACD_ATTACKS_HPP

#include <random>
#include <vector>

#include "gacd/common.hpp"
#include "gacd/nn/model.hpp"

namespace gacd {

// L∞ PGD budget. step_size must not exceed epsilon except in the degenerate
// zero-budget case, which is allowed and returns the input unchanged.
struct AttackBudget {
    Scalar epsilon = 8.0 / 255.0;
    int steps = 20;
    Scalar step_size = 2.0 / 255.0;
    bool random_start = true;

    void validate() const;
    std::string describe() const;  // e.g. "pgd-20 eps=8/255 linf"
};

struct OTConfig {
    Scalar entropic_lambda = 0.01;
    int iterations = 50;

    void validate() const;
};

struct AttackStats {
    int aborted_samples = 0;  // non-finite gradients; clean input returned
};

// Untargeted Madry PGD: signed gradient ascent on cross-entropy, projected
// into the ε-ball and [0,1] after every step. sign(0) = 0.
Matrix pgd_attack(GradModel& model, const Matrix& x, const std::vector<int>& y,
                  const AttackBudget& budget, std::mt19937_64& rng, AttackStats* stats = nullptr);

// Targeted variant: descends cross-entropy toward `targets`.
Matrix pgd_attack_targeted(GradModel& model, const Matrix& x, const std::vector<int>& targets,
                           const AttackBudget& budget, std::mt19937_64& rng,
                           AttackStats* stats = nullptr);

// Entropic-regularized OT cost between two feature batches (one sample per
// column) under the cost 1 − cosine. Log-domain Sinkhorn with uniform
// marginals; exactly symmetric in (a, b).
Scalar sinkhorn_distance(const Matrix& a, const Matrix& b, const OTConfig& cfg);

// Transport plan for an explicit cost matrix, uniform marginals.
Matrix sinkhorn_plan(const Matrix& cost, const OTConfig& cfg);

// Cost matrix C_ij = 1 − cos(a_i, b_j).
Matrix cosine_cost(const Matrix& a, const Matrix& b);

// Self-supervised positive construction: PGD ascent on the OT distortion
// between clean-batch features and perturbed-batch features. Label-free.
Matrix feature_scatter_positive(FeatureModel& model, const Matrix& x, const AttackBudget& budget,
                                const OTConfig& cfg, std::mt19937_64& rng,
                                AttackStats* stats = nullptr);

}  // namespace gacd

#endif  // GACD_ATTACKS_HPP
