#ifndef GACD_DISTILL_HPP
#define GACD_DISTILL_HPP

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gacd/attacks.hpp"
#include "gacd/contrastive.hpp"
#include "gacd/data.hpp"
#include "gacd/embeddings.hpp"
#include "gacd/nn/model.hpp"
#include "gacd/nn/optim.hpp"

namespace gacd {

struct DistillConfig {
    int epochs = 4;
    int batch_size = 64;
    nn::SgdConfig sgd{0.05, 0.9, 5e-4, 30, 0.1};
    int negatives = 16384;  // k
    Scalar temperature = 0.1;
    Scalar logit_clamp = 50.0;
    Scalar bank_momentum = 0.5;
    int embed_dim = 128;
    bool reweighting = true;
    uint64_t seed = 1;
    AttackBudget scatter{8.0 / 255.0, 7, 2.0 / 255.0, false};
    OTConfig ot{};
    // Optional damping of the teacher head relative to everything else
    // (the anchor side sees k repulsive terms against one attractive term).
    Scalar teacher_head_lr_scale = 1.0;
    // Discriminative head warm start: the teacher head spreads class means
    // apart and the student head ridge-fits to the resulting anchors. Starts
    // the ascent inside the structured basin; from a cold start the k-to-1
    // repulsion/attraction imbalance herds both sides into a collapsed
    // equilibrium before any class geometry can form.
    bool head_warmstart = true;
    // Test hook: when set, distill_step copies each anchor's assembled
    // SamplePairSet into the step result for independent recomputation.
    bool capture_pair_sets = false;

    void validate(int dataset_size) const;
    CriticConfig critic(int dataset_size) const;
};

// Everything a distillation run mutates. Non-copyable: the optimizer holds
// pointers into the models, use save/load to duplicate.
struct DistillState {
    Classifier teacher;  // frozen, inference only
    ProjectionHead teacher_head;
    nn::Backbone student;
    ProjectionHead student_head;
    MemoryBank bank;
    nn::Sgd optimizer;
    Matrix grad_teacher_head;
    Matrix grad_student_head;
    int64_t iteration = 0;
    int next_epoch = 0;
    int64_t saturated_terms = 0;
    uint64_t teacher_hash_at_init = 0;

    DistillState() = default;
    DistillState(const DistillState&) = delete;
    DistillState& operator=(const DistillState&) = delete;
    DistillState(DistillState&&) = delete;
    DistillState& operator=(DistillState&&) = delete;

    void save(const std::string& path, uint64_t config_hash) const;
    static std::unique_ptr<DistillState> load(const std::string& path,
                                              uint64_t* config_hash = nullptr);

private:
    friend std::unique_ptr<DistillState> distill_init(const Classifier&, const std::string&,
                                                      const Dataset&, const DistillConfig&);
    void bind_optimizer(const nn::SgdConfig& cfg, Scalar teacher_head_lr_scale);
    void rebind_optimizer();
};

std::unique_ptr<DistillState> distill_init(const Classifier& teacher,
                                           const std::string& student_arch, const Dataset& data,
                                           const DistillConfig& cfg);

struct StepResult {
    Scalar objective = 0.0;           // batch-mean ℓ, ≤ 0
    Scalar mean_log_posterior = 0.0;  // batch-mean log h(t+,s+)
    int saturated = 0;
    std::vector<SamplePairSet> pair_sets;  // only with capture_pair_sets
};

// One Algorithm-1 iteration over a batch: scatter the positives, embed both
// sides, assemble pair sets from the bank, ascend the reweighted likelihood,
// refresh the bank. `indices` are dataset positions of the batch samples.
StepResult distill_step(DistillState& state, const Matrix& x, const std::vector<int>& y,
                        const std::vector<int>& indices, const DistillConfig& cfg);

struct DistillEpochRecord {
    int epoch = 0;
    Scalar mean_neg_objective = 0.0;  // −ℓ averaged over batches
    Scalar mi_bound = 0.0;            // log(k) + mean log-posterior
    Scalar wall_seconds = 0.0;
};

struct DistillRunResult {
    Scalar teacher_natural_pct = 0.0;
    std::vector<DistillEpochRecord> epochs;
};

using EpochCallback = std::function<void(const DistillEpochRecord&)>;

// Runs cfg.epochs epochs (resuming from state.next_epoch). When
// checkpoint_dir is nonempty, writes distill_latest.ckpt after every epoch.
DistillRunResult distill_train(DistillState& state, const Dataset& data, const DistillConfig& cfg,
                               const std::string& checkpoint_dir, uint64_t config_hash,
                               const EpochCallback& on_epoch = {});

// Hinton-style soft-label distillation loss on logits (temperature-softened
// cross-entropy, scaled by T²) and its gradient w.r.t. student logits.
Scalar kd_soft_loss(const Matrix& teacher_logits, const Matrix& student_logits,
                    Scalar temperature);
Matrix kd_soft_logit_grad(const Matrix& teacher_logits, const Matrix& student_logits,
                          Scalar temperature);

struct KdConfig {
    int epochs = 4;
    int batch_size = 64;
    nn::SgdConfig sgd{0.05, 0.9, 5e-4, 30, 0.1};
    Scalar temperature = 4.0;
    Scalar hard_label_weight = 0.0;
    uint64_t seed = 1;
};

struct KdEpochRecord {
    int epoch = 0;
    Scalar mean_loss = 0.0;
};

// Comparison baseline: same data pipeline and schedule as distill_train,
// loss on softened teacher logits instead of features.
Classifier kd_baseline_train(Classifier& teacher, const std::string& student_arch,
                             const Dataset& data, const KdConfig& cfg,
                             std::vector<KdEpochRecord>* log = nullptr);

}  // namespace gacd

#endif  // GACD_DISTILL_HPP
