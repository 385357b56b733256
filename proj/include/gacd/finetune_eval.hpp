#ifndef GACD_FINETUNE_EVAL_HPP
#define GACD_FINETUNE_EVAL_HPP

#include <optional>
#include <string>
#include <vector>

#include "gacd/attacks.hpp"
#include "gacd/data.hpp"
#include "gacd/nn/model.hpp"
#include "gacd/nn/optim.hpp"

namespace gacd {

struct EvalReport {
    Scalar natural_pct = 0.0;
    Scalar adversarial_pct = 0.0;
    bool has_adversarial = false;
    std::string dataset_id;
    std::string model_id;
    std::string attack_desc;
};

struct FinetuneConfig {
    int epochs = 4;
    int batch_size = 64;
    nn::SgdConfig sgd{0.05, 0.9, 5e-4, 30, 0.1};
    AttackBudget attack{8.0 / 255.0, 7, 2.0 / 255.0, true};
    // Ramp ε (and step size) linearly over the first epochs. Hitting a
    // fresh head with the full budget tends to push small models into the
    // constant-predictor trap.
    int epsilon_warmup_epochs = 0;
    uint64_t seed = 1;
};

struct FinetuneEpochRecord {
    int epoch = 0;
    Scalar mean_loss = 0.0;
};

// Madry-protocol adversarial training of backbone + fresh linear head, all
// layers trainable. With epsilon = 0 this is plain natural training (used
// for the undefended baseline and from-scratch teachers).
Classifier adversarial_finetune(const nn::Backbone& backbone_init, int num_classes,
                                const Dataset& data, const FinetuneConfig& cfg,
                                std::vector<FinetuneEpochRecord>* log = nullptr);

// Natural accuracy over the full split, plus adversarial accuracy under the
// budget when one is given. Attacked inputs are crafted per batch against
// this model.
EvalReport evaluate(Classifier& model, const Dataset& data, const DatasetSplit& split,
                    const std::optional<AttackBudget>& budget, uint64_t seed,
                    const std::string& model_id);

struct ProbeConfig {
    int epochs = 30;
    int batch_size = 128;
    nn::SgdConfig sgd{0.1, 0.9, 0.0, 20, 0.1};
    AttackBudget attack{8.0 / 255.0, 7, 2.0 / 255.0, true};
    uint64_t seed = 1;
};

// Linear-evaluation transfer: trains a linear classifier on clean features
// of the frozen backbone (resizing the transfer set to the backbone's input
// resolution when needed), then reports natural and attacked accuracy of
// the frozen-backbone + probe composite on the transfer test split.
EvalReport linear_probe_transfer(const nn::Backbone& frozen_backbone, const Dataset& transfer,
                                 const ProbeConfig& cfg, const std::string& model_id);

}  // namespace gacd

#endif  // GACD_FINETUNE_EVAL_HPP
