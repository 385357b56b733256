#ifndef GACD_CONFIG_HPP
#define GACD_CONFIG_HPP

#include <json.hpp>
#include <string>

#include "gacd/attacks.hpp"
#include "gacd/common.hpp"
#include "gacd/contrastive.hpp"
#include "gacd/nn/optim.hpp"

namespace gacd {

// Declarative experiment document (JSON) with dotted-path CLI overrides.
// Every artifact a run produces embeds hash() for traceability.
class ExperimentConfig {
public:
    ExperimentConfig();
    static ExperimentConfig from_file(const std::string& path);
    static ExperimentConfig from_json(const nlohmann::json& doc);

    // "a.b.c=value"; value parsed as JSON when possible, else as a string.
    void apply_override(const std::string& dotted_assignment);

    uint64_t hash() const;  // over the canonical (sorted-key) dump
    const nlohmann::json& doc() const { return doc_; }

    uint64_t seed() const;
    std::string output_dir() const;
    std::string dataset_name() const;
    std::string dataset_path() const;
    std::string transfer_name() const;
    std::string transfer_path() const;
    std::string teacher_checkpoint() const;
    std::string student_arch() const;
    int embed_dim() const;

    CriticConfig critic(int dataset_cardinality) const;
    AttackBudget scatter_budget() const;
    AttackBudget eval_budget() const;
    AttackBudget finetune_budget() const;
    AttackBudget probe_budget() const;
    OTConfig ot() const;

    struct Section {
        int epochs;
        int batch_size;
        nn::SgdConfig sgd;
    };
    Section distill_section() const;
    Section finetune_section() const;
    Section kd_section() const;
    Section probe_section() const;

    int finetune_epsilon_warmup() const;
    Scalar kd_temperature() const;
    Scalar kd_hard_label_weight() const;
    Scalar bank_momentum() const;
    bool reweighting() const;
    Scalar teacher_head_lr_scale() const;
    bool head_warmstart() const;

private:
    AttackBudget budget_at(const std::string& key, const AttackBudget& fallback) const;
    Section section_at(const std::string& key, const Section& fallback) const;
    nlohmann::json doc_;
};

std::string config_hash_hex(uint64_t hash);

}  // namespace gacd

#endif  // GACD_CONFIG_HPP
