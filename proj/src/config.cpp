#include "gacd/config.hpp"

#include <fstream>
#include <sstream>

namespace gacd {

using nlohmann::json;

namespace {

const json* find_path(const json& doc, const std::string& dotted) {
    const json* cur = &doc;
    std::stringstream ss(dotted);
    std::string part;
    while (std::getline(ss, part, '.')) {
        if (!cur->is_object() || !cur->contains(part)) return nullptr;
        cur = &(*cur)[part];
    }
    return cur;
}

template <typename T>
T get_or(const json& doc, const std::string& dotted, T fallback) {
    if (const json* v = find_path(doc, dotted)) return v->get<T>();
    return fallback;
}

}  // namespace

ExperimentConfig::ExperimentConfig() : doc_(json::object()) {}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config parse error in " + path + ": " + e.what());
    }
    return from_json(doc);
}

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
    ExperimentConfig cfg;
    cfg.doc_ = doc;
    return cfg;
}

void ExperimentConfig::apply_override(const std::string& dotted_assignment) {
    const auto eq = dotted_assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw std::invalid_argument("override must look like path.to.key=value: " +
                                    dotted_assignment);
    const std::string path = dotted_assignment.substr(0, eq);
    const std::string raw = dotted_assignment.substr(eq + 1);

    json value;
    try {
        value = json::parse(raw);
    } catch (const json::parse_error&) {
        value = raw;  // bare strings are fine
    }

    json* cur = &doc_;
    std::stringstream ss(path);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    if (parts.empty()) throw std::invalid_argument("empty override path");
    for (size_t i = 0; i + 1 < parts.size(); ++i) cur = &(*cur)[parts[i]];
    (*cur)[parts.back()] = value;
}

uint64_t ExperimentConfig::hash() const { return fnv1a64(doc_.dump()); }

uint64_t ExperimentConfig::seed() const { return get_or<uint64_t>(doc_, "seed", 1); }
std::string ExperimentConfig::output_dir() const {
    return get_or<std::string>(doc_, "output_dir", "runs/default");
}
std::string ExperimentConfig::dataset_name() const {
    return get_or<std::string>(doc_, "dataset.name", "fixture");
}
std::string ExperimentConfig::dataset_path() const {
    return get_or<std::string>(doc_, "dataset.path", "");
}
std::string ExperimentConfig::transfer_name() const {
    return get_or<std::string>(doc_, "dataset.transfer_name", "fixture_shift");
}
std::string ExperimentConfig::transfer_path() const {
    return get_or<std::string>(doc_, "dataset.transfer_path", "");
}
std::string ExperimentConfig::teacher_checkpoint() const {
    return get_or<std::string>(doc_, "teacher.checkpoint", "");
}
std::string ExperimentConfig::student_arch() const {
    return get_or<std::string>(doc_, "student.arch", "small_cnn");
}
int ExperimentConfig::embed_dim() const { return get_or<int>(doc_, "student.embed_dim", 128); }

CriticConfig ExperimentConfig::critic(int dataset_cardinality) const {
    CriticConfig cfg;
    cfg.temperature = get_or<Scalar>(doc_, "critic.temperature", 0.1);
    cfg.negatives = get_or<int>(doc_, "critic.negatives", 16384);
    cfg.cardinality = dataset_cardinality;
    cfg.logit_clamp = get_or<Scalar>(doc_, "critic.logit_clamp", 50.0);
    return cfg;
}

AttackBudget ExperimentConfig::budget_at(const std::string& key,
                                         const AttackBudget& fallback) const {
    AttackBudget b = fallback;
    b.epsilon = get_or<Scalar>(doc_, key + ".epsilon", b.epsilon);
    b.steps = get_or<int>(doc_, key + ".steps", b.steps);
    b.step_size = get_or<Scalar>(doc_, key + ".step_size", b.step_size);
    b.random_start = get_or<bool>(doc_, key + ".random_start", b.random_start);
    return b;
}

AttackBudget ExperimentConfig::scatter_budget() const {
    // Random start off: positives feed the distillation stream and stay
    // reproducible for a given seed/iteration.
    return budget_at("scatter", AttackBudget{8.0 / 255.0, 7, 2.0 / 255.0, false});
}
AttackBudget ExperimentConfig::eval_budget() const {
    return budget_at("eval_attack", AttackBudget{8.0 / 255.0, 20, 2.0 / 255.0, true});
}
AttackBudget ExperimentConfig::finetune_budget() const {
    return budget_at("finetune.attack", AttackBudget{8.0 / 255.0, 7, 2.0 / 255.0, true});
}
AttackBudget ExperimentConfig::probe_budget() const {
    return budget_at("probe.attack", AttackBudget{8.0 / 255.0, 7, 2.0 / 255.0, true});
}

OTConfig ExperimentConfig::ot() const {
    OTConfig cfg;
    cfg.entropic_lambda = get_or<Scalar>(doc_, "scatter.ot_lambda", 0.01);
    cfg.iterations = get_or<int>(doc_, "scatter.ot_iterations", 50);
    return cfg;
}

ExperimentConfig::Section ExperimentConfig::section_at(const std::string& key,
                                                       const Section& fallback) const {
    Section s = fallback;
    s.epochs = get_or<int>(doc_, key + ".epochs", s.epochs);
    s.batch_size = get_or<int>(doc_, key + ".batch_size", s.batch_size);
    s.sgd.lr = get_or<Scalar>(doc_, key + ".lr", s.sgd.lr);
    s.sgd.momentum = get_or<Scalar>(doc_, key + ".momentum", s.sgd.momentum);
    s.sgd.weight_decay = get_or<Scalar>(doc_, key + ".weight_decay", s.sgd.weight_decay);
    s.sgd.decay_every = get_or<int>(doc_, key + ".decay_every", s.sgd.decay_every);
    s.sgd.decay_gamma = get_or<Scalar>(doc_, key + ".decay_gamma", s.sgd.decay_gamma);
    return s;
}

ExperimentConfig::Section ExperimentConfig::distill_section() const {
    return section_at("distill", Section{4, 64, nn::SgdConfig{0.05, 0.9, 5e-4, 30, 0.1}});
}
ExperimentConfig::Section ExperimentConfig::finetune_section() const {
    return section_at("finetune", Section{4, 64, nn::SgdConfig{0.05, 0.9, 5e-4, 30, 0.1}});
}
ExperimentConfig::Section ExperimentConfig::kd_section() const {
    return section_at("kd", Section{4, 64, nn::SgdConfig{0.05, 0.9, 5e-4, 30, 0.1}});
}
ExperimentConfig::Section ExperimentConfig::probe_section() const {
    return section_at("probe", Section{30, 128, nn::SgdConfig{0.1, 0.9, 0.0, 20, 0.1}});
}

int ExperimentConfig::finetune_epsilon_warmup() const {
    return get_or<int>(doc_, "finetune.epsilon_warmup_epochs", 0);
}
Scalar ExperimentConfig::kd_temperature() const {
    return get_or<Scalar>(doc_, "kd.temperature", 4.0);
}
Scalar ExperimentConfig::kd_hard_label_weight() const {
    return get_or<Scalar>(doc_, "kd.hard_label_weight", 0.0);
}
Scalar ExperimentConfig::bank_momentum() const {
    return get_or<Scalar>(doc_, "bank.momentum", 0.5);
}
bool ExperimentConfig::reweighting() const {
    return get_or<bool>(doc_, "distill.reweighting", true);
}
Scalar ExperimentConfig::teacher_head_lr_scale() const {
    return get_or<Scalar>(doc_, "distill.teacher_head_lr_scale", 1.0);
}
bool ExperimentConfig::head_warmstart() const {
    return get_or<bool>(doc_, "distill.head_warmstart", true);
}

std::string config_hash_hex(uint64_t hash) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

}  // namespace gacd
