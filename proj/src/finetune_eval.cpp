#include "gacd/finetune_eval.hpp"

namespace gacd {

namespace {

std::vector<int> shuffled_order(int size, uint64_t seed, uint64_t tag, int epoch) {
    std::vector<int> order(static_cast<size_t>(size));
    for (int i = 0; i < size; ++i) order[static_cast<size_t>(i)] = i;
    auto rng = subrng(seed, {tag, static_cast<uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

int count_correct(const Matrix& logits, const std::vector<int>& y, int offset) {
    int correct = 0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        Eigen::Index pred;
        logits.col(j).maxCoeff(&pred);
        if (static_cast<int>(pred) == y[static_cast<size_t>(offset + j)]) ++correct;
    }
    return correct;
}

}  // namespace

Classifier adversarial_finetune(const nn::Backbone& backbone_init, int num_classes,
                                const Dataset& data, const FinetuneConfig& cfg,
                                std::vector<FinetuneEpochRecord>* log) {
    cfg.attack.validate();
    if (num_classes != data.num_classes)
        throw std::invalid_argument("class count does not match dataset");
    if (backbone_init.input_shape() != data.shape)
        throw std::invalid_argument("backbone input shape does not match dataset");

    Classifier model(backbone_init, num_classes, splitmix64(cfg.seed ^ 0xaf7ull));
    nn::Sgd opt(model.params(), model.grads(), cfg.sgd);

    int64_t iteration = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        AttackBudget budget = cfg.attack;
        if (cfg.epsilon_warmup_epochs > 0 && epoch < cfg.epsilon_warmup_epochs) {
            // ramp from zero: the first warmup epoch trains naturally
            const Scalar ramp = static_cast<Scalar>(epoch) / cfg.epsilon_warmup_epochs;
            budget.epsilon *= ramp;
            budget.step_size *= ramp;
        }
        const std::vector<int> order =
            shuffled_order(data.train.size(), cfg.seed, fnv1a64("finetune_order"), epoch);
        Scalar sum_loss = 0.0;
        int batches = 0;
        for (int start = 0; start < data.train.size(); start += cfg.batch_size) {
            const int n = std::min(cfg.batch_size, data.train.size() - start);
            Matrix x(data.shape.size(), n);
            std::vector<int> y(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) {
                const int src = order[static_cast<size_t>(start + i)];
                x.col(i) = data.train.x.col(src);
                y[static_cast<size_t>(i)] = data.train.y[static_cast<size_t>(src)];
            }

            auto attack_rng =
                subrng(cfg.seed, {fnv1a64("finetune_attack"), static_cast<uint64_t>(iteration)});
            const Matrix x_adv = pgd_attack(model, x, y, budget, attack_rng);

            model.zero_grad();
            const Scalar loss = model.ce_backward(x_adv, y);
            if (!std::isfinite(loss)) throw std::runtime_error("non-finite fine-tune loss");
            opt.step(opt.lr_at_epoch(epoch));
            sum_loss += loss;
            ++batches;
            ++iteration;
        }
        if (log) log->push_back({epoch, sum_loss / std::max(1, batches)});
    }
    return model;
}

EvalReport evaluate(Classifier& model, const Dataset& data, const DatasetSplit& split,
                    const std::optional<AttackBudget>& budget, uint64_t seed,
                    const std::string& model_id) {
    if (split.size() == 0) throw std::invalid_argument("empty evaluation split");
    const int max_label = *std::max_element(split.y.begin(), split.y.end());
    if (max_label >= model.num_classes())
        throw std::invalid_argument("dataset labels exceed the model's class count");

    EvalReport report;
    report.dataset_id = data.id;
    report.model_id = model_id;

    const int batch = 128;
    int nat_correct = 0, adv_correct = 0;
    for (int start = 0; start < split.size(); start += batch) {
        const int n = std::min(batch, split.size() - start);
        const Matrix x = split.x.middleCols(start, n);
        nat_correct += count_correct(model.logits(x), split.y, start);
        if (budget) {
            std::vector<int> y(split.y.begin() + start, split.y.begin() + start + n);
            auto rng = subrng(seed, {fnv1a64("eval_attack"), static_cast<uint64_t>(start)});
            const Matrix x_adv = pgd_attack(model, x, y, *budget, rng);
            adv_correct += count_correct(model.logits(x_adv), split.y, start);
        }
    }

    report.natural_pct = 100.0 * nat_correct / split.size();
    if (budget) {
        report.has_adversarial = true;
        report.adversarial_pct = 100.0 * adv_correct / split.size();
        report.attack_desc = budget->describe();
        // Attacks only hurt; allow one sample of slack for pathological flips.
        const Scalar tie_tol = 100.0 / split.size() + 1e-9;
        if (report.adversarial_pct > report.natural_pct + tie_tol)
            throw std::runtime_error("adversarial accuracy exceeded natural accuracy");
    }
    return report;
}

EvalReport linear_probe_transfer(const nn::Backbone& frozen_backbone, const Dataset& transfer,
                                 const ProbeConfig& cfg, const std::string& model_id) {
    cfg.attack.validate();
    nn::Backbone backbone = frozen_backbone;  // local copy; caller's stays untouched
    const uint64_t frozen_hash = backbone.params_hash();
    const ImageShape native = backbone.input_shape();

    Dataset local = transfer;
    if (transfer.shape != native) {
        local.train.x = resize_bilinear(transfer.train.x, transfer.shape, native);
        local.test.x = resize_bilinear(transfer.test.x, transfer.shape, native);
        local.shape = native;
    }

    // Features are fixed, so extract once and train the probe on them.
    Matrix train_feats(backbone.feature_dim(), local.train.size());
    for (int start = 0; start < local.train.size(); start += 256) {
        const int n = std::min(256, local.train.size() - start);
        train_feats.middleCols(start, n) = backbone.forward(local.train.x.middleCols(start, n));
    }

    auto head_rng = subrng(cfg.seed, {fnv1a64("probe_head")});
    nn::Linear probe(backbone.feature_dim(), local.num_classes, true, head_rng);
    std::vector<Matrix*> params, grads;
    probe.collect(params, grads);
    nn::Sgd opt(params, grads, cfg.sgd);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::vector<int> order =
            shuffled_order(local.train.size(), cfg.seed, fnv1a64("probe_order"), epoch);
        for (int start = 0; start < local.train.size(); start += cfg.batch_size) {
            const int n = std::min(cfg.batch_size, local.train.size() - start);
            Matrix f(backbone.feature_dim(), n);
            std::vector<int> y(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) {
                const int src = order[static_cast<size_t>(start + i)];
                f.col(i) = train_feats.col(src);
                y[static_cast<size_t>(i)] = local.train.y[static_cast<size_t>(src)];
            }
            const Matrix probs = softmax_columns(probe.forward(f));
            for (Matrix* g : grads) g->setZero();
            probe.backward(ce_logit_grad(probs, y), true);
            opt.step(opt.lr_at_epoch(epoch));
        }
    }

    if (backbone.params_hash() != frozen_hash)
        throw std::runtime_error("frozen backbone changed during probe training");

    // Adversarial probe accuracy attacks the composite model.
    Classifier composite(backbone, local.num_classes, 0);
    composite.head().weight() = probe.weight();
    composite.head().bias() = probe.bias();
    EvalReport report =
        evaluate(composite, local, local.test, cfg.attack, splitmix64(cfg.seed ^ 0x9e0beull),
                 model_id + "+probe");
    if (composite.backbone().params_hash() != frozen_hash)
        throw std::runtime_error("frozen backbone changed during probe evaluation");
    return report;
}

}  // namespace gacd
