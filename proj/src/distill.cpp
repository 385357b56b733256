#include "gacd/distill.hpp"

#include <chrono>
#include <filesystem>

namespace gacd {

void DistillConfig::validate(int dataset_size) const {
    if (epochs < 0) throw std::invalid_argument("epochs must be nonnegative");
    if (batch_size < 1) throw std::invalid_argument("batch size must be positive");
    if (embed_dim < 1) throw std::invalid_argument("embed dim must be positive");
    if (bank_momentum < 0.0 || bank_momentum >= 1.0)
        throw std::invalid_argument("bank momentum must be in [0,1)");
    critic(dataset_size).validate();
    scatter.validate();
    ot.validate();
}

CriticConfig DistillConfig::critic(int dataset_size) const {
    return CriticConfig{temperature, negatives, dataset_size, logit_clamp};
}

void DistillState::bind_optimizer(const nn::SgdConfig& cfg, Scalar teacher_head_lr_scale) {
    grad_teacher_head = Matrix::Zero(teacher_head.weight.rows(), teacher_head.weight.cols());
    grad_student_head = Matrix::Zero(student_head.weight.rows(), student_head.weight.cols());
    std::vector<Matrix*> params = student.params();
    std::vector<Matrix*> grads = student.grads();
    params.push_back(&student_head.weight);
    grads.push_back(&grad_student_head);
    params.push_back(&teacher_head.weight);
    grads.push_back(&grad_teacher_head);
    optimizer = nn::Sgd(params, grads, cfg);
    optimizer.set_lr_scale(params.size() - 1, teacher_head_lr_scale);
}

void DistillState::rebind_optimizer() {
    std::vector<Matrix*> params = student.params();
    std::vector<Matrix*> grads = student.grads();
    params.push_back(&student_head.weight);
    grads.push_back(&grad_student_head);
    params.push_back(&teacher_head.weight);
    grads.push_back(&grad_teacher_head);
    optimizer.rebind(params, grads);
}

namespace {

// Subsample of training columns for the head warm start (deterministic).
std::vector<int> warmstart_sample(int dataset_size, int cap, uint64_t seed) {
    std::vector<int> idx(static_cast<size_t>(dataset_size));
    for (int i = 0; i < dataset_size; ++i) idx[static_cast<size_t>(i)] = i;
    if (dataset_size > cap) {
        auto rng = subrng(seed, {fnv1a64("head_warmstart")});
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(static_cast<size_t>(cap));
    }
    return idx;
}

// Points the leading embedding directions along between-class feature
// separations so anchors of different classes start far apart on the
// sphere; remaining rows stay small-random to keep instance variety.
void discriminative_teacher_head(ProjectionHead& head, const Matrix& feats,
                                 const std::vector<int>& labels, int num_classes) {
    const Eigen::Index dim = feats.rows();
    std::vector<Vector> means(static_cast<size_t>(num_classes), Vector::Zero(dim));
    std::vector<int> counts(static_cast<size_t>(num_classes), 0);
    Vector global = Vector::Zero(dim);
    for (Eigen::Index j = 0; j < feats.cols(); ++j) {
        means[static_cast<size_t>(labels[static_cast<size_t>(j)])] += feats.col(j);
        ++counts[static_cast<size_t>(labels[static_cast<size_t>(j)])];
        global += feats.col(j);
    }
    global /= static_cast<Scalar>(feats.cols());

    Scalar within = 0.0;
    for (Eigen::Index j = 0; j < feats.cols(); ++j)
        within +=
            (feats.col(j) - means[static_cast<size_t>(labels[static_cast<size_t>(j)])] /
                                std::max(1, counts[static_cast<size_t>(labels[static_cast<size_t>(j)])]))
                .squaredNorm();
    within = std::sqrt(within / feats.cols());

    head.weight *= 0.05;  // keep the random tail as low-amplitude variety
    int row = 0;
    std::vector<Vector> basis;
    for (int c = 0; c < num_classes && row < head.embed_dim(); ++c) {
        if (counts[static_cast<size_t>(c)] == 0) continue;
        Vector dir = means[static_cast<size_t>(c)] / counts[static_cast<size_t>(c)] - global;
        for (const Vector& b : basis) dir -= b * b.dot(dir);  // Gram-Schmidt
        const Scalar norm = dir.norm();
        if (norm < 1e-8 * within || norm < 1e-12) continue;
        dir /= norm;
        basis.push_back(dir);
        // strong enough that the class component dominates the embedding
        head.weight.row(row++) = (3.0 / std::max(within, Scalar(1e-12))) * dir.transpose();
    }
}

// Ridge-fits the student head so initial student embeddings point at the
// teacher anchors: W = T Fᵀ (F Fᵀ + λI)⁻¹.
void ridge_fit_student_head(ProjectionHead& head, const Matrix& student_feats,
                            const Matrix& anchor_embeddings) {
    const Eigen::Index dim = student_feats.rows();
    Matrix gram = student_feats * student_feats.transpose();
    const Scalar lambda = 1e-3 * gram.trace() / static_cast<Scalar>(dim) + 1e-9;
    gram += lambda * Matrix::Identity(dim, dim);
    head.weight = anchor_embeddings * student_feats.transpose() * gram.llt().solve(
                      Matrix::Identity(dim, dim));
}

}  // namespace

std::unique_ptr<DistillState> distill_init(const Classifier& teacher,
                                           const std::string& student_arch, const Dataset& data,
                                           const DistillConfig& cfg) {
    cfg.validate(data.train.size());
    if (teacher.num_classes() != data.num_classes)
        throw std::invalid_argument("teacher class count (" +
                                    std::to_string(teacher.num_classes()) +
                                    ") does not match dataset (" +
                                    std::to_string(data.num_classes) + ")");
    if (teacher.backbone().input_shape() != data.shape)
        throw std::invalid_argument("teacher input shape does not match dataset");

    auto state = std::make_unique<DistillState>();
    state->teacher = teacher;
    state->student = nn::Backbone::make(student_arch, data.shape, splitmix64(cfg.seed));
    auto head_rng = subrng(cfg.seed, {fnv1a64("proj_heads")});
    state->teacher_head =
        ProjectionHead::random(cfg.embed_dim, teacher.backbone().feature_dim(), head_rng);
    state->student_head =
        ProjectionHead::random(cfg.embed_dim, state->student.feature_dim(), head_rng);

    if (cfg.head_warmstart) {
        const std::vector<int> sample = warmstart_sample(data.train.size(), 2048, cfg.seed);
        Matrix x(data.shape.size(), static_cast<Eigen::Index>(sample.size()));
        std::vector<int> labels(sample.size());
        for (size_t i = 0; i < sample.size(); ++i) {
            x.col(static_cast<Eigen::Index>(i)) = data.train.x.col(sample[i]);
            labels[i] = data.train.y[static_cast<size_t>(sample[i])];
        }
        const Matrix teacher_feats = state->teacher.features(x);
        discriminative_teacher_head(state->teacher_head, teacher_feats, labels, data.num_classes);
        const Matrix anchors = project_and_normalize_batch(teacher_feats, state->teacher_head);
        ridge_fit_student_head(state->student_head, state->student.forward(x), anchors);
    }

    state->bank =
        MemoryBank::init(data.train.size(), cfg.embed_dim, data.train.y, cfg.bank_momentum,
                         splitmix64(cfg.seed ^ 0xba17c0debull));
    state->teacher_hash_at_init = teacher.backbone().params_hash();
    state->bind_optimizer(cfg.sgd, cfg.teacher_head_lr_scale);
    return state;
}

StepResult distill_step(DistillState& state, const Matrix& x, const std::vector<int>& y,
                        const std::vector<int>& indices, const DistillConfig& cfg) {
    if (x.cols() == 0) throw std::invalid_argument("empty batch");
    if (static_cast<size_t>(x.cols()) != y.size() || y.size() != indices.size())
        throw std::invalid_argument("batch/label/index size mismatch");
    const int n = static_cast<int>(x.cols());
    const CriticConfig critic = cfg.critic(state.bank.size());

    // 1. Positives: feature-scatter the batch against the student's current
    //    representation. The congruent pair feeds this same x+ to both nets.
    auto scatter_rng = subrng(cfg.seed, {fnv1a64("scatter"), static_cast<uint64_t>(state.iteration)});
    BackboneFeatureAdapter student_features(state.student);
    const Matrix x_pos = feature_scatter_positive(student_features, x, cfg.scatter, cfg.ot,
                                                  scatter_rng);

    // 2. Teacher anchor embeddings and per-sample weights on x+.
    const Matrix teacher_feats = state.teacher.features(x_pos);
    const Matrix teacher_logits = state.teacher.head().forward(teacher_feats);
    ProjectionTape teacher_tape = project_forward(teacher_feats, state.teacher_head);

    std::vector<Scalar> weights(static_cast<size_t>(n), 1.0);
    if (cfg.reweighting)
        for (int i = 0; i < n; ++i)
            weights[static_cast<size_t>(i)] =
                teacher_weight(teacher_logits.col(i), y[static_cast<size_t>(i)]);

    // 3. Student embeddings of the same scattered batch.
    const Matrix student_feats = state.student.forward(x_pos);
    ProjectionTape student_tape = project_forward(student_feats, state.student_head);

    // 4. Assemble per-anchor pair sets from the bank and accumulate the
    //    reweighted likelihood and its embedding-space gradients.
    StepResult result;
    Matrix g_student_emb = Matrix::Zero(cfg.embed_dim, n);
    Matrix g_teacher_emb = Matrix::Zero(cfg.embed_dim, n);
    const Scalar inv_n = 1.0 / static_cast<Scalar>(n);
    std::vector<int> neg_indices;
    for (int i = 0; i < n; ++i) {
        SamplePairSet pairs;
        pairs.anchor = teacher_tape.embeddings.col(i);
        pairs.positive = student_tape.embeddings.col(i);
        auto neg_rng = subrng(cfg.seed, {fnv1a64("negatives"), static_cast<uint64_t>(state.iteration),
                                         static_cast<uint64_t>(i)});
        state.bank.sample_negatives(y[static_cast<size_t>(i)], cfg.negatives, neg_rng,
                                    pairs.negatives, neg_indices);
        pairs.weight = weights[static_cast<size_t>(i)];

        NceResult nce = reweighted_nce_with_grads(pairs, critic);
        result.objective += nce.value * inv_n;
        result.mean_log_posterior += nce.log_posterior * inv_n;
        result.saturated += nce.saturated;
        // Minimize −mean ℓ: flip sign and average. Bank columns are stored
        // snapshots, so only the live pair routes gradient.
        g_student_emb.col(i) -= inv_n * nce.grad_positive.col(0);
        g_teacher_emb.col(i) -= inv_n * nce.grad_anchor.col(0);
        if (cfg.capture_pair_sets) result.pair_sets.push_back(std::move(pairs));
    }

    if (!std::isfinite(result.objective))
        throw std::runtime_error("non-finite distillation objective; step aborted");

    // 5. Backpropagate: student head and backbone, teacher head only (the
    //    teacher backbone is frozen and never sees a gradient).
    state.student.zero_grad();
    state.grad_student_head.setZero();
    state.grad_teacher_head.setZero();
    Matrix g_student_feats =
        project_backward(student_tape, state.student_head, g_student_emb, state.grad_student_head);
    state.student.backward(g_student_feats, true);
    project_backward(teacher_tape, state.teacher_head, g_teacher_emb, state.grad_teacher_head);

    state.optimizer.step(state.optimizer.lr_at_epoch(state.next_epoch));

    // 6. Bank refresh with the embeddings computed this step.
    for (int i = 0; i < n; ++i)
        state.bank.update(indices[static_cast<size_t>(i)], student_tape.embeddings.col(i));

    state.saturated_terms += result.saturated;
    ++state.iteration;
    return result;
}

namespace {

std::vector<int> epoch_order(int size, uint64_t seed, int epoch) {
    std::vector<int> order(static_cast<size_t>(size));
    for (int i = 0; i < size; ++i) order[static_cast<size_t>(i)] = i;
    auto rng = subrng(seed, {fnv1a64("epoch_order"), static_cast<uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

// Objective at an epoch boundary: fixed batch order, fixed negative draws,
// frozen bank. The per-batch values seen while training average over a
// moving model; this is the likelihood of the state itself.
void evaluate_objective(DistillState& state, const Dataset& data, const DistillConfig& cfg,
                        Scalar* mean_objective, Scalar* mean_log_posterior) {
    const CriticConfig critic = cfg.critic(state.bank.size());
    const int n_total = data.train.size();
    Scalar sum = 0.0, sum_logpost = 0.0;
    Matrix negatives;
    std::vector<int> neg_indices;
    for (int start = 0; start < n_total; start += cfg.batch_size) {
        const int n = std::min(cfg.batch_size, n_total - start);
        const Matrix x = data.train.x.middleCols(start, n);

        auto scatter_rng = subrng(cfg.seed, {fnv1a64("eval_scatter"), static_cast<uint64_t>(start)});
        BackboneFeatureAdapter student_features(state.student);
        const Matrix x_pos =
            feature_scatter_positive(student_features, x, cfg.scatter, cfg.ot, scatter_rng);

        const Matrix teacher_feats = state.teacher.features(x_pos);
        const Matrix teacher_logits = state.teacher.head().forward(teacher_feats);
        const Matrix anchors = project_and_normalize_batch(teacher_feats, state.teacher_head);
        const Matrix positives =
            project_and_normalize_batch(state.student.forward(x_pos), state.student_head);

        for (int i = 0; i < n; ++i) {
            const int label = data.train.y[static_cast<size_t>(start + i)];
            SamplePairSet pairs;
            pairs.anchor = anchors.col(i);
            pairs.positive = positives.col(i);
            auto neg_rng =
                subrng(cfg.seed, {fnv1a64("eval_negatives"), static_cast<uint64_t>(start + i)});
            state.bank.sample_negatives(label, cfg.negatives, neg_rng, pairs.negatives, neg_indices);
            pairs.weight =
                cfg.reweighting ? teacher_weight(teacher_logits.col(i), label) : Scalar(1.0);
            Scalar log_post = 0.0;
            sum += reweighted_nce_objective(pairs, critic, &log_post);
            sum_logpost += log_post;
        }
    }
    *mean_objective = sum / n_total;
    *mean_log_posterior = sum_logpost / n_total;
}

Scalar natural_accuracy(Classifier& model, const DatasetSplit& split) {
    int correct = 0;
    const int batch = 256;
    for (int start = 0; start < split.size(); start += batch) {
        const int n = std::min(batch, split.size() - start);
        Matrix logits = model.logits(split.x.middleCols(start, n));
        for (int i = 0; i < n; ++i) {
            Eigen::Index pred;
            logits.col(i).maxCoeff(&pred);
            if (static_cast<int>(pred) == split.y[static_cast<size_t>(start + i)]) ++correct;
        }
    }
    return 100.0 * correct / std::max(1, split.size());
}

}  // namespace

DistillRunResult distill_train(DistillState& state, const Dataset& data, const DistillConfig& cfg,
                               const std::string& checkpoint_dir, uint64_t config_hash,
                               const EpochCallback& on_epoch) {
    cfg.validate(data.train.size());
    if (state.teacher.num_classes() != data.num_classes)
        throw std::invalid_argument("teacher/dataset class count mismatch");

    DistillRunResult run;
    run.teacher_natural_pct = natural_accuracy(state.teacher, data.test);

    const uint64_t teacher_before = state.teacher.backbone().params_hash();
    for (int epoch = state.next_epoch; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::vector<int> order = epoch_order(data.train.size(), cfg.seed, epoch);
        for (int start = 0; start < data.train.size(); start += cfg.batch_size) {
            const int n = std::min(cfg.batch_size, data.train.size() - start);
            Matrix x(data.shape.size(), n);
            std::vector<int> y(static_cast<size_t>(n)), idx(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) {
                const int src = order[static_cast<size_t>(start + i)];
                x.col(i) = data.train.x.col(src);
                y[static_cast<size_t>(i)] = data.train.y[static_cast<size_t>(src)];
                idx[static_cast<size_t>(i)] = src;
            }
            distill_step(state, x, y, idx, cfg);
        }
        state.next_epoch = epoch + 1;

        DistillEpochRecord rec;
        rec.epoch = epoch;
        Scalar mean_obj = 0.0, mean_logpost = 0.0;
        evaluate_objective(state, data, cfg, &mean_obj, &mean_logpost);
        rec.mean_neg_objective = -mean_obj;
        rec.mi_bound = mi_lower_bound(mean_logpost, cfg.negatives);
        rec.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        run.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (!checkpoint_dir.empty())
            state.save((std::filesystem::path(checkpoint_dir) / "distill_latest.ckpt").string(),
                       config_hash);
    }

    if (state.teacher.backbone().params_hash() != teacher_before)
        throw std::runtime_error("teacher backbone changed during distillation");
    return run;
}

namespace {
constexpr uint32_t kDistillMagic = 0x47445331;  // "GDS1"
}

void DistillState::save(const std::string& path, uint64_t config_hash) const {
    BinaryWriter w(path);
    w.u32(kDistillMagic);
    w.u64(config_hash);
    w.i64(iteration);
    w.i64(next_epoch);
    w.i64(saturated_terms);
    w.u64(teacher_hash_at_init);
    teacher.save(w);
    teacher_head.save(w);
    student.save(w);
    student_head.save(w);
    bank.save(w);
    optimizer.save(w);
    w.commit();
}

std::unique_ptr<DistillState> DistillState::load(const std::string& path, uint64_t* config_hash) {
    BinaryReader r(path);
    if (r.u32() != kDistillMagic) throw std::runtime_error("not a distill checkpoint: " + path);
    const uint64_t hash = r.u64();
    if (config_hash) *config_hash = hash;
    auto state = std::make_unique<DistillState>();
    state->iteration = r.i64();
    state->next_epoch = static_cast<int>(r.i64());
    state->saturated_terms = r.i64();
    state->teacher_hash_at_init = r.u64();
    state->teacher = Classifier::load(r);
    state->teacher_head = ProjectionHead::load(r);
    state->student = nn::Backbone::load(r);
    state->student_head = ProjectionHead::load(r);
    state->bank = MemoryBank::load(r);
    state->grad_teacher_head =
        Matrix::Zero(state->teacher_head.weight.rows(), state->teacher_head.weight.cols());
    state->grad_student_head =
        Matrix::Zero(state->student_head.weight.rows(), state->student_head.weight.cols());
    state->optimizer.load(r);
    state->rebind_optimizer();
    return state;
}

Scalar kd_soft_loss(const Matrix& teacher_logits, const Matrix& student_logits,
                    Scalar temperature) {
    if (teacher_logits.rows() != student_logits.rows() ||
        teacher_logits.cols() != student_logits.cols())
        throw std::invalid_argument("logit shape mismatch");
    const Matrix pt = softmax_columns(teacher_logits / temperature);
    const Matrix ps = softmax_columns(student_logits / temperature);
    Scalar kl = 0.0;
    for (Eigen::Index j = 0; j < pt.cols(); ++j)
        for (Eigen::Index i = 0; i < pt.rows(); ++i)
            if (pt(i, j) > 0)
                kl += pt(i, j) * (std::log(pt(i, j)) - std::log(std::max(ps(i, j), 1e-300)));
    return temperature * temperature * kl / static_cast<Scalar>(pt.cols());
}

Matrix kd_soft_logit_grad(const Matrix& teacher_logits, const Matrix& student_logits,
                          Scalar temperature) {
    const Matrix pt = softmax_columns(teacher_logits / temperature);
    const Matrix ps = softmax_columns(student_logits / temperature);
    // d/dz of T²·KL(pt ‖ softmax(z/T)) = T·(ps − pt), averaged over the batch
    return temperature * (ps - pt) / static_cast<Scalar>(pt.cols());
}

Classifier kd_baseline_train(Classifier& teacher, const std::string& student_arch,
                             const Dataset& data, const KdConfig& cfg,
                             std::vector<KdEpochRecord>* log) {
    if (teacher.num_classes() != data.num_classes)
        throw std::invalid_argument("teacher/dataset class count mismatch");
    Classifier student(nn::Backbone::make(student_arch, data.shape, splitmix64(cfg.seed ^ 0x6bd1ull)),
                       data.num_classes, splitmix64(cfg.seed ^ 0x6bd2ull));
    nn::Sgd opt(student.params(), student.grads(), cfg.sgd);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::vector<int> order = epoch_order(data.train.size(), cfg.seed, epoch);
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

            const Matrix t_logits = teacher.logits(x);
            const Matrix s_logits = student.logits(x);
            Scalar loss = kd_soft_loss(t_logits, s_logits, cfg.temperature);
            Matrix glogits = kd_soft_logit_grad(t_logits, s_logits, cfg.temperature);
            if (cfg.hard_label_weight > 0.0) {
                const Matrix probs = softmax_columns(s_logits);
                loss += cfg.hard_label_weight * ce_loss(probs, y);
                glogits += cfg.hard_label_weight * ce_logit_grad(probs, y);
            }
            if (!std::isfinite(loss)) throw std::runtime_error("non-finite KD loss");

            student.zero_grad();
            // student.logits above cached activations for this batch
            Matrix gfeat = student.head().backward(glogits, true);
            student.backbone().backward(gfeat, true);
            opt.step(opt.lr_at_epoch(epoch));
            sum_loss += loss;
            ++batches;
        }
        if (log) log->push_back({epoch, sum_loss / std::max(1, batches)});
    }
    return student;
}

}  // namespace gacd
