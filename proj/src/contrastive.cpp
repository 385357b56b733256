#include "gacd/contrastive.hpp"

#include <algorithm>

namespace gacd {

void CriticConfig::validate() const {
    if (temperature <= 0) throw std::invalid_argument("temperature must be positive");
    if (negatives < 1) throw std::invalid_argument("negative count must be >= 1");
    if (cardinality <= negatives)
        throw std::invalid_argument("dataset cardinality must exceed negative count");
    if (logit_clamp <= 0) throw std::invalid_argument("logit clamp must be positive");
}

namespace {

inline Scalar clamp_logit(Scalar z, const CriticConfig& cfg, int* saturated) {
    if (std::abs(z) > cfg.logit_clamp) {
        if (saturated) ++*saturated;
        return std::copysign(cfg.logit_clamp, z);
    }
    return z;
}

}  // namespace

Scalar critic_logit(const Vector& t, const Vector& s, const CriticConfig& cfg) {
    if (t.size() != s.size()) throw std::invalid_argument("embedding dimension mismatch");
    const Scalar ratio = static_cast<Scalar>(cfg.negatives) / static_cast<Scalar>(cfg.cardinality);
    return t.dot(s) / cfg.temperature - std::log(ratio);
}

Scalar critic_h(const Vector& t, const Vector& s, const CriticConfig& cfg) {
    int sat = 0;
    const Scalar h = sigmoid(clamp_logit(critic_logit(t, s, cfg), cfg, &sat));
    // sigmoid(50) rounds to 1.0 in double; keep the posterior strictly
    // inside (0,1). The objective itself works in log space and never
    // evaluates this rounded value.
    return std::min(std::max(h, std::numeric_limits<Scalar>::min()),
                    std::nextafter(Scalar(1.0), Scalar(0.0)));
}

void SamplePairSet::validate(const CriticConfig& cfg) const {
    if (negatives.cols() != cfg.negatives)
        throw std::invalid_argument("pair set must hold exactly k negatives");
    if (anchor.size() != positive.size() || anchor.size() != negatives.rows())
        throw std::invalid_argument("embedding dimension mismatch in pair set");
    if (weight <= 0.0 && weight != 0.0) throw std::invalid_argument("weight must be in [0,1]");
    if (weight > 1.0) throw std::invalid_argument("weight must be in [0,1]");
    const Scalar tol = 1e-5;
    if (std::abs(anchor.norm() - 1.0) > tol || std::abs(positive.norm() - 1.0) > tol)
        throw std::invalid_argument("anchor/positive must be unit-norm");
    for (Eigen::Index j = 0; j < negatives.cols(); ++j)
        if (std::abs(negatives.col(j).norm() - 1.0) > tol)
            throw std::invalid_argument("negatives must be unit-norm");
}

Scalar reweighted_nce_objective(const SamplePairSet& pairs, const CriticConfig& cfg,
                                Scalar* log_posterior, int* saturated) {
    const Scalar log_ratio =
        std::log(static_cast<Scalar>(cfg.negatives) / static_cast<Scalar>(cfg.cardinality));
    const Scalar inv_t = 1.0 / cfg.temperature;
    int sat = 0;

    const Scalar z_pos = clamp_logit(pairs.anchor.dot(pairs.positive) * inv_t - log_ratio, cfg, &sat);
    const Scalar log_h_pos = -softplus(-z_pos);  // log sigmoid(z)

    Scalar sum = log_h_pos;
    for (Eigen::Index j = 0; j < pairs.negatives.cols(); ++j) {
        const Scalar z =
            clamp_logit(pairs.anchor.dot(pairs.negatives.col(j)) * inv_t - log_ratio, cfg, &sat);
        sum += -softplus(z);  // log(1 − sigmoid(z))
    }

    if (log_posterior) *log_posterior = log_h_pos;
    if (saturated) *saturated = sat;
    return pairs.weight * sum;
}

NceResult reweighted_nce_with_grads(const SamplePairSet& pairs, const CriticConfig& cfg) {
    const Scalar log_ratio =
        std::log(static_cast<Scalar>(cfg.negatives) / static_cast<Scalar>(cfg.cardinality));
    const Scalar inv_t = 1.0 / cfg.temperature;
    const Scalar w = pairs.weight;

    NceResult res;
    res.grad_anchor = Matrix::Zero(pairs.anchor.size(), 1);
    res.grad_positive = Matrix::Zero(pairs.anchor.size(), 1);
    res.grad_negatives = Matrix::Zero(pairs.negatives.rows(), pairs.negatives.cols());

    const Scalar z_pos_raw = pairs.anchor.dot(pairs.positive) * inv_t - log_ratio;
    const Scalar z_pos = clamp_logit(z_pos_raw, cfg, &res.saturated);
    const Scalar h_pos = sigmoid(z_pos);
    res.log_posterior = -softplus(-z_pos);
    Scalar sum = res.log_posterior;
    if (z_pos == z_pos_raw) {  // clamped logits get zero gradient
        res.grad_positive.col(0) = w * (1.0 - h_pos) * inv_t * pairs.anchor;
        res.grad_anchor.col(0) += w * (1.0 - h_pos) * inv_t * pairs.positive;
    }

    for (Eigen::Index j = 0; j < pairs.negatives.cols(); ++j) {
        const Scalar z_raw = pairs.anchor.dot(pairs.negatives.col(j)) * inv_t - log_ratio;
        const Scalar z = clamp_logit(z_raw, cfg, &res.saturated);
        const Scalar h = sigmoid(z);
        sum += -softplus(z);
        if (z == z_raw) {
            res.grad_negatives.col(j) = -w * h * inv_t * pairs.anchor;
            res.grad_anchor.col(0) -= w * h * inv_t * pairs.negatives.col(j);
        }
    }

    res.value = w * sum;
    return res;
}

Scalar mi_lower_bound(Scalar expected_log_posterior, int k) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    return std::log(static_cast<Scalar>(k)) + expected_log_posterior;
}

MemoryBank MemoryBank::init(int size, int embed_dim, const std::vector<int>& labels,
                            Scalar momentum, uint64_t seed) {
    if (size <= 0) throw std::invalid_argument("bank size must be positive");
    if (static_cast<int>(labels.size()) != size)
        throw std::invalid_argument("label count must equal bank size");
    if (momentum < 0.0 || momentum >= 1.0)
        throw std::invalid_argument("bank momentum must be in [0,1)");

    MemoryBank bank;
    bank.labels_ = labels;
    bank.momentum_ = momentum;
    bank.slots_.resize(embed_dim, size);
    auto rng = subrng(seed, {fnv1a64("memory_bank_init")});
    std::normal_distribution<Scalar> dist(0.0, 1.0);
    for (int j = 0; j < size; ++j) {
        Vector v(embed_dim);
        do {
            for (int i = 0; i < embed_dim; ++i) v(i) = dist(rng);
        } while (v.norm() < 1e-12);
        bank.slots_.col(j) = v / v.norm();
    }
    bank.build_class_index();
    return bank;
}

void MemoryBank::build_class_index() {
    const int num_classes = labels_.empty() ? 0 : *std::max_element(labels_.begin(), labels_.end()) + 1;
    class_count_.assign(num_classes, 0);
    for (int lab : labels_) {
        if (lab < 0) throw std::invalid_argument("negative class label");
        ++class_count_[lab];
    }
    class_offset_.assign(num_classes + 1, 0);
    for (int c = 0; c < num_classes; ++c) class_offset_[c + 1] = class_offset_[c] + class_count_[c];
    class_order_.resize(labels_.size());
    std::vector<int> cursor(class_offset_.begin(), class_offset_.end() - 1);
    for (int i = 0; i < static_cast<int>(labels_.size()); ++i)
        class_order_[cursor[labels_[i]]++] = i;
}

void MemoryBank::sample_negatives(int anchor_class, int k, std::mt19937_64& rng,
                                  Matrix& out_embeddings, std::vector<int>& out_indices,
                                  bool with_replacement) const {
    const int num_classes = static_cast<int>(class_count_.size());
    const int excluded =
        (anchor_class >= 0 && anchor_class < num_classes) ? class_count_[anchor_class] : 0;
    const int eligible = size() - excluded;
    if (eligible < 1) throw std::runtime_error("no instances outside the anchor class");
    if (!with_replacement && eligible < k)
        throw std::runtime_error("fewer eligible instances than requested negatives");

    out_indices.resize(k);
    out_embeddings.resize(embed_dim(), k);
    const int excl_start =
        (anchor_class >= 0 && anchor_class < num_classes) ? class_offset_[anchor_class] : size();

    if (with_replacement) {
        std::uniform_int_distribution<int> dist(0, eligible - 1);
        for (int j = 0; j < k; ++j) {
            int r = dist(rng);
            if (r >= excl_start) r += excluded;  // skip the anchor class block
            const int idx = class_order_[r];
            out_indices[j] = idx;
            out_embeddings.col(j) = slots_.col(idx);
        }
    } else {
        std::vector<int> pool;
        pool.reserve(eligible);
        for (int r = 0; r < size(); ++r)
            if (r < excl_start || r >= excl_start + excluded) pool.push_back(class_order_[r]);
        for (int j = 0; j < k; ++j) {
            std::uniform_int_distribution<int> dist(j, static_cast<int>(pool.size()) - 1);
            std::swap(pool[j], pool[dist(rng)]);
            out_indices[j] = pool[j];
            out_embeddings.col(j) = slots_.col(pool[j]);
        }
    }
}

void MemoryBank::update(int index, const Vector& fresh_embedding) {
    update(index, fresh_embedding, momentum_);
}

void MemoryBank::update(int index, const Vector& fresh_embedding, Scalar m) {
    if (index < 0 || index >= size()) throw std::out_of_range("bank index out of range");
    if (fresh_embedding.size() != embed_dim())
        throw std::invalid_argument("embedding dimension mismatch");
    if (m < 0.0 || m > 1.0) throw std::invalid_argument("update momentum must be in [0,1]");
    Vector blend = m * slots_.col(index) + (1.0 - m) * fresh_embedding;
    const Scalar norm = blend.norm();
    // Opposite old/new can cancel; fall back to the fresh embedding.
    slots_.col(index) = norm < 1e-12 ? fresh_embedding : Vector(blend / norm);
}

void MemoryBank::save(BinaryWriter& w) const {
    w.mat(slots_);
    w.ivec(labels_);
    w.f64(momentum_);
}

MemoryBank MemoryBank::load(BinaryReader& r) {
    MemoryBank bank;
    bank.slots_ = r.mat();
    bank.labels_ = r.ivec();
    bank.momentum_ = r.f64();
    if (static_cast<Eigen::Index>(bank.labels_.size()) != bank.slots_.cols())
        throw std::runtime_error("memory bank label/slot mismatch");
    bank.build_class_index();
    return bank;
}

}  // namespace gacd
