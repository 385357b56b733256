#include "gacd/nn/optim.hpp"

namespace gacd::nn {

Sgd::Sgd(std::vector<Matrix*> params, std::vector<Matrix*> grads, SgdConfig cfg)
    : params_(std::move(params)), grads_(std::move(grads)), cfg_(cfg) {
    if (params_.size() != grads_.size()) throw std::invalid_argument("param/grad count mismatch");
    velocity_.reserve(params_.size());
    for (Matrix* p : params_) velocity_.push_back(Matrix::Zero(p->rows(), p->cols()));
    lr_scale_.assign(params_.size(), 1.0);
}

void Sgd::rebind(std::vector<Matrix*> params, std::vector<Matrix*> grads) {
    if (params.size() != velocity_.size() || grads.size() != velocity_.size())
        throw std::invalid_argument("rebind count mismatch");
    params_ = std::move(params);
    grads_ = std::move(grads);
}

void Sgd::step(Scalar lr) {
    for (size_t i = 0; i < params_.size(); ++i) {
        Matrix& p = *params_[i];
        const Matrix& g = *grads_[i];
        Matrix& v = velocity_[i];
        v = cfg_.momentum * v - lr * lr_scale_[i] * (g + cfg_.weight_decay * p);
        p += v;
    }
}

void Sgd::set_lr_scale(size_t param_index, Scalar scale) {
    if (param_index >= lr_scale_.size()) throw std::out_of_range("no such parameter");
    lr_scale_[param_index] = scale;
}

Scalar Sgd::lr_at_epoch(int epoch) const {
    Scalar lr = cfg_.lr;
    if (cfg_.decay_every > 0)
        for (int e = cfg_.decay_every; e <= epoch; e += cfg_.decay_every) lr *= cfg_.decay_gamma;
    return lr;
}

void Sgd::save(BinaryWriter& w) const {
    w.f64(cfg_.lr);
    w.f64(cfg_.momentum);
    w.f64(cfg_.weight_decay);
    w.i64(cfg_.decay_every);
    w.f64(cfg_.decay_gamma);
    w.u64(velocity_.size());
    for (const Matrix& v : velocity_) w.mat(v);
    for (Scalar s : lr_scale_) w.f64(s);
}

void Sgd::load(BinaryReader& r) {
    cfg_.lr = r.f64();
    cfg_.momentum = r.f64();
    cfg_.weight_decay = r.f64();
    cfg_.decay_every = static_cast<int>(r.i64());
    cfg_.decay_gamma = r.f64();
    uint64_t n = r.u64();
    velocity_.clear();
    for (uint64_t i = 0; i < n; ++i) velocity_.push_back(r.mat());
    lr_scale_.assign(n, 1.0);
    for (uint64_t i = 0; i < n; ++i) lr_scale_[i] = r.f64();
    if (!params_.empty() && params_.size() != velocity_.size())
        throw std::runtime_error("optimizer state does not match bound parameters");
}

}  // namespace gacd::nn
