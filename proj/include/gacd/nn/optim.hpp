#ifndef GACD_NN_OPTIM_HPP
#define GACD_NN_OPTIM_HPP

#include <vector>

#include "gacd/common.hpp"
#include "gacd/serialize.hpp"

namespace gacd::nn {

struct SgdConfig {
    Scalar lr = 0.05;
    Scalar momentum = 0.9;
    Scalar weight_decay = 5e-4;
    // Step decay: lr ← lr · gamma every `decay_every` epochs.
    int decay_every = 30;
    Scalar decay_gamma = 0.1;
};

// SGD with classical momentum and decoupled-by-convention L2 weight decay.
// The optimizer does not own parameters; rebind after moving a model.
class Sgd {
public:
    Sgd() = default;
    Sgd(std::vector<Matrix*> params, std::vector<Matrix*> grads, SgdConfig cfg);

    void rebind(std::vector<Matrix*> params, std::vector<Matrix*> grads);
    void step(Scalar lr);
    Scalar lr_at_epoch(int epoch) const;
    const SgdConfig& config() const { return cfg_; }
    // Per-parameter learning-rate multiplier (defaults to 1).
    void set_lr_scale(size_t param_index, Scalar scale);

    void save(BinaryWriter& w) const;
    void load(BinaryReader& r);

private:
    std::vector<Matrix*> params_;
    std::vector<Matrix*> grads_;
    std::vector<Matrix> velocity_;
    std::vector<Scalar> lr_scale_;
    SgdConfig cfg_;
};

}  // namespace gacd::nn

#endif  // GACD_NN_OPTIM_HPP
