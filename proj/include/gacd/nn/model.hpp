#ifndef GACD_NN_MODEL_HPP
#define GACD_NN_MODEL_HPP

#include <memory>
#include <string>
#include <vector>

#include "gacd/nn/layers.hpp"
#include "gacd/serialize.hpp"

namespace gacd {

// Minimal differentiable surfaces the attack code drives. Classifier
// implements both; tests substitute hand-built models (e.g. a linear scorer
// with a margin loss).
class GradModel {
public:
    virtual ~GradModel() = default;
    virtual Matrix logits(const Matrix& x) = 0;
    // dLoss/dx of the attack loss (cross-entropy for classifiers).
    virtual Matrix loss_input_grad(const Matrix& x, const std::vector<int>& y) = 0;
};

class FeatureModel {
public:
    virtual ~FeatureModel() = default;
    virtual Matrix features(const Matrix& x) = 0;
    // Pullback of a feature-space cotangent to pixel space.
    virtual Matrix feature_input_grad(const Matrix& x, const Matrix& gfeat) = 0;
};

namespace nn {

// Feature extractor: a named stack of layers ending at the penultimate
// representation. Architectures come from a fixed registry so checkpoints
// can rebuild the exact structure from the id alone.
class Backbone {
public:
    Backbone() = default;
    Backbone(const Backbone& other);
    Backbone& operator=(const Backbone& other);
    Backbone(Backbone&&) = default;
    Backbone& operator=(Backbone&&) = default;

    static Backbone make(const std::string& arch, ImageShape input, uint64_t seed);
    static const std::vector<std::string>& known_archs();

    Matrix forward(const Matrix& x);
    Matrix backward(const Matrix& gfeat, bool accumulate_param_grads);

    std::vector<Matrix*> params();
    std::vector<Matrix*> grads();
    void zero_grad();
    uint64_t params_hash() const;

    int feature_dim() const { return feature_dim_; }
    const std::string& arch() const { return arch_; }
    ImageShape input_shape() const { return input_; }

    void save(BinaryWriter& w) const;
    static Backbone load(BinaryReader& r);

private:
    std::string arch_;
    ImageShape input_;
    int feature_dim_ = 0;
    std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace nn

// Softmax over each column.
Matrix softmax_columns(const Matrix& logits);
// Mean cross-entropy over the batch, probs are softmax outputs.
Scalar ce_loss(const Matrix& probs, const std::vector<int>& labels);
// dCE/dlogits for the batch-mean loss: (probs - onehot) / N.
Matrix ce_logit_grad(const Matrix& probs, const std::vector<int>& labels);

// Lets attack code drive a bare backbone (no classification head).
class BackboneFeatureAdapter : public FeatureModel {
public:
    explicit BackboneFeatureAdapter(nn::Backbone& backbone) : backbone_(backbone) {}
    Matrix features(const Matrix& x) override { return backbone_.forward(x); }
    Matrix feature_input_grad(const Matrix& x, const Matrix& gfeat) override {
        backbone_.forward(x);
        return backbone_.backward(gfeat, false);
    }

private:
    nn::Backbone& backbone_;
};

// Backbone plus a linear classification head.
class Classifier : public GradModel, public FeatureModel {
public:
    Classifier() = default;
    Classifier(nn::Backbone backbone, int num_classes, uint64_t seed);

    Matrix logits(const Matrix& x) override;
    Matrix loss_input_grad(const Matrix& x, const std::vector<int>& y) override;
    Matrix features(const Matrix& x) override;
    Matrix feature_input_grad(const Matrix& x, const Matrix& gfeat) override;

    // Forward + backward of batch-mean cross-entropy; accumulates parameter
    // grads for whatever `train_head`/`train_backbone` allow. Returns loss.
    Scalar ce_backward(const Matrix& x, const std::vector<int>& y, bool train_backbone = true,
                       bool train_head = true);

    std::vector<Matrix*> params(bool include_backbone = true, bool include_head = true);
    std::vector<Matrix*> grads(bool include_backbone = true, bool include_head = true);
    void zero_grad();

    nn::Backbone& backbone() { return backbone_; }
    const nn::Backbone& backbone() const { return backbone_; }
    nn::Linear& head() { return head_; }
    const nn::Linear& head() const { return head_; }
    int num_classes() const { return num_classes_; }
    uint64_t params_hash() const;

    void save(BinaryWriter& w) const;
    static Classifier load(BinaryReader& r);
    void save_file(const std::string& path, uint64_t config_hash) const;
    static Classifier load_file(const std::string& path, uint64_t* config_hash = nullptr);

private:
    nn::Backbone backbone_;
    nn::Linear head_;
    int num_classes_ = 0;
};

}  // namespace gacd

#endif  // GACD_NN_MODEL_HPP
