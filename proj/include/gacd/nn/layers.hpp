#ifndef GACD_NN_LAYERS_HPP
#define GACD_NN_LAYERS_HPP

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "gacd/common.hpp"

namespace gacd::nn {

// Batches are column-major: one sample per column, features flattened
// channel-major for image tensors. forward() caches whatever backward()
// needs, so a layer instance serves one stream of compute at a time.
class Layer {
public:
    virtual ~Layer() = default;
    virtual Matrix forward(const Matrix& x) = 0;
    // Returns dLoss/dInput. When accumulate_param_grads is false the layer
    // only propagates (used by attacks, which differentiate w.r.t. pixels).
    virtual Matrix backward(const Matrix& gy, bool accumulate_param_grads) = 0;
    virtual void collect(std::vector<Matrix*>& params, std::vector<Matrix*>& grads) {
        (void)params;
        (void)grads;
    }
    virtual std::string kind() const = 0;
};

class Linear : public Layer {
public:
    Linear() : has_bias_(false) {}
    Linear(int in_dim, int out_dim, bool bias, std::mt19937_64& rng);

    Matrix forward(const Matrix& x) override;
    Matrix backward(const Matrix& gy, bool accumulate_param_grads) override;
    void collect(std::vector<Matrix*>& params, std::vector<Matrix*>& grads) override;
    std::string kind() const override { return "linear"; }

    Matrix& weight() { return w_; }
    const Matrix& weight() const { return w_; }
    Matrix& bias() { return b_; }
    bool has_bias() const { return has_bias_; }
    int in_dim() const { return static_cast<int>(w_.cols()); }
    int out_dim() const { return static_cast<int>(w_.rows()); }

private:
    Matrix w_;   // out × in
    Matrix b_;   // out × 1, unused when has_bias_ is false
    Matrix gw_;
    Matrix gb_;
    Matrix x_;
    bool has_bias_;
};

class Relu : public Layer {
public:
    Matrix forward(const Matrix& x) override;
    Matrix backward(const Matrix& gy, bool accumulate_param_grads) override;
    std::string kind() const override { return "relu"; }

private:
    Matrix mask_;
};

// 3×3 convolution, stride 1, zero padding 1 (shape preserving), via im2col.
class Conv2d : public Layer {
public:
    Conv2d(ImageShape input, int out_channels, std::mt19937_64& rng);

    Matrix forward(const Matrix& x) override;
    Matrix backward(const Matrix& gy, bool accumulate_param_grads) override;
    void collect(std::vector<Matrix*>& params, std::vector<Matrix*>& grads) override;
    std::string kind() const override { return "conv2d"; }

    ImageShape output_shape() const { return out_shape_; }

private:
    ImageShape in_shape_;
    ImageShape out_shape_;
    static constexpr int kKernel = 3;
    static constexpr int kPad = 1;
    Matrix w_;  // out_c × (in_c·k·k)
    Matrix b_;  // out_c × 1
    Matrix gw_;
    Matrix gb_;
    Matrix x_;
    std::vector<int> col_index_;  // source pixel per im2col cell, -1 for padding
};

// 2×2 max pooling, stride 2.
class MaxPool2d : public Layer {
public:
    explicit MaxPool2d(ImageShape input);

    Matrix forward(const Matrix& x) override;
    Matrix backward(const Matrix& gy, bool accumulate_param_grads) override;
    std::string kind() const override { return "maxpool2d"; }

    ImageShape output_shape() const { return out_shape_; }

private:
    ImageShape in_shape_;
    ImageShape out_shape_;
    Eigen::MatrixXi argmax_;
};

}  // namespace gacd::nn

#endif  // GACD_NN_LAYERS_HPP
