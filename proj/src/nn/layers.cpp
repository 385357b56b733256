#include "gacd/nn/layers.hpp"

namespace gacd::nn {

namespace {

// Kaiming-style init for relu stacks.
Matrix he_init(int rows, int cols, int fan_in, std::mt19937_64& rng) {
    std::normal_distribution<Scalar> dist(0.0, std::sqrt(2.0 / fan_in));
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
    return m;
}

}  // namespace

Linear::Linear(int in_dim, int out_dim, bool bias, std::mt19937_64& rng) : has_bias_(bias) {
    w_ = he_init(out_dim, in_dim, in_dim, rng);
    gw_ = Matrix::Zero(out_dim, in_dim);
    if (has_bias_) {
        b_ = Matrix::Zero(out_dim, 1);
        gb_ = Matrix::Zero(out_dim, 1);
    }
}

Matrix Linear::forward(const Matrix& x) {
    x_ = x;
    Matrix y = w_ * x;
    if (has_bias_) y.colwise() += b_.col(0);
    return y;
}

Matrix Linear::backward(const Matrix& gy, bool accumulate_param_grads) {
    if (accumulate_param_grads) {
        gw_ += gy * x_.transpose();
        if (has_bias_) gb_.col(0) += gy.rowwise().sum();
    }
    return w_.transpose() * gy;
}

void Linear::collect(std::vector<Matrix*>& params, std::vector<Matrix*>& grads) {
    params.push_back(&w_);
    grads.push_back(&gw_);
    if (has_bias_) {
        params.push_back(&b_);
        grads.push_back(&gb_);
    }
}

Matrix Relu::forward(const Matrix& x) {
    mask_ = (x.array() > 0.0).cast<Scalar>();
    return x.cwiseProduct(mask_);
}

Matrix Relu::backward(const Matrix& gy, bool) { return gy.cwiseProduct(mask_); }

Conv2d::Conv2d(ImageShape input, int out_channels, std::mt19937_64& rng) : in_shape_(input) {
    out_shape_ = {out_channels, input.height, input.width};
    const int patch = input.channels * kKernel * kKernel;
    w_ = he_init(out_channels, patch, patch, rng);
    b_ = Matrix::Zero(out_channels, 1);
    gw_ = Matrix::Zero(out_channels, patch);
    gb_ = Matrix::Zero(out_channels, 1);

    // Shape is fixed, so the im2col gather map is built once.
    const int oh = out_shape_.height, ow = out_shape_.width;
    col_index_.assign(static_cast<size_t>(patch) * oh * ow, -1);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const int col = oy * ow + ox;
            int row = 0;
            for (int c = 0; c < input.channels; ++c) {
                for (int ky = 0; ky < kKernel; ++ky) {
                    for (int kx = 0; kx < kKernel; ++kx, ++row) {
                        const int iy = oy - kPad + ky;
                        const int ix = ox - kPad + kx;
                        if (iy >= 0 && iy < input.height && ix >= 0 && ix < input.width)
                            col_index_[static_cast<size_t>(col) * patch + row] =
                                (c * input.height + iy) * input.width + ix;
                    }
                }
            }
        }
    }
}

Matrix Conv2d::forward(const Matrix& x) {
    x_ = x;
    const int patch = static_cast<int>(w_.cols());
    const int spatial = out_shape_.height * out_shape_.width;
    const Eigen::Index n = x.cols();
    Matrix y(out_shape_.size(), n);
    Matrix col(patch, spatial);
    for (Eigen::Index s = 0; s < n; ++s) {
        const Scalar* src = x.col(s).data();
        const int* idx = col_index_.data();
        Scalar* dst = col.data();
        for (int c = 0; c < spatial; ++c)
            for (int r = 0; r < patch; ++r, ++idx, ++dst) *dst = (*idx >= 0) ? src[*idx] : 0.0;
        Matrix out = w_ * col;  // out_c × spatial
        out.colwise() += b_.col(0);
        Eigen::Map<Matrix>(y.col(s).data(), spatial, out_shape_.channels) = out.transpose();
    }
    return y;
}

Matrix Conv2d::backward(const Matrix& gy, bool accumulate_param_grads) {
    const int patch = static_cast<int>(w_.cols());
    const int spatial = out_shape_.height * out_shape_.width;
    const Eigen::Index n = gy.cols();
    Matrix gx = Matrix::Zero(in_shape_.size(), n);
    Matrix col(patch, spatial);
    for (Eigen::Index s = 0; s < n; ++s) {
        Eigen::Map<const Matrix> g(gy.col(s).data(), spatial, out_shape_.channels);
        Matrix gout = g.transpose();  // out_c × spatial
        if (accumulate_param_grads) {
            const Scalar* src = x_.col(s).data();
            const int* idx = col_index_.data();
            Scalar* dst = col.data();
            for (int c = 0; c < spatial; ++c)
                for (int r = 0; r < patch; ++r, ++idx, ++dst) *dst = (*idx >= 0) ? src[*idx] : 0.0;
            gw_ += gout * col.transpose();
            gb_.col(0) += gout.rowwise().sum();
        }
        Matrix gcol = w_.transpose() * gout;  // patch × spatial
        Scalar* dst = gx.col(s).data();
        const int* idx = col_index_.data();
        const Scalar* gsrc = gcol.data();
        for (int c = 0; c < spatial; ++c)
            for (int r = 0; r < patch; ++r, ++idx, ++gsrc)
                if (*idx >= 0) dst[*idx] += *gsrc;
    }
    return gx;
}

void Conv2d::collect(std::vector<Matrix*>& params, std::vector<Matrix*>& grads) {
    params.push_back(&w_);
    grads.push_back(&gw_);
    params.push_back(&b_);
    grads.push_back(&gb_);
}

MaxPool2d::MaxPool2d(ImageShape input) : in_shape_(input) {
    if (input.height % 2 != 0 || input.width % 2 != 0)
        throw std::invalid_argument("maxpool2d requires even spatial dims");
    out_shape_ = {input.channels, input.height / 2, input.width / 2};
}

Matrix MaxPool2d::forward(const Matrix& x) {
    const Eigen::Index n = x.cols();
    const int oh = out_shape_.height, ow = out_shape_.width;
    Matrix y(out_shape_.size(), n);
    argmax_.resize(out_shape_.size(), n);
    for (Eigen::Index s = 0; s < n; ++s) {
        const Scalar* src = x.col(s).data();
        for (int c = 0; c < in_shape_.channels; ++c) {
            const int in_base = c * in_shape_.height * in_shape_.width;
            const int out_base = c * oh * ow;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    int best = in_base + (2 * oy) * in_shape_.width + 2 * ox;
                    Scalar v = src[best];
                    const int cands[3] = {best + 1, best + in_shape_.width,
                                          best + in_shape_.width + 1};
                    for (int cand : cands) {
                        if (src[cand] > v) {
                            v = src[cand];
                            best = cand;
                        }
                    }
                    y(out_base + oy * ow + ox, s) = v;
                    argmax_(out_base + oy * ow + ox, s) = best;
                }
            }
        }
    }
    return y;
}

Matrix MaxPool2d::backward(const Matrix& gy, bool) {
    Matrix gx = Matrix::Zero(in_shape_.size(), gy.cols());
    for (Eigen::Index s = 0; s < gy.cols(); ++s)
        for (Eigen::Index r = 0; r < gy.rows(); ++r) gx(argmax_(r, s), s) += gy(r, s);
    return gx;
}

}  // namespace gacd::nn
