#include "gacd/nn/model.hpp"

namespace gacd {

namespace nn {

namespace {

struct ConvSpec {
    std::vector<int> conv_channels;  // conv+relu+pool block per entry
    int dense_out;                   // penultimate width
};

// Fixed desk-scale architectures. small_cnn is the default student/teacher;
// tiny_cnn keeps unit tests fast; mlp covers non-conv paths.
const std::vector<std::string> kArchs = {"small_cnn", "tiny_cnn", "mlp"};

}  // namespace

Backbone::Backbone(const Backbone& other) { *this = other; }

Backbone& Backbone::operator=(const Backbone& other) {
    if (this == &other) return *this;
    if (other.arch_.empty()) {
        *this = Backbone();
        return *this;
    }
    Backbone fresh = make(other.arch_, other.input_, 0);
    auto dst = fresh.params();
    auto src = const_cast<Backbone&>(other).params();
    for (size_t i = 0; i < dst.size(); ++i) *dst[i] = *src[i];
    *this = std::move(fresh);
    return *this;
}

Backbone Backbone::make(const std::string& arch, ImageShape input, uint64_t seed) {
    Backbone b;
    b.arch_ = arch;
    b.input_ = input;
    auto rng = subrng(seed, {fnv1a64(arch), 0x6261636bull});
    if (arch == "small_cnn" || arch == "tiny_cnn") {
        ConvSpec spec = arch == "small_cnn" ? ConvSpec{{16, 32}, 128} : ConvSpec{{8, 16}, 64};
        ImageShape shape = input;
        for (int ch : spec.conv_channels) {
            auto conv = std::make_unique<Conv2d>(shape, ch, rng);
            shape = conv->output_shape();
            b.layers_.push_back(std::move(conv));
            b.layers_.push_back(std::make_unique<Relu>());
            auto pool = std::make_unique<MaxPool2d>(shape);
            shape = pool->output_shape();
            b.layers_.push_back(std::move(pool));
        }
        b.layers_.push_back(std::make_unique<Linear>(shape.size(), spec.dense_out, true, rng));
        b.layers_.push_back(std::make_unique<Relu>());
        b.feature_dim_ = spec.dense_out;
    } else if (arch == "mlp") {
        b.layers_.push_back(std::make_unique<Linear>(input.size(), 128, true, rng));
        b.layers_.push_back(std::make_unique<Relu>());
        b.layers_.push_back(std::make_unique<Linear>(128, 64, true, rng));
        b.layers_.push_back(std::make_unique<Relu>());
        b.feature_dim_ = 64;
    } else {
        throw std::invalid_argument("unknown architecture: " + arch +
                                    " (known: small_cnn, tiny_cnn, mlp)");
    }
    return b;
}

const std::vector<std::string>& Backbone::known_archs() { return kArchs; }

Matrix Backbone::forward(const Matrix& x) {
    Matrix h = x;
    for (auto& layer : layers_) h = layer->forward(h);
    return h;
}

Matrix Backbone::backward(const Matrix& gfeat, bool accumulate_param_grads) {
    Matrix g = gfeat;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
        g = (*it)->backward(g, accumulate_param_grads);
    return g;
}

std::vector<Matrix*> Backbone::params() {
    std::vector<Matrix*> p, g;
    for (auto& layer : layers_) layer->collect(p, g);
    return p;
}

std::vector<Matrix*> Backbone::grads() {
    std::vector<Matrix*> p, g;
    for (auto& layer : layers_) layer->collect(p, g);
    return g;
}

void Backbone::zero_grad() {
    for (Matrix* g : grads()) g->setZero();
}

uint64_t Backbone::params_hash() const {
    uint64_t h = fnv1a64(arch_);
    for (Matrix* p : const_cast<Backbone*>(this)->params()) h = hash_matrix(*p, h);
    return h;
}

void Backbone::save(BinaryWriter& w) const {
    w.str(arch_);
    w.i64(input_.channels);
    w.i64(input_.height);
    w.i64(input_.width);
    auto ps = const_cast<Backbone*>(this)->params();
    w.u64(ps.size());
    for (Matrix* p : ps) w.mat(*p);
}

Backbone Backbone::load(BinaryReader& r) {
    std::string arch = r.str();
    ImageShape input;
    input.channels = static_cast<int>(r.i64());
    input.height = static_cast<int>(r.i64());
    input.width = static_cast<int>(r.i64());
    Backbone b = make(arch, input, 0);
    auto ps = b.params();
    uint64_t n = r.u64();
    if (n != ps.size()) throw std::runtime_error("backbone checkpoint param count mismatch");
    for (Matrix* p : ps) {
        Matrix m = r.mat();
        if (m.rows() != p->rows() || m.cols() != p->cols())
            throw std::runtime_error("backbone checkpoint param shape mismatch");
        *p = m;
    }
    return b;
}

}  // namespace nn

Matrix softmax_columns(const Matrix& logits) {
    Matrix probs(logits.rows(), logits.cols());
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        const Scalar mx = logits.col(j).maxCoeff();
        Vector e = (logits.col(j).array() - mx).exp();
        probs.col(j) = e / e.sum();
    }
    return probs;
}

Scalar ce_loss(const Matrix& probs, const std::vector<int>& labels) {
    Scalar loss = 0.0;
    for (Eigen::Index j = 0; j < probs.cols(); ++j)
        loss -= std::log(std::max(probs(labels[static_cast<size_t>(j)], j), 1e-300));
    return loss / static_cast<Scalar>(probs.cols());
}

Matrix ce_logit_grad(const Matrix& probs, const std::vector<int>& labels) {
    Matrix g = probs;
    const Scalar inv_n = 1.0 / static_cast<Scalar>(probs.cols());
    for (Eigen::Index j = 0; j < probs.cols(); ++j) {
        g(labels[static_cast<size_t>(j)], j) -= 1.0;
        g.col(j) *= inv_n;
    }
    return g;
}

Classifier::Classifier(nn::Backbone backbone, int num_classes, uint64_t seed)
    : backbone_(std::move(backbone)), num_classes_(num_classes) {
    auto rng = subrng(seed, {fnv1a64("classifier_head")});
    head_ = nn::Linear(backbone_.feature_dim(), num_classes, true, rng);
}

Matrix Classifier::logits(const Matrix& x) { return head_.forward(backbone_.forward(x)); }

Matrix Classifier::features(const Matrix& x) { return backbone_.forward(x); }

Matrix Classifier::loss_input_grad(const Matrix& x, const std::vector<int>& y) {
    Matrix probs = softmax_columns(logits(x));
    Matrix glogits = ce_logit_grad(probs, y);
    Matrix gfeat = head_.backward(glogits, false);
    return backbone_.backward(gfeat, false);
}

Matrix Classifier::feature_input_grad(const Matrix& x, const Matrix& gfeat) {
    backbone_.forward(x);
    return backbone_.backward(gfeat, false);
}

Scalar Classifier::ce_backward(const Matrix& x, const std::vector<int>& y, bool train_backbone,
                               bool train_head) {
    Matrix probs = softmax_columns(logits(x));
    const Scalar loss = ce_loss(probs, y);
    Matrix glogits = ce_logit_grad(probs, y);
    Matrix gfeat = head_.backward(glogits, train_head);
    backbone_.backward(gfeat, train_backbone);
    return loss;
}

std::vector<Matrix*> Classifier::params(bool include_backbone, bool include_head) {
    std::vector<Matrix*> out;
    if (include_backbone) {
        auto bp = backbone_.params();
        out.insert(out.end(), bp.begin(), bp.end());
    }
    if (include_head) {
        std::vector<Matrix*> p, g;
        head_.collect(p, g);
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

std::vector<Matrix*> Classifier::grads(bool include_backbone, bool include_head) {
    std::vector<Matrix*> out;
    if (include_backbone) {
        auto bg = backbone_.grads();
        out.insert(out.end(), bg.begin(), bg.end());
    }
    if (include_head) {
        std::vector<Matrix*> p, g;
        head_.collect(p, g);
        out.insert(out.end(), g.begin(), g.end());
    }
    return out;
}

void Classifier::zero_grad() {
    for (Matrix* g : grads()) g->setZero();
}

uint64_t Classifier::params_hash() const {
    uint64_t h = backbone_.params_hash();
    h = hash_matrix(head_.weight(), h);
    h = hash_matrix(const_cast<nn::Linear&>(head_).bias(), h);
    return h;
}

void Classifier::save(BinaryWriter& w) const {
    backbone_.save(w);
    w.i64(num_classes_);
    w.mat(head_.weight());
    w.mat(const_cast<nn::Linear&>(head_).bias());
}

Classifier Classifier::load(BinaryReader& r) {
    nn::Backbone backbone = nn::Backbone::load(r);
    const int num_classes = static_cast<int>(r.i64());
    Classifier c(std::move(backbone), num_classes, 0);
    c.head_.weight() = r.mat();
    c.head_.bias() = r.mat();
    if (c.head_.weight().rows() != num_classes ||
        c.head_.weight().cols() != c.backbone_.feature_dim())
        throw std::runtime_error("classifier checkpoint head shape mismatch");
    return c;
}

namespace {
constexpr uint32_t kModelMagic = 0x47414d31;  // "GAM1"
}

void Classifier::save_file(const std::string& path, uint64_t config_hash) const {
    BinaryWriter w(path);
    w.u32(kModelMagic);
    w.u64(config_hash);
    save(w);
    w.commit();
}

Classifier Classifier::load_file(const std::string& path, uint64_t* config_hash) {
    BinaryReader r(path);
    if (r.u32() != kModelMagic) throw std::runtime_error("not a model checkpoint: " + path);
    uint64_t h = r.u64();
    if (config_hash) *config_hash = h;
    return load(r);
}

}  // namespace gacd
