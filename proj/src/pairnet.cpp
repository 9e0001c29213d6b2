#include "docrecon/pairnet.hpp"

#include <algorithm>

#include "docrecon/error.hpp"
#include "docrecon/rng.hpp"

namespace docrecon {

namespace {

void require_patch(const Patch& p) {
    if (!p.pixels || p.pixels->height != kDefaultPatchSize || p.pixels->width != kDefaultPatchSize) {
        throw Error(ErrorKind::shape_mismatch, "patch " + std::to_string(p.node_id) + " must be " +
                                                   std::to_string(kDefaultPatchSize) + "x" +
                                                   std::to_string(kDefaultPatchSize));
    }
}

constexpr int P = kDefaultPatchSize;
constexpr int S = kStripeDepth;
constexpr size_t kBlock = static_cast<size_t>(2 * S) * P * 3;

// Horizontal seam block: `top` rows [top_row, top_row+40) over `bottom` rows [bottom_row, ...).
void horizontal_block(const Image& top, int top_row, const Image& bottom, int bottom_row, float* out) {
    const size_t row_len = static_cast<size_t>(P) * 3;
    for (int r = 0; r < S; ++r) {
        const float* a = &top.data[static_cast<size_t>(top_row + r) * row_len];
        std::copy(a, a + row_len, out + static_cast<size_t>(r) * row_len);
        const float* b = &bottom.data[static_cast<size_t>(bottom_row + r) * row_len];
        std::copy(b, b + row_len, out + static_cast<size_t>(S + r) * row_len);
    }
}

// Vertical seam block [left cols | right cols] (256 x 80) rotated 90 degrees
// clockwise into 80 x 256: out(r, c) = side_by_side(255 - c, r).
void vertical_block(const Image& left, int left_col, const Image& right, int right_col, float* out) {
    for (int r = 0; r < 2 * S; ++r) {
        const Image& src = r < S ? left : right;
        const int col = r < S ? left_col + r : right_col + (r - S);
        float* dst = out + static_cast<size_t>(r) * P * 3;
        for (int c = 0; c < P; ++c) {
            const int y = P - 1 - c;
            for (int k = 0; k < 3; ++k) dst[static_cast<size_t>(c) * 3 + k] = src.at(y, col, k);
        }
    }
}

}  // namespace

StripeSet extract_stripes(const Patch& p) {
    require_patch(p);
    const Image& img = *p.pixels;
    return {img.crop(0, 0, S, P), img.crop(P - S, 0, S, P), img.crop(0, 0, P, S), img.crop(0, P - S, P, S)};
}

void assemble_junctions_into(const Patch& source, const Patch& target, std::span<float> out) {
    require_patch(source);
    require_patch(target);
    if (out.size() != 4 * kBlock) throw Error(ErrorKind::shape_mismatch, "junction buffer has wrong size");
    const Image& s = *source.pixels;
    const Image& t = *target.pixels;
    float* o = out.data();
    horizontal_block(t, P - S, s, 0, o);            // target.down over source.up
    horizontal_block(s, P - S, t, 0, o + kBlock);   // source.down over target.up
    vertical_block(t, P - S, s, 0, o + 2 * kBlock);  // target.right | source.left
    vertical_block(s, P - S, t, 0, o + 3 * kBlock);  // source.right | target.left
}

Tensor<float> assemble_junctions(const Patch& source, const Patch& target) {
    Tensor<float> out({kJunctionRows, P, 3});
    assemble_junctions_into(source, target, out.span());
    return out;
}

NetConfig NetConfig::tiny() {
    NetConfig c;
    c.input_h = 12;
    c.input_w = 10;
    c.dense = {12, 8, 6, kNumClasses};
    return c;
}

void NetConfig::validate() const {
    if (input_c <= 0 || conv_channels <= 0 || pool2_h() < 1 || pool2_w() < 1) {
        throw Error(ErrorKind::invalid_argument, "network input too small for the convolutional stack");
    }
    if (dense.empty() || dense.back() != kNumClasses) {
        throw Error(ErrorKind::invalid_argument, "dense chain must end at 5 classes");
    }
    for (int d : dense) {
        if (d <= 0) throw Error(ErrorKind::invalid_argument, "dense sizes must be positive");
    }
}

template <typename T>
ModelParams<T> ModelParams<T>::init(const NetConfig& config, std::uint64_t seed) {
    config.validate();
    ModelParams<T> m;
    m.config = config;
    const int C = config.conv_channels;
    m.bn0 = nn::BatchNormState<T>("bn0", config.input_c);
    m.bn1 = nn::BatchNormState<T>("bn1", C);
    m.bn2 = nn::BatchNormState<T>("bn2", C);
    m.conv1 = {Parameter<T>("conv1.weight", {3, 3, config.input_c, C}), Parameter<T>("conv1.bias", {C})};
    m.conv2 = {Parameter<T>("conv2.weight", {3, 3, C, C}), Parameter<T>("conv2.bias", {C})};
    int in = config.flat_size();
    for (std::size_t i = 0; i < config.dense.size(); ++i) {
        const std::string name = "dense" + std::to_string(i + 1);
        m.dense.push_back({Parameter<T>(name + ".weight", {in, config.dense[i]}),
                           Parameter<T>(name + ".bias", {config.dense[i]})});
        in = config.dense[i];
    }

    Rng rng(seed);
    auto fill = [&rng](Tensor<T>& t, double bound) {
        for (T& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
    };
    fill(m.conv1.weight.value, nn::glorot_bound(9 * config.input_c, 9 * C));
    fill(m.conv2.weight.value, nn::glorot_bound(9 * C, 9 * C));
    for (auto& d : m.dense) fill(d.weight.value, nn::glorot_bound(d.weight.value.dim(0), d.weight.value.dim(1)));
    return m;
}

template <typename T>
std::vector<Parameter<T>*> ModelParams<T>::parameters() {
    std::vector<Parameter<T>*> out = {&bn0.gamma,   &bn0.beta,    &conv1.weight, &conv1.bias, &bn1.gamma,
                                      &bn1.beta,    &conv2.weight, &conv2.bias,  &bn2.gamma,  &bn2.beta};
    for (auto& d : dense) {
        out.push_back(&d.weight);
        out.push_back(&d.bias);
    }
    return out;
}

template <typename T>
std::vector<const Parameter<T>*> ModelParams<T>::parameters() const {
    auto mut = const_cast<ModelParams<T>*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> ModelParams<T>::named_tensors() {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    for (auto* p : parameters()) out.emplace_back(p->name, &p->value);
    for (auto* bn : {&bn0, &bn1, &bn2}) {
        const std::string base = bn->gamma.name.substr(0, bn->gamma.name.find('.'));
        out.emplace_back(base + ".running_mean", &bn->running_mean);
        out.emplace_back(base + ".running_var", &bn->running_var);
    }
    return out;
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> ModelParams<T>::named_tensors() const {
    auto mut = const_cast<ModelParams<T>*>(this)->named_tensors();
    return {mut.begin(), mut.end()};
}

template <typename T>
std::size_t ModelParams<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->value.size();
    return n;
}

template <typename T>
void ModelParams<T>::zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
    ModelParams<U> out = ModelParams<U>::init(config, 0);
    auto src = named_tensors();
    auto dst = out.named_tensors();
    for (std::size_t i = 0; i < src.size(); ++i) {
        std::transform(src[i].second->data.begin(), src[i].second->data.end(), dst[i].second->data.begin(),
                       [](T v) { return static_cast<U>(v); });
    }
    return out;
}

template <typename T>
PairNet<T>::PairNet(ModelParams<T> params) : params_(std::move(params)) {
    params_.config.validate();
}

template <typename T>
Tensor<T> PairNet<T>::forward(const Tensor<T>& batch, Mode mode) {
    const NetConfig& cfg = params_.config;
    if (batch.rank() != 4) throw Error(ErrorKind::shape_mismatch, "pairnet input must be [N,H,W,C]");
    const int N = batch.dim(0);
    require_shape(batch.shape, {N, cfg.input_h, cfg.input_w, cfg.input_c}, "pairnet input");
    if (N < 1) throw Error(ErrorKind::shape_mismatch, "empty batch");

    const bool keep = mode == Mode::train;
    cache_ = Cache{};
    trace_.clear();
    auto record = [this](const char* layer, const Tensor<T>& t) {
        trace_.push_back({layer, t.dim(2), t.dim(3), t.dim(1)});
    };

    Tensor<T> x = nn::nhwc_to_nchw(batch);
    x = nn::batchnorm_forward(x, params_.bn0, mode, keep ? &cache_.bn0 : nullptr);
    record("BatchNorm", x);
    Tensor<T> c1 = nn::conv2d_forward(x, params_.conv1.weight.value, params_.conv1.bias.value);
    record("Convolution", c1);
    if (keep) cache_.bn0_out = std::move(x);
    Tensor<T> r1 = nn::relu_forward(c1);
    c1 = {};
    record("ReLU", r1);
    Tensor<T> p1 = nn::maxpool2_forward(r1, cache_.pool1_idx);
    record("MaxPooling", p1);
    if (keep) {
        cache_.relu1_shape = r1.shape;
        cache_.relu1 = std::move(r1);
    }
    Tensor<T> b1 = nn::batchnorm_forward(p1, params_.bn1, mode, keep ? &cache_.bn1 : nullptr);
    record("BatchNorm", b1);
    Tensor<T> c2 = nn::conv2d_forward(b1, params_.conv2.weight.value, params_.conv2.bias.value);
    record("Convolution", c2);
    if (keep) cache_.bn1_out = std::move(b1);
    Tensor<T> r2 = nn::relu_forward(c2);
    record("ReLU", r2);
    Tensor<T> p2 = nn::maxpool2_forward(r2, cache_.pool2_idx);
    record("MaxPooling", p2);
    if (keep) {
        cache_.relu2_shape = r2.shape;
        cache_.relu2 = std::move(r2);
    }
    Tensor<T> b2 = nn::batchnorm_forward(p2, params_.bn2, mode, keep ? &cache_.bn2 : nullptr);
    record("BatchNorm", b2);
    if (keep) cache_.pool2_shape = b2.shape;

    Tensor<T> h = std::move(b2);
    h.reshape({N, cfg.flat_size()});
    for (std::size_t i = 0; i < params_.dense.size(); ++i) {
        Tensor<T> z = nn::dense_forward(h, params_.dense[i].weight.value, params_.dense[i].bias.value);
        if (keep) cache_.dense_in.push_back(std::move(h));
        h = (i + 1 < params_.dense.size()) ? nn::relu_forward(z) : std::move(z);
    }
    logits_ = std::move(h);
    probs_ = nn::softmax_forward(logits_);
    cache_.valid = keep;
    return probs_;
}

template <typename T>
std::vector<std::uint32_t> PairNet<T>::activation_pattern() const {
    if (!cache_.valid) throw Error(ErrorKind::invalid_argument, "activation pattern needs a train-mode forward");
    std::vector<std::uint32_t> out;
    auto mask = [&out](const Tensor<T>& t) {
        for (const T& v : t.data) out.push_back(v > T(0));
    };
    mask(cache_.relu1);
    mask(cache_.relu2);
    out.insert(out.end(), cache_.pool1_idx.begin(), cache_.pool1_idx.end());
    out.insert(out.end(), cache_.pool2_idx.begin(), cache_.pool2_idx.end());
    for (std::size_t i = 1; i < cache_.dense_in.size(); ++i) mask(cache_.dense_in[i]);
    return out;
}

template <typename T>
void PairNet<T>::backward_probs(const Tensor<T>& dprobs) {
    backward_logits(nn::softmax_backward(probs_, dprobs));
}

template <typename T>
void PairNet<T>::backward_logits(const Tensor<T>& dlogits) {
    if (!cache_.valid) throw Error(ErrorKind::invalid_argument, "backward without a train-mode forward");
    require_shape(dlogits.shape, logits_.shape, "logit gradient");

    Tensor<T> g = dlogits;
    for (std::size_t k = params_.dense.size(); k-- > 0;) {
        auto& layer = params_.dense[k];
        const Tensor<T>& in = cache_.dense_in[k];
        Tensor<T> gin = nn::dense_backward(in, layer.weight.value, g, layer.weight.grad, layer.bias.grad);
        // Inputs of dense layers after the first are ReLU outputs.
        g = k > 0 ? nn::relu_backward(in, gin) : std::move(gin);
    }
    g.reshape(cache_.pool2_shape);
    g = nn::batchnorm_backward(g, params_.bn2, cache_.bn2);
    g = nn::maxpool2_backward(g, cache_.pool2_idx, cache_.relu2_shape);
    g = nn::relu_backward(cache_.relu2, g);
    Tensor<T> gb1;
    nn::conv2d_backward(cache_.bn1_out, params_.conv2.weight.value, g, params_.conv2.weight.grad,
                        params_.conv2.bias.grad, &gb1);
    g = nn::batchnorm_backward(gb1, params_.bn1, cache_.bn1);
    g = nn::maxpool2_backward(g, cache_.pool1_idx, cache_.relu1_shape);
    g = nn::relu_backward(cache_.relu1, g);
    Tensor<T> gb0;
    nn::conv2d_backward(cache_.bn0_out, params_.conv1.weight.value, g, params_.conv1.weight.grad,
                        params_.conv1.bias.grad, &gb0);
    nn::batchnorm_backward(gb0, params_.bn0, cache_.bn0);
    cache_ = Cache{};
}

std::vector<float> pairnet_forward(PairNet<float>& net, const Tensor<float>& junctions, Mode mode) {
    Tensor<float> batch = junctions;
    std::vector<int> shape = {1};
    shape.insert(shape.end(), junctions.shape.begin(), junctions.shape.end());
    batch.reshape(shape);
    Tensor<float> p = net.forward(batch, mode);
    return p.data;
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template class PairNet<float>;
template class PairNet<double>;

}  // namespace docrecon
