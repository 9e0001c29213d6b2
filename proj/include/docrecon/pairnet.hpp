#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "docrecon/graph.hpp"
#include "docrecon/layers.hpp"
#include "docrecon/tensor.hpp"

namespace docrecon {

inline constexpr int kStripeDepth = 40;
inline constexpr int kJunctionRows = 4 * 2 * kStripeDepth;  // 320

// The four 40-pixel border bands of a patch. up/down are 40x256,
// left/right are 256x40.
struct StripeSet {
    Image up;
    Image down;
    Image left;
    Image right;
};

StripeSet extract_stripes(const Patch& p);

// Stacks the four candidate junctions of (source, target) into one
// 320x256x3 tensor, each block 80 rows with the seam between rows 39 and 40:
//   rows   0..79   target above:  target.down over source.up
//   rows  80..159  target below:  source.down over target.up
//   rows 160..239  target left:   [target.right | source.left] rotated 90 deg clockwise
//   rows 240..319  target right:  [source.right | target.left] rotated 90 deg clockwise
Tensor<float> assemble_junctions(const Patch& source, const Patch& target);

// Writes the same junction tensor into `out` (320*256*3 floats, HWC).
void assemble_junctions_into(const Patch& source, const Patch& target, std::span<float> out);

struct NetConfig {
    int input_h = kJunctionRows;
    int input_w = kDefaultPatchSize;
    int input_c = 3;
    int conv_channels = 4;
    std::vector<int> dense = {512, 128, 32, kNumClasses};

    // 12x10x3 input with the same layer types, for gradient checks.
    static NetConfig tiny();

    int conv1_h() const { return input_h - 2; }
    int conv1_w() const { return input_w - 2; }
    int pool1_h() const { return conv1_h() / 2; }
    int pool1_w() const { return conv1_w() / 2; }
    int conv2_h() const { return pool1_h() - 2; }
    int conv2_w() const { return pool1_w() - 2; }
    int pool2_h() const { return conv2_h() / 2; }
    int pool2_w() const { return conv2_w() / 2; }
    int flat_size() const { return pool2_h() * pool2_w() * conv_channels; }

    void validate() const;
    bool operator==(const NetConfig&) const = default;
};

template <typename T>
struct ConvParams {
    Parameter<T> weight;  // [3,3,Cin,Cout]
    Parameter<T> bias;    // [Cout]
};

template <typename T>
struct DenseParams {
    Parameter<T> weight;  // [in,out]
    Parameter<T> bias;    // [out]
};

// All learnable tensors plus batch-norm running statistics.
template <typename T>
struct ModelParams {
    NetConfig config;
    nn::BatchNormState<T> bn0, bn1, bn2;
    ConvParams<T> conv1, conv2;
    std::vector<DenseParams<T>> dense;

    // Glorot-uniform weights, zero biases, unit batch-norm scale.
    static ModelParams init(const NetConfig& config, std::uint64_t seed);

    std::vector<Parameter<T>*> parameters();
    std::vector<const Parameter<T>*> parameters() const;

    // Learnable values and running statistics under stable names, in a fixed
    // order; this is what checkpoints store.
    std::vector<std::pair<std::string, Tensor<T>*>> named_tensors();
    std::vector<std::pair<std::string, const Tensor<T>*>> named_tensors() const;

    std::size_t parameter_count() const;
    void zero_grad();

    template <typename U>
    ModelParams<U> cast() const;
};

struct ShapeRow {
    std::string layer;
    int h, w, c;

    bool operator==(const ShapeRow&) const = default;
};

// BatchNorm -> Conv -> ReLU -> MaxPool -> BatchNorm -> Conv -> ReLU ->
// MaxPool -> BatchNorm -> flatten -> Dense(+ReLU)... -> Dense -> Softmax.
template <typename T>
class PairNet {
public:
    explicit PairNet(ModelParams<T> params);

    // batch: [N, H, W, C] junction tensors. Returns [N, 5] probabilities.
    // Train mode uses batch statistics and keeps what backward() needs.
    Tensor<T> forward(const Tensor<T>& batch, Mode mode);

    // Pre-softmax outputs of the last forward().
    const Tensor<T>& logits() const { return logits_; }

    // Gradient w.r.t. the logits of the last train-mode forward(); accumulates
    // into parameter gradients and drops the cached activations.
    void backward_logits(const Tensor<T>& dlogits);
    // Same, starting from the gradient w.r.t. the softmax output.
    void backward_probs(const Tensor<T>& dprobs);

    // Output shape (H, W, C) after each layer of the convolutional stack in
    // the last forward().
    const std::vector<ShapeRow>& shape_trace() const { return trace_; }

    // ReLU on/off masks and max-pool winners of the last train-mode forward,
    // flattened. Two forwards with equal patterns lie on the same smooth
    // piece of the network; gradient checks use this to spot kinks.
    std::vector<std::uint32_t> activation_pattern() const;

    ModelParams<T>& params() { return params_; }
    const ModelParams<T>& params() const { return params_; }

private:
    ModelParams<T> params_;

    struct Cache {
        nn::BatchNormCache<T> bn0, bn1, bn2;
        Tensor<T> bn0_out, relu1, bn1_out, relu2;
        std::vector<int> relu1_shape, relu2_shape, pool2_shape;
        std::vector<std::uint32_t> pool1_idx, pool2_idx;
        std::vector<Tensor<T>> dense_in;  // input of each dense layer
        bool valid = false;
    } cache_;

    Tensor<T> logits_;
    Tensor<T> probs_;
    std::vector<ShapeRow> trace_;
};

// Single-junction convenience: [320,256,3] -> 5 probabilities.
std::vector<float> pairnet_forward(PairNet<float>& net, const Tensor<float>& junctions, Mode mode);

extern template struct ModelParams<float>;
extern template struct ModelParams<double>;
extern template class PairNet<float>;
extern template class PairNet<double>;

}  // namespace docrecon
