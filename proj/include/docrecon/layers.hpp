#pragma once

#include <cstdint>
#include <vector>

#include "docrecon/tensor.hpp"

// Forward/backward primitives of the pairwise network. Activations are
// batched NCHW; kernels are stored [3, 3, Cin, Cout]; dense weights [in, out].
// Each backward accumulates (+=) into parameter gradients and returns the
// gradient with respect to its input.
namespace docrecon::nn {

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// Valid 3x3 convolution, stride 1: [N,Cin,H,W] -> [N,Cout,H-2,W-2].
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias);

// Accumulates kernel/bias gradients; fills dx when non-null.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& dy, Tensor<T>& dkernel,
                     Tensor<T>& dbias, Tensor<T>* dx);

// 2x2 max pooling, stride 2; odd trailing rows/columns are dropped. `argmax`
// receives the flat input index of every output element.
template <typename T>
Tensor<T> maxpool2_forward(const Tensor<T>& x, std::vector<std::uint32_t>& argmax);

template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& dy, const std::vector<std::uint32_t>& argmax,
                            const std::vector<int>& input_shape);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x);

// Uses the forward output as the mask.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& dy);

template <typename T>
struct BatchNormState {
    Parameter<T> gamma;
    Parameter<T> beta;
    Tensor<T> running_mean;
    Tensor<T> running_var;

    BatchNormState() = default;
    BatchNormState(const std::string& name, int channels);
    int channels() const { return static_cast<int>(gamma.value.size()); }
};

template <typename T>
struct BatchNormCache {
    Tensor<T> xhat;
    std::vector<double> inv_std;
    Mode mode = Mode::eval;
};

// Per-channel normalization over N,H,W (channel axis 1). Train mode uses
// biased batch statistics and moves the running averages by the momentum;
// eval mode uses the running averages.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, BatchNormState<T>& state, Mode mode, BatchNormCache<T>* cache);

template <typename T>
Tensor<T> batchnorm_backward(const Tensor<T>& dy, BatchNormState<T>& state, const BatchNormCache<T>& cache);

// [N,in] x [in,out] + bias -> [N,out].
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> dense_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, Tensor<T>& dweight,
                         Tensor<T>& dbias);

// Row-wise softmax of [N,K].
template <typename T>
Tensor<T> softmax_forward(const Tensor<T>& logits);

// Given p = softmax(z) and dL/dp, returns dL/dz.
template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& probs, const Tensor<T>& dprobs);

// [N,H,W,C] <-> [N,C,H,W].
template <typename T>
Tensor<T> nhwc_to_nchw(const Tensor<T>& x);

// Glorot-uniform bound sqrt(6 / (fan_in + fan_out)).
double glorot_bound(int fan_in, int fan_out);

}  // namespace docrecon::nn
