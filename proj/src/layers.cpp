#include "docrecon/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "docrecon/error.hpp"

namespace docrecon::nn {

namespace {

void require_rank(const std::vector<int>& shape, int rank, const char* what) {
    if (static_cast<int>(shape.size()) != rank) {
        throw Error(ErrorKind::shape_mismatch,
                    std::string(what) + ": expected rank " + std::to_string(rank) + ", got " + shape_string(shape));
    }
}

}  // namespace

double glorot_bound(int fan_in, int fan_out) { return std::sqrt(6.0 / (fan_in + fan_out)); }

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias) {
    require_rank(x.shape, 4, "conv2d input");
    require_rank(kernel.shape, 4, "conv2d kernel");
    const int N = x.dim(0), cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int cout = kernel.dim(3);
    require_shape(kernel.shape, {3, 3, cin, cout}, "conv2d kernel (channel mismatch)");
    require_shape(bias.shape, {cout}, "conv2d bias");
    if (H < 3 || W < 3) throw Error(ErrorKind::shape_mismatch, "conv2d input smaller than kernel");
    const int OH = H - 2, OW = W - 2;

    Tensor<T> y({N, cout, OH, OW});
    // Row at a time so the output row stays in L1 across the 9*cin taps.
    for (int n = 0; n < N; ++n) {
        const T* img = x.ptr() + static_cast<size_t>(n) * cin * H * W;
        for (int oy = 0; oy < OH; ++oy) {
            for (int co = 0; co < cout; ++co) {
                T* dst = y.ptr() + ((static_cast<size_t>(n) * cout + co) * OH + oy) * OW;
                std::fill(dst, dst + OW, bias.data[co]);
                for (int ci = 0; ci < cin; ++ci) {
                    const T* in = img + static_cast<size_t>(ci) * H * W;
                    for (int ky = 0; ky < 3; ++ky) {
                        for (int kx = 0; kx < 3; ++kx) {
                            const T w = kernel.data[((ky * 3 + kx) * cin + ci) * cout + co];
                            const T* src = in + static_cast<size_t>(oy + ky) * W + kx;
#pragma omp simd
                            for (int ox = 0; ox < OW; ++ox) dst[ox] += w * src[ox];
                        }
                    }
                }
            }
        }
    }
    return y;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& dy, Tensor<T>& dkernel,
                     Tensor<T>& dbias, Tensor<T>* dx) {
    const int N = x.dim(0), cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int cout = kernel.dim(3);
    const int OH = H - 2, OW = W - 2;
    require_shape(dy.shape, {N, cout, OH, OW}, "conv2d output gradient");
    require_shape(dkernel.shape, kernel.shape, "conv2d kernel gradient");
    if (dx) *dx = Tensor<T>(x.shape);

    // One accumulator row per kernel tap keeps the reductions vectorizable
    // without reassociation; rows are summed in double once per sample.
    const int taps = 9 * cin * cout;
    std::vector<T> acc(static_cast<size_t>(taps) * OW);
    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < cout; ++co) {
            const T* g = dy.ptr() + (static_cast<size_t>(n) * cout + co) * OH * OW;
            double bsum = 0;
            for (size_t i = 0; i < static_cast<size_t>(OH) * OW; ++i) bsum += g[i];
            dbias.data[co] += static_cast<T>(bsum);
        }
        std::fill(acc.begin(), acc.end(), T(0));
        const T* img = x.ptr() + static_cast<size_t>(n) * cin * H * W;
        T* dimg = dx ? dx->ptr() + static_cast<size_t>(n) * cin * H * W : nullptr;
        for (int oy = 0; oy < OH; ++oy) {
            for (int co = 0; co < cout; ++co) {
                const T* grow = dy.ptr() + ((static_cast<size_t>(n) * cout + co) * OH + oy) * OW;
                for (int ci = 0; ci < cin; ++ci) {
                    const T* in = img + static_cast<size_t>(ci) * H * W;
                    for (int ky = 0; ky < 3; ++ky) {
                        for (int kx = 0; kx < 3; ++kx) {
                            const size_t widx = static_cast<size_t>((ky * 3 + kx) * cin + ci) * cout + co;
                            const T* src = in + static_cast<size_t>(oy + ky) * W + kx;
                            T* a = acc.data() + widx * OW;
#pragma omp simd
                            for (int ox = 0; ox < OW; ++ox) a[ox] += grow[ox] * src[ox];
                            if (dimg) {
                                const T w = kernel.data[widx];
                                T* dst = dimg + (static_cast<size_t>(ci) * H + oy + ky) * W + kx;
#pragma omp simd
                                for (int ox = 0; ox < OW; ++ox) dst[ox] += w * grow[ox];
                            }
                        }
                    }
                }
            }
        }
        for (int t = 0; t < taps; ++t) {
            double s = 0;
            const T* a = acc.data() + static_cast<size_t>(t) * OW;
            for (int ox = 0; ox < OW; ++ox) s += a[ox];
            dkernel.data[t] += static_cast<T>(s);
        }
    }
}

template <typename T>
Tensor<T> maxpool2_forward(const Tensor<T>& x, std::vector<std::uint32_t>& argmax) {
    require_rank(x.shape, 4, "maxpool input");
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H < 2 || W < 2) throw Error(ErrorKind::shape_mismatch, "maxpool input smaller than window");
    const int OH = H / 2, OW = W / 2;
    Tensor<T> y({N, C, OH, OW});
    argmax.resize(y.size());
    size_t o = 0;
    for (int nc = 0; nc < N * C; ++nc) {
        const size_t base = static_cast<size_t>(nc) * H * W;
        for (int oy = 0; oy < OH; ++oy) {
            for (int ox = 0; ox < OW; ++ox, ++o) {
                size_t best = base + static_cast<size_t>(2 * oy) * W + 2 * ox;
                const size_t cands[3] = {best + 1, best + W, best + W + 1};
                for (size_t c : cands) {
                    if (x.data[c] > x.data[best]) best = c;
                }
                y.data[o] = x.data[best];
                argmax[o] = static_cast<std::uint32_t>(best);
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> maxpool2_backward(const Tensor<T>& dy, const std::vector<std::uint32_t>& argmax,
                            const std::vector<int>& input_shape) {
    if (argmax.size() != dy.size()) throw Error(ErrorKind::shape_mismatch, "maxpool backward: index size mismatch");
    Tensor<T> dx(input_shape);
    for (size_t i = 0; i < dy.size(); ++i) dx.data[argmax[i]] += dy.data[i];
    return dx;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (T& v : y.data) v = v > T(0) ? v : T(0);
    return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& dy) {
    require_shape(dy.shape, y.shape, "relu backward");
    Tensor<T> dx(y.shape);
    for (size_t i = 0; i < y.size(); ++i) dx.data[i] = y.data[i] > T(0) ? dy.data[i] : T(0);
    return dx;
}

template <typename T>
BatchNormState<T>::BatchNormState(const std::string& name, int channels)
    : gamma(name + ".gamma", {channels}, T(1)),
      beta(name + ".beta", {channels}, T(0)),
      running_mean({channels}, T(0)),
      running_var({channels}, T(1)) {}

namespace {

// Number of (batch, spatial) elements per channel and the spatial stride.
struct ChannelLayout {
    int N, C;
    size_t spatial;
};

ChannelLayout channel_layout(const std::vector<int>& shape) {
    if (shape.size() < 2) throw Error(ErrorKind::shape_mismatch, "batchnorm needs at least [N,C]");
    size_t spatial = 1;
    for (size_t i = 2; i < shape.size(); ++i) spatial *= static_cast<size_t>(shape[i]);
    return {shape[0], shape[1], spatial};
}

}  // namespace

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, BatchNormState<T>& state, Mode mode, BatchNormCache<T>* cache) {
    const auto [N, C, S] = channel_layout(x.shape);
    if (C != state.channels()) {
        throw Error(ErrorKind::shape_mismatch, "batchnorm: expected " + std::to_string(state.channels()) +
                                                   " channels, got " + std::to_string(C));
    }
    Tensor<T> y(x.shape);
    Tensor<T> xhat;
    if (cache) xhat = Tensor<T>(x.shape);
    std::vector<double> inv_std(C);
    const double count = static_cast<double>(N) * static_cast<double>(S);

    for (int c = 0; c < C; ++c) {
        double mean, var;
        if (mode == Mode::train) {
            double sum = 0;
            for (int n = 0; n < N; ++n) {
                const T* p = x.ptr() + (static_cast<size_t>(n) * C + c) * S;
                for (size_t i = 0; i < S; ++i) sum += p[i];
            }
            mean = sum / count;
            double sq = 0;
            for (int n = 0; n < N; ++n) {
                const T* p = x.ptr() + (static_cast<size_t>(n) * C + c) * S;
                for (size_t i = 0; i < S; ++i) {
                    const double d = p[i] - mean;
                    sq += d * d;
                }
            }
            var = sq / count;
            state.running_mean.data[c] = static_cast<T>((1 - kBatchNormMomentum) * state.running_mean.data[c] +
                                                        kBatchNormMomentum * mean);
            state.running_var.data[c] = static_cast<T>((1 - kBatchNormMomentum) * state.running_var.data[c] +
                                                       kBatchNormMomentum * var);
        } else {
            mean = state.running_mean.data[c];
            var = state.running_var.data[c];
        }
        const double istd = 1.0 / std::sqrt(var + kBatchNormEps);
        inv_std[c] = istd;
        const T g = state.gamma.value.data[c], b = state.beta.value.data[c];
        const T tm = static_cast<T>(mean), ti = static_cast<T>(istd);
        for (int n = 0; n < N; ++n) {
            const size_t off = (static_cast<size_t>(n) * C + c) * S;
            const T* p = x.ptr() + off;
            T* q = y.ptr() + off;
            T* h = cache ? xhat.ptr() + off : nullptr;
            for (size_t i = 0; i < S; ++i) {
                const T nh = (p[i] - tm) * ti;
                if (h) h[i] = nh;
                q[i] = g * nh + b;
            }
        }
    }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
        cache->mode = mode;
    }
    return y;
}

template <typename T>
Tensor<T> batchnorm_backward(const Tensor<T>& dy, BatchNormState<T>& state, const BatchNormCache<T>& cache) {
    require_shape(dy.shape, cache.xhat.shape, "batchnorm backward");
    const auto [N, C, S] = channel_layout(dy.shape);
    Tensor<T> dx(dy.shape);
    const double count = static_cast<double>(N) * static_cast<double>(S);
    for (int c = 0; c < C; ++c) {
        double sum_dy = 0, sum_dy_xhat = 0;
        for (int n = 0; n < N; ++n) {
            const size_t off = (static_cast<size_t>(n) * C + c) * S;
            const T* g = dy.ptr() + off;
            const T* h = cache.xhat.ptr() + off;
            for (size_t i = 0; i < S; ++i) {
                sum_dy += g[i];
                sum_dy_xhat += static_cast<double>(g[i]) * h[i];
            }
        }
        state.gamma.grad.data[c] += static_cast<T>(sum_dy_xhat);
        state.beta.grad.data[c] += static_cast<T>(sum_dy);
        const double scale = state.gamma.value.data[c] * cache.inv_std[c];
        for (int n = 0; n < N; ++n) {
            const size_t off = (static_cast<size_t>(n) * C + c) * S;
            const T* g = dy.ptr() + off;
            const T* h = cache.xhat.ptr() + off;
            T* d = dx.ptr() + off;
            if (cache.mode == Mode::train) {
                const T a = static_cast<T>(scale), mdy = static_cast<T>(sum_dy / count),
                        mdh = static_cast<T>(sum_dy_xhat / count);
                for (size_t i = 0; i < S; ++i) d[i] = a * (g[i] - mdy - h[i] * mdh);
            } else {
                const T a = static_cast<T>(scale);
                for (size_t i = 0; i < S; ++i) d[i] = a * g[i];
            }
        }
    }
    return dx;
}

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    require_rank(x.shape, 2, "dense input");
    require_rank(weight.shape, 2, "dense weight");
    const int N = x.dim(0), in = x.dim(1), out = weight.dim(1);
    require_shape(weight.shape, {in, out}, "dense weight");
    require_shape(bias.shape, {out}, "dense bias");
    Tensor<T> y({N, out});
    for (int n = 0; n < N; ++n) std::copy(bias.data.begin(), bias.data.end(), y.ptr() + static_cast<size_t>(n) * out);
    // Every output element accumulates over k in ascending order whatever the
    // batch size, so a row's result does not depend on how edges are chunked.
    constexpr int kBlock = 64;
    for (int k0 = 0; k0 < in; k0 += kBlock) {
        const int k1 = std::min(in, k0 + kBlock);
        for (int n = 0; n < N; ++n) {
            const T* xr = x.ptr() + static_cast<size_t>(n) * in;
            T* yr = y.ptr() + static_cast<size_t>(n) * out;
            for (int k = k0; k < k1; ++k) {
                const T xv = xr[k];
                if (xv == T(0)) continue;
                const T* wr = weight.ptr() + static_cast<size_t>(k) * out;
#pragma omp simd
                for (int m = 0; m < out; ++m) yr[m] += xv * wr[m];
            }
        }
    }
    return y;
}

template <typename T>
Tensor<T> dense_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy, Tensor<T>& dweight,
                         Tensor<T>& dbias) {
    const int N = x.dim(0), in = x.dim(1), out = weight.dim(1);
    require_shape(dy.shape, {N, out}, "dense output gradient");
    const T* X = x.ptr();
    const T* W = weight.ptr();
    const T* G = dy.ptr();
    T* dW = dweight.ptr();
    T* db = dbias.ptr();
    for (int n = 0; n < N; ++n) {
        const T* g = G + static_cast<std::size_t>(n) * out;
        for (int m = 0; m < out; ++m) db[m] += g[m];
    }
    Tensor<T> dx({N, in});
    T* DX = dx.ptr();
    // blocks of weight rows stay in cache while all samples pass over them;
    // fixed lane assignment keeps sums independent of buffer alignment
    constexpr int block = 32;
    constexpr int lanes = 32;
    for (int k0 = 0; k0 < in; k0 += block) {
        const int k1 = std::min(in, k0 + block);
        for (int n = 0; n < N; ++n) {
            const T* g = G + static_cast<std::size_t>(n) * out;
            const T* xr = X + static_cast<std::size_t>(n) * in;
            for (int k = k0; k < k1; ++k) {
                const T xv = xr[k];
                if (xv == T(0)) continue;
                T* dwr = dW + static_cast<std::size_t>(k) * out;
                for (int m = 0; m < out; ++m) dwr[m] += xv * g[m];
            }
        }
        for (int n = 0; n < N; ++n) {
            const T* g = G + static_cast<std::size_t>(n) * out;
            T* dxr = DX + static_cast<std::size_t>(n) * in;
            for (int k = k0; k < k1; ++k) {
                const T* wr = W + static_cast<std::size_t>(k) * out;
                T acc[lanes] = {};
                int m = 0;
                for (; m + lanes <= out; m += lanes)
                    for (int j = 0; j < lanes; ++j) acc[j] += g[m + j] * wr[m + j];
                for (int w = lanes / 2; w > 0; w /= 2)
                    for (int j = 0; j < w; ++j) acc[j] += acc[j + w];
                T s = acc[0];
                for (; m < out; ++m) s += g[m] * wr[m];
                dxr[k] = s;
            }
        }
    }
    return dx;
}

template <typename T>
Tensor<T> softmax_forward(const Tensor<T>& logits) {
    require_rank(logits.shape, 2, "softmax input");
    const int N = logits.dim(0), K = logits.dim(1);
    Tensor<T> p(logits.shape);
    for (int n = 0; n < N; ++n) {
        const T* z = logits.ptr() + static_cast<size_t>(n) * K;
        T* q = p.ptr() + static_cast<size_t>(n) * K;
        const T mx = *std::max_element(z, z + K);
        double sum = 0;
        for (int k = 0; k < K; ++k) sum += std::exp(static_cast<double>(z[k] - mx));
        for (int k = 0; k < K; ++k) q[k] = static_cast<T>(std::exp(static_cast<double>(z[k] - mx)) / sum);
    }
    return p;
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& probs, const Tensor<T>& dprobs) {
    require_shape(dprobs.shape, probs.shape, "softmax backward");
    const int N = probs.dim(0), K = probs.dim(1);
    Tensor<T> dz(probs.shape);
    for (int n = 0; n < N; ++n) {
        const T* p = probs.ptr() + static_cast<size_t>(n) * K;
        const T* g = dprobs.ptr() + static_cast<size_t>(n) * K;
        double dot = 0;
        for (int k = 0; k < K; ++k) dot += static_cast<double>(p[k]) * g[k];
        for (int k = 0; k < K; ++k) dz.data[static_cast<size_t>(n) * K + k] = static_cast<T>(p[k] * (g[k] - dot));
    }
    return dz;
}

template <typename T>
Tensor<T> nhwc_to_nchw(const Tensor<T>& x) {
    require_rank(x.shape, 4, "nhwc input");
    const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    Tensor<T> y({N, C, H, W});
    for (int n = 0; n < N; ++n) {
        const T* src = x.ptr() + static_cast<size_t>(n) * H * W * C;
        T* dst = y.ptr() + static_cast<size_t>(n) * C * H * W;
        for (int c = 0; c < C; ++c) {
            for (size_t i = 0; i < static_cast<size_t>(H) * W; ++i) dst[c * static_cast<size_t>(H) * W + i] = src[i * C + c];
        }
    }
    return y;
}

#define DOCRECON_INSTANTIATE(T)                                                                                      \
    template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                         \
    template void conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&, Tensor<T>&,      \
                                  Tensor<T>*);                                                                       \
    template Tensor<T> maxpool2_forward(const Tensor<T>&, std::vector<std::uint32_t>&);                              \
    template Tensor<T> maxpool2_backward(const Tensor<T>&, const std::vector<std::uint32_t>&, const std::vector<int>&); \
    template Tensor<T> relu_forward(const Tensor<T>&);                                                               \
    template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                            \
    template struct BatchNormState<T>;                                                                               \
    template Tensor<T> batchnorm_forward(const Tensor<T>&, BatchNormState<T>&, Mode, BatchNormCache<T>*);            \
    template Tensor<T> batchnorm_backward(const Tensor<T>&, BatchNormState<T>&, const BatchNormCache<T>&);           \
    template Tensor<T> dense_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                          \
    template Tensor<T> dense_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&, Tensor<T>&); \
    template Tensor<T> softmax_forward(const Tensor<T>&);                                                            \
    template Tensor<T> softmax_backward(const Tensor<T>&, const Tensor<T>&);                                         \
    template Tensor<T> nhwc_to_nchw(const Tensor<T>&);

DOCRECON_INSTANTIATE(float)
DOCRECON_INSTANTIATE(double)

#undef DOCRECON_INSTANTIATE

}  // namespace docrecon::nn
