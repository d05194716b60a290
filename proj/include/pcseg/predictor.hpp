#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pcseg/error.hpp"
#include "pcseg/geometry.hpp"
#include "pcseg/rng.hpp"

namespace pcseg {

/// Row-major tensor of at most 4 dimensions.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        if (shape.empty() || shape.size() > 4) {
            throw Error("ShapeMismatch", "tensors have 1 to 4 dimensions");
        }
        std::size_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw Error("ShapeMismatch", "tensor dimensions must be positive");
            n *= static_cast<std::size_t>(d);
        }
        data.assign(n, T(0));
    }
};

/// Architecture descriptor: conv blocks (3x3 stride 1 same-pad, ReLU, 2x2
/// max-pool) followed by a fully-connected head emitting 2*n_v radii.
/// `frontend` reserves a slot for a subband decomposition stage so the
/// checkpoint format survives adding one.
struct NetDescriptor {
    int input_size = 224;
    int in_channels = 3;
    std::vector<int> conv_channels = {16, 32, 64, 128};
    int fc_hidden = 256;
    int n_v = 16;
    std::string head = "softplus";  // "softplus" (scaled, bounded) or "linear"
    double radius_scale = 0.0;      // 0 = r_max()/4
    bool input_standardize = true;  // per-image standardization at batch assembly
    std::string frontend = "none";
    int version = 1;

    double r_max() const { return input_size * M_SQRT2 / 2.0; }
    double scale() const { return radius_scale > 0.0 ? radius_scale : r_max() / 4.0; }
    int output_dim() const { return 2 * n_v; }
    int blocks() const { return static_cast<int>(conv_channels.size()); }
    int spatial_out() const { return input_size >> blocks(); }
    int flat_dim() const {
        const int c = conv_channels.empty() ? in_channels : conv_channels.back();
        return spatial_out() * spatial_out() * c;
    }

    void validate() const;
    std::string to_json() const;
    static NetDescriptor from_json(const std::string& text);
};

template <typename T>
struct Regressor {
    NetDescriptor desc;
    struct Conv {
        int in_c = 0, out_c = 0;
        std::vector<T> w;  // [out_c][in_c][3][3]
        std::vector<T> b;  // [out_c]
    };
    std::vector<Conv> convs;
    std::vector<T> fc1_w, fc1_b;  // absent when fc_hidden == 0
    std::vector<T> fc2_w, fc2_b;
    std::uint64_t stamp = 1;  // bumped by every step(); guards cached activations

    std::vector<std::span<T>> params();
    std::vector<std::span<const T>> params() const;
    std::size_t param_count() const;
};

using RegressorState = Regressor<float>;

/// Weights N(0, 0.01^2), biases 1, seed-deterministic.
template <typename T>
Regressor<T> init_regressor(const NetDescriptor& desc, std::uint64_t seed);

/// Parameter gradients in the same order as Regressor::params().
template <typename T>
struct ParamGrads {
    std::vector<std::vector<T>> buffers;
};

template <typename T>
struct ForwardCache {
    std::uint64_t stamp = 0;
    int batch = 0;
    struct Sample {
        std::vector<std::vector<T>> acts;      // acts[0] = input CHW, acts[k+1] = block k output
        std::vector<std::vector<T>> conv_out;  // pre-ReLU conv output per block
        std::vector<std::vector<std::uint8_t>> argmax;  // pooled-cell winner per block
        std::vector<T> h1_pre, h1;             // hidden layer (when present)
        std::vector<T> z;                      // pre-head outputs
    };
    std::vector<Sample> samples;
};

/// batch is [B, S, S, C]; returns radii [B, 2*n_v] plus cached activations.
/// Samples are independent; `threads` > 1 splits the batch without changing
/// any result bit.
template <typename T>
Tensor<T> forward(const Regressor<T>& net, const Tensor<T>& batch, ForwardCache<T>* cache,
                  int threads = 1);

/// Exact reverse-mode gradients of forward contracted with d_radii [B, 2*n_v].
/// Per-sample contributions are reduced in sample order, so results do not
/// depend on `threads`. Throws StaleCache if the cache predates a step().
template <typename T>
ParamGrads<T> backward(const Regressor<T>& net, const ForwardCache<T>& cache,
                       const Tensor<T>& d_radii, int threads = 1);

enum class OptimizerKind { Adam, Sgd };

template <typename T>
struct OptimizerState {
    OptimizerKind kind = OptimizerKind::Adam;
    double lr = 0.01;
    double adam_mu = 0.9;
    double adam_nu = 0.999;
    double adam_eps = 1e-8;
    double sgd_momentum = 0.9;
    double sgd_weight_decay = 5e-4;
    long step_count = 0;
    std::vector<std::vector<T>> m;  // Adam first moment / SGD velocity
    std::vector<std::vector<T>> v;  // Adam second moment

    static OptimizerState for_net(const Regressor<T>& net, OptimizerKind kind, double lr);
};

/// One optimizer update in place; bumps the net stamp.
template <typename T>
void step(Regressor<T>* net, OptimizerState<T>* opt, const ParamGrads<T>& grads);

/// Checkpoint: magic "PCSG", u32 format version, u32 descriptor JSON length,
/// descriptor JSON, then each parameter array as little-endian f32 in
/// params() order. Throws BadMagic / VersionMismatch / TruncatedFile.
void save_checkpoint(const RegressorState& net, const std::string& path);
RegressorState load_checkpoint(const std::string& path);

/// Per-image standardization (zero mean, unit variance) used when the
/// descriptor asks for it; a reading of batch intensity normalization as an
/// input transform rather than a BatchNorm layer.
template <typename T>
void standardize_image(std::span<T> pixels);

// ---------------------------------------------------------------------------
// Implementation (templated; instantiated for float and double)
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void conv3x3_forward(const T* in, int h, int w, int in_c, int out_c, const T* weights,
                     const T* bias, T* out) {
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int oc = 0; oc < out_c; ++oc) {
        std::fill(out + oc * plane, out + (oc + 1) * plane, bias[oc]);
    }
    for (int oc = 0; oc < out_c; ++oc) {
        T* dst_plane = out + oc * plane;
        for (int ic = 0; ic < in_c; ++ic) {
            const T* src_plane = in + ic * plane;
            const T* wk = weights + (static_cast<std::size_t>(oc) * in_c + ic) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                const int y_lo = std::max(0, 1 - ky);
                const int y_hi = std::min(h, h + 1 - ky);
                for (int kx = 0; kx < 3; ++kx) {
                    const T wv = wk[ky * 3 + kx];
                    const int x_lo = std::max(0, 1 - kx);
                    const int x_hi = std::min(w, w + 1 - kx);
                    for (int y = y_lo; y < y_hi; ++y) {
                        const T* src = src_plane + (y + ky - 1) * w + (kx - 1);
                        T* dst = dst_plane + y * w;
                        for (int x = x_lo; x < x_hi; ++x) dst[x] += wv * src[x];
                    }
                }
            }
        }
    }
}

template <typename T>
void conv3x3_backward(const T* in, const T* d_out, int h, int w, int in_c, int out_c,
                      const T* weights, T* d_in, T* d_w, T* d_b) {
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::fill(d_in, d_in + plane * in_c, T(0));
    for (int oc = 0; oc < out_c; ++oc) {
        const T* dout_plane = d_out + oc * plane;
        T acc = 0;
        for (std::size_t i = 0; i < plane; ++i) acc += dout_plane[i];
        d_b[oc] += acc;
        for (int ic = 0; ic < in_c; ++ic) {
            const T* src_plane = in + ic * plane;
            T* din_plane = d_in + ic * plane;
            const T* wk = weights + (static_cast<std::size_t>(oc) * in_c + ic) * 9;
            T* dwk = d_w + (static_cast<std::size_t>(oc) * in_c + ic) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                const int y_lo = std::max(0, 1 - ky);
                const int y_hi = std::min(h, h + 1 - ky);
                for (int kx = 0; kx < 3; ++kx) {
                    const int x_lo = std::max(0, 1 - kx);
                    const int x_hi = std::min(w, w + 1 - kx);
                    const T wv = wk[ky * 3 + kx];
                    T dw_acc = 0;
                    for (int y = y_lo; y < y_hi; ++y) {
                        const T* src = src_plane + (y + ky - 1) * w + (kx - 1);
                        T* din = din_plane + (y + ky - 1) * w + (kx - 1);
                        const T* dout = dout_plane + y * w;
                        for (int x = x_lo; x < x_hi; ++x) {
                            dw_acc += src[x] * dout[x];
                            din[x] += wv * dout[x];
                        }
                    }
                    dwk[ky * 3 + kx] += dw_acc;
                }
            }
        }
    }
}

template <typename T>
void maxpool2_forward(const T* in, int h, int w, int channels, T* out, std::uint8_t* argmax) {
    const int oh = h / 2, ow = w / 2;
    for (int c = 0; c < channels; ++c) {
        const T* plane = in + static_cast<std::size_t>(c) * h * w;
        T* dst = out + static_cast<std::size_t>(c) * oh * ow;
        std::uint8_t* arg = argmax + static_cast<std::size_t>(c) * oh * ow;
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                const T* cell = plane + (2 * y) * w + 2 * x;
                T best = cell[0];
                std::uint8_t idx = 0;
                if (cell[1] > best) { best = cell[1]; idx = 1; }
                if (cell[w] > best) { best = cell[w]; idx = 2; }
                if (cell[w + 1] > best) { best = cell[w + 1]; idx = 3; }
                dst[y * ow + x] = best;
                arg[y * ow + x] = idx;
            }
        }
    }
}

template <typename T>
inline T softplus(T z) {
    if (z > T(30)) return z;
    if (z < T(-30)) return std::exp(z);
    return std::log1p(std::exp(z));
}

template <typename T>
inline T sigmoid(T z) {
    return T(1) / (T(1) + std::exp(-z));
}

}  // namespace detail

template <typename T>
void standardize_image(std::span<T> pixels) {
    if (pixels.empty()) return;
    double mean = 0.0;
    for (T v : pixels) mean += v;
    mean /= static_cast<double>(pixels.size());
    double var = 0.0;
    for (T v : pixels) var += (v - mean) * (v - mean);
    var /= static_cast<double>(pixels.size());
    const double inv = 1.0 / std::sqrt(std::max(var, 1e-12));
    for (T& v : pixels) v = static_cast<T>((v - mean) * inv);
}

}  // namespace pcseg
