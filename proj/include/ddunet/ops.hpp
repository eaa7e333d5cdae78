#ifndef DDUNET_OPS_HPP
#define DDUNET_OPS_HPP

#include <array>
#include <cmath>
#include <cstring>
#include <limits>

#include "ddunet/tensor.hpp"

namespace ddunet {

namespace detail {

// C[M,N] += A[M,K] * B[K,N], row-major contiguous.
template <typename T>
void gemm_nn_acc(const T* __restrict a, const T* __restrict b, T* __restrict c,
                 std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        T* __restrict crow = c + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const T av = a[i * k + p];
            if (av == T(0)) continue;
            const T* __restrict brow = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[M,N] += A[M,K] * B[N,K]^T  (row dot products). The dot is split over
// fixed lanes so the reduction order is code-defined and vectorizable.
template <typename T>
void gemm_nt_acc(const T* __restrict a, const T* __restrict b, T* __restrict c,
                 std::int64_t m, std::int64_t k, std::int64_t n) {
    constexpr std::int64_t L = 16;
    for (std::int64_t i = 0; i < m; ++i) {
        const T* __restrict arow = a + i * k;
        for (std::int64_t j = 0; j < n; ++j) {
            const T* __restrict brow = b + j * k;
            T lanes[L] = {};
            std::int64_t p = 0;
            for (; p + L <= k; p += L)
                for (std::int64_t l = 0; l < L; ++l)
                    lanes[l] += arow[p + l] * brow[p + l];
            T acc(0);
            for (std::int64_t l = 0; l < L; ++l) acc += lanes[l];
            for (; p < k; ++p) acc += arow[p] * brow[p];
            c[i * n + j] += acc;
        }
    }
}

struct ConvDims {
    std::int64_t n, cin, cout;
    std::array<std::int64_t, 3> in, k, out;
    int stride, padding, dilation;
};

inline std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, int stride,
                                    int padding, int dilation) {
    return (in + 2 * static_cast<std::int64_t>(padding) -
            static_cast<std::int64_t>(dilation) * (k - 1) - 1) /
               stride +
           1;
}

template <typename T>
ConvDims conv_dims(const Tensor<T>& input, const Tensor<T>& weight,
                   const Tensor<T>& bias, int stride, int padding, int dilation) {
    if (input.shape.size() != 5)
        throw std::invalid_argument("conv3d: input must be [N,C,D,H,W], got " +
                                    input.shape_str());
    if (weight.shape.size() != 5)
        throw std::invalid_argument("conv3d: weight must be [Cout,Cin,kd,kh,kw]");
    if (bias.shape.size() != 1 || bias.shape[0] != weight.shape[0])
        throw std::invalid_argument("conv3d: bias must be [Cout]");
    if (input.shape[1] != weight.shape[1])
        throw std::invalid_argument(
            "conv3d: input channel count " + std::to_string(input.shape[1]) +
            " does not match weight Cin " + std::to_string(weight.shape[1]));
    if (stride < 1 || dilation < 1 || padding < 0)
        throw std::invalid_argument("conv3d: stride/dilation must be >= 1, padding >= 0");
    ConvDims d;
    d.n = input.shape[0];
    d.cin = input.shape[1];
    d.cout = weight.shape[0];
    d.in = {input.shape[2], input.shape[3], input.shape[4]};
    d.k = {weight.shape[2], weight.shape[3], weight.shape[4]};
    d.stride = stride;
    d.padding = padding;
    d.dilation = dilation;
    for (int a = 0; a < 3; ++a) {
        if (d.k[a] < 1) throw std::invalid_argument("conv3d: kernel extents must be >= 1");
        d.out[a] = conv_out_extent(d.in[a], d.k[a], stride, padding, dilation);
        if (d.out[a] <= 0)
            throw std::invalid_argument("conv3d: non-positive output extent for input " +
                                        input.shape_str());
    }
    return d;
}

// Unfold one batch item into col[Cin*kd*kh*kw, od*oh*ow].
template <typename T>
void im2col(const T* in, const ConvDims& d, T* col) {
    const auto [id_, ih_, iw_] = d.in;
    const auto [kd, kh, kw] = d.k;
    const auto [od, oh, ow] = d.out;
    const std::int64_t v = od * oh * ow;
    std::int64_t row = 0;
    for (std::int64_t ci = 0; ci < d.cin; ++ci) {
        const T* chan = in + ci * id_ * ih_ * iw_;
        for (std::int64_t z = 0; z < kd; ++z)
            for (std::int64_t y = 0; y < kh; ++y)
                for (std::int64_t x = 0; x < kw; ++x, ++row) {
                    T* dst = col + row * v;
                    for (std::int64_t o0 = 0; o0 < od; ++o0) {
                        const std::int64_t i0 = o0 * d.stride - d.padding + z * d.dilation;
                        for (std::int64_t o1 = 0; o1 < oh; ++o1) {
                            const std::int64_t i1 = o1 * d.stride - d.padding + y * d.dilation;
                            T* drow = dst + (o0 * oh + o1) * ow;
                            if (i0 < 0 || i0 >= id_ || i1 < 0 || i1 >= ih_) {
                                std::fill(drow, drow + ow, T(0));
                                continue;
                            }
                            const T* srow = chan + (i0 * ih_ + i1) * iw_;
                            for (std::int64_t o2 = 0; o2 < ow; ++o2) {
                                const std::int64_t i2 =
                                    o2 * d.stride - d.padding + x * d.dilation;
                                drow[o2] = (i2 >= 0 && i2 < iw_) ? srow[i2] : T(0);
                            }
                        }
                    }
                }
    }
}

// Scatter-add of col-layout gradients back onto the input gradient.
template <typename T>
void col2im_acc(const T* col, const ConvDims& d, T* gin) {
    const auto [id_, ih_, iw_] = d.in;
    const auto [kd, kh, kw] = d.k;
    const auto [od, oh, ow] = d.out;
    std::int64_t row = 0;
    for (std::int64_t ci = 0; ci < d.cin; ++ci) {
        T* chan = gin + ci * id_ * ih_ * iw_;
        for (std::int64_t z = 0; z < kd; ++z)
            for (std::int64_t y = 0; y < kh; ++y)
                for (std::int64_t x = 0; x < kw; ++x, ++row) {
                    const T* src = col + row * (od * oh * ow);
                    for (std::int64_t o0 = 0; o0 < od; ++o0) {
                        const std::int64_t i0 = o0 * d.stride - d.padding + z * d.dilation;
                        if (i0 < 0 || i0 >= id_) continue;
                        for (std::int64_t o1 = 0; o1 < oh; ++o1) {
                            const std::int64_t i1 = o1 * d.stride - d.padding + y * d.dilation;
                            if (i1 < 0 || i1 >= ih_) continue;
                            const T* srow = src + (o0 * oh + o1) * ow;
                            T* drow = chan + (i0 * ih_ + i1) * iw_;
                            for (std::int64_t o2 = 0; o2 < ow; ++o2) {
                                const std::int64_t i2 =
                                    o2 * d.stride - d.padding + x * d.dilation;
                                if (i2 >= 0 && i2 < iw_) drow[i2] += srow[o2];
                            }
                        }
                    }
                }
    }
}

}  // namespace detail

/// 3D cross-correlation over [N,Cin,D,H,W] with weight [Cout,Cin,kd,kh,kw].
/// Lowered to im2col + GEMM; the col buffer is recomputed in backward rather
/// than saved.
template <typename T>
VarPtr<T> conv3d(const VarPtr<T>& input, const VarPtr<T>& weight,
                 const VarPtr<T>& bias, int stride = 1, int padding = 0,
                 int dilation = 1) {
    const auto d = detail::conv_dims(input->value, weight->value, bias->value,
                                     stride, padding, dilation);
    const std::int64_t ck = d.cin * d.k[0] * d.k[1] * d.k[2];
    const std::int64_t v = d.out[0] * d.out[1] * d.out[2];
    const std::int64_t in_vox = d.in[0] * d.in[1] * d.in[2];

    Tensor<T> out({d.n, d.cout, d.out[0], d.out[1], d.out[2]});
    std::vector<T> col(static_cast<std::size_t>(ck * v));
    for (std::int64_t n = 0; n < d.n; ++n) {
        detail::im2col(input->value.ptr() + n * d.cin * in_vox, d, col.data());
        T* o = out.ptr() + n * d.cout * v;
        for (std::int64_t co = 0; co < d.cout; ++co)
            std::fill(o + co * v, o + (co + 1) * v, bias->value.data[co]);
        detail::gemm_nn_acc(weight->value.ptr(), col.data(), o, d.cout, ck, v);
    }

    return make_node<T>(std::move(out), {input, weight, bias}, [d, ck, v, in_vox](Var<T>& node) {
        auto& in = *node.parents[0];
        auto& w = *node.parents[1];
        auto& b = *node.parents[2];
        in.ensure_grad();
        w.ensure_grad();
        b.ensure_grad();
        std::vector<T> col(static_cast<std::size_t>(ck * v));
        std::vector<T> wt(static_cast<std::size_t>(ck * d.cout));
        for (std::int64_t co = 0; co < d.cout; ++co)
            for (std::int64_t p = 0; p < ck; ++p)
                wt[p * d.cout + co] = w.value.data[co * ck + p];
        std::vector<T> colgrad(static_cast<std::size_t>(ck * v));
        for (std::int64_t n = 0; n < d.n; ++n) {
            const T* go = node.grad.ptr() + n * d.cout * v;
            detail::im2col(in.value.ptr() + n * d.cin * in_vox, d, col.data());
            // weight grad: gout [Cout,V] x col^T [V,CK]
            detail::gemm_nt_acc(go, col.data(), w.grad.ptr(), d.cout, v, ck);
            // bias grad: row sums
            for (std::int64_t co = 0; co < d.cout; ++co) {
                T acc(0);
                for (std::int64_t j = 0; j < v; ++j) acc += go[co * v + j];
                b.grad.data[co] += acc;
            }
            // input grad: W^T [CK,Cout] x gout [Cout,V], folded back by col2im
            std::fill(colgrad.begin(), colgrad.end(), T(0));
            detail::gemm_nn_acc(wt.data(), go, colgrad.data(), ck, d.cout, v);
            detail::col2im_acc(colgrad.data(), d, in.grad.ptr() + n * d.cin * in_vox);
        }
    });
}

namespace detail {
template <typename T>
void check_pool_input(const Tensor<T>& t, int kernel, int stride, const char* op) {
    if (t.shape.size() != 5)
        throw std::invalid_argument(std::string(op) + ": input must be [N,C,D,H,W]");
    if (kernel < 1 || stride != kernel)
        throw std::invalid_argument(std::string(op) + ": requires stride == kernel >= 1");
    for (int a = 2; a < 5; ++a)
        if (t.shape[a] % kernel != 0)
            throw std::invalid_argument(std::string(op) + ": spatial extent " +
                                        std::to_string(t.shape[a]) +
                                        " not divisible by pool kernel " +
                                        std::to_string(kernel));
}

template <typename T, typename Visit>
void pool_windows(const Tensor<T>& in, int k, Visit&& visit) {
    const std::int64_t nc = in.shape[0] * in.shape[1];
    const std::int64_t id_ = in.shape[2], ih_ = in.shape[3], iw_ = in.shape[4];
    const std::int64_t od = id_ / k, oh = ih_ / k, ow = iw_ / k;
    for (std::int64_t c = 0; c < nc; ++c) {
        const std::int64_t base = c * id_ * ih_ * iw_;
        for (std::int64_t z = 0; z < od; ++z)
            for (std::int64_t y = 0; y < oh; ++y)
                for (std::int64_t x = 0; x < ow; ++x) {
                    const std::int64_t out_idx = ((c * od + z) * oh + y) * ow + x;
                    visit(out_idx, [&](auto&& f) {
                        for (std::int64_t dz = 0; dz < k; ++dz)
                            for (std::int64_t dy = 0; dy < k; ++dy)
                                for (std::int64_t dx = 0; dx < k; ++dx) {
                                    const std::int64_t idx =
                                        base + ((z * k + dz) * ih_ + y * k + dy) * iw_ +
                                        x * k + dx;
                                    f(idx);
                                }
                    });
                }
    }
}
}  // namespace detail

/// Non-overlapping windowed max; backward routes the gradient to the first
/// (row-major) argmax of each window.
template <typename T>
VarPtr<T> max_pool3d(const VarPtr<T>& input, int kernel = 2, int stride = 2) {
    detail::check_pool_input(input->value, kernel, stride, "max_pool3d");
    const auto& s = input->value.shape;
    Tensor<T> out({s[0], s[1], s[2] / kernel, s[3] / kernel, s[4] / kernel});
    auto argmax = std::make_shared<std::vector<std::int64_t>>(
        static_cast<std::size_t>(out.numel()));
    detail::pool_windows(input->value, kernel, [&](std::int64_t oi, auto&& each) {
        T best = -std::numeric_limits<T>::infinity();
        std::int64_t best_idx = -1;
        each([&](std::int64_t idx) {
            const T v = input->value.data[idx];
            if (v > best) {
                best = v;
                best_idx = idx;
            }
        });
        out.data[oi] = best;
        (*argmax)[static_cast<std::size_t>(oi)] = best_idx;
    });
    return make_node<T>(std::move(out), {input}, [argmax](Var<T>& node) {
        auto& in = *node.parents[0];
        in.ensure_grad();
        for (std::int64_t i = 0; i < node.grad.numel(); ++i)
            in.grad.data[(*argmax)[static_cast<std::size_t>(i)]] += node.grad.data[i];
    });
}

/// Non-overlapping windowed mean; backward splits the gradient uniformly
/// over the kernel^3 window.
template <typename T>
VarPtr<T> avg_pool3d(const VarPtr<T>& input, int kernel = 2, int stride = 2) {
    detail::check_pool_input(input->value, kernel, stride, "avg_pool3d");
    const auto& s = input->value.shape;
    Tensor<T> out({s[0], s[1], s[2] / kernel, s[3] / kernel, s[4] / kernel});
    const T inv = T(1) / static_cast<T>(kernel * kernel * kernel);
    detail::pool_windows(input->value, kernel, [&](std::int64_t oi, auto&& each) {
        T acc(0);
        each([&](std::int64_t idx) { acc += input->value.data[idx]; });
        out.data[oi] = acc * inv;
    });
    return make_node<T>(std::move(out), {input}, [kernel, inv](Var<T>& node) {
        auto& in = *node.parents[0];
        in.ensure_grad();
        detail::pool_windows(in.value, kernel, [&](std::int64_t oi, auto&& each) {
            const T g = node.grad.data[oi] * inv;
            each([&](std::int64_t idx) { in.grad.data[idx] += g; });
        });
    });
}

/// Nearest-neighbor upsampling: every voxel replicated factor^3 times.
template <typename T>
VarPtr<T> upsample_nearest3d(const VarPtr<T>& input, int factor = 2) {
    if (input->value.shape.size() != 5)
        throw std::invalid_argument("upsample_nearest3d: input must be [N,C,D,H,W]");
    if (factor < 2) throw std::invalid_argument("upsample_nearest3d: factor must be >= 2");
    const auto& s = input->value.shape;
    const std::int64_t f = factor;
    Tensor<T> out({s[0], s[1], s[2] * f, s[3] * f, s[4] * f});
    const std::int64_t nc = s[0] * s[1], id_ = s[2], ih_ = s[3], iw_ = s[4];
    for (std::int64_t c = 0; c < nc; ++c)
        for (std::int64_t z = 0; z < id_ * f; ++z)
            for (std::int64_t y = 0; y < ih_ * f; ++y) {
                const T* src = input->value.ptr() + ((c * id_ + z / f) * ih_ + y / f) * iw_;
                T* dst = out.ptr() + ((c * id_ * f + z) * ih_ * f + y) * iw_ * f;
                for (std::int64_t x = 0; x < iw_ * f; ++x) dst[x] = src[x / f];
            }
    return make_node<T>(std::move(out), {input}, [f](Var<T>& node) {
        auto& in = *node.parents[0];
        in.ensure_grad();
        const auto& s = in.value.shape;
        const std::int64_t nc = s[0] * s[1], id_ = s[2], ih_ = s[3], iw_ = s[4];
        for (std::int64_t c = 0; c < nc; ++c)
            for (std::int64_t z = 0; z < id_ * f; ++z)
                for (std::int64_t y = 0; y < ih_ * f; ++y) {
                    const T* src =
                        node.grad.ptr() + ((c * id_ * f + z) * ih_ * f + y) * iw_ * f;
                    T* dst = in.grad.ptr() + ((c * id_ + z / f) * ih_ + y / f) * iw_;
                    for (std::int64_t x = 0; x < iw_ * f; ++x) dst[x / f] += src[x];
                }
    });
}

/// Channel-axis concatenation; backward slices the gradient back per input.
template <typename T>
VarPtr<T> concat_channels(const std::vector<VarPtr<T>>& inputs) {
    if (inputs.empty()) throw std::invalid_argument("concat_channels: no inputs");
    const auto& s0 = inputs[0]->value.shape;
    if (s0.size() != 5)
        throw std::invalid_argument("concat_channels: inputs must be [N,C,D,H,W]");
    std::int64_t total_c = 0;
    for (const auto& in : inputs) {
        const auto& s = in->value.shape;
        if (s.size() != 5 || s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3] ||
            s[4] != s0[4])
            throw std::invalid_argument(
                "concat_channels: spatial/batch mismatch: " + in->value.shape_str() +
                " vs " + inputs[0]->value.shape_str());
        total_c += s[1];
    }
    const std::int64_t vox = s0[2] * s0[3] * s0[4];
    Tensor<T> out({s0[0], total_c, s0[2], s0[3], s0[4]});
    for (std::int64_t n = 0; n < s0[0]; ++n) {
        std::int64_t c_off = 0;
        for (const auto& in : inputs) {
            const std::int64_t c = in->value.shape[1];
            std::memcpy(out.ptr() + (n * total_c + c_off) * vox,
                        in->value.ptr() + n * c * vox,
                        static_cast<std::size_t>(c * vox) * sizeof(T));
            c_off += c;
        }
    }
    return make_node<T>(std::move(out), inputs, [vox, total_c](Var<T>& node) {
        const std::int64_t n_batch = node.value.shape[0];
        std::int64_t c_off = 0;
        for (auto& p : node.parents) {
            p->ensure_grad();
            const std::int64_t c = p->value.shape[1];
            for (std::int64_t n = 0; n < n_batch; ++n) {
                const T* src = node.grad.ptr() + (n * total_c + c_off) * vox;
                T* dst = p->grad.ptr() + n * c * vox;
                for (std::int64_t i = 0; i < c * vox; ++i) dst[i] += src[i];
            }
            c_off += c;
        }
    });
}

/// Channel slice [c_begin, c_end).
template <typename T>
VarPtr<T> slice_channels(const VarPtr<T>& input, std::int64_t c_begin,
                         std::int64_t c_end) {
    const auto& s = input->value.shape;
    if (s.size() != 5) throw std::invalid_argument("slice_channels: input must be 5D");
    if (c_begin < 0 || c_end > s[1] || c_begin >= c_end)
        throw std::invalid_argument("slice_channels: bad channel range");
    const std::int64_t vox = s[2] * s[3] * s[4];
    const std::int64_t c = c_end - c_begin;
    Tensor<T> out({s[0], c, s[2], s[3], s[4]});
    for (std::int64_t n = 0; n < s[0]; ++n)
        std::memcpy(out.ptr() + n * c * vox,
                    input->value.ptr() + (n * s[1] + c_begin) * vox,
                    static_cast<std::size_t>(c * vox) * sizeof(T));
    return make_node<T>(std::move(out), {input}, [c_begin, c, vox](Var<T>& node) {
        auto& in = *node.parents[0];
        in.ensure_grad();
        const std::int64_t c_in = in.value.shape[1];
        for (std::int64_t n = 0; n < in.value.shape[0]; ++n) {
            const T* src = node.grad.ptr() + n * c * vox;
            T* dst = in.grad.ptr() + (n * c_in + c_begin) * vox;
            for (std::int64_t i = 0; i < c * vox; ++i) dst[i] += src[i];
        }
    });
}

/// x for x > 0, alpha * x otherwise; slope alpha is used at x == 0.
template <typename T>
VarPtr<T> leaky_relu(const VarPtr<T>& input, T alpha = T(0.2)) {
    Tensor<T> out(input->value.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) {
        const T x = input->value.data[i];
        out.data[i] = x > T(0) ? x : alpha * x;
    }
    return make_node<T>(std::move(out), {input}, [alpha](Var<T>& node) {
        auto& in = *node.parents[0];
        const std::int64_t m = node.grad.numel();
        std::vector<T> tmp(static_cast<std::size_t>(m));
        for (std::int64_t i = 0; i < m; ++i)
            tmp[i] = node.grad.data[i] * (in.value.data[i] > T(0) ? T(1) : alpha);
        in.accumulate(tmp.data(), m);
    });
}

template <typename T>
VarPtr<T> sigmoid(const VarPtr<T>& input) {
    Tensor<T> out(input->value.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i)
        out.data[i] = T(1) / (T(1) + std::exp(-input->value.data[i]));
    return make_node<T>(std::move(out), {input}, [](Var<T>& node) {
        const std::int64_t m = node.grad.numel();
        std::vector<T> tmp(static_cast<std::size_t>(m));
        for (std::int64_t i = 0; i < m; ++i) {
            const T y = node.value.data[i];
            tmp[i] = node.grad.data[i] * y * (T(1) - y);
        }
        node.parents[0]->accumulate(tmp.data(), m);
    });
}

template <typename T>
struct BatchNormState {
    Tensor<T> running_mean;  // [C], init 0
    Tensor<T> running_var;   // [C], init 1

    BatchNormState() = default;
    explicit BatchNormState(std::int64_t channels)
        : running_mean({channels}, T(0)), running_var({channels}, T(1)) {}
};

/// Per-channel batch normalization over (N,D,H,W). Train mode normalizes by
/// batch statistics and updates the running stats (unbiased variance, as is
/// conventional); eval mode uses the running stats and leaves them untouched.
template <typename T>
VarPtr<T> batch_norm3d(const VarPtr<T>& input, const VarPtr<T>& gamma,
                       const VarPtr<T>& beta, BatchNormState<T>& state,
                       bool training, T momentum = T(0.1), T eps = T(1e-5)) {
    const auto& s = input->value.shape;
    if (s.size() != 5) throw std::invalid_argument("batch_norm3d: input must be 5D");
    const std::int64_t c = s[1];
    if (gamma->value.shape != std::vector<std::int64_t>{c} ||
        beta->value.shape != std::vector<std::int64_t>{c} ||
        state.running_mean.shape != std::vector<std::int64_t>{c})
        throw std::invalid_argument("batch_norm3d: gamma/beta/state must be [C]");
    const std::int64_t n_batch = s[0];
    const std::int64_t vox = s[2] * s[3] * s[4];
    const std::int64_t m = n_batch * vox;  // samples per channel

    auto for_channel = [n_batch, c, vox](std::int64_t ch, auto&& f) {
        for (std::int64_t n = 0; n < n_batch; ++n) {
            const std::int64_t base = (n * c + ch) * vox;
            for (std::int64_t i = 0; i < vox; ++i) f(base + i);
        }
    };

    Tensor<T> out(s);
    if (training) {
        if (m < 2)
            throw std::invalid_argument(
                "batch_norm3d: train mode needs at least 2 samples per channel");
        auto mean = std::make_shared<std::vector<T>>(static_cast<std::size_t>(c));
        auto invstd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(c));
        for (std::int64_t ch = 0; ch < c; ++ch) {
            T mu(0);
            for_channel(ch, [&](std::int64_t i) { mu += input->value.data[i]; });
            mu /= static_cast<T>(m);
            T var(0);
            for_channel(ch, [&](std::int64_t i) {
                const T d = input->value.data[i] - mu;
                var += d * d;
            });
            var /= static_cast<T>(m);
            (*mean)[ch] = mu;
            (*invstd)[ch] = T(1) / std::sqrt(var + eps);
            const T g = gamma->value.data[ch], b = beta->value.data[ch];
            for_channel(ch, [&](std::int64_t i) {
                out.data[i] = g * (input->value.data[i] - mu) * (*invstd)[ch] + b;
            });
            state.running_mean.data[ch] =
                (T(1) - momentum) * state.running_mean.data[ch] + momentum * mu;
            const T unbiased = var * static_cast<T>(m) / static_cast<T>(m - 1);
            state.running_var.data[ch] =
                (T(1) - momentum) * state.running_var.data[ch] + momentum * unbiased;
        }
        return make_node<T>(std::move(out), {input, gamma, beta},
                            [mean, invstd, m, c, n_batch, vox, for_channel](Var<T>& node) {
            auto& in = *node.parents[0];
            auto& g = *node.parents[1];
            auto& b = *node.parents[2];
            in.ensure_grad();
            g.ensure_grad();
            b.ensure_grad();
            for (std::int64_t ch = 0; ch < c; ++ch) {
                const T mu = (*mean)[ch], is = (*invstd)[ch];
                const T gm = g.value.data[ch];
                T sum_dy(0), sum_dy_xhat(0);
                for_channel(ch, [&](std::int64_t i) {
                    const T xhat = (in.value.data[i] - mu) * is;
                    sum_dy += node.grad.data[i];
                    sum_dy_xhat += node.grad.data[i] * xhat;
                });
                b.grad.data[ch] += sum_dy;
                g.grad.data[ch] += sum_dy_xhat;
                const T inv_m = T(1) / static_cast<T>(m);
                for_channel(ch, [&](std::int64_t i) {
                    const T xhat = (in.value.data[i] - mu) * is;
                    in.grad.data[i] += gm * is * inv_m *
                                       (static_cast<T>(m) * node.grad.data[i] - sum_dy -
                                        xhat * sum_dy_xhat);
                });
            }
        });
    }

    // eval: normalize by running stats (mean 0 / var 1 before any update)
    auto rm = std::make_shared<std::vector<T>>(state.running_mean.data);
    auto ris = std::make_shared<std::vector<T>>(static_cast<std::size_t>(c));
    for (std::int64_t ch = 0; ch < c; ++ch) {
        (*ris)[ch] = T(1) / std::sqrt(state.running_var.data[ch] + eps);
        const T g = gamma->value.data[ch], b = beta->value.data[ch];
        for_channel(ch, [&](std::int64_t i) {
            out.data[i] = g * (input->value.data[i] - (*rm)[ch]) * (*ris)[ch] + b;
        });
    }
    return make_node<T>(std::move(out), {input, gamma, beta},
                        [rm, ris, c, for_channel](Var<T>& node) {
        auto& in = *node.parents[0];
        auto& g = *node.parents[1];
        auto& b = *node.parents[2];
        in.ensure_grad();
        g.ensure_grad();
        b.ensure_grad();
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const T is = (*ris)[ch], gm = g.value.data[ch];
            T sum_dy(0), sum_dy_xhat(0);
            for_channel(ch, [&](std::int64_t i) {
                sum_dy += node.grad.data[i];
                sum_dy_xhat += node.grad.data[i] * (in.value.data[i] - (*rm)[ch]) * is;
                in.grad.data[i] += node.grad.data[i] * gm * is;
            });
            b.grad.data[ch] += sum_dy;
            g.grad.data[ch] += sum_dy_xhat;
        }
    });
}

}  // namespace ddunet

#endif  // DDUNET_OPS_HPP
