#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fundus/core/rng.hpp"
#include "fundus/core/tensor.hpp"
#include "fundus/nn/gemm.hpp"

namespace fundus::nn {

template <class T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    void init_shape(std::string n, std::vector<long> shape) {
        name = std::move(n);
        value = Tensor<T>(shape);
        grad = Tensor<T>(std::move(shape));
    }
    void zero_grad() { grad.zero(); }
};

template <class T>
void fan_in_uniform(Tensor<T>& t, long fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
}

// ---------------------------------------------------------------------------
// Conv2d: weight [Cout, Cin, K, K], input [N, Cin, H, W]
// ---------------------------------------------------------------------------
template <class T>
struct Conv2d {
    int in_ch = 0, out_ch = 0, ksize = 3, stride = 1, pad = 1;
    Param<T> w, b;

    void init(const std::string& prefix, int cin, int cout, int k, int s, int p, Rng& rng) {
        in_ch = cin;
        out_ch = cout;
        ksize = k;
        stride = s;
        pad = p;
        w.init_shape(prefix + ".weight", {cout, cin, k, k});
        b.init_shape(prefix + ".bias", {cout});
        fan_in_uniform(w.value, static_cast<long>(cin) * k * k, rng);
        fan_in_uniform(b.value, static_cast<long>(cin) * k * k, rng);
    }

    int out_dim(int in) const { return (in + 2 * pad - ksize) / stride + 1; }

    Tensor<T> forward(const Tensor<T>& x) const {
        const long n = x.dim(0), h = x.dim(2), ww = x.dim(3);
        const int ho = out_dim(static_cast<int>(h)), wo = out_dim(static_cast<int>(ww));
        Tensor<T> y({n, out_ch, ho, wo});
        const long span = static_cast<long>(ho) * wo;
        const long kk = static_cast<long>(in_ch) * ksize * ksize;
        AlignedVector<T> cols;
        CMapMat<T> wm(w.value.ptr(), out_ch, kk);
        for (long i = 0; i < n; ++i) {
            im2col(x.ptr() + i * in_ch * h * ww, in_ch, static_cast<int>(h), static_cast<int>(ww),
                   ksize, stride, pad, ho, wo, cols);
            CMapMat<T> cm(cols.data(), kk, span);
            MapMat<T> ym(y.ptr() + i * out_ch * span, out_ch, span);
            ym.noalias() = wm * cm;
            for (int c = 0; c < out_ch; ++c) ym.row(c).array() += b.value[c];
        }
        return y;
    }

    /// Accumulates parameter gradients, returns grad w.r.t. input.
    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& gy) {
        const long n = x.dim(0), h = x.dim(2), ww = x.dim(3);
        const int ho = static_cast<int>(gy.dim(2)), wo = static_cast<int>(gy.dim(3));
        const long span = static_cast<long>(ho) * wo;
        const long kk = static_cast<long>(in_ch) * ksize * ksize;
        Tensor<T> gx(x.shape);
        AlignedVector<T> cols, gcols(static_cast<size_t>(kk) * span);
        CMapMat<T> wm(w.value.ptr(), out_ch, kk);
        MapMat<T> gwm(w.grad.ptr(), out_ch, kk);
        for (long i = 0; i < n; ++i) {
            CMapMat<T> gym(gy.ptr() + i * out_ch * span, out_ch, span);
            // bias grads
            for (int c = 0; c < out_ch; ++c) b.grad[c] += gym.row(c).sum();
            // weight grads
            im2col(x.ptr() + i * in_ch * h * ww, in_ch, static_cast<int>(h), static_cast<int>(ww),
                   ksize, stride, pad, ho, wo, cols);
            CMapMat<T> cm(cols.data(), kk, span);
            gwm.noalias() += gym * cm.transpose();
            // input grads
            MapMat<T> gcm(gcols.data(), kk, span);
            gcm.noalias() = wm.transpose() * gym;
            col2im(gcols, in_ch, static_cast<int>(h), static_cast<int>(ww), ksize, stride, pad, ho,
                   wo, gx.ptr() + i * in_ch * h * ww);
        }
        return gx;
    }
};

// ---------------------------------------------------------------------------
// ConvTranspose2d: weight [Cin, Cout, K, K]; output (H-1)*s - 2p + K
// ---------------------------------------------------------------------------
template <class T>
struct ConvTranspose2d {
    int in_ch = 0, out_ch = 0, ksize = 4, stride = 2, pad = 1;
    Param<T> w, b;

    void init(const std::string& prefix, int cin, int cout, int k, int s, int p, Rng& rng) {
        in_ch = cin;
        out_ch = cout;
        ksize = k;
        stride = s;
        pad = p;
        w.init_shape(prefix + ".weight", {cin, cout, k, k});
        b.init_shape(prefix + ".bias", {cout});
        fan_in_uniform(w.value, static_cast<long>(cin) * k * k, rng);
        fan_in_uniform(b.value, static_cast<long>(cin) * k * k, rng);
    }

    int out_dim(int in) const { return (in - 1) * stride - 2 * pad + ksize; }

    Tensor<T> forward(const Tensor<T>& x) const {
        const long n = x.dim(0), h = x.dim(2), ww = x.dim(3);
        const int ho = out_dim(static_cast<int>(h)), wo = out_dim(static_cast<int>(ww));
        const long in_span = h * ww;
        const long kk = static_cast<long>(out_ch) * ksize * ksize;
        Tensor<T> y({n, out_ch, ho, wo});
        AlignedVector<T> cols(static_cast<size_t>(kk) * in_span);
        CMapMat<T> wm(w.value.ptr(), in_ch, kk);
        for (long i = 0; i < n; ++i) {
            CMapMat<T> xm(x.ptr() + i * in_ch * in_span, in_ch, in_span);
            MapMat<T> cm(cols.data(), kk, in_span);
            cm.noalias() = wm.transpose() * xm;
            T* yi = y.ptr() + i * out_ch * ho * wo;
            col2im(cols, out_ch, ho, wo, ksize, stride, pad, static_cast<int>(h),
                   static_cast<int>(ww), yi);
            for (int c = 0; c < out_ch; ++c) {
                T* plane = yi + static_cast<size_t>(c) * ho * wo;
                for (long p2 = 0; p2 < static_cast<long>(ho) * wo; ++p2) plane[p2] += b.value[c];
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& gy) {
        const long n = x.dim(0), h = x.dim(2), ww = x.dim(3);
        const int ho = static_cast<int>(gy.dim(2)), wo = static_cast<int>(gy.dim(3));
        const long in_span = h * ww;
        const long out_span = static_cast<long>(ho) * wo;
        const long kk = static_cast<long>(out_ch) * ksize * ksize;
        Tensor<T> gx(x.shape);
        AlignedVector<T> cols;
        CMapMat<T> wm(w.value.ptr(), in_ch, kk);
        MapMat<T> gwm(w.grad.ptr(), in_ch, kk);
        for (long i = 0; i < n; ++i) {
            const T* gyi = gy.ptr() + i * out_ch * out_span;
            for (int c = 0; c < out_ch; ++c) {
                const T* plane = gyi + static_cast<size_t>(c) * out_span;
                T acc = 0;
                for (long p2 = 0; p2 < out_span; ++p2) acc += plane[p2];
                b.grad[c] += acc;
            }
            // im2col over gy recovers the column view matching forward's col2im
            im2col(gyi, out_ch, ho, wo, ksize, stride, pad, static_cast<int>(h),
                   static_cast<int>(ww), cols);
            CMapMat<T> cm(cols.data(), kk, in_span);
            CMapMat<T> xm(x.ptr() + i * in_ch * in_span, in_ch, in_span);
            MapMat<T> gxm(gx.ptr() + i * in_ch * in_span, in_ch, in_span);
            gxm.noalias() = wm * cm;
            gwm.noalias() += xm * cm.transpose();
        }
        return gx;
    }
};

// ---------------------------------------------------------------------------
// Dense: weight [Out, In], input [N, In]
// ---------------------------------------------------------------------------
template <class T>
struct Dense {
    int in_dim = 0, out_dim = 0;
    Param<T> w, b;

    void init(const std::string& prefix, int in, int out, Rng& rng) {
        in_dim = in;
        out_dim = out;
        w.init_shape(prefix + ".weight", {out, in});
        b.init_shape(prefix + ".bias", {out});
        fan_in_uniform(w.value, in, rng);
        fan_in_uniform(b.value, in, rng);
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        const long n = x.dim(0);
        Tensor<T> y({n, out_dim});
        CMapMat<T> xm(x.ptr(), n, in_dim);
        CMapMat<T> wm(w.value.ptr(), out_dim, in_dim);
        MapMat<T> ym(y.ptr(), n, out_dim);
        ym.noalias() = xm * wm.transpose();
        for (long i = 0; i < n; ++i) ym.row(i) += CMapMat<T>(b.value.ptr(), 1, out_dim);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& gy) {
        const long n = x.dim(0);
        CMapMat<T> xm(x.ptr(), n, in_dim);
        CMapMat<T> wm(w.value.ptr(), out_dim, in_dim);
        CMapMat<T> gym(gy.ptr(), n, out_dim);
        MapMat<T> gwm(w.grad.ptr(), out_dim, in_dim);
        gwm.noalias() += gym.transpose() * xm;
        for (int c = 0; c < out_dim; ++c) b.grad[c] += gym.col(c).sum();
        Tensor<T> gx(x.shape);
        MapMat<T> gxm(gx.ptr(), n, in_dim);
        gxm.noalias() = gym * wm;
        return gx;
    }
};

// ---------------------------------------------------------------------------
// GroupNorm with per-channel affine. Batch-independent, so training and
// evaluation share one code path and results do not depend on batch size.
// ---------------------------------------------------------------------------
template <class T>
struct GroupNorm {
    int channels = 0, groups = 1;
    T eps = static_cast<T>(1e-5);
    Param<T> gamma, beta;

    void init(const std::string& prefix, int ch, int g) {
        channels = ch;
        groups = (g > 0 && ch % g == 0) ? g : 1;
        gamma.init_shape(prefix + ".gamma", {ch});
        beta.init_shape(prefix + ".beta", {ch});
        gamma.value.fill(T(1));
        beta.value.fill(T(0));
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        const long n = x.dim(0), hw = x.dim(2) * x.dim(3);
        const long cpg = channels / groups;
        const long m = cpg * hw;
        Tensor<T> y(x.shape);
        for (long i = 0; i < n; ++i) {
            for (int g = 0; g < groups; ++g) {
                const T* xs = x.ptr() + (i * channels + g * cpg) * hw;
                T* ys = y.ptr() + (i * channels + g * cpg) * hw;
                double sum = 0, sq = 0;
                for (long j = 0; j < m; ++j) {
                    sum += xs[j];
                    sq += static_cast<double>(xs[j]) * xs[j];
                }
                const double mu = sum / m;
                const double var = sq / m - mu * mu;
                const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
                for (long c = 0; c < cpg; ++c) {
                    const double ga = gamma.value[g * cpg + c], be = beta.value[g * cpg + c];
                    for (long j = 0; j < hw; ++j) {
                        const double xh = (xs[c * hw + j] - mu) * inv;
                        ys[c * hw + j] = static_cast<T>(ga * xh + be);
                    }
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& gy) {
        const long n = x.dim(0), hw = x.dim(2) * x.dim(3);
        const long cpg = channels / groups;
        const long m = cpg * hw;
        Tensor<T> gx(x.shape);
        for (long i = 0; i < n; ++i) {
            for (int g = 0; g < groups; ++g) {
                const long base = (i * channels + g * cpg) * hw;
                const T* xs = x.ptr() + base;
                const T* gs = gy.ptr() + base;
                T* os = gx.ptr() + base;
                double sum = 0, sq = 0;
                for (long j = 0; j < m; ++j) {
                    sum += xs[j];
                    sq += static_cast<double>(xs[j]) * xs[j];
                }
                const double mu = sum / m;
                const double var = sq / m - mu * mu;
                const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
                double gmean = 0, gdot = 0;
                for (long c = 0; c < cpg; ++c) {
                    const double ga = gamma.value[g * cpg + c];
                    for (long j = 0; j < hw; ++j) {
                        const double xh = (xs[c * hw + j] - mu) * inv;
                        const double gh = gs[c * hw + j] * ga;
                        gmean += gh;
                        gdot += gh * xh;
                        gamma.grad[g * cpg + c] += static_cast<T>(gs[c * hw + j] * xh);
                        beta.grad[g * cpg + c] += gs[c * hw + j];
                    }
                }
                gmean /= m;
                gdot /= m;
                for (long c = 0; c < cpg; ++c) {
                    const double ga = gamma.value[g * cpg + c];
                    for (long j = 0; j < hw; ++j) {
                        const double xh = (xs[c * hw + j] - mu) * inv;
                        const double gh = gs[c * hw + j] * ga;
                        os[c * hw + j] = static_cast<T>(inv * (gh - gmean - xh * gdot));
                    }
                }
            }
        }
        return gx;
    }
};

// ---------------------------------------------------------------------------
// Activations and pooling
// ---------------------------------------------------------------------------
template <class T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
    Tensor<T> y(x.shape);
    for (long i = 0; i < x.numel(); ++i) y[i] = x[i] >= 0 ? x[i] : slope * x[i];
    return y;
}

template <class T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, const Tensor<T>& gy, T slope) {
    Tensor<T> gx(x.shape);
    for (long i = 0; i < x.numel(); ++i) gx[i] = x[i] >= 0 ? gy[i] : slope * gy[i];
    return gx;
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> y(x.shape);
    for (long i = 0; i < x.numel(); ++i) y[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x[i]))));
    return y;
}

/// Takes the forward output y, not the input.
template <class T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& gy) {
    Tensor<T> gx(y.shape);
    for (long i = 0; i < y.numel(); ++i) gx[i] = gy[i] * y[i] * (T(1) - y[i]);
    return gx;
}

/// 2x2 max pooling, stride 2. argmax holds flat input offsets for backward.
template <class T>
Tensor<T> maxpool2(const Tensor<T>& x, std::vector<long>* argmax = nullptr) {
    const long n = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
    const long ho = h / 2, wo = w / 2;
    Tensor<T> y({n, ch, ho, wo});
    if (argmax) argmax->assign(static_cast<size_t>(y.numel()), 0);
    long oi = 0;
    for (long i = 0; i < n * ch; ++i) {
        const T* plane = x.ptr() + i * h * w;
        for (long oy = 0; oy < ho; ++oy) {
            for (long ox = 0; ox < wo; ++ox, ++oi) {
                long best = (oy * 2) * w + ox * 2;
                T bv = plane[best];
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const long idx = (oy * 2 + dy) * w + (ox * 2 + dx);
                        if (plane[idx] > bv) {
                            bv = plane[idx];
                            best = idx;
                        }
                    }
                y[oi] = bv;
                if (argmax) (*argmax)[oi] = i * h * w + best;
            }
        }
    }
    return y;
}

template <class T>
Tensor<T> maxpool2_backward(const std::vector<long>& argmax, const Tensor<T>& gy,
                            const std::vector<long>& input_shape) {
    Tensor<T> gx(input_shape);
    for (long i = 0; i < gy.numel(); ++i) gx[argmax[i]] += gy[i];
    return gx;
}

}  // namespace fundus::nn
