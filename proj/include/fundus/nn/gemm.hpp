#pragma once

#include <Eigen/Core>

#include <vector>

#include "fundus/core/tensor.hpp"

namespace fundus::nn {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

/// cols[(c*K+ky)*K+kx, oy*Wo+ox] = x[c, oy*stride-pad+ky, ox*stride-pad+kx]
/// for one image plane set x [C,H,W]; out-of-bounds taps read as zero.
template <class T>
void im2col(const T* x, int ch, int h, int w, int k, int stride, int pad, int ho, int wo,
            AlignedVector<T>& cols) {
    cols.assign(static_cast<size_t>(ch) * k * k * ho * wo, T(0));
    const long span = static_cast<long>(ho) * wo;
    for (int c = 0; c < ch; ++c) {
        const T* plane = x + static_cast<size_t>(c) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* row = cols.data() + (static_cast<size_t>(c) * k * k + ky * k + kx) * span;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    const T* src = plane + static_cast<size_t>(iy) * w;
                    T* dst = row + static_cast<size_t>(oy) * wo;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst[ox] = src[ix];
                    }
                }
            }
        }
    }
}

/// Scatter-add inverse of im2col: accumulates cols back into x [C,H,W].
template <class T>
void col2im(const AlignedVector<T>& cols, int ch, int h, int w, int k, int stride, int pad, int ho,
            int wo, T* x) {
    const long span = static_cast<long>(ho) * wo;
    for (int c = 0; c < ch; ++c) {
        T* plane = x + static_cast<size_t>(c) * h * w;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* row = cols.data() + (static_cast<size_t>(c) * k * k + ky * k + kx) * span;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    T* dst = plane + static_cast<size_t>(iy) * w;
                    const T* src = row + static_cast<size_t>(oy) * wo;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace fundus::nn
