#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fundus/core/image.hpp"

namespace fundus {

/// 7x7 uniform window with the standard stabilizers, dynamic range 1.
struct SsimOptions {
    int window = 7;
    double k1 = 0.01;
    double k2 = 0.03;
    double range = 1.0;
};

namespace detail {

// Inclusive prefix sums with a zero border row/column, one channel.
inline std::vector<double> integral_plane(const Image& img, int c, bool square, const Image* other) {
    const int h = img.height, w = img.width;
    std::vector<double> s(static_cast<size_t>(h + 1) * (w + 1), 0.0);
    for (int y = 0; y < h; ++y) {
        double row = 0.0;
        for (int x = 0; x < w; ++x) {
            const double a = img.at(c, y, x);
            const double v = square ? (other ? a * other->at(c, y, x) : a * a) : a;
            row += v;
            s[static_cast<size_t>(y + 1) * (w + 1) + (x + 1)] =
                s[static_cast<size_t>(y) * (w + 1) + (x + 1)] + row;
        }
    }
    return s;
}

inline double window_sum(const std::vector<double>& s, int w1, int y, int x, int win) {
    const size_t stride = static_cast<size_t>(w1);
    return s[(y + win) * stride + (x + win)] - s[y * stride + (x + win)] -
           s[(y + win) * stride + x] + s[y * stride + x];
}

}  // namespace detail

/// Per-window SSIM values over all valid window positions, channel-averaged,
/// one value per window top-left position ((H-win+1) x (W-win+1)).
inline std::vector<double> ssim_window_map(const Image& a, const Image& b,
                                           const SsimOptions& opts = {}) {
    if (!a.same_shape(b)) throw std::invalid_argument("ssim: images must share the same shape");
    const int win = std::min({opts.window, a.height, a.width});
    const int mh = a.height - win + 1, mw = a.width - win + 1;
    const double nw = static_cast<double>(win) * win;
    const double c1 = (opts.k1 * opts.range) * (opts.k1 * opts.range);
    const double c2 = (opts.k2 * opts.range) * (opts.k2 * opts.range);

    std::vector<double> map(static_cast<size_t>(mh) * mw, 0.0);
    for (int c = 0; c < 3; ++c) {
        const auto sa = detail::integral_plane(a, c, false, nullptr);
        const auto sb = detail::integral_plane(b, c, false, nullptr);
        const auto saa = detail::integral_plane(a, c, true, nullptr);
        const auto sbb = detail::integral_plane(b, c, true, nullptr);
        const auto sab = detail::integral_plane(a, c, true, &b);
        const int w1 = a.width + 1;
        for (int y = 0; y < mh; ++y) {
            for (int x = 0; x < mw; ++x) {
                const double ma = detail::window_sum(sa, w1, y, x, win) / nw;
                const double mb = detail::window_sum(sb, w1, y, x, win) / nw;
                const double va = detail::window_sum(saa, w1, y, x, win) / nw - ma * ma;
                const double vb = detail::window_sum(sbb, w1, y, x, win) / nw - mb * mb;
                const double cab = detail::window_sum(sab, w1, y, x, win) / nw - ma * mb;
                const double num = (2.0 * ma * mb + c1) * (2.0 * cab + c2);
                const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
                map[static_cast<size_t>(y) * mw + x] += (num / den) / 3.0;
            }
        }
    }
    return map;
}

/// Mean structural similarity, symmetric, bounded above by 1;
/// exactly 1 for identical images.
inline SimilarityScore ssim(const Image& a, const Image& b, const SsimOptions& opts = {}) {
    const auto map = ssim_window_map(a, b, opts);
    double sum = 0.0;
    for (double v : map) sum += v;
    return SimilarityScore{sum / static_cast<double>(map.size())};
}

/// Per-pixel local SSIM: each pixel takes the value of the window centered on
/// it, with border pixels clamped to the nearest valid window.
inline std::vector<double> local_ssim_map(const Image& a, const Image& b,
                                          const SsimOptions& opts = {}) {
    const auto map = ssim_window_map(a, b, opts);
    const int win = std::min({opts.window, a.height, a.width});
    const int mh = a.height - win + 1, mw = a.width - win + 1;
    const int off = win / 2;
    std::vector<double> out(a.pixels());
    for (int y = 0; y < a.height; ++y) {
        const int wy = std::clamp(y - off, 0, mh - 1);
        for (int x = 0; x < a.width; ++x) {
            const int wx = std::clamp(x - off, 0, mw - 1);
            out[static_cast<size_t>(y) * a.width + x] = map[static_cast<size_t>(wy) * mw + wx];
        }
    }
    return out;
}

/// Marks pixels whose local dissimilarity (1 - local SSIM) exceeds the
/// threshold. Identical images give an empty mask; the marked area shrinks
/// monotonically as the threshold grows.
inline BinaryMask diff_mask(const Image& a, const Image& b, double threshold,
                            const SsimOptions& opts = {}) {
    if (!a.same_shape(b)) throw std::invalid_argument("diff_mask: images must share the same shape");
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("diff_mask: threshold must be in (0,1)");
    const auto local = local_ssim_map(a, b, opts);
    BinaryMask m(a.height, a.width);
    for (size_t i = 0; i < local.size(); ++i) m.mask[i] = (1.0 - local[i]) > threshold ? 1 : 0;
    return m;
}

}  // namespace fundus
