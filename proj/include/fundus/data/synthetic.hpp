#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "fundus/core/image.hpp"
#include "fundus/core/rng.hpp"
#include "fundus/data/dataset.hpp"

namespace fundus {

/// Parameters for one procedural optic-disc rendering. The label is the
/// threshold predicate on the cup-to-disc ratio.
struct SyntheticParams {
    double disc_radius = 0.28;     // fraction of image width
    double cup_to_disc = 0.4;      // in [0,1]
    int vessel_count = 6;
    double noise_level = 0.02;     // sigma of additive pixel noise
    double label_threshold = 0.55;
    int image_size = 128;

    void validate() const {
        if (!(disc_radius > 0.0 && disc_radius <= 0.5))
            throw std::invalid_argument("synthetic: disc_radius must be in (0, 0.5]");
        if (!(cup_to_disc >= 0.0 && cup_to_disc <= 1.0))
            throw std::invalid_argument("synthetic: cup_to_disc must be in [0,1]");
        if (vessel_count < 0) throw std::invalid_argument("synthetic: vessel_count must be >= 0");
        if (!(noise_level >= 0.0 && noise_level < 1.0))
            throw std::invalid_argument("synthetic: noise_level must be in [0,1)");
        if (!(label_threshold > 0.0 && label_threshold < 1.0))
            throw std::invalid_argument("synthetic: label_threshold must be in (0,1)");
        if (image_size < 8) throw std::invalid_argument("synthetic: image_size must be >= 8");
    }
};

namespace detail {

inline double smoothstep(double edge0, double edge1, double x) {
    const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

inline void blend(Image& img, int y, int x, double alpha, const double rgb[3]) {
    if (alpha <= 0.0) return;
    for (int c = 0; c < 3; ++c) {
        const double cur = img.at(c, y, x);
        img.at(c, y, x) = static_cast<float>(cur + alpha * (rgb[c] - cur));
    }
}

// stamps a soft-edged disk, used to draw vessel segments
inline void stamp(Image& img, double cy, double cx, double radius, const double rgb[3]) {
    const int lo_y = std::max(0, static_cast<int>(std::floor(cy - radius - 1)));
    const int hi_y = std::min(img.height - 1, static_cast<int>(std::ceil(cy + radius + 1)));
    const int lo_x = std::max(0, static_cast<int>(std::floor(cx - radius - 1)));
    const int hi_x = std::min(img.width - 1, static_cast<int>(std::ceil(cx + radius + 1)));
    for (int y = lo_y; y <= hi_y; ++y)
        for (int x = lo_x; x <= hi_x; ++x) {
            const double d = std::hypot(y - cy, x - cx);
            blend(img, y, x, smoothstep(radius + 0.8, radius - 0.8, d), rgb);
        }
}

}  // namespace detail

/// Renders one labeled optic-disc image: textured reddish background, bright
/// disc, brighter inner cup of radius cup_to_disc * disc_radius, dark
/// curvilinear vessels, additive noise. Deterministic per (params, seed).
inline LabeledImage generate_fundus(const SyntheticParams& params, std::uint64_t seed) {
    params.validate();
    Rng rng(Rng::derive(seed, 0x0d15c));
    const int s = params.image_size;
    Image img(s, s);

    // background: warm base with a low-frequency sweep and corner falloff
    const double base[3] = {0.47, 0.19, 0.09};
    const double fy = rng.uniform(0.5, 1.5) / s, fx = rng.uniform(0.5, 1.5) / s;
    const double phase = rng.uniform(0.0, 6.28318530717958647692);
    const double half = 0.5 * (s - 1);
    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
            const double wave = 0.12 * std::sin(6.28318530717958647692 * (fy * y + fx * x) + phase);
            const double r2 = ((y - half) * (y - half) + (x - half) * (x - half)) / (2 * half * half);
            const double gain = (1.0 + wave) * (1.0 - 0.30 * r2);
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = static_cast<float>(std::clamp(base[c] * gain, 0.0, 1.0));
        }

    // disc with a slightly jittered center, cup concentric with its own jitter
    const double disc_r = params.disc_radius * s;
    const double dy = half + rng.uniform(-0.04, 0.04) * s;
    const double dx = half + rng.uniform(-0.04, 0.04) * s;
    const double disc_rgb[3] = {0.94, 0.78, 0.52};
    const double cup_rgb[3] = {0.99, 0.92, 0.70};
    const double cup_r = params.cup_to_disc * disc_r;
    const double cy = dy + rng.uniform(-0.05, 0.05) * disc_r;
    const double cx = dx + rng.uniform(-0.05, 0.05) * disc_r;
    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
            const double d = std::hypot(y - dy, x - dx);
            detail::blend(img, y, x, detail::smoothstep(disc_r + 1.5, disc_r - 1.5, d), disc_rgb);
            const double dc = std::hypot(y - cy, x - cx);
            detail::blend(img, y, x, detail::smoothstep(cup_r + 1.2, cup_r - 1.2, dc), cup_rgb);
        }

    // vessels: random walks radiating from the disc center, tapering width
    const double vessel_rgb[3] = {0.33, 0.09, 0.05};
    for (int v = 0; v < params.vessel_count; ++v) {
        double theta = 6.28318530717958647692 * (v + rng.uniform(0.0, 0.7)) /
                       std::max(1, params.vessel_count);
        double py = dy + 0.2 * disc_r * std::sin(theta);
        double px = dx + 0.2 * disc_r * std::cos(theta);
        const double w0 = rng.uniform(0.016, 0.024) * s * 0.7;
        const int steps = static_cast<int>(0.7 * s / 2);
        for (int t = 0; t < steps; ++t) {
            const double frac = static_cast<double>(t) / steps;
            const double width = w0 * (1.0 - 0.6 * frac);
            detail::stamp(img, py, px, width, vessel_rgb);
            theta += rng.normal() * 0.22;
            py += 2.0 * std::sin(theta);
            px += 2.0 * std::cos(theta);
            if (py < -2 || py > s + 1 || px < -2 || px > s + 1) break;
        }
    }

    // pixel noise
    if (params.noise_level > 0.0)
        for (auto& p : img.data)
            p = static_cast<float>(std::clamp(p + params.noise_level * rng.normal(), 0.0, 1.0));

    LabeledImage out;
    out.image = std::move(img);
    out.label = params.cup_to_disc >= params.label_threshold ? 1 : 0;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "synth-%016llx", static_cast<unsigned long long>(seed));
    out.id = buf;
    return out;
}

/// How per-image cup-to-disc ratios are drawn for the two classes.
struct SyntheticDatasetOptions {
    SyntheticParams base;        // cup_to_disc is drawn per image
    bool overlap = false;        // true: classes touch at the threshold

    std::pair<double, double> normal_range() const {
        if (overlap) return {base.label_threshold - 0.15, base.label_threshold};
        return {0.10, 0.50};
    }
    std::pair<double, double> glaucoma_range() const {
        if (overlap) return {base.label_threshold, base.label_threshold + 0.15};
        return {0.60, 0.95};
    }
};

/// Exact class counts, ids img_000000..; all randomness derived from seed.
inline std::vector<LabeledImage> generate_synthetic_items(long n_normal, long n_glaucoma,
                                                          std::uint64_t seed,
                                                          const SyntheticDatasetOptions& opts = {}) {
    if (n_normal < 1 || n_glaucoma < 1)
        throw std::invalid_argument("synthetic dataset: class counts must be >= 1");
    opts.base.validate();

    Rng draw(Rng::derive(seed, 0xcd2d));
    std::vector<LabeledImage> items;
    items.reserve(static_cast<size_t>(n_normal + n_glaucoma));
    char idbuf[32];
    for (long i = 0; i < n_normal + n_glaucoma; ++i) {
        const bool glaucoma = i >= n_normal;
        SyntheticParams p = opts.base;
        const auto [lo, hi] = glaucoma ? opts.glaucoma_range() : opts.normal_range();
        p.cup_to_disc = glaucoma ? std::clamp(draw.uniform(lo, hi), p.label_threshold, 1.0)
                                 : std::clamp(draw.uniform(lo, hi), 0.0,
                                              std::nextafter(p.label_threshold, 0.0));
        p.disc_radius = opts.base.disc_radius * draw.uniform(0.88, 1.12);
        LabeledImage li = generate_fundus(p, Rng::derive(seed, 0x100000 + i));
        std::snprintf(idbuf, sizeof(idbuf), "img_%06ld", i);
        li.id = idbuf;
        if (li.label != (glaucoma ? 1 : 0))
            throw std::logic_error("synthetic dataset: label predicate violated");
        items.push_back(std::move(li));
    }
    return items;
}

/// Generates exact class counts, then splits stratified by label.
inline DatasetSplit build_synthetic_dataset(long n_normal, long n_glaucoma, double split_ratio,
                                            std::uint64_t seed,
                                            const SyntheticDatasetOptions& opts = {}) {
    if (!(split_ratio > 0.0 && split_ratio < 1.0))
        throw std::invalid_argument("synthetic dataset: split_ratio must be in (0,1)");
    return split_stratified(generate_synthetic_items(n_normal, n_glaucoma, seed, opts),
                            split_ratio, seed);
}

}  // namespace fundus
