#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fundus/core/tensor.hpp"

namespace fundus {

/// 3-channel image, planar CHW float storage, values in [0,1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> data;  // size 3*height*width

    Image() = default;
    Image(int h, int w, float fill = 0.f)
        : height(h), width(w), data(static_cast<size_t>(3) * h * w, fill) {
        if (h < 1 || w < 1) throw std::invalid_argument("image: dimensions must be >= 1");
    }

    float& at(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }

    size_t pixels() const { return static_cast<size_t>(height) * width; }

    bool same_shape(const Image& o) const { return height == o.height && width == o.width; }

    void validate() const {
        if (height < 1 || width < 1 || data.size() != 3 * pixels())
            throw std::invalid_argument("image: inconsistent storage");
        for (float v : data)
            if (!(v >= 0.f && v <= 1.f))  // catches NaN too
                throw std::invalid_argument("image: value outside [0,1]");
    }
};

/// Single-channel boolean mask matching a reference image's spatial shape.
struct BinaryMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> mask;  // 0 or 1

    BinaryMask() = default;
    BinaryMask(int h, int w) : height(h), width(w), mask(static_cast<size_t>(h) * w, 0) {}

    std::uint8_t& at(int y, int x) { return mask[static_cast<size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return mask[static_cast<size_t>(y) * width + x]; }

    size_t count() const {
        size_t n = 0;
        for (auto v : mask) n += v != 0;
        return n;
    }
};

/// Structural-similarity score, dimensionless, in [-1, 1].
struct SimilarityScore {
    double value = 0.0;
};

/// Bilinear resize with pixel-center alignment. Output values stay inside
/// the convex hull of the inputs, so the [0,1] range is preserved.
inline Image resize(const Image& img, int target_h, int target_w) {
    if (target_h < 1 || target_w < 1)
        throw std::invalid_argument("resize: target dimensions must be >= 1");
    if (target_h == img.height && target_w == img.width) return img;

    Image out(target_h, target_w);
    const double sy = static_cast<double>(img.height) / target_h;
    const double sx = static_cast<double>(img.width) / target_w;
    for (int y = 0; y < target_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < target_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = (1.0 - wx) * img.at(c, y0, x0) + wx * img.at(c, y0, x1);
                const double bot = (1.0 - wx) * img.at(c, y1, x0) + wx * img.at(c, y1, x1);
                out.at(c, y, x) = static_cast<float>((1.0 - wy) * top + wy * bot);
            }
        }
    }
    return out;
}

/// Reverses column order per channel. Deterministic; the p=0.5 randomness
/// lives in dataset augmentation.
inline Image horizontal_flip(const Image& img) {
    Image out(img.height, img.width);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
    return out;
}

/// Image batch <-> tensor bridges (tensor layout [N,3,H,W]).
template <class T = float>
Tensor<T> images_to_tensor(const std::vector<Image>& batch) {
    if (batch.empty()) throw std::invalid_argument("images_to_tensor: empty batch");
    const int h = batch[0].height, w = batch[0].width;
    Tensor<T> out({static_cast<long>(batch.size()), 3, h, w});
    for (size_t n = 0; n < batch.size(); ++n) {
        if (!batch[n].same_shape(batch[0]))
            throw std::invalid_argument("images_to_tensor: mixed shapes in batch");
        for (size_t i = 0; i < batch[n].data.size(); ++i)
            out.data[n * batch[n].data.size() + i] = static_cast<T>(batch[n].data[i]);
    }
    return out;
}

template <class T>
Image tensor_to_image(const Tensor<T>& t, long n) {
    if (t.rank() != 4 || t.dim(1) != 3) throw std::invalid_argument("tensor_to_image: want [N,3,H,W]");
    Image img(static_cast<int>(t.dim(2)), static_cast<int>(t.dim(3)));
    const size_t per = img.data.size();
    for (size_t i = 0; i < per; ++i) {
        double v = static_cast<double>(t.data[static_cast<size_t>(n) * per + i]);
        img.data[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    return img;
}

}  // namespace fundus
