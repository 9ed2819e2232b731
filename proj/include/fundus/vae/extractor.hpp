#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "fundus/io/safetensors.hpp"
#include "fundus/nn/layers.hpp"

namespace fundus {

/// Three feature maps psi(x)^1..3, each [N, C_l, H_l, W_l].
template <class T>
struct FeatureStack {
    std::array<Tensor<T>, 3> layers;
};

template <class T>
struct ExtractorTrace {
    std::vector<Tensor<T>> acts;            // pre-activation conv outputs
    std::vector<std::vector<long>> pools;   // maxpool argmax indices
    std::vector<long> input_shape;
};

/// Frozen feature backbone for the perceptual reconstruction loss.
/// forward is const and safe for concurrent callers; backward_input
/// propagates loss gradients to the input without touching any weights.
template <class T>
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::string kind() const = 0;
    virtual FeatureStack<T> forward(const Tensor<T>& x, ExtractorTrace<T>* trace = nullptr) const = 0;
    virtual Tensor<T> backward_input(const FeatureStack<T>& g, const ExtractorTrace<T>& trace) const = 0;
};

namespace detail {

template <class T>
Tensor<T> relu_fwd(const Tensor<T>& x) {
    return nn::leaky_relu(x, T(0));
}
template <class T>
Tensor<T> relu_bwd(const Tensor<T>& x, const Tensor<T>& gy) {
    return nn::leaky_relu_backward(x, gy, T(0));
}

template <class T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
    for (long i = 0; i < dst.numel(); ++i) dst[i] += src[i];
}

// grad w.r.t. conv input only; weights stay untouched
template <class T>
Tensor<T> conv_backward_data(const nn::Conv2d<T>& conv, const std::vector<long>& x_shape,
                             const Tensor<T>& gy) {
    const long n = x_shape[0], h = x_shape[2], w = x_shape[3];
    const int ho = static_cast<int>(gy.dim(2)), wo = static_cast<int>(gy.dim(3));
    const long span = static_cast<long>(ho) * wo;
    const long kk = static_cast<long>(conv.in_ch) * conv.ksize * conv.ksize;
    Tensor<T> gx(x_shape);
    AlignedVector<T> gcols(static_cast<size_t>(kk) * span);
    nn::CMapMat<T> wm(conv.w.value.ptr(), conv.out_ch, kk);
    for (long i = 0; i < n; ++i) {
        nn::CMapMat<T> gym(gy.ptr() + i * conv.out_ch * span, conv.out_ch, span);
        nn::MapMat<T> gcm(gcols.data(), kk, span);
        gcm.noalias() = wm.transpose() * gym;
        nn::col2im(gcols, conv.in_ch, static_cast<int>(h), static_cast<int>(w), conv.ksize,
                   conv.stride, conv.pad, ho, wo, gx.ptr() + i * conv.in_ch * h * w);
    }
    return gx;
}

}  // namespace detail

/// Pass-through features: each layer is the raw input. Used by gradient
/// checks; the perceptual loss then reduces to a (scaled) pixel loss.
template <class T>
class IdentityExtractor final : public FeatureExtractor<T> {
public:
    std::string kind() const override { return "identity"; }

    FeatureStack<T> forward(const Tensor<T>& x, ExtractorTrace<T>* trace = nullptr) const override {
        if (trace) trace->input_shape = x.shape;
        return FeatureStack<T>{{x, x, x}};
    }

    Tensor<T> backward_input(const FeatureStack<T>& g, const ExtractorTrace<T>&) const override {
        Tensor<T> gx = g.layers[0];
        detail::add_into(gx, g.layers[1]);
        detail::add_into(gx, g.layers[2]);
        return gx;
    }
};

/// Small fixed-weight conv backbone (3x3 convs with 2x2 pooling between
/// stages). Weights are seeded once and frozen; intended for desk-scale runs
/// where no pretrained weight file is available.
template <class T>
class TinyConvExtractor final : public FeatureExtractor<T> {
public:
    explicit TinyConvExtractor(std::uint64_t seed = 0x7e57u) {
        Rng rng(Rng::derive(seed, 0xfea7));
        conv1_.init("tiny.conv1", 3, 8, 3, 1, 1, rng);
        conv2_.init("tiny.conv2", 8, 16, 3, 1, 1, rng);
        conv3_.init("tiny.conv3", 16, 32, 3, 1, 1, rng);
    }

    std::string kind() const override { return "tiny"; }

    FeatureStack<T> forward(const Tensor<T>& x, ExtractorTrace<T>* trace = nullptr) const override {
        FeatureStack<T> out;
        const Tensor<T> z1 = conv1_.forward(x);
        out.layers[0] = detail::relu_fwd(z1);
        std::vector<long> am1, am2;
        const Tensor<T> p1 = nn::maxpool2(out.layers[0], trace ? &am1 : nullptr);
        const Tensor<T> z2 = conv2_.forward(p1);
        out.layers[1] = detail::relu_fwd(z2);
        const Tensor<T> p2 = nn::maxpool2(out.layers[1], trace ? &am2 : nullptr);
        const Tensor<T> z3 = conv3_.forward(p2);
        out.layers[2] = detail::relu_fwd(z3);
        if (trace) {
            trace->input_shape = x.shape;
            trace->acts = {z1, z2, z3, p1, p2};
            trace->pools = {std::move(am1), std::move(am2)};
        }
        return out;
    }

    Tensor<T> backward_input(const FeatureStack<T>& g, const ExtractorTrace<T>& tr) const override {
        const Tensor<T>&z1 = tr.acts[0], &z2 = tr.acts[1], &z3 = tr.acts[2];
        const Tensor<T>&p1 = tr.acts[3], &p2 = tr.acts[4];
        Tensor<T> dz3 = detail::relu_bwd(z3, g.layers[2]);
        Tensor<T> dp2 = detail::conv_backward_data(conv3_, p2.shape, dz3);
        Tensor<T> dpsi2 = nn::maxpool2_backward(tr.pools[1], dp2, g.layers[1].shape);
        detail::add_into(dpsi2, g.layers[1]);
        Tensor<T> dz2 = detail::relu_bwd(z2, dpsi2);
        Tensor<T> dp1 = detail::conv_backward_data(conv2_, p1.shape, dz2);
        Tensor<T> dpsi1 = nn::maxpool2_backward(tr.pools[0], dp1, g.layers[0].shape);
        detail::add_into(dpsi1, g.layers[0]);
        Tensor<T> dz1 = detail::relu_bwd(z1, dpsi1);
        return detail::conv_backward_data(conv1_, tr.input_shape, dz1);
    }

private:
    nn::Conv2d<T> conv1_, conv2_, conv3_;
};

/// First three rectified conv layers of the 16-layer VGG backbone
/// (conv1_1, conv1_2, conv2_1 with the pool between stages), weights loaded
/// from a safetensors file. Inputs get the backbone's canonical channel
/// normalization before extraction.
template <class T>
class Vgg16PrefixExtractor final : public FeatureExtractor<T> {
public:
    static constexpr std::array<double, 3> kMean = {0.485, 0.456, 0.406};
    static constexpr std::array<double, 3> kStd = {0.229, 0.224, 0.225};

    explicit Vgg16PrefixExtractor(const std::string& weights_path) {
        if (weights_path.empty() || !std::filesystem::exists(weights_path))
            throw std::runtime_error(
                "vgg16 extractor: weights file not found: '" + weights_path +
                "' (set the extractor_weights config key or FUNDUS_EXTRACTOR_WEIGHTS)");
        auto tensors = read_safetensors(weights_path);
        load_conv(conv1_1_, tensors, "conv1_1", 3, 64);
        load_conv(conv1_2_, tensors, "conv1_2", 64, 64);
        load_conv(conv2_1_, tensors, "conv2_1", 64, 128);
    }

    std::string kind() const override { return "vgg16"; }

    FeatureStack<T> forward(const Tensor<T>& x, ExtractorTrace<T>* trace = nullptr) const override {
        Tensor<T> xn(x.shape);
        normalize(x, xn);
        FeatureStack<T> out;
        const Tensor<T> z1 = conv1_1_.forward(xn);
        out.layers[0] = detail::relu_fwd(z1);
        const Tensor<T> z2 = conv1_2_.forward(out.layers[0]);
        out.layers[1] = detail::relu_fwd(z2);
        std::vector<long> am;
        const Tensor<T> p = nn::maxpool2(out.layers[1], trace ? &am : nullptr);
        const Tensor<T> z3 = conv2_1_.forward(p);
        out.layers[2] = detail::relu_fwd(z3);
        if (trace) {
            trace->input_shape = x.shape;
            trace->acts = {z1, z2, z3, p};
            trace->pools = {std::move(am)};
        }
        return out;
    }

    Tensor<T> backward_input(const FeatureStack<T>& g, const ExtractorTrace<T>& tr) const override {
        const Tensor<T>&z1 = tr.acts[0], &z2 = tr.acts[1], &z3 = tr.acts[2], &p = tr.acts[3];
        Tensor<T> dz3 = detail::relu_bwd(z3, g.layers[2]);
        Tensor<T> dp = detail::conv_backward_data(conv2_1_, p.shape, dz3);
        Tensor<T> dpsi2 = nn::maxpool2_backward(tr.pools[0], dp, g.layers[1].shape);
        detail::add_into(dpsi2, g.layers[1]);
        Tensor<T> dz2 = detail::relu_bwd(z2, dpsi2);
        Tensor<T> dpsi1 = detail::conv_backward_data(conv1_2_, g.layers[0].shape, dz2);
        detail::add_into(dpsi1, g.layers[0]);
        Tensor<T> dz1 = detail::relu_bwd(z1, dpsi1);
        Tensor<T> dxn = detail::conv_backward_data(conv1_1_, tr.input_shape, dz1);
        const long chw = dxn.dim(2) * dxn.dim(3);
        for (long n = 0; n < dxn.dim(0); ++n)
            for (int c = 0; c < 3; ++c) {
                T* plane = dxn.ptr() + (n * 3 + c) * chw;
                for (long i = 0; i < chw; ++i) plane[i] = static_cast<T>(plane[i] / kStd[c]);
            }
        return dxn;
    }

private:
    static void normalize(const Tensor<T>& x, Tensor<T>& xn) {
        const long chw = x.dim(2) * x.dim(3);
        for (long n = 0; n < x.dim(0); ++n)
            for (int c = 0; c < 3; ++c) {
                const T* src = x.ptr() + (n * 3 + c) * chw;
                T* dst = xn.ptr() + (n * 3 + c) * chw;
                for (long i = 0; i < chw; ++i)
                    dst[i] = static_cast<T>((src[i] - kMean[c]) / kStd[c]);
            }
    }

    static void load_conv(nn::Conv2d<T>& conv, std::map<std::string, Tensor<float>>& tensors,
                          const std::string& name, int cin, int cout) {
        Rng dummy(0);
        conv.init(name, cin, cout, 3, 1, 1, dummy);
        auto wit = tensors.find(name + ".weight");
        auto bit = tensors.find(name + ".bias");
        if (wit == tensors.end() || bit == tensors.end())
            throw std::runtime_error("vgg16 extractor: missing tensor " + name + ".weight/.bias");
        check_shape(wit->second, {cout, cin, 3, 3}, name.c_str());
        check_shape(bit->second, {cout}, name.c_str());
        for (long i = 0; i < conv.w.value.numel(); ++i)
            conv.w.value[i] = static_cast<T>(wit->second[i]);
        for (long i = 0; i < conv.b.value.numel(); ++i)
            conv.b.value[i] = static_cast<T>(bit->second[i]);
    }

    nn::Conv2d<T> conv1_1_, conv1_2_, conv2_1_;
};

template <class T>
std::unique_ptr<FeatureExtractor<T>> make_extractor(const std::string& kind,
                                                    const std::string& weights_path = "",
                                                    std::uint64_t seed = 0x7e57u) {
    if (kind == "identity") return std::make_unique<IdentityExtractor<T>>();
    if (kind == "tiny") return std::make_unique<TinyConvExtractor<T>>(seed);
    if (kind == "vgg16") return std::make_unique<Vgg16PrefixExtractor<T>>(weights_path);
    throw std::invalid_argument("unknown extractor kind: " + kind);
}

}  // namespace fundus
