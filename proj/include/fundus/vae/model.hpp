#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "fundus/core/rng.hpp"
#include "fundus/core/tensor.hpp"
#include "fundus/nn/layers.hpp"

namespace fundus {

struct VaeConfig {
    int latent_size = 128;
    std::vector<int> encoder_widths = {32, 64, 128, 256, 512};
    std::vector<int> decoder_widths = {};  // empty = mirror of encoder
    double beta = 1.0;
    int image_size = 128;
    double leaky_slope = 0.2;
    int norm_groups = 8;

    static bool valid_latent(int nl) {
        return nl >= 2 && nl <= 2048 && (nl & (nl - 1)) == 0;
    }

    std::vector<int> mirror_widths() const {
        if (!decoder_widths.empty()) return decoder_widths;
        return {encoder_widths.rbegin(), encoder_widths.rend()};
    }

    int final_spatial() const {
        int s = image_size;
        for (size_t i = 0; i < encoder_widths.size(); ++i) s /= 2;
        return s;
    }

    void validate() const {
        if (!valid_latent(latent_size))
            throw std::invalid_argument("vae config: latent size must be a power of two in [2, 2048], got " +
                                        std::to_string(latent_size));
        if (encoder_widths.empty()) throw std::invalid_argument("vae config: encoder widths empty");
        const auto dec = mirror_widths();
        if (dec.size() != encoder_widths.size())
            throw std::invalid_argument("vae config: decoder width count must match encoder");
        int s = image_size;
        for (size_t i = 0; i < encoder_widths.size(); ++i) {
            if (s % 2 != 0 || s < 2)
                throw std::invalid_argument("vae config: image size not divisible by 2^depth");
            s /= 2;
        }
        if (s < 1) throw std::invalid_argument("vae config: too many blocks for image size");
        if (beta < 0) throw std::invalid_argument("vae config: beta must be >= 0");
    }
};

/// z = mu + exp(logvar/2) * eps with externally supplied noise.
template <class T>
Tensor<T> reparameterize_with_noise(const Tensor<T>& mu, const Tensor<T>& logvar,
                                    const Tensor<T>& eps) {
    if (!mu.same_shape(logvar) || !mu.same_shape(eps))
        throw std::invalid_argument("reparameterize: shape mismatch");
    Tensor<T> z(mu.shape);
    for (long i = 0; i < mu.numel(); ++i)
        z[i] = mu[i] + static_cast<T>(std::exp(0.5 * static_cast<double>(logvar[i]))) * eps[i];
    return z;
}

template <class T>
Tensor<T> reparameterize(const Tensor<T>& mu, const Tensor<T>& logvar, Rng& rng) {
    Tensor<T> eps(mu.shape);
    for (auto& v : eps.data) v = static_cast<T>(rng.normal());
    return reparameterize_with_noise(mu, logvar, eps);
}

/// Convolutional VAE: stride-2 4x4 conv blocks (norm + leaky rectifier) down
/// to a small spatial grid, two dense heads for the Gaussian posterior, and a
/// mirrored transposed-conv decoder ending in a sigmoid.
template <class T = float>
class Vae {
public:
    struct Trace {
        std::vector<Tensor<T>> enc_conv_in, enc_norm_in, enc_act_in;
        Tensor<T> flat, mu, logvar, eps, z;
        Tensor<T> dec_fc_out;
        std::vector<Tensor<T>> dec_deconv_in, dec_norm_in, dec_act_in;
        Tensor<T> xhat;
    };

    Vae(VaeConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        Rng rng(Rng::derive(seed, 0x11));
        const auto& ew = cfg_.encoder_widths;
        const auto dw = cfg_.mirror_widths();
        const int k = static_cast<int>(ew.size());
        enc_convs_.resize(k);
        enc_norms_.resize(k);
        int cin = 3;
        for (int i = 0; i < k; ++i) {
            enc_convs_[i].init("encoder.conv" + std::to_string(i), cin, ew[i], 4, 2, 1, rng);
            enc_norms_[i].init("encoder.norm" + std::to_string(i), ew[i], cfg_.norm_groups);
            cin = ew[i];
        }
        const int s = cfg_.final_spatial();
        flat_dim_ = ew.back() * s * s;
        mu_head_.init("encoder.mu", flat_dim_, cfg_.latent_size, rng);
        logvar_head_.init("encoder.logvar", flat_dim_, cfg_.latent_size, rng);
        dec_fc_.init("decoder.fc", cfg_.latent_size, dw.front() * s * s, rng);
        dec_deconvs_.resize(k);
        dec_norms_.resize(k - 1);
        for (int i = 0; i < k; ++i) {
            const int cout = (i + 1 < k) ? dw[i + 1] : 3;
            dec_deconvs_[i].init("decoder.deconv" + std::to_string(i), dw[i], cout, 4, 2, 1, rng);
            if (i + 1 < k) dec_norms_[i].init("decoder.norm" + std::to_string(i), cout, cfg_.norm_groups);
        }
    }

    const VaeConfig& config() const { return cfg_; }
    int latent_size() const { return cfg_.latent_size; }

    // -- inference (const, no caches touched) --------------------------------

    void encode(const Tensor<T>& x, Tensor<T>* mu, Tensor<T>* logvar) const {
        check_input(x);
        Tensor<T> cur = x;
        for (size_t i = 0; i < enc_convs_.size(); ++i) {
            cur = enc_convs_[i].forward(cur);
            cur = enc_norms_[i].forward(cur);
            cur = nn::leaky_relu(cur, static_cast<T>(cfg_.leaky_slope));
        }
        cur = cur.reshaped({cur.dim(0), flat_dim_});
        if (mu) *mu = mu_head_.forward(cur);
        if (logvar) *logvar = logvar_head_.forward(cur);
    }

    Tensor<T> decode(const Tensor<T>& z) const {
        if (z.rank() != 2 || z.dim(1) != cfg_.latent_size)
            throw std::invalid_argument("decode: latent must be [N," +
                                        std::to_string(cfg_.latent_size) + "], got " + z.shape_str());
        const int s = cfg_.final_spatial();
        const auto dw = cfg_.mirror_widths();
        Tensor<T> cur = dec_fc_.forward(z);
        cur = nn::leaky_relu(cur, static_cast<T>(cfg_.leaky_slope));
        cur = cur.reshaped({z.dim(0), dw.front(), s, s});
        for (size_t i = 0; i < dec_deconvs_.size(); ++i) {
            cur = dec_deconvs_[i].forward(cur);
            if (i + 1 < dec_deconvs_.size()) {
                cur = dec_norms_[i].forward(cur);
                cur = nn::leaky_relu(cur, static_cast<T>(cfg_.leaky_slope));
            }
        }
        return nn::sigmoid(cur);
    }

    /// Posterior-mean reconstruction (eps = 0): deterministic.
    Tensor<T> reconstruct_mean(const Tensor<T>& x) const {
        Tensor<T> mu;
        encode(x, &mu, nullptr);
        return decode(mu);
    }

    // -- training ------------------------------------------------------------

    Tensor<T> forward_train(const Tensor<T>& x, const Tensor<T>& eps, Trace& tr) const {
        check_input(x);
        const int k = static_cast<int>(enc_convs_.size());
        tr.enc_conv_in.resize(k);
        tr.enc_norm_in.resize(k);
        tr.enc_act_in.resize(k);
        Tensor<T> cur = x;
        for (int i = 0; i < k; ++i) {
            tr.enc_conv_in[i] = cur;
            cur = enc_convs_[i].forward(cur);
            tr.enc_norm_in[i] = cur;
            cur = enc_norms_[i].forward(cur);
            tr.enc_act_in[i] = cur;
            cur = nn::leaky_relu(cur, static_cast<T>(cfg_.leaky_slope));
        }
        tr.flat = cur.reshaped({cur.dim(0), flat_dim_});
        tr.mu = mu_head_.forward(tr.flat);
        tr.logvar = logvar_head_.forward(tr.flat);
        tr.eps = eps;
        tr.z = reparameterize_with_noise(tr.mu, tr.logvar, eps);

        const int s = cfg_.final_spatial();
        const auto dw = cfg_.mirror_widths();
        tr.dec_fc_out = dec_fc_.forward(tr.z);
        cur = nn::leaky_relu(tr.dec_fc_out, static_cast<T>(cfg_.leaky_slope));
        cur = cur.reshaped({tr.z.dim(0), dw.front(), s, s});
        tr.dec_deconv_in.resize(k);
        tr.dec_norm_in.resize(k - 1);
        tr.dec_act_in.resize(k - 1);
        for (int i = 0; i < k; ++i) {
            tr.dec_deconv_in[i] = cur;
            cur = dec_deconvs_[i].forward(cur);
            if (i + 1 < k) {
                tr.dec_norm_in[i] = cur;
                cur = dec_norms_[i].forward(cur);
                tr.dec_act_in[i] = cur;
                cur = nn::leaky_relu(cur, static_cast<T>(cfg_.leaky_slope));
            }
        }
        tr.xhat = nn::sigmoid(cur);
        return tr.xhat;
    }

    /// Accumulates parameter gradients from dL/dxhat plus direct gradients on
    /// (mu, logvar) coming from the KL term.
    void backward(const Trace& tr, const Tensor<T>& dxhat, const Tensor<T>& dmu_extra,
                  const Tensor<T>& dlogvar_extra) {
        const int k = static_cast<int>(enc_convs_.size());
        const T slope = static_cast<T>(cfg_.leaky_slope);
        Tensor<T> g = nn::sigmoid_backward(tr.xhat, dxhat);
        g = dec_deconvs_[k - 1].backward(tr.dec_deconv_in[k - 1], g);
        for (int i = k - 2; i >= 0; --i) {
            g = nn::leaky_relu_backward(tr.dec_act_in[i], g, slope);
            g = dec_norms_[i].backward(tr.dec_norm_in[i], g);
            g = dec_deconvs_[i].backward(tr.dec_deconv_in[i], g);
        }
        g = g.reshaped({g.dim(0), dec_fc_.out_dim});
        g = nn::leaky_relu_backward(tr.dec_fc_out, g, slope);
        Tensor<T> gz = dec_fc_.backward(tr.z, g);

        // reparameterization: z = mu + exp(logvar/2) * eps
        Tensor<T> dmu = gz;
        Tensor<T> dlogvar(tr.logvar.shape);
        for (long i = 0; i < gz.numel(); ++i) {
            const double sd = std::exp(0.5 * static_cast<double>(tr.logvar[i]));
            dlogvar[i] = static_cast<T>(0.5 * sd * tr.eps[i] * gz[i]);
        }
        for (long i = 0; i < dmu.numel(); ++i) {
            dmu[i] += dmu_extra[i];
            dlogvar[i] += dlogvar_extra[i];
        }

        Tensor<T> gflat = mu_head_.backward(tr.flat, dmu);
        Tensor<T> gflat2 = logvar_head_.backward(tr.flat, dlogvar);
        for (long i = 0; i < gflat.numel(); ++i) gflat[i] += gflat2[i];

        const int s = cfg_.final_spatial();
        g = gflat.reshaped({gflat.dim(0), cfg_.encoder_widths.back(), s, s});
        for (int i = k - 1; i >= 0; --i) {
            g = nn::leaky_relu_backward(tr.enc_act_in[i], g, slope);
            g = enc_norms_[i].backward(tr.enc_norm_in[i], g);
            g = enc_convs_[i].backward(tr.enc_conv_in[i], g);
        }
    }

    std::vector<nn::Param<T>*> params() {
        std::vector<nn::Param<T>*> out;
        for (auto& c : enc_convs_) {
            out.push_back(&c.w);
            out.push_back(&c.b);
        }
        for (auto& n : enc_norms_) {
            out.push_back(&n.gamma);
            out.push_back(&n.beta);
        }
        out.push_back(&mu_head_.w);
        out.push_back(&mu_head_.b);
        out.push_back(&logvar_head_.w);
        out.push_back(&logvar_head_.b);
        out.push_back(&dec_fc_.w);
        out.push_back(&dec_fc_.b);
        for (auto& d : dec_deconvs_) {
            out.push_back(&d.w);
            out.push_back(&d.b);
        }
        for (auto& n : dec_norms_) {
            out.push_back(&n.gamma);
            out.push_back(&n.beta);
        }
        return out;
    }

    void zero_grads() {
        for (auto* p : params()) p->zero_grad();
    }

    long param_count() {
        long n = 0;
        for (auto* p : params()) n += p->value.numel();
        return n;
    }

private:
    void check_input(const Tensor<T>& x) const {
        if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) != cfg_.image_size ||
            x.dim(3) != cfg_.image_size)
            throw std::invalid_argument("vae: input must be [N,3," + std::to_string(cfg_.image_size) +
                                        "," + std::to_string(cfg_.image_size) + "], got " +
                                        x.shape_str());
    }

    VaeConfig cfg_;
    int flat_dim_ = 0;
    std::vector<nn::Conv2d<T>> enc_convs_;
    std::vector<nn::GroupNorm<T>> enc_norms_;
    nn::Dense<T> mu_head_, logvar_head_, dec_fc_;
    std::vector<nn::ConvTranspose2d<T>> dec_deconvs_;
    std::vector<nn::GroupNorm<T>> dec_norms_;
};

}  // namespace fundus
