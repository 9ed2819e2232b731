#pragma once

#include <cmath>
#include <stdexcept>

#include "fundus/vae/extractor.hpp"
#include "fundus/vae/model.hpp"

namespace fundus {

struct LossBreakdown {
    double feature = 0.0;  // L_fl
    double kl = 0.0;
    double total = 0.0;    // L_fl + beta * kl
};

/// Closed-form KL(q(z|x) || N(0,I)) = -1/2 sum(1 + logvar - mu^2 - exp(logvar)),
/// summed per sample, averaged over the batch. Non-negative; zero only at
/// mu = 0, logvar = 0.
template <class T>
double kl_divergence(const Tensor<T>& mu, const Tensor<T>& logvar) {
    if (!mu.same_shape(logvar)) throw std::invalid_argument("kl_divergence: shape mismatch");
    const long n = mu.rank() >= 2 ? mu.dim(0) : 1;
    double acc = 0.0;
    for (long i = 0; i < mu.numel(); ++i) {
        const double m = mu[i], lv = logvar[i];
        acc += 1.0 + lv - m * m - std::exp(lv);
    }
    return -0.5 * acc / static_cast<double>(n);
}

/// Feature perceptual loss from precomputed stacks: per layer the squared
/// feature difference summed over all positions and scaled by 1/(2 C W H),
/// layers summed, batch averaged.
template <class T>
double feature_loss_from_stacks(const FeatureStack<T>& a, const FeatureStack<T>& b) {
    double total = 0.0;
    for (int l = 0; l < 3; ++l) {
        const Tensor<T>&fa = a.layers[l], &fb = b.layers[l];
        if (!fa.same_shape(fb)) throw std::invalid_argument("feature loss: stack shape mismatch");
        const long n = fa.dim(0);
        const long chw = fa.numel() / n;
        double acc = 0.0;
        for (long i = 0; i < fa.numel(); ++i) {
            const double d = static_cast<double>(fa[i]) - static_cast<double>(fb[i]);
            acc += d * d;
        }
        total += acc / (2.0 * static_cast<double>(chw) * static_cast<double>(n));
    }
    return total;
}

template <class T>
double feature_perceptual_loss(const Tensor<T>& x, const Tensor<T>& x_rec,
                               const FeatureExtractor<T>& extractor) {
    if (!x.same_shape(x_rec)) throw std::invalid_argument("feature loss: image shape mismatch");
    return feature_loss_from_stacks(extractor.forward(x), extractor.forward(x_rec));
}

template <class T>
LossBreakdown total_loss(const Tensor<T>& x, const Tensor<T>& x_rec, const Tensor<T>& mu,
                         const Tensor<T>& logvar, const FeatureExtractor<T>& extractor,
                         double beta) {
    LossBreakdown out;
    out.feature = feature_perceptual_loss(x, x_rec, extractor);
    out.kl = kl_divergence(mu, logvar);
    out.total = out.feature + beta * out.kl;
    return out;
}

/// Evaluation losses with posterior-mean reconstructions (eps = 0).
template <class T>
LossBreakdown evaluate_losses(const Vae<T>& vae, const FeatureExtractor<T>& extractor,
                              const Tensor<T>& x, double beta) {
    Tensor<T> mu, logvar;
    vae.encode(x, &mu, &logvar);
    const Tensor<T> xhat = vae.decode(mu);
    return total_loss(x, xhat, mu, logvar, extractor, beta);
}

/// One full training forward/backward: runs the traced forward pass, computes
/// the loss breakdown, and accumulates parameter gradients. The caller owns
/// gradient zeroing and the optimizer step.
template <class T>
LossBreakdown vae_backward_step(Vae<T>& vae, const FeatureExtractor<T>& extractor,
                                const Tensor<T>& x, const Tensor<T>& eps, double beta) {
    typename Vae<T>::Trace tr;
    const Tensor<T> xhat = vae.forward_train(x, eps, tr);
    const long n = x.dim(0);

    ExtractorTrace<T> etr;
    const FeatureStack<T> fx = extractor.forward(x, nullptr);
    const FeatureStack<T> fr = extractor.forward(xhat, &etr);

    LossBreakdown loss;
    loss.feature = feature_loss_from_stacks(fx, fr);
    loss.kl = kl_divergence(tr.mu, tr.logvar);
    loss.total = loss.feature + beta * loss.kl;

    // d(feature loss)/d(features of reconstruction)
    FeatureStack<T> gstack;
    for (int l = 0; l < 3; ++l) {
        const Tensor<T>&fa = fx.layers[l], &fb = fr.layers[l];
        const long chw = fa.numel() / n;
        const double scale = 1.0 / (static_cast<double>(chw) * static_cast<double>(n));
        Tensor<T> g(fa.shape);
        for (long i = 0; i < fa.numel(); ++i)
            g[i] = static_cast<T>((static_cast<double>(fb[i]) - static_cast<double>(fa[i])) * scale);
        gstack.layers[l] = std::move(g);
    }
    const Tensor<T> dxhat = extractor.backward_input(gstack, etr);

    // d(beta*KL)/dmu = beta*mu/N ; d(beta*KL)/dlogvar = beta*(exp(lv)-1)/(2N)
    Tensor<T> dmu(tr.mu.shape), dlogvar(tr.logvar.shape);
    const double bn = beta / static_cast<double>(n);
    for (long i = 0; i < tr.mu.numel(); ++i) {
        dmu[i] = static_cast<T>(bn * tr.mu[i]);
        dlogvar[i] = static_cast<T>(0.5 * bn * (std::exp(static_cast<double>(tr.logvar[i])) - 1.0));
    }

    vae.backward(tr, dxhat, dmu, dlogvar);
    return loss;
}

}  // namespace fundus
