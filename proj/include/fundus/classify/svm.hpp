#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace fundus {

enum class Kernel { linear, rbf };
enum class ClassWeight { none, balanced };

struct SvcParams {
    double C = 1.0;
    Kernel kernel = Kernel::rbf;
    ClassWeight class_weight = ClassWeight::balanced;
    double gamma = 0.0;  // rbf only; 0 selects 1 / (d * var(X))

    void validate() const {
        if (!(C > 0)) throw std::invalid_argument("svc: C must be > 0");
        if (gamma < 0) throw std::invalid_argument("svc: gamma must be >= 0");
    }
    std::string kernel_name() const { return kernel == Kernel::linear ? "linear" : "rbf"; }
    std::string weight_name() const {
        return class_weight == ClassWeight::none ? "none" : "balanced";
    }
};

/// Per-feature standardization fit on training data only; zero-variance
/// features pass through unscaled.
struct Standardizer {
    std::vector<double> mean, scale;

    void fit(const std::vector<double>& X, long n, long d) {
        mean.assign(d, 0.0);
        scale.assign(d, 1.0);
        for (long i = 0; i < n; ++i)
            for (long j = 0; j < d; ++j) mean[j] += X[i * d + j];
        for (long j = 0; j < d; ++j) mean[j] /= static_cast<double>(n);
        std::vector<double> var(d, 0.0);
        for (long i = 0; i < n; ++i)
            for (long j = 0; j < d; ++j) {
                const double dv = X[i * d + j] - mean[j];
                var[j] += dv * dv;
            }
        for (long j = 0; j < d; ++j) {
            var[j] /= static_cast<double>(n);
            if (var[j] > 0) scale[j] = std::sqrt(var[j]);
        }
    }

    std::vector<double> transform(const std::vector<double>& X, long n, long d) const {
        std::vector<double> out(X.size());
        for (long i = 0; i < n; ++i)
            for (long j = 0; j < d; ++j) out[i * d + j] = (X[i * d + j] - mean[j]) / scale[j];
        return out;
    }
};

/// Soft-margin kernel SVC solved by SMO on the dual with maximal-violating-
/// pair working set selection. Deterministic: no randomness, fixed tie
/// breaking by index.
class Svc {
public:
    void fit(const std::vector<double>& X, long n, long d, const std::vector<int>& labels,
             const SvcParams& params) {
        params.validate();
        if (static_cast<long>(labels.size()) != n || static_cast<long>(X.size()) != n * d)
            throw std::invalid_argument("svc: inconsistent training data");
        long n_pos = 0;
        for (int l : labels) n_pos += l != 0;
        if (n_pos == 0 || n_pos == n)
            throw std::invalid_argument("svc: training data must contain both classes");

        d_ = d;
        params_ = params;
        gamma_ = params.gamma;
        if (params.kernel == Kernel::rbf && gamma_ == 0.0) {
            double m = 0;
            for (double v : X) m += v;
            m /= static_cast<double>(X.size());
            double var = 0;
            for (double v : X) var += (v - m) * (v - m);
            var /= static_cast<double>(X.size());
            gamma_ = var > 0 ? 1.0 / (static_cast<double>(d) * var) : 1.0;
        }

        std::vector<double> y(n);
        std::vector<double> cap(n);
        const double w_pos = params.class_weight == ClassWeight::balanced
                                 ? static_cast<double>(n) / (2.0 * n_pos)
                                 : 1.0;
        const double w_neg = params.class_weight == ClassWeight::balanced
                                 ? static_cast<double>(n) / (2.0 * (n - n_pos))
                                 : 1.0;
        for (long i = 0; i < n; ++i) {
            y[i] = labels[i] ? 1.0 : -1.0;
            cap[i] = params.C * (labels[i] ? w_pos : w_neg);
        }

        // full kernel matrix; problem sizes here stay in the low thousands
        std::vector<double> K(static_cast<size_t>(n) * n);
        for (long i = 0; i < n; ++i)
            for (long j = 0; j <= i; ++j) {
                const double v = kernel_raw(&X[i * d], &X[j * d]);
                K[i * n + j] = v;
                K[j * n + i] = v;
            }

        std::vector<double> alpha(n, 0.0), grad(n, -1.0);
        const double tol = 1e-3, tau = 1e-12;
        const long max_iter = std::max<long>(200000, 200 * n);
        converged_ = false;
        for (long iter = 0; iter < max_iter; ++iter) {
            // maximal violating pair
            long i = -1, j = -1;
            double gmax = -1e300, gmin = 1e300;
            for (long t = 0; t < n; ++t) {
                const double v = -y[t] * grad[t];
                const bool in_up = (y[t] > 0 && alpha[t] < cap[t]) || (y[t] < 0 && alpha[t] > 0);
                const bool in_low = (y[t] > 0 && alpha[t] > 0) || (y[t] < 0 && alpha[t] < cap[t]);
                if (in_up && v > gmax) {
                    gmax = v;
                    i = t;
                }
                if (in_low && v < gmin) {
                    gmin = v;
                    j = t;
                }
            }
            if (i < 0 || j < 0 || gmax - gmin < tol) {
                converged_ = true;
                break;
            }

            // in kernel space the curvature along the pair direction is
            // K_ii + K_jj - 2 K_ij for both label configurations
            const double old_ai = alpha[i], old_aj = alpha[j];
            if (y[i] != y[j]) {
                double quad = K[i * n + i] + K[j * n + j] - 2 * K[i * n + j];
                if (quad <= 0) quad = tau;
                const double delta = (-grad[i] - grad[j]) / quad;
                const double diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if (diff > 0 && alpha[j] < 0) {
                    alpha[j] = 0;
                    alpha[i] = diff;
                } else if (diff <= 0 && alpha[i] < 0) {
                    alpha[i] = 0;
                    alpha[j] = -diff;
                }
                if (diff > cap[i] - cap[j] && alpha[i] > cap[i]) {
                    alpha[i] = cap[i];
                    alpha[j] = cap[i] - diff;
                } else if (diff <= cap[i] - cap[j] && alpha[j] > cap[j]) {
                    alpha[j] = cap[j];
                    alpha[i] = cap[j] + diff;
                }
            } else {
                double quad = K[i * n + i] + K[j * n + j] - 2 * K[i * n + j];
                if (quad <= 0) quad = tau;
                const double delta = (grad[i] - grad[j]) / quad;
                const double sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if (sum > cap[i] && alpha[i] > cap[i]) {
                    alpha[i] = cap[i];
                    alpha[j] = sum - cap[i];
                } else if (sum <= cap[i] && alpha[j] < 0) {
                    alpha[j] = 0;
                    alpha[i] = sum;
                }
                if (sum > cap[j] && alpha[j] > cap[j]) {
                    alpha[j] = cap[j];
                    alpha[i] = sum - cap[j];
                } else if (sum <= cap[j] && alpha[i] < 0) {
                    alpha[i] = 0;
                    alpha[j] = sum;
                }
            }

            const double dai = y[i] * (alpha[i] - old_ai), daj = y[j] * (alpha[j] - old_aj);
            for (long t = 0; t < n; ++t)
                grad[t] += y[t] * (K[t * n + i] * dai + K[t * n + j] * daj);
        }

        // bias from the free support vectors, midpoint of the bounds otherwise
        double free_sum = 0;
        long free_n = 0;
        double up = -1e300, low = 1e300;
        for (long t = 0; t < n; ++t) {
            const double v = -y[t] * grad[t];
            const bool in_up = (y[t] > 0 && alpha[t] < cap[t]) || (y[t] < 0 && alpha[t] > 0);
            const bool in_low = (y[t] > 0 && alpha[t] > 0) || (y[t] < 0 && alpha[t] < cap[t]);
            if (alpha[t] > 0 && alpha[t] < cap[t]) {
                free_sum += v;
                ++free_n;
            }
            if (in_up) up = std::max(up, v);
            if (in_low) low = std::min(low, v);
        }
        bias_ = free_n > 0 ? free_sum / free_n : (up + low) / 2;

        sv_.clear();
        coef_.clear();
        for (long t = 0; t < n; ++t)
            if (alpha[t] > 1e-12) {
                sv_.insert(sv_.end(), X.begin() + t * d, X.begin() + (t + 1) * d);
                coef_.push_back(alpha[t] * y[t]);
            }

        // dual objective 1/2 a'Qa - sum(a) = 1/2 sum a (grad - 1); used by solver cross-checks
        dual_objective_ = 0;
        for (long t = 0; t < n; ++t) dual_objective_ += 0.5 * alpha[t] * (grad[t] - 1.0);
    }

    double decision(const double* x) const {
        double acc = bias_;
        for (size_t s = 0; s < coef_.size(); ++s)
            acc += coef_[s] * kernel_raw(&sv_[s * d_], x);
        return acc;
    }

    std::vector<double> decision_batch(const std::vector<double>& X, long n) const {
        std::vector<double> out(n);
        for (long i = 0; i < n; ++i) out[i] = decision(&X[i * d_]);
        return out;
    }

    int predict(const double* x) const { return decision(x) > 0 ? 1 : 0; }

    long n_support() const { return static_cast<long>(coef_.size()); }
    bool converged() const { return converged_; }
    double dual_objective() const { return dual_objective_; }
    double gamma() const { return gamma_; }

private:
    double kernel_raw(const double* a, const double* b) const {
        if (params_.kernel == Kernel::linear) {
            double acc = 0;
            for (long j = 0; j < d_; ++j) acc += a[j] * b[j];
            return acc;
        }
        double s = 0;
        for (long j = 0; j < d_; ++j) {
            const double dv = a[j] - b[j];
            s += dv * dv;
        }
        return std::exp(-gamma_ * s);
    }

    long d_ = 0;
    SvcParams params_;
    double gamma_ = 1.0;
    double bias_ = 0.0;
    double dual_objective_ = 0.0;
    bool converged_ = false;
    std::vector<double> sv_;    // n_sv x d
    std::vector<double> coef_;  // alpha_i * y_i
};

}  // namespace fundus
