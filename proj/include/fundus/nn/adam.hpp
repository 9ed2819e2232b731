#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fundus/nn/layers.hpp"

namespace fundus::nn {

/// Adam with the canonical moment parameters (0.9, 0.999) and epsilon 1e-8.
/// The learning rate is supplied per step so a scheduler can drive it.
template <class T>
class Adam {
public:
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    explicit Adam(const std::vector<Param<T>*>& params) {
        for (const Param<T>* p : params) {
            m_.emplace_back(p->value.shape);
            v_.emplace_back(p->value.shape);
        }
    }

    void step(const std::vector<Param<T>*>& params, double lr) {
        if (params.size() != m_.size()) throw std::logic_error("adam: parameter set changed");
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1, t_);
        const double bc2 = 1.0 - std::pow(beta2, t_);
        for (size_t k = 0; k < params.size(); ++k) {
            Param<T>& p = *params[k];
            for (long i = 0; i < p.value.numel(); ++i) {
                const double g = p.grad[i];
                const double m = beta1 * m_[k][i] + (1.0 - beta1) * g;
                const double v = beta2 * v_[k][i] + (1.0 - beta2) * g * g;
                m_[k][i] = static_cast<T>(m);
                v_[k][i] = static_cast<T>(v);
                p.value[i] -= static_cast<T>(lr * (m / bc1) / (std::sqrt(v / bc2) + eps));
            }
        }
    }

    long steps() const { return t_; }

private:
    std::vector<Tensor<double>> m_, v_;
    long t_ = 0;
};

}  // namespace fundus::nn
