#pragma once

#include <cmath>
#include <vector>

#include "depthfill/core/errors.hpp"
#include "depthfill/core/tensor.hpp"
#include "depthfill/nn/module.hpp"

namespace depthfill::train {

// v' = momentum*v + (grad + weight_decay*param); param' = param - lr*v'
template <class T>
void sgd_momentum_step(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& velocity, double lr,
                       double momentum, double weight_decay) {
    require_same_shape(param, grad, "sgd step");
    require_same_shape(param, velocity, "sgd step");
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = static_cast<double>(grad[i]) + weight_decay * param[i];
        const double v = momentum * velocity[i] + g;
        velocity[i] = static_cast<T>(v);
        param[i] = static_cast<T>(param[i] - lr * v);
    }
}

// Bias-corrected Adam update, t counted from 1.
template <class T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, Tensor<T>& m, Tensor<T>& v, long long t,
               double lr, double beta1, double beta2, double eps) {
    require_same_shape(param, grad, "adam step");
    require_same_shape(param, m, "adam step");
    require_same_shape(param, v, "adam step");
    if (t < 1) throw ConfigError("adam step count must be >= 1");
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        const double mi = beta1 * m[i] + (1.0 - beta1) * g;
        const double vi = beta2 * v[i] + (1.0 - beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        param[i] = static_cast<T>(param[i] - lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps));
    }
}

// Stateful wrappers holding per-parameter moments, aligned to a fixed
// parameter list. Weight decay touches only params flagged apply_decay.

template <class T>
class SgdMomentum {
public:
    SgdMomentum(const nn::ParamRefs<T>& params, double momentum, double weight_decay)
        : params_(params), momentum_(momentum), weight_decay_(weight_decay) {
        for (auto* p : params_) velocity_.emplace_back(p->value.shape());
    }

    void step(double lr) {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            sgd_momentum_step(params_[i]->value, params_[i]->grad, velocity_[i], lr, momentum_,
                              params_[i]->apply_decay ? weight_decay_ : 0.0);
        }
    }

    std::vector<Tensor<T>>& moments() { return velocity_; }

private:
    nn::ParamRefs<T> params_;
    std::vector<Tensor<T>> velocity_;
    double momentum_, weight_decay_;
};

template <class T>
class Adam {
public:
    Adam(const nn::ParamRefs<T>& params, double beta1, double beta2, double eps = 1e-8)
        : params_(params), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (auto* p : params_) {
            m_.emplace_back(p->value.shape());
            v_.emplace_back(p->value.shape());
        }
    }

    void step(double lr) {
        ++t_;
        for (std::size_t i = 0; i < params_.size(); ++i) {
            adam_step(params_[i]->value, params_[i]->grad, m_[i], v_[i], t_, lr, beta1_, beta2_,
                      eps_);
        }
    }

    long long step_count() const { return t_; }
    std::vector<Tensor<T>>& first_moments() { return m_; }
    std::vector<Tensor<T>>& second_moments() { return v_; }
    void set_step_count(long long t) { t_ = t; }

private:
    nn::ParamRefs<T> params_;
    std::vector<Tensor<T>> m_, v_;
    long long t_ = 0;
    double beta1_, beta2_, eps_;
};

}  // namespace depthfill::train
