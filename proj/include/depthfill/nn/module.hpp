#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "depthfill/core/rng.hpp"
#include "depthfill/core/tensor.hpp"

namespace depthfill::nn {

// A trainable tensor plus its gradient accumulator. `apply_decay` marks the
// parameters that weight decay touches (convolution kernels only).
template <class T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool apply_decay = true;

    void init_shape(std::vector<int> shape) {
        value = Tensor<T>(shape);
        grad = Tensor<T>(std::move(shape));
    }
    void zero_grad() { grad.fill(T{0}); }
};

template <class T>
using ParamRefs = std::vector<Param<T>*>;

// Named non-trainable state (batch-norm running statistics); persisted in
// checkpoints alongside parameters.
template <class T>
using StateRefs = std::vector<std::pair<std::string, Tensor<T>*>>;

template <class T>
void zero_grads(const ParamRefs<T>& params) {
    for (auto* p : params) p->zero_grad();
}

// He-style fan-in init for rectified nets.
template <class T>
void init_he_normal(Tensor<T>& w, int fan_in, Rng& rng) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(rng.normal(0.0, stddev));
}

template <class T>
void init_normal(Tensor<T>& w, double stddev, Rng& rng) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(rng.normal(0.0, stddev));
}

}  // namespace depthfill::nn
