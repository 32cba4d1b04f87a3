#pragma once

#include <cmath>

#include "depthfill/core/rng.hpp"
#include "depthfill/core/tensor.hpp"

namespace depthfill::nn {

template <class T>
class ReLU {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        x_ = x;
        Tensor<T> y(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
        return y;
    }
    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx(gy.shape());
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] = x_[i] > T{0} ? gy[i] : T{0};
        return gx;
    }

private:
    Tensor<T> x_;
};

template <class T>
class LeakyReLU {
public:
    explicit LeakyReLU(T slope = T(0.2)) : slope_(slope) {}
    Tensor<T> forward(const Tensor<T>& x) {
        x_ = x;
        Tensor<T> y(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : slope_ * x[i];
        return y;
    }
    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx(gy.shape());
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] = x_[i] > T{0} ? gy[i] : slope_ * gy[i];
        return gx;
    }

private:
    T slope_;
    Tensor<T> x_;
};

template <class T>
class Tanh {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        y_ = Tensor<T>(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) y_[i] = std::tanh(x[i]);
        return y_;
    }
    Tensor<T> backward(const Tensor<T>& gy) {
        Tensor<T> gx(gy.shape());
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] = gy[i] * (T{1} - y_[i] * y_[i]);
        return gx;
    }

private:
    Tensor<T> y_;
};

// Inverted dropout; the mask drawn at forward time is reused by backward.
// In the translation generator this doubles as the noise source z.
template <class T>
class Dropout {
public:
    explicit Dropout(double rate = 0.5) : rate_(rate) {}

    Tensor<T> forward(const Tensor<T>& x, bool active, Rng& rng) {
        active_ = active;
        if (!active_) return x;
        const T scale = static_cast<T>(1.0 / (1.0 - rate_));
        mask_ = Tensor<T>(x.shape());
        Tensor<T> y(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) {
            mask_[i] = rng.bernoulli(rate_) ? T{0} : scale;
            y[i] = x[i] * mask_[i];
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        if (!active_) return gy;
        Tensor<T> gx(gy.shape());
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] = gy[i] * mask_[i];
        return gx;
    }

private:
    double rate_;
    bool active_ = false;
    Tensor<T> mask_;
};

}  // namespace depthfill::nn
