#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "depthfill/core/errors.hpp"
#include "depthfill/core/tensor.hpp"
#include "depthfill/nn/module.hpp"

namespace depthfill::nn {

// Per-channel batch normalization over [B,C,H,W]. Training normalizes with
// batch statistics and folds them into running estimates (momentum 0.1);
// inference normalizes with the running estimates.
template <class T>
class BatchNorm2d {
public:
    BatchNorm2d() = default;
    BatchNorm2d(std::string name, int channels) : name_(std::move(name)), channels_(channels) {
        gamma.name = name_ + ".gamma";
        gamma.init_shape({channels_});
        gamma.value.fill(T{1});
        gamma.apply_decay = false;
        beta.name = name_ + ".beta";
        beta.init_shape({channels_});
        beta.apply_decay = false;
        running_mean = Tensor<T>({channels_});
        running_var = Tensor<T>::full({channels_}, T{1});
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        if (x.ndim() != 4 || x.dim(1) != channels_) {
            throw ShapeError(name_ + ": expected [B," + std::to_string(channels_) +
                             ",H,W], got " + x.shape_string());
        }
        const int B = x.dim(0), C = channels_, H = x.dim(2), W = x.dim(3);
        const std::size_t plane = static_cast<std::size_t>(H) * W;
        const std::size_t n = static_cast<std::size_t>(B) * plane;

        Tensor<T> y(x.shape());
        if (training) {
            trained_ = true;
            xhat_ = Tensor<T>(x.shape());
            invstd_.assign(C, T{0});
            mean_.assign(C, T{0});
            for (int c = 0; c < C; ++c) {
                double sum = 0.0, sq = 0.0;
                for (int b = 0; b < B; ++b) {
                    const T* p = &x.at(b, c, 0, 0);
                    for (std::size_t i = 0; i < plane; ++i) {
                        sum += p[i];
                        sq += static_cast<double>(p[i]) * p[i];
                    }
                }
                const double mean = sum / static_cast<double>(n);
                const double var = sq / static_cast<double>(n) - mean * mean;
                const double invstd = 1.0 / std::sqrt(var + eps_);
                mean_[c] = static_cast<T>(mean);
                invstd_[c] = static_cast<T>(invstd);
                running_mean[c] = static_cast<T>((1.0 - momentum_) * running_mean[c] +
                                                 momentum_ * mean);
                running_var[c] =
                    static_cast<T>((1.0 - momentum_) * running_var[c] + momentum_ * var);
                const T g = gamma.value[c], bta = beta.value[c];
                for (int b = 0; b < B; ++b) {
                    const T* p = &x.at(b, c, 0, 0);
                    T* xh = &xhat_.at(b, c, 0, 0);
                    T* out = &y.at(b, c, 0, 0);
                    for (std::size_t i = 0; i < plane; ++i) {
                        xh[i] = static_cast<T>((p[i] - mean) * invstd);
                        out[i] = g * xh[i] + bta;
                    }
                }
            }
        } else {
            for (int c = 0; c < C; ++c) {
                const T invstd = static_cast<T>(1.0 / std::sqrt(double(running_var[c]) + eps_));
                const T g = gamma.value[c], bta = beta.value[c], m = running_mean[c];
                for (int b = 0; b < B; ++b) {
                    const T* p = &x.at(b, c, 0, 0);
                    T* out = &y.at(b, c, 0, 0);
                    for (std::size_t i = 0; i < plane; ++i) out[i] = g * (p[i] - m) * invstd + bta;
                }
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        if (!trained_) throw NumericalError(name_ + ": backward called before a training forward");
        const int B = gy.dim(0), C = channels_, H = gy.dim(2), W = gy.dim(3);
        const std::size_t plane = static_cast<std::size_t>(H) * W;
        const double n = static_cast<double>(B) * plane;

        Tensor<T> gx(gy.shape());
        for (int c = 0; c < C; ++c) {
            double sum_g = 0.0, sum_gx = 0.0;
            for (int b = 0; b < B; ++b) {
                const T* g = &gy.at(b, c, 0, 0);
                const T* xh = &xhat_.at(b, c, 0, 0);
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_g += g[i];
                    sum_gx += static_cast<double>(g[i]) * xh[i];
                }
            }
            beta.grad[c] += static_cast<T>(sum_g);
            gamma.grad[c] += static_cast<T>(sum_gx);
            const double scale = static_cast<double>(gamma.value[c]) * invstd_[c] / n;
            for (int b = 0; b < B; ++b) {
                const T* g = &gy.at(b, c, 0, 0);
                const T* xh = &xhat_.at(b, c, 0, 0);
                T* out = &gx.at(b, c, 0, 0);
                for (std::size_t i = 0; i < plane; ++i) {
                    out[i] = static_cast<T>(scale * (n * g[i] - sum_g - xh[i] * sum_gx));
                }
            }
        }
        return gx;
    }

    void collect(ParamRefs<T>& out) {
        out.push_back(&gamma);
        out.push_back(&beta);
    }

    void collect_state(StateRefs<T>& out) {
        out.emplace_back(name_ + ".running_mean", &running_mean);
        out.emplace_back(name_ + ".running_var", &running_var);
    }

    Param<T> gamma, beta;
    Tensor<T> running_mean, running_var;

private:
    std::string name_;
    int channels_ = 0;
    double momentum_ = 0.1;
    double eps_ = 1e-5;
    bool trained_ = false;
    Tensor<T> xhat_;
    std::vector<T> invstd_, mean_;
};

}  // namespace depthfill::nn
