#pragma once

#include <cmath>
#include <string>

#include "depthfill/core/errors.hpp"
#include "depthfill/core/tensor.hpp"

namespace depthfill::nn {

template <class T>
struct LossValueGrad {
    T value{};
    Tensor<T> grad;  // d value / d first differentiable argument
};

namespace detail {
// log(sigmoid(x)) without overflow; log(1 - sigmoid(x)) = log_sigmoid(-x)
template <class T>
T log_sigmoid(T x) {
    return x < T{0} ? x - std::log1p(std::exp(x)) : -std::log1p(std::exp(-x));
}
template <class T>
T sigmoid(T x) {
    return x >= T{0} ? T{1} / (T{1} + std::exp(-x)) : std::exp(x) / (T{1} + std::exp(x));
}
template <class T>
void require_finite(T v, const char* what) {
    if (!std::isfinite(static_cast<double>(v))) {
        throw NumericalError(std::string(what) + " is non-finite");
    }
}
}  // namespace detail

// Mean per-pixel negative log likelihood of the true class under the
// softmax of two-class logits [B,2,H,W].
template <class T>
LossValueGrad<T> nll_segmentation_loss_with_grad(const Tensor<T>& logits,
                                                 const Tensor<std::uint8_t>& labels) {
    if (logits.ndim() != 4 || logits.dim(1) != 2) {
        throw ShapeError("nll loss expects [B,2,H,W] logits, got " + logits.shape_string());
    }
    if (labels.ndim() != 3 || labels.dim(0) != logits.dim(0) ||
        labels.dim(1) != logits.dim(2) || labels.dim(2) != logits.dim(3)) {
        throw ShapeError("nll loss: labels " + labels.shape_string() +
                         " do not match logits " + logits.shape_string());
    }
    const int B = logits.dim(0), H = logits.dim(2), W = logits.dim(3);
    const double n = static_cast<double>(B) * H * W;

    LossValueGrad<T> out;
    out.grad = Tensor<T>(logits.shape());
    // per-sample partial sums, reduced in sorted order so the loss is exactly
    // invariant under batch permutation
    std::vector<double> sample_sums(static_cast<std::size_t>(B), 0.0);
    for (int b = 0; b < B; ++b) {
        double& total = sample_sums[static_cast<std::size_t>(b)];
        for (int r = 0; r < H; ++r) {
            for (int c = 0; c < W; ++c) {
                const std::uint8_t lab = labels.at(b, r, c);
                if (lab > 1) {
                    throw LabelError("label value " + std::to_string(int(lab)) + " outside {0,1}");
                }
                const double l0 = logits.at(b, 0, r, c), l1 = logits.at(b, 1, r, c);
                const double m = l0 > l1 ? l0 : l1;
                const double lse = m + std::log(std::exp(l0 - m) + std::exp(l1 - m));
                total += lse - (lab == 0 ? l0 : l1);
                const double p0 = std::exp(l0 - lse), p1 = std::exp(l1 - lse);
                out.grad.at(b, 0, r, c) = static_cast<T>((p0 - (lab == 0 ? 1.0 : 0.0)) / n);
                out.grad.at(b, 1, r, c) = static_cast<T>((p1 - (lab == 1 ? 1.0 : 0.0)) / n);
            }
        }
    }
    out.value = static_cast<T>(total / n);
    detail::require_finite(out.value, "nll segmentation loss");
    return out;
}

template <class T>
T nll_segmentation_loss(const Tensor<T>& logits, const Tensor<std::uint8_t>& labels) {
    return nll_segmentation_loss_with_grad(logits, labels).value;
}

// Discriminator objective: -mean(log s(real)) - mean(log(1 - s(fake))),
// means taken over batch and patch positions. Minimizing this maximizes the
// adversarial value the discriminator sees. The two terms are independent,
// so the training loop can back-propagate them through separate forwards.

template <class T>
LossValueGrad<T> disc_real_term_with_grad(const Tensor<T>& scores_real) {
    LossValueGrad<T> out;
    out.grad = Tensor<T>(scores_real.shape());
    double sum = 0.0;
    const double n = static_cast<double>(scores_real.size());
    for (std::size_t i = 0; i < scores_real.size(); ++i) {
        sum += detail::log_sigmoid(static_cast<double>(scores_real[i]));
        out.grad[i] =
            static_cast<T>(-(1.0 - detail::sigmoid(static_cast<double>(scores_real[i]))) / n);
    }
    out.value = static_cast<T>(-sum / n);
    detail::require_finite(out.value, "discriminator real term");
    return out;
}

template <class T>
LossValueGrad<T> disc_fake_term_with_grad(const Tensor<T>& scores_fake) {
    LossValueGrad<T> out;
    out.grad = Tensor<T>(scores_fake.shape());
    double sum = 0.0;
    const double n = static_cast<double>(scores_fake.size());
    for (std::size_t i = 0; i < scores_fake.size(); ++i) {
        sum += detail::log_sigmoid(-static_cast<double>(scores_fake[i]));
        out.grad[i] = static_cast<T>(detail::sigmoid(static_cast<double>(scores_fake[i])) / n);
    }
    out.value = static_cast<T>(-sum / n);
    detail::require_finite(out.value, "discriminator fake term");
    return out;
}

template <class T>
struct DiscriminatorLoss {
    T real_term{};   // -mean log s(real)
    T fake_term{};   // -mean log(1 - s(fake))
    T total{};
    Tensor<T> grad_real, grad_fake;
};

template <class T>
DiscriminatorLoss<T> gan_loss_discriminator_with_grad(const Tensor<T>& scores_real,
                                                      const Tensor<T>& scores_fake) {
    DiscriminatorLoss<T> out;
    auto real = disc_real_term_with_grad(scores_real);
    auto fake = disc_fake_term_with_grad(scores_fake);
    out.real_term = real.value;
    out.fake_term = fake.value;
    out.grad_real = std::move(real.grad);
    out.grad_fake = std::move(fake.grad);
    out.total = out.real_term + out.fake_term;
    detail::require_finite(out.total, "discriminator loss");
    return out;
}

template <class T>
T gan_loss_discriminator(const Tensor<T>& scores_real, const Tensor<T>& scores_fake) {
    return gan_loss_discriminator_with_grad(scores_real, scores_fake).total;
}

// Non-saturating generator objective: -mean(log s(fake)).
template <class T>
LossValueGrad<T> gan_loss_generator_with_grad(const Tensor<T>& scores_fake) {
    LossValueGrad<T> out;
    out.grad = Tensor<T>(scores_fake.shape());
    double sum = 0.0;
    const double n = static_cast<double>(scores_fake.size());
    for (std::size_t i = 0; i < scores_fake.size(); ++i) {
        sum += detail::log_sigmoid(static_cast<double>(scores_fake[i]));
        out.grad[i] =
            static_cast<T>(-(1.0 - detail::sigmoid(static_cast<double>(scores_fake[i]))) / n);
    }
    out.value = static_cast<T>(-sum / n);
    detail::require_finite(out.value, "generator adversarial loss");
    return out;
}

template <class T>
T gan_loss_generator(const Tensor<T>& scores_fake) {
    return gan_loss_generator_with_grad(scores_fake).value;
}

// Mean absolute difference; gradient is taken w.r.t. the fake image.
template <class T>
LossValueGrad<T> l1_depth_loss_with_grad(const Tensor<T>& real, const Tensor<T>& fake) {
    require_same_shape(real, fake, "l1 depth loss");
    LossValueGrad<T> out;
    out.grad = Tensor<T>(fake.shape());
    double sum = 0.0;
    const double n = static_cast<double>(real.size());
    for (std::size_t i = 0; i < real.size(); ++i) {
        const double d = static_cast<double>(fake[i]) - static_cast<double>(real[i]);
        sum += std::abs(d);
        out.grad[i] = static_cast<T>((d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / n);
    }
    out.value = static_cast<T>(sum / n);
    detail::require_finite(out.value, "l1 depth loss");
    return out;
}

template <class T>
T l1_depth_loss(const Tensor<T>& real, const Tensor<T>& fake) {
    return l1_depth_loss_with_grad(real, fake).value;
}

// The named terms of the combined objective; lambda weights the L1 regularizer.
template <class T>
struct GanLossTerms {
    T d_loss_real{};
    T d_loss_fake{};
    T g_adv_loss{};
    T g_l1_loss{};
    T lambda = T{100};
};

template <class T>
T total_generator_loss(const GanLossTerms<T>& terms) {
    return terms.g_adv_loss + terms.lambda * terms.g_l1_loss;
}

}  // namespace depthfill::nn
