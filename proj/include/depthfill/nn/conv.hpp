#pragma once

#include <cstring>
#include <string>
#include <vector>

#include "depthfill/core/errors.hpp"
#include "depthfill/core/matmul.hpp"
#include "depthfill/core/tensor.hpp"
#include "depthfill/nn/module.hpp"

namespace depthfill::nn {

inline int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

namespace detail {

// Unfolds one sample [C,H,W] into cols [C*k*k, Ho*Wo], writing each column
// block at `col_offset` of a row whose full width is `col_width` (so a batch
// can share one cols buffer).
template <class T>
void im2col(const T* x, int C, int H, int W, int k, int stride, int pad, T* cols,
            int Ho, int Wo, std::size_t col_width, std::size_t col_offset) {
    for (int c = 0; c < C; ++c) {
        const T* plane = x + static_cast<std::size_t>(c) * H * W;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                T* row = cols + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * col_width +
                         col_offset;
                for (int oh = 0; oh < Ho; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    T* dst = row + static_cast<std::size_t>(oh) * Wo;
                    if (ih < 0 || ih >= H) {
                        std::memset(dst, 0, sizeof(T) * Wo);
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(ih) * W;
                    if (stride == 1) {
                        int ow = 0;
                        const int iw0 = -pad + kj;
                        for (; ow < Wo && iw0 + ow < 0; ++ow) dst[ow] = T{0};
                        int run_end = Wo;
                        while (run_end > ow && iw0 + run_end - 1 >= W) --run_end;
                        if (run_end > ow)
                            std::memcpy(dst + ow, src + iw0 + ow, sizeof(T) * (run_end - ow));
                        for (ow = run_end; ow < Wo; ++ow) dst[ow] = T{0};
                    } else {
                        for (int ow = 0; ow < Wo; ++ow) {
                            const int iw = ow * stride - pad + kj;
                            dst[ow] = (iw < 0 || iw >= W) ? T{0} : src[iw];
                        }
                    }
                }
            }
        }
    }
}

// Scatter-add inverse of im2col.
template <class T>
void col2im(const T* cols, int C, int H, int W, int k, int stride, int pad, T* x,
            int Ho, int Wo, std::size_t col_width, std::size_t col_offset) {
    for (int c = 0; c < C; ++c) {
        T* plane = x + static_cast<std::size_t>(c) * H * W;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const T* row = cols +
                               (static_cast<std::size_t>(c) * k * k + ki * k + kj) * col_width +
                               col_offset;
                for (int oh = 0; oh < Ho; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    if (ih < 0 || ih >= H) continue;
                    const T* src = row + static_cast<std::size_t>(oh) * Wo;
                    T* dst = plane + static_cast<std::size_t>(ih) * W;
                    for (int ow = 0; ow < Wo; ++ow) {
                        const int iw = ow * stride - pad + kj;
                        if (iw >= 0 && iw < W) dst[iw] += src[ow];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// 2-D convolution over [B,C,H,W], im2col + GEMM, with cached input for the
// backward pass. Weight layout is [out_c, in_c*k*k].
template <class T>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::string name, int in_c, int out_c, int k, int stride, int pad)
        : name_(std::move(name)), in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad) {
        weight.name = name_ + ".weight";
        weight.init_shape({out_c_, in_c_ * k_ * k_});
        bias.name = name_ + ".bias";
        bias.init_shape({out_c_});
        bias.apply_decay = false;
    }

    void init(Rng& rng) { init_he_normal(weight.value, in_c_ * k_ * k_, rng); bias.value.fill(T{0}); }
    void init_gaussian(double stddev, Rng& rng) {
        init_normal(weight.value, stddev, rng);
        bias.value.fill(T{0});
    }

    Tensor<T> forward(const Tensor<T>& x) {
        check_input(x);
        x_ = x;
        const int B = x.dim(0), H = x.dim(2), W = x.dim(3);
        const int Ho = conv_out_dim(H, k_, stride_, pad_), Wo = conv_out_dim(W, k_, stride_, pad_);
        const std::size_t hw = static_cast<std::size_t>(Ho) * Wo;
        const std::size_t ncols = hw * B;
        std::vector<T> cols(static_cast<std::size_t>(in_c_) * k_ * k_ * ncols);
        for (int b = 0; b < B; ++b) {
            detail::im2col(x.data() + sample_size(x, b), in_c_, H, W, k_, stride_, pad_,
                           cols.data(), Ho, Wo, ncols, b * hw);
        }
        std::vector<T> result(static_cast<std::size_t>(out_c_) * ncols);
        matmul(weight.value.data(), cols.data(), result.data(), out_c_, in_c_ * k_ * k_,
               static_cast<int>(ncols));

        Tensor<T> y({B, out_c_, Ho, Wo});
        for (int b = 0; b < B; ++b) {
            for (int c = 0; c < out_c_; ++c) {
                const T* src = result.data() + static_cast<std::size_t>(c) * ncols + b * hw;
                T* dst = &y.at(b, c, 0, 0);
                const T bv = bias.value[c];
                for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] + bv;
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        const int B = x_.dim(0), H = x_.dim(2), W = x_.dim(3);
        const int Ho = gy.dim(2), Wo = gy.dim(3);
        const std::size_t hw = static_cast<std::size_t>(Ho) * Wo;
        const std::size_t ncols = hw * B;

        // regroup gy to [out_c, B*Ho*Wo]
        std::vector<T> gyr(static_cast<std::size_t>(out_c_) * ncols);
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < out_c_; ++c)
                std::memcpy(gyr.data() + static_cast<std::size_t>(c) * ncols + b * hw,
                            &gy.at(b, c, 0, 0), sizeof(T) * hw);

        for (int c = 0; c < out_c_; ++c) {
            T s{0};
            const T* row = gyr.data() + static_cast<std::size_t>(c) * ncols;
            for (std::size_t i = 0; i < ncols; ++i) s += row[i];
            bias.grad[c] += s;
        }

        // recompute cols from the cached input (cheaper than caching them)
        std::vector<T> cols(static_cast<std::size_t>(in_c_) * k_ * k_ * ncols);
        for (int b = 0; b < B; ++b) {
            detail::im2col(x_.data() + sample_size(x_, b), in_c_, H, W, k_, stride_, pad_,
                           cols.data(), Ho, Wo, ncols, b * hw);
        }
        matmul_nt(gyr.data(), cols.data(), weight.grad.data(), out_c_,
                  static_cast<int>(ncols), in_c_ * k_ * k_, /*accumulate=*/true);

        // dcols = W^T * gyr, then fold back onto the input grid
        std::vector<T> dcols(cols.size());
        matmul_tn(weight.value.data(), gyr.data(), dcols.data(), in_c_ * k_ * k_, out_c_,
                  static_cast<int>(ncols));
        Tensor<T> gx(x_.shape());
        for (int b = 0; b < B; ++b) {
            detail::col2im(dcols.data(), in_c_, H, W, k_, stride_, pad_,
                           gx.data() + sample_size(gx, b), Ho, Wo, ncols, b * hw);
        }
        return gx;
    }

    void collect(ParamRefs<T>& out) {
        out.push_back(&weight);
        out.push_back(&bias);
    }

    int in_channels() const { return in_c_; }
    int out_channels() const { return out_c_; }
    int kernel() const { return k_; }
    const std::string& name() const { return name_; }

    Param<T> weight, bias;

private:
    void check_input(const Tensor<T>& x) const {
        if (x.ndim() != 4 || x.dim(1) != in_c_) {
            throw ShapeError(name_ + ": expected [B," + std::to_string(in_c_) +
                             ",H,W] input, got " + x.shape_string());
        }
        if (conv_out_dim(x.dim(2), k_, stride_, pad_) <= 0 ||
            conv_out_dim(x.dim(3), k_, stride_, pad_) <= 0) {
            throw ShapeError(name_ + ": input " + x.shape_string() + " too small for kernel");
        }
    }

    static std::size_t sample_size(const Tensor<T>& t, int b) {
        return static_cast<std::size_t>(b) * t.dim(1) * t.dim(2) * t.dim(3);
    }

    std::string name_;
    int in_c_ = 0, out_c_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
    Tensor<T> x_;
};

// Stride-2 up-convolution (fractionally strided conv), the decoder half of
// the translation generator. Weight layout is [in_c, out_c*k*k], matching
// the adjoint relationship with Conv2d.
template <class T>
class ConvTranspose2d {
public:
    ConvTranspose2d() = default;
    ConvTranspose2d(std::string name, int in_c, int out_c, int k, int stride, int pad)
        : name_(std::move(name)), in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad) {
        weight.name = name_ + ".weight";
        weight.init_shape({in_c_, out_c_ * k_ * k_});
        bias.name = name_ + ".bias";
        bias.init_shape({out_c_});
        bias.apply_decay = false;
    }

    void init(Rng& rng) { init_he_normal(weight.value, in_c_ * k_ * k_, rng); bias.value.fill(T{0}); }
    void init_gaussian(double stddev, Rng& rng) {
        init_normal(weight.value, stddev, rng);
        bias.value.fill(T{0});
    }

    int out_dim(int in) const { return (in - 1) * stride_ - 2 * pad_ + k_; }

    Tensor<T> forward(const Tensor<T>& x) {
        if (x.ndim() != 4 || x.dim(1) != in_c_) {
            throw ShapeError(name_ + ": expected [B," + std::to_string(in_c_) +
                             ",H,W] input, got " + x.shape_string());
        }
        x_ = x;
        const int B = x.dim(0), Hi = x.dim(2), Wi = x.dim(3);
        const int Ho = out_dim(Hi), Wo = out_dim(Wi);
        const std::size_t hw = static_cast<std::size_t>(Hi) * Wi;
        const std::size_t ncols = hw * B;

        // x regrouped to [in_c, B*Hi*Wi]
        std::vector<T> xr(static_cast<std::size_t>(in_c_) * ncols);
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < in_c_; ++c)
                std::memcpy(xr.data() + static_cast<std::size_t>(c) * ncols + b * hw,
                            &x.at(b, c, 0, 0), sizeof(T) * hw);

        std::vector<T> cols(static_cast<std::size_t>(out_c_) * k_ * k_ * ncols);
        matmul_tn(weight.value.data(), xr.data(), cols.data(), out_c_ * k_ * k_, in_c_,
                  static_cast<int>(ncols));

        Tensor<T> y({B, out_c_, Ho, Wo});
        for (int b = 0; b < B; ++b) {
            detail::col2im(cols.data(), out_c_, Ho, Wo, k_, stride_, pad_,
                           &y.at(b, 0, 0, 0), Hi, Wi, ncols, b * hw);
        }
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < out_c_; ++c) {
                T* dst = &y.at(b, c, 0, 0);
                const T bv = bias.value[c];
                const std::size_t n = static_cast<std::size_t>(Ho) * Wo;
                for (std::size_t i = 0; i < n; ++i) dst[i] += bv;
            }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        const int B = x_.dim(0), Hi = x_.dim(2), Wi = x_.dim(3);
        const int Ho = gy.dim(2), Wo = gy.dim(3);
        const std::size_t hw = static_cast<std::size_t>(Hi) * Wi;
        const std::size_t ncols = hw * B;

        for (int c = 0; c < out_c_; ++c) {
            T s{0};
            for (int b = 0; b < B; ++b) {
                const T* src = &gy.at(b, c, 0, 0);
                const std::size_t n = static_cast<std::size_t>(Ho) * Wo;
                for (std::size_t i = 0; i < n; ++i) s += src[i];
            }
            bias.grad[c] += s;
        }

        std::vector<T> gcols(static_cast<std::size_t>(out_c_) * k_ * k_ * ncols);
        for (int b = 0; b < B; ++b) {
            detail::im2col(&gy.at(b, 0, 0, 0), out_c_, Ho, Wo, k_, stride_, pad_, gcols.data(),
                           Hi, Wi, ncols, b * hw);
        }

        // dW = x_r * gcols^T
        std::vector<T> xr(static_cast<std::size_t>(in_c_) * ncols);
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < in_c_; ++c)
                std::memcpy(xr.data() + static_cast<std::size_t>(c) * ncols + b * hw,
                            &x_.at(b, c, 0, 0), sizeof(T) * hw);
        matmul_nt(xr.data(), gcols.data(), weight.grad.data(), in_c_, static_cast<int>(ncols),
                  out_c_ * k_ * k_, /*accumulate=*/true);

        // dx = W * gcols
        std::vector<T> gxr(static_cast<std::size_t>(in_c_) * ncols);
        matmul(weight.value.data(), gcols.data(), gxr.data(), in_c_, out_c_ * k_ * k_,
               static_cast<int>(ncols));
        Tensor<T> gx(x_.shape());
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < in_c_; ++c)
                std::memcpy(&gx.at(b, c, 0, 0),
                            gxr.data() + static_cast<std::size_t>(c) * ncols + b * hw,
                            sizeof(T) * hw);
        return gx;
    }

    void collect(ParamRefs<T>& out) {
        out.push_back(&weight);
        out.push_back(&bias);
    }

    Param<T> weight, bias;

private:
    std::string name_;
    int in_c_ = 0, out_c_ = 0, k_ = 0, stride_ = 2, pad_ = 1;
    Tensor<T> x_;
};

}  // namespace depthfill::nn
