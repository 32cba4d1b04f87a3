#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "depthfill/core/errors.hpp"
#include "depthfill/core/tensor.hpp"

namespace depthfill::nn {

// 2x2 max pooling over one [C,H,W] map. The returned index map records the
// argmax position inside each window (0..3, row-major; first occurrence wins
// on ties) so the decoder can restore values to their original locations.
template <class T>
std::pair<Tensor<T>, Tensor<std::uint8_t>> max_pool_with_indices(const Tensor<T>& x) {
    if (x.ndim() != 3) throw ShapeError("max_pool_with_indices expects [C,H,W]");
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (H % 2 != 0 || W % 2 != 0) {
        throw ShapeError("max pooling requires even spatial dims, got " + x.shape_string());
    }
    const int Ho = H / 2, Wo = W / 2;
    Tensor<T> pooled({C, Ho, Wo});
    Tensor<std::uint8_t> indices({C, Ho, Wo});
    for (int c = 0; c < C; ++c) {
        for (int oh = 0; oh < Ho; ++oh) {
            for (int ow = 0; ow < Wo; ++ow) {
                T best = x.at(c, 2 * oh, 2 * ow);
                std::uint8_t best_pos = 0;
                for (std::uint8_t pos = 1; pos < 4; ++pos) {
                    const T v = x.at(c, 2 * oh + pos / 2, 2 * ow + pos % 2);
                    if (v > best) {
                        best = v;
                        best_pos = pos;
                    }
                }
                pooled.at(c, oh, ow) = best;
                indices.at(c, oh, ow) = best_pos;
            }
        }
    }
    return {std::move(pooled), std::move(indices)};
}

// Inverse of the pooling above: each pooled value lands at its recorded
// in-window position, everything else stays zero.
template <class T>
Tensor<T> unpool_with_indices(const Tensor<T>& pooled, const Tensor<std::uint8_t>& indices) {
    if (pooled.ndim() != 3) throw ShapeError("unpool_with_indices expects [C,H,W]");
    if (pooled.shape() != indices.shape()) {
        throw ShapeError("pooled map and index map shapes differ");
    }
    const int C = pooled.dim(0), H = pooled.dim(1), W = pooled.dim(2);
    Tensor<T> out({C, 2 * H, 2 * W});
    for (int c = 0; c < C; ++c) {
        for (int oh = 0; oh < H; ++oh) {
            for (int ow = 0; ow < W; ++ow) {
                const std::uint8_t pos = indices.at(c, oh, ow);
                if (pos > 3) {
                    throw IndexError("pooling index " + std::to_string(int(pos)) +
                                     " outside its 2x2 window");
                }
                out.at(c, 2 * oh + pos / 2, 2 * ow + pos % 2) = pooled.at(c, oh, ow);
            }
        }
    }
    return out;
}

// Batched module wrappers used inside the segmentation net. The pool caches
// its index map; the unpool consumes an index map recorded by the matching
// encoder pool.

template <class T>
class MaxPool2d {
public:
    Tensor<T> forward(const Tensor<T>& x) {
        if (x.ndim() != 4) throw ShapeError("MaxPool2d expects [B,C,H,W]");
        const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
        if (H % 2 != 0 || W % 2 != 0) {
            throw ShapeError("max pooling requires even spatial dims, got " + x.shape_string());
        }
        const int Ho = H / 2, Wo = W / 2;
        Tensor<T> pooled({B, C, Ho, Wo});
        indices_ = Tensor<std::uint8_t>({B, C, Ho, Wo});
        for (int b = 0; b < B; ++b) {
            for (int c = 0; c < C; ++c) {
                for (int oh = 0; oh < Ho; ++oh) {
                    for (int ow = 0; ow < Wo; ++ow) {
                        T best = x.at(b, c, 2 * oh, 2 * ow);
                        std::uint8_t best_pos = 0;
                        for (std::uint8_t pos = 1; pos < 4; ++pos) {
                            const T v = x.at(b, c, 2 * oh + pos / 2, 2 * ow + pos % 2);
                            if (v > best) {
                                best = v;
                                best_pos = pos;
                            }
                        }
                        pooled.at(b, c, oh, ow) = best;
                        indices_.at(b, c, oh, ow) = best_pos;
                    }
                }
            }
        }
        return pooled;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        const int B = gy.dim(0), C = gy.dim(1), Ho = gy.dim(2), Wo = gy.dim(3);
        Tensor<T> gx({B, C, 2 * Ho, 2 * Wo});
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
                for (int oh = 0; oh < Ho; ++oh)
                    for (int ow = 0; ow < Wo; ++ow) {
                        const std::uint8_t pos = indices_.at(b, c, oh, ow);
                        gx.at(b, c, 2 * oh + pos / 2, 2 * ow + pos % 2) = gy.at(b, c, oh, ow);
                    }
        return gx;
    }

    const Tensor<std::uint8_t>& indices() const { return indices_; }

private:
    Tensor<std::uint8_t> indices_;
};

template <class T>
class MaxUnpool2d {
public:
    Tensor<T> forward(const Tensor<T>& pooled, const Tensor<std::uint8_t>& indices) {
        require_shapes(pooled, indices);
        indices_ = indices;
        const int B = pooled.dim(0), C = pooled.dim(1), H = pooled.dim(2), W = pooled.dim(3);
        Tensor<T> out({B, C, 2 * H, 2 * W});
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
                for (int oh = 0; oh < H; ++oh)
                    for (int ow = 0; ow < W; ++ow) {
                        const std::uint8_t pos = indices.at(b, c, oh, ow);
                        if (pos > 3) throw IndexError("pooling index outside its 2x2 window");
                        out.at(b, c, 2 * oh + pos / 2, 2 * ow + pos % 2) = pooled.at(b, c, oh, ow);
                    }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& gy) {
        const int B = indices_.dim(0), C = indices_.dim(1), H = indices_.dim(2),
                  W = indices_.dim(3);
        Tensor<T> gx({B, C, H, W});
        for (int b = 0; b < B; ++b)
            for (int c = 0; c < C; ++c)
                for (int oh = 0; oh < H; ++oh)
                    for (int ow = 0; ow < W; ++ow) {
                        const std::uint8_t pos = indices_.at(b, c, oh, ow);
                        gx.at(b, c, oh, ow) = gy.at(b, c, 2 * oh + pos / 2, 2 * ow + pos % 2);
                    }
        return gx;
    }

private:
    static void require_shapes(const Tensor<T>& pooled, const Tensor<std::uint8_t>& indices) {
        if (pooled.ndim() != 4 || indices.ndim() != 4 ||
            pooled.shape() != indices.shape()) {
            throw ShapeError("unpool: pooled/index shape mismatch");
        }
    }

    Tensor<std::uint8_t> indices_;
};

}  // namespace depthfill::nn
