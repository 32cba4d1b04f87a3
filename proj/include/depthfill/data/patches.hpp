#pragma once

#include <string>
#include <vector>

#include "depthfill/core/errors.hpp"
#include "depthfill/core/rng.hpp"
#include "depthfill/core/tensor.hpp"
#include "depthfill/data/raster.hpp"

namespace depthfill {

// One training unit. `depth_present == false` always coincides with an
// all-zero depth channel (the missing-modality encoding).
struct PatchSample {
    Tensor<float> rgb;             // [3,h,w], network range
    Tensor<float> depth;           // [1,h,w], network range; zeros when absent
    Tensor<std::uint8_t> labels;   // [h,w]
    bool depth_present = false;
    std::string source_tile;
    int origin_row = 0;
    int origin_col = 0;

    int patch_size() const { return labels.dim(0); }
};

// Non-overlapping grid tiling in row-major order. Ragged margins are
// truncated; rgb and depth are scaled to network range on the way out.
inline std::vector<PatchSample> extract_patches(const RasterTile& tile,
                                                const Tensor<float>& depth_meters,
                                                int patch_size, float clip_max) {
    const int h = tile.height(), w = tile.width();
    if (patch_size <= 0 || patch_size > h || patch_size > w) {
        throw ShapeError("patch size " + std::to_string(patch_size) +
                         " does not fit tile " + tile.tile_id + " (" + std::to_string(h) +
                         "x" + std::to_string(w) + ")");
    }
    if (depth_meters.ndim() != 2 || depth_meters.dim(0) != h || depth_meters.dim(1) != w) {
        throw ShapeError("depth raster does not match tile " + tile.tile_id);
    }

    const int rows = h / patch_size, cols = w / patch_size;
    std::vector<PatchSample> out;
    out.reserve(static_cast<std::size_t>(rows) * cols);

    for (int pr = 0; pr < rows; ++pr) {
        for (int pc = 0; pc < cols; ++pc) {
            PatchSample s;
            s.source_tile = tile.tile_id;
            s.origin_row = pr * patch_size;
            s.origin_col = pc * patch_size;
            s.depth_present = true;
            s.rgb = Tensor<float>({3, patch_size, patch_size});
            s.depth = Tensor<float>({1, patch_size, patch_size});
            s.labels = Tensor<std::uint8_t>({patch_size, patch_size});
            for (int r = 0; r < patch_size; ++r) {
                const int tr = s.origin_row + r;
                for (int c = 0; c < patch_size; ++c) {
                    const int tc = s.origin_col + c;
                    for (int b = 0; b < 3; ++b) s.rgb.at(b, r, c) = rgb_to_net(tile.rgb.at(b, tr, tc));
                    s.depth.at(0, r, c) = depth_to_net(depth_meters.at(tr, tc), clip_max);
                    s.labels.at(r, c) = tile.labels.at(tr, tc);
                }
            }
            out.push_back(std::move(s));
        }
    }
    return out;
}

namespace detail {

template <class T>
void flip_chw(Tensor<T>& t, bool horizontal, bool vertical) {
    const int C = t.ndim() == 3 ? t.dim(0) : 1;
    const int H = t.ndim() == 3 ? t.dim(1) : t.dim(0);
    const int W = t.ndim() == 3 ? t.dim(2) : t.dim(1);
    T* base = t.data();
    for (int c = 0; c < C; ++c) {
        T* plane = base + static_cast<std::size_t>(c) * H * W;
        if (horizontal) {
            for (int r = 0; r < H; ++r)
                for (int l = 0, m = W - 1; l < m; ++l, --m)
                    std::swap(plane[r * W + l], plane[r * W + m]);
        }
        if (vertical) {
            for (int top = 0, bot = H - 1; top < bot; ++top, --bot)
                for (int col = 0; col < W; ++col)
                    std::swap(plane[top * W + col], plane[bot * W + col]);
        }
    }
}

}  // namespace detail

// Deterministic core of `augment`: the identical spatial permutation is
// applied to rgb, depth, and labels. Origin metadata is untouched.
inline PatchSample apply_flips(const PatchSample& patch, bool horizontal, bool vertical) {
    PatchSample out = patch;
    detail::flip_chw(out.rgb, horizontal, vertical);
    detail::flip_chw(out.depth, horizontal, vertical);
    detail::flip_chw(out.labels, horizontal, vertical);
    return out;
}

// Each flip direction drawn independently with probability 0.5
// (horizontal first, then vertical).
inline PatchSample augment(const PatchSample& patch, Rng& rng) {
    const bool h = rng.bernoulli(0.5);
    const bool v = rng.bernoulli(0.5);
    return apply_flips(patch, h, v);
}

// With probability p the patch keeps its real depth; otherwise depth is
// replaced by the missing-modality encoding. rgb and labels are never touched.
inline PatchSample sample_partial_modality(const PatchSample& patch, double p, Rng& rng) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw ConfigError("modality presence probability must be in [0,1], got " +
                          std::to_string(p));
    }
    if (!patch.depth_present) {
        throw ConfigError("sample_partial_modality requires a patch with real depth");
    }
    PatchSample out = patch;
    if (!rng.bernoulli(p)) {
        out.depth.fill(0.0f);
        out.depth_present = false;
    }
    return out;
}

// Places a predicted label patch back at its origin in a tile-sized canvas.
inline void stitch_into(Tensor<std::uint8_t>& canvas, const Tensor<std::uint8_t>& patch_labels,
                        int origin_row, int origin_col) {
    const int h = patch_labels.dim(0), w = patch_labels.dim(1);
    if (origin_row < 0 || origin_col < 0 || origin_row + h > canvas.dim(0) ||
        origin_col + w > canvas.dim(1)) {
        throw ShapeError("patch does not fit canvas at its origin");
    }
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) canvas.at(origin_row + r, origin_col + c) = patch_labels.at(r, c);
}

}  // namespace depthfill
