#pragma once

// Qualitative panel output: RGB, real depth, synthetic depth, per-arm
// predictions, and ground truth side by side in one PPM image.

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "depthfill/core/errors.hpp"
#include "depthfill/core/tensor.hpp"
#include "depthfill/data/patches.hpp"
#include "depthfill/data/raster.hpp"
#include "depthfill/eval/evaluate.hpp"

namespace depthfill::eval {

struct PanelInputs {
    const RasterTile* tile = nullptr;
    float clip_max = 30.0f;
    std::optional<Tensor<float>> synth_depth;  // [H',W'] network range
    std::vector<std::pair<std::string, Tensor<std::uint8_t>>> predictions;
};

// Stitched generator output over the evaluation grid, network range.
inline Tensor<float> synth_depth_for_tile(const DepthGenerator& synth, const RasterTile& tile,
                                          int patch_size, float clip_max = 30.0f) {
    const Tensor<float> ndsm = normalize_height(tile);
    const auto patches = extract_patches(tile, ndsm, patch_size, clip_max);
    const int N = static_cast<int>(patches.size());
    const int h = patch_size, w = patch_size;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    Tensor<float> rgb({N, 3, h, w});
    for (int n = 0; n < N; ++n)
        std::memcpy(&rgb.at(n, 0, 0, 0), patches[static_cast<std::size_t>(n)].rgb.data(),
                    sizeof(float) * plane * 3);
    const Tensor<float> depth = synth(rgb);

    const int rows = tile.height() / patch_size, cols = tile.width() / patch_size;
    Tensor<float> canvas({rows * patch_size, cols * patch_size});
    for (int n = 0; n < N; ++n) {
        const auto& p = patches[static_cast<std::size_t>(n)];
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
                canvas.at(p.origin_row + r, p.origin_col + c) = depth.at(n, 0, r, c);
    }
    return canvas;
}

namespace detail {

inline std::uint8_t net_to_gray(float v) {
    const float t = std::min(1.0f, std::max(-1.0f, v));
    return static_cast<std::uint8_t>((t + 1.0f) * 127.5f);
}

}  // namespace detail

inline void write_panel(const std::string& path, const PanelInputs& in) {
    if (!in.tile) throw ConfigError("panel writer needs a tile");
    const RasterTile& tile = *in.tile;
    int H = tile.height(), W = tile.width();
    if (!in.predictions.empty()) {
        H = in.predictions.front().second.dim(0);
        W = in.predictions.front().second.dim(1);
    }

    const int n_cols = 2 + (in.synth_depth ? 1 : 0) + static_cast<int>(in.predictions.size()) + 1;
    const int gap = 4;
    const int total_w = n_cols * W + (n_cols - 1) * gap;
    std::vector<std::uint8_t> img(static_cast<std::size_t>(H) * total_w * 3, 255);

    auto put = [&](int col_idx, auto&& pixel_fn) {
        const int x0 = col_idx * (W + gap);
        for (int r = 0; r < H; ++r) {
            for (int c = 0; c < W; ++c) {
                const auto [pr, pg, pb] = pixel_fn(r, c);
                std::uint8_t* px = &img[(static_cast<std::size_t>(r) * total_w + x0 + c) * 3];
                px[0] = pr;
                px[1] = pg;
                px[2] = pb;
            }
        }
    };

    int col = 0;
    put(col++, [&](int r, int c) {
        return std::array<std::uint8_t, 3>{tile.rgb.at(0, r, c), tile.rgb.at(1, r, c),
                                           tile.rgb.at(2, r, c)};
    });
    const Tensor<float> real_depth = scale_depth(normalize_height(tile), in.clip_max);
    put(col++, [&](int r, int c) {
        const std::uint8_t g = detail::net_to_gray(real_depth.at(r, c));
        return std::array<std::uint8_t, 3>{g, g, g};
    });
    if (in.synth_depth) {
        put(col++, [&](int r, int c) {
            const std::uint8_t g = detail::net_to_gray(in.synth_depth->at(r, c));
            return std::array<std::uint8_t, 3>{g, g, g};
        });
    }
    for (const auto& [arm, pred] : in.predictions) {
        put(col++, [&pred](int r, int c) {
            const std::uint8_t v = pred.at(r, c) ? 255 : 0;
            return std::array<std::uint8_t, 3>{v, v, v};
        });
    }
    put(col++, [&](int r, int c) {
        const std::uint8_t v = tile.labels.at(r, c) ? 255 : 0;
        return std::array<std::uint8_t, 3>{v, v, v};
    });

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write panel " + path);
    f << "P6\n" << total_w << ' ' << H << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
}

}  // namespace depthfill::eval
