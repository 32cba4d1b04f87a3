#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "depthfill/core/errors.hpp"
#include "depthfill/core/tensor.hpp"
#include "depthfill/data/npy.hpp"

namespace depthfill {

// One co-registered scene: optical bands, surface/terrain models, footprint mask.
struct RasterTile {
    std::string tile_id;
    Tensor<std::uint8_t> rgb;     // [3,H,W]
    Tensor<float> dsm;            // [H,W], meters
    Tensor<float> dtm;            // [H,W], meters
    Tensor<std::uint8_t> labels;  // [H,W], {0=ground, 1=building}
    float gsd_meters = 0.5f;

    int height() const { return dsm.dim(0); }
    int width() const { return dsm.dim(1); }
};

inline std::string tile_id_from_rgb_path(const std::string& rgb_path) {
    std::string stem = std::filesystem::path(rgb_path).stem().string();
    const std::string suffix = "_RGB";
    if (stem.size() > suffix.size() &&
        stem.compare(stem.size() - suffix.size(), suffix.size(), suffix) == 0) {
        stem.erase(stem.size() - suffix.size());
    }
    return stem;
}

// Loads the four co-registered rasters of a tile and validates them.
// Non-finite DSM/DTM samples are filled so that the normalized height
// (DSM - DTM) is zero at those pixels.
inline RasterTile load_tile(const std::string& rgb_path, const std::string& dsm_path,
                            const std::string& dtm_path, const std::string& label_path) {
    RasterTile tile;
    tile.tile_id = tile_id_from_rgb_path(rgb_path);

    Tensor<std::uint8_t> rgb_hw3 = npy_load<std::uint8_t>(rgb_path);
    if (rgb_hw3.ndim() != 3 || rgb_hw3.dim(2) != 3) {
        throw ShapeError(rgb_path + ": expected [H,W,3] uint8 raster, got " +
                         rgb_hw3.shape_string());
    }
    const int h = rgb_hw3.dim(0), w = rgb_hw3.dim(1);
    tile.rgb = Tensor<std::uint8_t>({3, h, w});
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int b = 0; b < 3; ++b) tile.rgb.at(b, r, c) = rgb_hw3.at(r, c, b);

    tile.dsm = npy_load<float>(dsm_path);
    tile.dtm = npy_load<float>(dtm_path);
    tile.labels = npy_load<std::uint8_t>(label_path);

    auto check_dims = [&](const auto& t, const std::string& p) {
        if (t.ndim() != 2 || t.dim(0) != h || t.dim(1) != w) {
            throw ShapeError("tile " + tile.tile_id + ": " + p + " has mismatched dimensions");
        }
    };
    check_dims(tile.dsm, dsm_path);
    check_dims(tile.dtm, dtm_path);
    check_dims(tile.labels, label_path);

    for (std::size_t i = 0; i < tile.labels.size(); ++i) {
        if (tile.labels[i] > 1) {
            throw LabelError("tile " + tile.tile_id + ": label value " +
                             std::to_string(int(tile.labels[i])) + " outside {0,1}");
        }
    }

    for (std::size_t i = 0; i < tile.dsm.size(); ++i) {
        const bool dsm_ok = std::isfinite(tile.dsm[i]);
        const bool dtm_ok = std::isfinite(tile.dtm[i]);
        if (dsm_ok && dtm_ok) continue;
        if (!dsm_ok && dtm_ok) {
            tile.dsm[i] = tile.dtm[i];
        } else if (dsm_ok && !dtm_ok) {
            tile.dtm[i] = tile.dsm[i];
        } else {
            tile.dsm[i] = 0.0f;
            tile.dtm[i] = 0.0f;
        }
    }
    return tile;
}

// nDSM: per-pixel height above local terrain. This raster is the depth
// modality everywhere downstream.
inline Tensor<float> normalize_height(const RasterTile& tile) {
    Tensor<float> out({tile.height(), tile.width()});
    const float* dsm = tile.dsm.data();
    const float* dtm = tile.dtm.data();
    float* o = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) o[i] = dsm[i] - dtm[i];
    return out;
}

// --- network-range scaling -------------------------------------------------
// RGB bytes and clipped heights both map to [-1,1]; the generator's tanh
// output lives in the same range, so channels stack without conversion.

inline float rgb_to_net(std::uint8_t v) { return static_cast<float>(v) / 127.5f - 1.0f; }

inline Tensor<float> scale_rgb(const Tensor<std::uint8_t>& rgb) {
    Tensor<float> out(rgb.shape());
    for (std::size_t i = 0; i < rgb.size(); ++i) out[i] = rgb_to_net(rgb[i]);
    return out;
}

inline float depth_to_net(float meters, float clip_max) {
    const float c = std::min(std::max(meters, 0.0f), clip_max);
    return 2.0f * c / clip_max - 1.0f;
}

inline float depth_net_to_meters(float v, float clip_max) {
    return (v + 1.0f) * 0.5f * clip_max;
}

inline Tensor<float> scale_depth(const Tensor<float>& ndsm, float clip_max) {
    Tensor<float> out(ndsm.shape());
    for (std::size_t i = 0; i < ndsm.size(); ++i) out[i] = depth_to_net(ndsm[i], clip_max);
    return out;
}

}  // namespace depthfill
