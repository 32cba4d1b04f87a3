#pragma once

#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "depthfill/arm.hpp"
#include "depthfill/core/errors.hpp"
#include "depthfill/core/tensor.hpp"
#include "depthfill/data/patches.hpp"
#include "depthfill/data/raster.hpp"
#include "depthfill/eval/metrics.hpp"
#include "depthfill/gan/generator.hpp"
#include "depthfill/seg/segnet.hpp"

namespace depthfill::eval {

// Batched prediction interfaces. Tests inject pixel-wise stand-ins; the
// production path wraps the segmentation net and the translation generator.
using PatchPredictor = std::function<Tensor<std::uint8_t>(const Tensor<float>&)>;  // [N,C,h,w] -> [N,h,w]
using DepthGenerator = std::function<Tensor<float>(const Tensor<float>&)>;         // [N,3,h,w] -> [N,1,h,w]

inline PatchPredictor make_segnet_predictor(seg::SegNet<float>& model) {
    return [&model](const Tensor<float>& x) {
        return seg::argmax_labels(seg::seg_forward(model, x));
    };
}

inline DepthGenerator make_depth_generator(gan::Generator<float>& gen) {
    return [&gen](const Tensor<float>& rgb) {
        return gan::generator_forward(gen, rgb, /*noise_on=*/false);
    };
}

namespace detail {

inline Tensor<float> batch_patches(const std::vector<PatchSample>& patches, Arm arm,
                                   const DepthGenerator* synth) {
    const int N = static_cast<int>(patches.size());
    const int h = patches[0].patch_size(), w = patches[0].patch_size();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const int C = arm_in_channels(arm);

    Tensor<float> rgb({N, 3, h, w});
    for (int n = 0; n < N; ++n)
        std::memcpy(&rgb.at(n, 0, 0, 0), patches[static_cast<std::size_t>(n)].rgb.data(),
                    sizeof(float) * plane * 3);
    if (C == 3) return rgb;

    Tensor<float> x({N, 4, h, w});
    Tensor<float> depth({N, 1, h, w});
    switch (arm) {
        case Arm::rgb_depth:
            for (int n = 0; n < N; ++n)
                std::memcpy(&depth.at(n, 0, 0, 0),
                            patches[static_cast<std::size_t>(n)].depth.data(),
                            sizeof(float) * plane);
            break;
        case Arm::partial_depth:
            // the missing-modality condition at test time: zero-filled depth
            break;
        case Arm::rgb_synth_depth: {
            if (!synth) throw ConfigError("rgb_synth_depth evaluation needs a generator");
            depth = (*synth)(rgb);
            break;
        }
        default:
            break;
    }
    for (int n = 0; n < N; ++n) {
        std::memcpy(&x.at(n, 0, 0, 0), &rgb.at(n, 0, 0, 0), sizeof(float) * plane * 3);
        std::memcpy(&x.at(n, 3, 0, 0), &depth.at(n, 0, 0, 0), sizeof(float) * plane);
    }
    return x;
}

}  // namespace detail

// Grid-tiles one scene, predicts every patch, and stitches the predictions
// back by origin. Returns the stitched label canvas (cropped to the grid).
inline Tensor<std::uint8_t> predict_tile(const PatchPredictor& predict, const RasterTile& tile,
                                         Arm arm, int patch_size, float clip_max,
                                         const DepthGenerator* synth = nullptr) {
    const Tensor<float> ndsm = normalize_height(tile);
    const auto patches = extract_patches(tile, ndsm, patch_size, clip_max);
    const Tensor<float> x = detail::batch_patches(patches, arm, synth);
    const Tensor<std::uint8_t> preds = predict(x);

    const int rows = tile.height() / patch_size, cols = tile.width() / patch_size;
    Tensor<std::uint8_t> canvas({rows * patch_size, cols * patch_size});
    for (std::size_t n = 0; n < patches.size(); ++n) {
        Tensor<std::uint8_t> p({patch_size, patch_size});
        std::memcpy(p.data(), &preds.at(static_cast<int>(n), 0, 0),
                    static_cast<std::size_t>(patch_size) * patch_size);
        stitch_into(canvas, p, patches[n].origin_row, patches[n].origin_col);
    }
    return canvas;
}

// Full evaluation of one experimental arm over test tiles: per-tile stitch,
// confusion accumulation over full tiles, metrics from the merged counts.
inline MetricsReport evaluate_arm(const PatchPredictor& predict,
                                  const std::vector<RasterTile>& tiles, Arm arm, int patch_size,
                                  float clip_max, const DepthGenerator* synth = nullptr) {
    if (tiles.empty()) throw EmptyEvalError("no tiles to evaluate");
    if (arm == Arm::rgb_synth_depth && !synth) {
        throw ConfigError("rgb_synth_depth evaluation needs a generator checkpoint");
    }
    ConfusionCounts total;
    std::vector<TileReport> tile_reports;
    for (const auto& tile : tiles) {
        const Tensor<std::uint8_t> pred = predict_tile(predict, tile, arm, patch_size, clip_max,
                                                       synth);
        Tensor<std::uint8_t> gt({pred.dim(0), pred.dim(1)});
        for (int r = 0; r < pred.dim(0); ++r)
            for (int c = 0; c < pred.dim(1); ++c) gt.at(r, c) = tile.labels.at(r, c);

        TileReport tr;
        tr.tile_id = tile.tile_id;
        accumulate_confusion(pred, gt, tr.counts);
        tr.iou_building = iou(tr.counts, PositiveClass::building);
        tr.iou_ground = iou(tr.counts, PositiveClass::ground);
        tr.pixel_acc = pixel_accuracy(tr.counts);
        total.merge(tr.counts);
        tile_reports.push_back(std::move(tr));
    }
    return MetricsReport::from_counts(arm_name(arm), total, std::move(tile_reports));
}

// --- comparison table --------------------------------------------------------

struct ComparisonRow {
    std::string arm;
    std::string display;
    double iou_building = 0.0, iou_ground = 0.0, pixel_acc = 0.0;
};

struct ComparisonTable {
    std::vector<ComparisonRow> rows;

    static std::string pct(double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", v * 100.0);
        return buf;
    }

    std::string to_csv() const {
        std::string out = "modality,iou_building,iou_ground,pixel_acc\n";
        for (const auto& r : rows) {
            out += r.display;
            out += ',' + pct(r.iou_building) + ',' + pct(r.iou_ground) + ',' + pct(r.pixel_acc) +
                   '\n';
        }
        return out;
    }

    std::string to_text() const {
        std::string out;
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%-34s %12s %12s %12s\n", "Modality", "IoU Building",
                      "IoU Ground", "Pixel Acc.");
        out += buf;
        out += std::string(73, '-') + '\n';
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof(buf), "%-34s %12s %12s %12s\n", r.display.c_str(),
                          pct(r.iou_building).c_str(), pct(r.iou_ground).c_str(),
                          pct(r.pixel_acc).c_str());
            out += buf;
        }
        return out;
    }
};

// Orders reports lower bound, baseline, synthetic, upper bound and renders
// metrics as percentages with two decimals.
inline ComparisonTable compare_runs(const std::vector<MetricsReport>& reports) {
    if (reports.empty()) throw EmptyEvalError("no reports to compare");
    const std::vector<std::string> order = {"rgb_only", "partial_depth", "rgb_synth_depth",
                                            "rgb_depth"};
    ComparisonTable table;
    auto add = [&table, &order](const MetricsReport& r) {
        ComparisonRow row;
        row.arm = r.arm;
        bool known = false;
        for (const auto& o : order) known = known || o == r.arm;
        row.display = known ? arm_display_name(arm_from_string(r.arm)) : r.arm;
        row.iou_building = r.iou_building;
        row.iou_ground = r.iou_ground;
        row.pixel_acc = r.pixel_acc;
        table.rows.push_back(std::move(row));
    };
    for (const auto& want : order) {
        for (const auto& r : reports) {
            if (r.arm == want) add(r);
        }
    }
    for (const auto& r : reports) {
        bool known = false;
        for (const auto& want : order) known = known || r.arm == want;
        if (!known) add(r);
    }
    return table;
}

}  // namespace depthfill::eval
