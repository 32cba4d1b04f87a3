#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "depthfill/core/errors.hpp"
#include "depthfill/core/tensor.hpp"

namespace depthfill::eval {

// Pixel confusion counts with building as the positive class. Merging is a
// commutative monoid, so tiles and patches can accumulate in any order.
struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

    std::uint64_t total() const { return tp + fp + fn + tn; }

    ConfusionCounts& merge(const ConfusionCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        tn += o.tn;
        return *this;
    }

    bool operator==(const ConfusionCounts&) const = default;
};

inline void to_json(nlohmann::json& j, const ConfusionCounts& c) {
    j = nlohmann::json{{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
}

inline void from_json(const nlohmann::json& j, ConfusionCounts& c) {
    j.at("tp").get_to(c.tp);
    j.at("fp").get_to(c.fp);
    j.at("fn").get_to(c.fn);
    j.at("tn").get_to(c.tn);
}

inline ConfusionCounts& accumulate_confusion(const Tensor<std::uint8_t>& pred,
                                             const Tensor<std::uint8_t>& gt,
                                             ConfusionCounts& counts) {
    if (pred.shape() != gt.shape()) {
        throw ShapeError("confusion accumulation: prediction " + pred.shape_string() +
                         " vs ground truth " + gt.shape_string());
    }
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const std::uint8_t p = pred[i], g = gt[i];
        if (p > 1 || g > 1) throw LabelError("confusion accumulation: label outside {0,1}");
        if (g == 1) {
            if (p == 1)
                ++counts.tp;
            else
                ++counts.fn;
        } else {
            if (p == 1)
                ++counts.fp;
            else
                ++counts.tn;
        }
    }
    return counts;
}

enum class PositiveClass { building, ground };

// Intersection over union for one class. The empty-union case (class absent
// from both rasters) is defined as 1.0 and flagged degenerate.
inline double iou(const ConfusionCounts& c, PositiveClass cls, bool* degenerate = nullptr) {
    std::uint64_t inter = 0, uni = 0;
    if (cls == PositiveClass::building) {
        inter = c.tp;
        uni = c.tp + c.fp + c.fn;
    } else {
        inter = c.tn;
        uni = c.tn + c.fn + c.fp;
    }
    if (degenerate) *degenerate = (uni == 0);
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

inline double pixel_accuracy(const ConfusionCounts& c) {
    if (c.total() == 0) throw EmptyEvalError("pixel accuracy over zero pixels");
    return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

struct TileReport {
    std::string tile_id;
    ConfusionCounts counts;
    double iou_building = 0.0, iou_ground = 0.0, pixel_acc = 0.0;
};

inline void to_json(nlohmann::json& j, const TileReport& t) {
    j = nlohmann::json{{"tile_id", t.tile_id},
                       {"counts", t.counts},
                       {"iou_building", t.iou_building},
                       {"iou_ground", t.iou_ground},
                       {"pixel_accuracy", t.pixel_acc}};
}

inline void from_json(const nlohmann::json& j, TileReport& t) {
    j.at("tile_id").get_to(t.tile_id);
    j.at("counts").get_to(t.counts);
    j.at("iou_building").get_to(t.iou_building);
    j.at("iou_ground").get_to(t.iou_ground);
    j.at("pixel_accuracy").get_to(t.pixel_acc);
}

struct MetricsReport {
    std::string arm;
    double iou_building = 0.0;
    double iou_ground = 0.0;
    double pixel_acc = 0.0;
    bool iou_building_degenerate = false;
    bool iou_ground_degenerate = false;
    ConfusionCounts counts;
    std::vector<TileReport> tiles;

    static MetricsReport from_counts(std::string arm, const ConfusionCounts& counts,
                                     std::vector<TileReport> tiles = {}) {
        MetricsReport r;
        r.arm = std::move(arm);
        r.counts = counts;
        r.iou_building = iou(counts, PositiveClass::building, &r.iou_building_degenerate);
        r.iou_ground = iou(counts, PositiveClass::ground, &r.iou_ground_degenerate);
        r.pixel_acc = pixel_accuracy(counts);
        r.tiles = std::move(tiles);
        return r;
    }
};

inline void to_json(nlohmann::json& j, const MetricsReport& r) {
    j = nlohmann::json{{"arm", r.arm},
                       {"iou_building", r.iou_building},
                       {"iou_ground", r.iou_ground},
                       {"pixel_accuracy", r.pixel_acc},
                       {"iou_building_degenerate", r.iou_building_degenerate},
                       {"iou_ground_degenerate", r.iou_ground_degenerate},
                       {"counts", r.counts},
                       {"tiles", r.tiles}};
}

inline void from_json(const nlohmann::json& j, MetricsReport& r) {
    j.at("arm").get_to(r.arm);
    j.at("iou_building").get_to(r.iou_building);
    j.at("iou_ground").get_to(r.iou_ground);
    j.at("pixel_accuracy").get_to(r.pixel_acc);
    r.iou_building_degenerate = j.value("iou_building_degenerate", false);
    r.iou_ground_degenerate = j.value("iou_ground_degenerate", false);
    j.at("counts").get_to(r.counts);
    r.tiles = j.value("tiles", std::vector<TileReport>{});
}

}  // namespace depthfill::eval
