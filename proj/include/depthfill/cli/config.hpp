#pragma once

#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "depthfill/core/errors.hpp"
#include "depthfill/core/rng.hpp"
#include "depthfill/train/loops.hpp"

namespace depthfill::cli {

// Everything a run needs, loadable from one JSON file. The master seed fans
// out into per-stage seeds via derive_seed(master, tag); stage tags are
// "split", "seg-init:<arm>", "seg-train:<arm>", "gan-init-g", "gan-init-d",
// "gan-train", and "toy".
struct ExperimentConfig {
    std::string dataset_root;
    std::string output_root;
    std::uint64_t master_seed = 17;
    bool deterministic = false;

    double split_ratio = 0.8;
    int patch_size = 512;
    double scale_factor = 1.0;
    float depth_clip_max_m = 30.0f;

    train::TrainConfig seg;      // per-run arm and seed are derived, not stored
    train::GanTrainConfig gan;
    int gan_depth_levels = 8;
    int gan_base_width = 64;
    std::string gan_noise_mode = "dropout";

    void validate() const {
        if (dataset_root.empty() || output_root.empty()) {
            throw ConfigError("dataset_root and output_root must be set");
        }
        if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
            throw ConfigError("split_ratio must be in (0,1)");
        }
        if (patch_size <= 0 || !(scale_factor > 0.0 && scale_factor <= 1.0) ||
            depth_clip_max_m <= 0.0f) {
            throw ConfigError("invalid patch/scale/clip configuration");
        }
        if (gan_depth_levels < 2 || gan_base_width < 1) {
            throw ConfigError("invalid generator configuration");
        }
    }

    std::uint64_t derive(const std::string& tag) const { return derive_seed(master_seed, tag); }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
    j = nlohmann::json{{"dataset_root", c.dataset_root},
                       {"output_root", c.output_root},
                       {"master_seed", c.master_seed},
                       {"deterministic", c.deterministic},
                       {"split_ratio", c.split_ratio},
                       {"patch_size", c.patch_size},
                       {"scale_factor", c.scale_factor},
                       {"depth_clip_max_m", c.depth_clip_max_m},
                       {"seg", c.seg},
                       {"gan", c.gan},
                       {"gan_depth_levels", c.gan_depth_levels},
                       {"gan_base_width", c.gan_base_width},
                       {"gan_noise_mode", c.gan_noise_mode}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
    j.at("dataset_root").get_to(c.dataset_root);
    j.at("output_root").get_to(c.output_root);
    c.master_seed = j.value("master_seed", std::uint64_t{17});
    c.deterministic = j.value("deterministic", false);
    c.split_ratio = j.value("split_ratio", 0.8);
    c.patch_size = j.value("patch_size", 512);
    c.scale_factor = j.value("scale_factor", 1.0);
    c.depth_clip_max_m = j.value("depth_clip_max_m", 30.0f);
    if (j.contains("seg")) j.at("seg").get_to(c.seg);
    if (j.contains("gan")) j.at("gan").get_to(c.gan);
    c.gan_depth_levels = j.value("gan_depth_levels", 8);
    c.gan_base_width = j.value("gan_base_width", 64);
    c.gan_noise_mode = j.value("gan_noise_mode", "dropout");
}

// Stable over the canonical JSON dump (object keys are ordered), so
// semantically identical configs hash identically and any field change
// changes the hash.
inline std::uint64_t config_hash(const ExperimentConfig& c) {
    return fnv1a64(nlohmann::json(c).dump());
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    ExperimentConfig c = j.get<ExperimentConfig>();
    c.validate();
    return c;
}

inline void save_config(const std::string& path, const ExperimentConfig& c) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write config " + path);
    f << nlohmann::json(c).dump(2) << '\n';
}

}  // namespace depthfill::cli
