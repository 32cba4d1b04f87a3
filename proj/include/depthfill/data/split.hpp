#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "depthfill/core/errors.hpp"
#include "depthfill/core/rng.hpp"

namespace depthfill {

struct SplitManifest {
    std::vector<std::string> train_tiles;
    std::vector<std::string> test_tiles;
    std::uint64_t seed = 0;
    double ratio = 0.8;
};

// Location id used for per-location splitting: everything before the first
// underscore ("JAX_Tile_004" -> "JAX", "A_017" -> "A").
inline std::string default_location_of(const std::string& tile_id) {
    const auto pos = tile_id.find('_');
    return pos == std::string::npos ? tile_id : tile_id.substr(0, pos);
}

// Deterministic train/test partition, performed independently per location
// group so each location keeps the requested ratio within one tile.
inline SplitManifest split_dataset(
    const std::vector<std::string>& tile_ids, double ratio, std::uint64_t seed,
    const std::function<std::string(const std::string&)>& location_of = default_location_of) {
    if (tile_ids.empty()) throw EmptyDatasetError("no tiles to split");
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw ConfigError("split ratio must be in (0,1), got " + std::to_string(ratio));
    }

    std::map<std::string, std::vector<std::string>> groups;
    for (const auto& id : tile_ids) groups[location_of(id)].push_back(id);

    SplitManifest m;
    m.seed = seed;
    m.ratio = ratio;
    for (auto& [loc, ids] : groups) {
        std::sort(ids.begin(), ids.end());
        Rng rng(derive_seed(seed, "split:" + loc));
        rng.shuffle(ids.begin(), ids.end());
        auto n_train = static_cast<std::size_t>(
            std::llround(ratio * static_cast<double>(ids.size())));
        n_train = std::min(n_train, ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            (i < n_train ? m.train_tiles : m.test_tiles).push_back(ids[i]);
        }
    }
    std::sort(m.train_tiles.begin(), m.train_tiles.end());
    std::sort(m.test_tiles.begin(), m.test_tiles.end());
    return m;
}

inline nlohmann::json manifest_to_json(const SplitManifest& m) {
    return nlohmann::json{{"seed", m.seed},
                          {"ratio", m.ratio},
                          {"train_tiles", m.train_tiles},
                          {"test_tiles", m.test_tiles}};
}

inline std::uint64_t manifest_hash(const SplitManifest& m) {
    return fnv1a64(manifest_to_json(m).dump());
}

inline void save_manifest(const std::string& path, const SplitManifest& m) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write manifest " + path);
    nlohmann::json j = manifest_to_json(m);
    j["hash"] = manifest_hash(m);
    f << j.dump(2) << '\n';
}

inline SplitManifest load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open manifest " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("manifest " + path + ": " + e.what());
    }
    SplitManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.ratio = j.at("ratio").get<double>();
    m.train_tiles = j.at("train_tiles").get<std::vector<std::string>>();
    m.test_tiles = j.at("test_tiles").get<std::vector<std::string>>();
    if (j.contains("hash") && j["hash"].get<std::uint64_t>() != manifest_hash(m)) {
        throw ConsistencyError("manifest " + path + " failed its hash check");
    }
    return m;
}

}  // namespace depthfill
