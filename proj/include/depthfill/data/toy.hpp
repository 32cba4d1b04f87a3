#pragma once

// Synthetic dataset generator. Scenes contain two kinds of rectangles that
// share one roof/pavement texture: "buildings" are extruded in the surface
// model and cast a shadow strip, "parking lots" stay at terrain height.
// Dark road strips and low tree blobs act as distractors, so footprints are
// ambiguous in RGB but unambiguous in depth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "depthfill/core/rng.hpp"
#include "depthfill/core/tensor.hpp"
#include "depthfill/data/npy.hpp"

namespace depthfill {

struct ToyDatasetSpec {
    int tiles = 40;
    int size = 256;
    std::uint64_t seed = 7;
    int locations = 2;

    int min_rects = 8, max_rects = 12;
    double building_fraction = 0.55;
    int min_rect = 24, max_rect = 56;
    double min_height_m = 6.0, max_height_m = 18.0;
    double tree_min_height_m = 1.5, tree_max_height_m = 4.0;
    double shadow_factor = 0.6;     // shadow length in px = h * factor / gsd
    double shadow_darkness = 0.72;  // multiplier on shadowed ground pixels
    double rgb_noise = 14.0;        // uniform per-pixel amplitude
    double dsm_noise_m = 0.25;
    int roads = 2;
    int trees = 6;
    float gsd = 0.5f;
};

namespace toy_detail {

struct Rect {
    int r0, c0, r1, c1;  // half-open
    bool building;
    double height_m;
};

inline bool overlaps(const Rect& a, const Rect& b, int margin) {
    return a.r0 - margin < b.r1 && b.r0 - margin < a.r1 && a.c0 - margin < b.c1 &&
           b.c0 - margin < a.c1;
}

inline std::uint8_t clamp_u8(double v) {
    return static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, v)));
}

}  // namespace toy_detail

struct ToyTile {
    Tensor<std::uint8_t> rgb_hw3;  // [H,W,3]
    Tensor<float> dsm, dtm;        // [H,W]
    Tensor<std::uint8_t> labels;   // [H,W]
};

inline ToyTile make_toy_tile(const ToyDatasetSpec& spec, Rng& rng) {
    using toy_detail::clamp_u8;
    const int S = spec.size;
    ToyTile t;
    t.rgb_hw3 = Tensor<std::uint8_t>({S, S, 3});
    t.dsm = Tensor<float>({S, S});
    t.dtm = Tensor<float>({S, S});
    t.labels = Tensor<std::uint8_t>({S, S});

    // gently varying terrain
    const double base_elev = rng.uniform(18.0, 35.0);
    const double amp = rng.uniform(2.0, 6.0);
    const double ph1 = rng.uniform(0.0, 2.0 * M_PI), ph2 = rng.uniform(0.0, 2.0 * M_PI);
    const double slope_r = rng.uniform(-0.01, 0.01), slope_c = rng.uniform(-0.01, 0.01);
    for (int r = 0; r < S; ++r) {
        for (int c = 0; c < S; ++c) {
            t.dtm.at(r, c) = static_cast<float>(
                base_elev + amp * std::sin(2.0 * M_PI * r / S + ph1) *
                                std::sin(2.0 * M_PI * c / S + ph2) +
                slope_r * r + slope_c * c);
        }
    }

    // ground texture
    const double gr = rng.uniform(85.0, 105.0), gg = rng.uniform(95.0, 115.0),
                 gb = rng.uniform(75.0, 95.0);
    const double mph1 = rng.uniform(0.0, 2.0 * M_PI), mph2 = rng.uniform(0.0, 2.0 * M_PI);
    std::vector<double> shade(static_cast<std::size_t>(S) * S, 1.0);
    for (int r = 0; r < S; ++r) {
        for (int c = 0; c < S; ++c) {
            const double mottle = 8.0 * std::sin(2.0 * M_PI * r / 37.0 + mph1) *
                                  std::sin(2.0 * M_PI * c / 41.0 + mph2);
            t.rgb_hw3.at(r, c, 0) = clamp_u8(gr + mottle + rng.uniform(-spec.rgb_noise, spec.rgb_noise));
            t.rgb_hw3.at(r, c, 1) = clamp_u8(gg + mottle + rng.uniform(-spec.rgb_noise, spec.rgb_noise));
            t.rgb_hw3.at(r, c, 2) = clamp_u8(gb + mottle + rng.uniform(-spec.rgb_noise, spec.rgb_noise));
        }
    }

    // rectangles: buildings and parking lots share the pavement texture
    std::vector<toy_detail::Rect> rects;
    const int want = rng.uniform_int(spec.min_rects, spec.max_rects);
    int tries = 0;
    while (static_cast<int>(rects.size()) < want && tries < 400) {
        ++tries;
        const int h = rng.uniform_int(spec.min_rect, spec.max_rect);
        const int w = rng.uniform_int(spec.min_rect, spec.max_rect);
        if (h + 4 >= S || w + 4 >= S) continue;
        const int r0 = rng.uniform_int(2, S - h - 2);
        const int c0 = rng.uniform_int(2, S - w - 2);
        toy_detail::Rect cand{r0, c0, r0 + h, c0 + w, rng.bernoulli(spec.building_fraction),
                              rng.uniform(spec.min_height_m, spec.max_height_m)};
        bool ok = true;
        for (const auto& other : rects) {
            if (toy_detail::overlaps(cand, other, 6)) {
                ok = false;
                break;
            }
        }
        if (ok) rects.push_back(cand);
    }

    for (const auto& rect : rects) {
        const double pave = rng.uniform(118.0, 152.0);
        for (int r = rect.r0; r < rect.r1; ++r) {
            for (int c = rect.c0; c < rect.c1; ++c) {
                const double v = pave + rng.uniform(-10.0, 10.0);
                t.rgb_hw3.at(r, c, 0) = clamp_u8(v);
                t.rgb_hw3.at(r, c, 1) = clamp_u8(v + rng.uniform(-4.0, 4.0));
                t.rgb_hw3.at(r, c, 2) = clamp_u8(v + rng.uniform(-4.0, 4.0));
                if (rect.building) t.labels.at(r, c) = 1;
            }
        }
        if (rect.building) {
            const int len = std::max(
                2, static_cast<int>(std::lround(rect.height_m * spec.shadow_factor / spec.gsd)));
            for (int r = rect.r1; r < std::min(S, rect.r1 + len); ++r) {
                for (int c = rect.c0; c < rect.c1; ++c) {
                    shade[static_cast<std::size_t>(r) * S + c] = spec.shadow_darkness;
                }
            }
        }
    }

    // distractor roads: dark strips with no height and no adjacency rule
    for (int i = 0; i < spec.roads; ++i) {
        const bool horizontal = rng.bernoulli(0.5);
        const int thickness = rng.uniform_int(4, 9);
        const int len = rng.uniform_int(S / 3, S - 2);
        const int r0 = rng.uniform_int(0, S - thickness - 1);
        const int c0 = rng.uniform_int(0, S - len - 1);
        const double dark = rng.uniform(0.66, 0.8);
        for (int a = 0; a < (horizontal ? thickness : len); ++a) {
            for (int b = 0; b < (horizontal ? len : thickness); ++b) {
                const int r = r0 + a, c = c0 + b;
                if (r < S && c < S && t.labels.at(r, c) == 0) {
                    shade[static_cast<std::size_t>(r) * S + c] =
                        std::min(shade[static_cast<std::size_t>(r) * S + c], dark);
                }
            }
        }
    }

    for (int r = 0; r < S; ++r) {
        for (int c = 0; c < S; ++c) {
            const double s = shade[static_cast<std::size_t>(r) * S + c];
            if (s < 1.0 && t.labels.at(r, c) == 0) {
                for (int b = 0; b < 3; ++b) {
                    t.rgb_hw3.at(r, c, b) =
                        clamp_u8(t.rgb_hw3.at(r, c, b) * s + rng.uniform(-3.0, 3.0));
                }
            }
        }
    }

    // height field: terrain + extrusions + low vegetation blobs
    for (int r = 0; r < S; ++r)
        for (int c = 0; c < S; ++c)
            t.dsm.at(r, c) =
                t.dtm.at(r, c) + static_cast<float>(rng.uniform(-spec.dsm_noise_m, spec.dsm_noise_m));
    for (const auto& rect : rects) {
        if (!rect.building) continue;
        for (int r = rect.r0; r < rect.r1; ++r)
            for (int c = rect.c0; c < rect.c1; ++c)
                t.dsm.at(r, c) = t.dtm.at(r, c) + static_cast<float>(rect.height_m +
                                                                     rng.uniform(-0.2, 0.2));
    }
    for (int i = 0; i < spec.trees; ++i) {
        const int radius = rng.uniform_int(2, 5);
        const int cr = rng.uniform_int(radius, S - radius - 1);
        const int cc = rng.uniform_int(radius, S - radius - 1);
        if (t.labels.at(cr, cc) == 1) continue;
        const double th = rng.uniform(spec.tree_min_height_m, spec.tree_max_height_m);
        for (int r = cr - radius; r <= cr + radius; ++r) {
            for (int c = cc - radius; c <= cc + radius; ++c) {
                const int dr = r - cr, dc = c - cc;
                if (dr * dr + dc * dc > radius * radius) continue;
                if (t.labels.at(r, c) == 1) continue;
                t.dsm.at(r, c) = std::max(t.dsm.at(r, c),
                                          t.dtm.at(r, c) + static_cast<float>(th));
                t.rgb_hw3.at(r, c, 0) = clamp_u8(55 + rng.uniform(-8.0, 8.0));
                t.rgb_hw3.at(r, c, 1) = clamp_u8(84 + rng.uniform(-8.0, 8.0));
                t.rgb_hw3.at(r, c, 2) = clamp_u8(52 + rng.uniform(-8.0, 8.0));
            }
        }
    }

    return t;
}

// Emits the documented dataset layout (<id>_RGB/_DSM/_DTM/_GTL .npy) with
// tiles spread round-robin over `locations` single-letter location groups.
inline std::vector<std::string> make_toy_dataset(const std::string& out_dir,
                                                 const ToyDatasetSpec& spec) {
    if (spec.tiles < 1 || spec.size < 64 || spec.locations < 1 || spec.locations > 26) {
        throw ConfigError("invalid toy dataset spec");
    }
    std::filesystem::create_directories(out_dir);
    std::vector<std::string> ids;
    for (int i = 0; i < spec.tiles; ++i) {
        const char loc = static_cast<char>('A' + i % spec.locations);
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%c_%03d", loc, i / spec.locations);
        const std::string id(buf);
        Rng rng(derive_seed(spec.seed, "tile:" + id));
        const ToyTile t = make_toy_tile(spec, rng);
        const std::string base = out_dir + "/" + id;
        npy_save(base + "_RGB.npy", t.rgb_hw3);
        npy_save(base + "_DSM.npy", t.dsm);
        npy_save(base + "_DTM.npy", t.dtm);
        npy_save(base + "_GTL.npy", t.labels);
        ids.push_back(id);
    }
    return ids;
}

}  // namespace depthfill
