#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "depthfill/arm.hpp"
#include "depthfill/cli/config.hpp"
#include "depthfill/core/errors.hpp"
#include "depthfill/data/npy.hpp"
#include "depthfill/data/patches.hpp"
#include "depthfill/data/raster.hpp"
#include "depthfill/data/split.hpp"
#include "depthfill/data/toy.hpp"
#include "depthfill/eval/evaluate.hpp"
#include "depthfill/eval/panels.hpp"
#include "depthfill/gan/discriminator.hpp"
#include "depthfill/gan/generator.hpp"
#include "depthfill/seg/segnet.hpp"
#include "depthfill/train/checkpoint.hpp"
#include "depthfill/train/loops.hpp"

namespace depthfill::cli {

namespace fs = std::filesystem;

// One command per output root at a time.
class RunLock {
public:
    explicit RunLock(const std::string& output_root) {
        fs::create_directories(output_root);
        path_ = output_root + "/.depthfill.lock";
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) {
            throw LockError("output root " + output_root +
                            " is locked by another command (remove " + path_ +
                            " if that command died)");
        }
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
    }
    ~RunLock() {
        if (fd_ >= 0) {
            ::close(fd_);
            ::unlink(path_.c_str());
        }
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    std::string path_;
    int fd_ = -1;
};

// --- dataset discovery -------------------------------------------------------

inline std::vector<std::string> discover_tiles(const std::string& dataset_root) {
    if (!fs::is_directory(dataset_root)) {
        throw IoError("dataset root " + dataset_root + " is not a directory");
    }
    std::vector<std::string> ids;
    const std::string suffix = "_RGB.npy";
    for (const auto& entry : fs::directory_iterator(dataset_root)) {
        const std::string name = entry.path().filename().string();
        if (name.size() > suffix.size() &&
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
            ids.push_back(name.substr(0, name.size() - suffix.size()));
        }
    }
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw EmptyDatasetError("no *_RGB.npy rasters under " + dataset_root);
    for (const auto& id : ids) {
        for (const char* band : {"_DSM.npy", "_DTM.npy", "_GTL.npy"}) {
            if (!fs::exists(dataset_root + "/" + id + band)) {
                throw IoError("tile " + id + ": missing " + id + band);
            }
        }
    }
    return ids;
}

inline RasterTile load_tile_by_id(const std::string& dataset_root, const std::string& id) {
    const std::string base = dataset_root + "/" + id;
    return load_tile(base + "_RGB.npy", base + "_DSM.npy", base + "_DTM.npy", base + "_GTL.npy");
}

inline std::vector<RasterTile> load_tiles(const std::string& dataset_root,
                                          const std::vector<std::string>& ids) {
    std::vector<RasterTile> tiles;
    tiles.reserve(ids.size());
    for (const auto& id : ids) tiles.push_back(load_tile_by_id(dataset_root, id));
    return tiles;
}

inline std::vector<PatchSample> load_patches(const ExperimentConfig& cfg,
                                             const std::vector<std::string>& ids) {
    std::vector<PatchSample> out;
    for (const auto& id : ids) {
        const RasterTile tile = load_tile_by_id(cfg.dataset_root, id);
        const Tensor<float> ndsm = normalize_height(tile);
        auto patches = extract_patches(tile, ndsm, cfg.patch_size, cfg.depth_clip_max_m);
        for (auto& p : patches) out.push_back(std::move(p));
    }
    return out;
}

// --- run directory plumbing --------------------------------------------------

inline void write_history_csv(const std::string& path, const train::TrainState& state) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << "iter,epoch,lr";
    if (!state.history.empty()) {
        for (const auto& [k, v] : state.history.front().losses) f << ',' << k;
    }
    f << '\n';
    for (const auto& rec : state.history) {
        f << rec.iter << ',' << rec.epoch << ',';
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.10g", rec.lr);
        f << buf;
        for (const auto& [k, v] : rec.losses) {
            std::snprintf(buf, sizeof(buf), "%.10g", v);
            f << ',' << buf;
        }
        f << '\n';
    }
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline void write_run_config(const std::string& run_dir, const ExperimentConfig& cfg,
                             std::uint64_t manifest_hash_v, const nlohmann::json& extra) {
    nlohmann::json j{{"experiment", cfg},
                     {"config_hash", hash_hex(config_hash(cfg))},
                     {"manifest_hash", hash_hex(manifest_hash_v)}};
    j.update(extra);
    std::ofstream f(run_dir + "/config.json", std::ios::trunc);
    if (!f) throw IoError("cannot write run config in " + run_dir);
    f << j.dump(2) << '\n';
}

inline nlohmann::json read_run_config(const std::string& run_dir) {
    std::ifstream f(run_dir + "/config.json");
    if (!f) throw IoError("run directory " + run_dir + " has no config.json");
    nlohmann::json j;
    f >> j;
    return j;
}

// --- prepare -----------------------------------------------------------------

struct PrepareResult {
    SplitManifest manifest;
    bool already_prepared = false;
};

// Computes the normalized height rasters, writes the split manifest, and
// optionally materializes the patch cache. Re-running on unchanged data is a
// no-op; a changed dataset or split config fails the manifest hash check.
inline PrepareResult cmd_prepare(const ExperimentConfig& cfg, bool cache_patches = false) {
    cfg.validate();
    RunLock lock(cfg.output_root);

    const auto ids = discover_tiles(cfg.dataset_root);
    SplitManifest manifest =
        split_dataset(ids, cfg.split_ratio, cfg.derive("split"), default_location_of);

    const std::string manifest_path = cfg.output_root + "/manifest.json";
    PrepareResult result;
    if (fs::exists(manifest_path)) {
        const SplitManifest existing = load_manifest(manifest_path);
        if (manifest_hash(existing) != manifest_hash(manifest)) {
            throw ConsistencyError(
                "existing manifest does not match the dataset/split config; "
                "clear the output root to re-prepare");
        }
        result.already_prepared = true;
    }

    fs::create_directories(cfg.output_root + "/ndsm");
    for (const auto& id : ids) {
        const std::string ndsm_path = cfg.output_root + "/ndsm/" + id + ".npy";
        if (fs::exists(ndsm_path)) continue;
        const RasterTile tile = load_tile_by_id(cfg.dataset_root, id);
        npy_save(ndsm_path, normalize_height(tile));
    }

    if (cache_patches) {
        for (const auto& id : ids) {
            const std::string dir = cfg.output_root + "/patches/" + id;
            if (fs::exists(dir)) continue;
            fs::create_directories(dir);
            const RasterTile tile = load_tile_by_id(cfg.dataset_root, id);
            const Tensor<float> ndsm = normalize_height(tile);
            for (const auto& p : extract_patches(tile, ndsm, cfg.patch_size, cfg.depth_clip_max_m)) {
                char stem[64];
                std::snprintf(stem, sizeof(stem), "/r%05d_c%05d", p.origin_row, p.origin_col);
                npy_save(dir + stem + "_rgb.npy", p.rgb);
                npy_save(dir + stem + "_depth.npy", p.depth);
                npy_save(dir + stem + "_labels.npy", p.labels);
            }
        }
    }

    if (!result.already_prepared) save_manifest(manifest_path, manifest);
    result.manifest = std::move(manifest);
    return result;
}

// --- training ----------------------------------------------------------------

inline std::string seg_run_dir(const ExperimentConfig& cfg, Arm arm) {
    return cfg.output_root + "/runs/seg_" + arm_name(arm);
}

inline std::string gan_run_dir(const ExperimentConfig& cfg) {
    return cfg.output_root + "/runs/gan";
}

inline std::string cmd_train_seg(const ExperimentConfig& cfg, Arm arm) {
    cfg.validate();
    if (arm == Arm::rgb_synth_depth) {
        throw ConfigError("rgb_synth_depth is evaluated with the rgb_depth checkpoint; train "
                          "rgb_depth instead");
    }
    RunLock lock(cfg.output_root);
    const SplitManifest manifest = load_manifest(cfg.output_root + "/manifest.json");
    const std::uint64_t mhash = manifest_hash(manifest);
    const auto data = load_patches(cfg, manifest.train_tiles);

    seg::SegModelConfig mc;
    mc.in_channels = arm_in_channels(arm);
    mc.scale_factor = cfg.scale_factor;
    const std::uint64_t init_seed = cfg.derive("seg-init:" + std::string(arm_name(arm)));
    seg::SegNet<float> model = seg::build_segnet<float>(mc, {init_seed, ""});

    train::TrainConfig tc = cfg.seg;
    tc.arm = arm;
    tc.seed = cfg.derive("seg-train:" + std::string(arm_name(arm)));

    const std::string run_dir = seg_run_dir(cfg, arm);
    fs::create_directories(run_dir + "/checkpoints");
    write_run_config(run_dir, cfg, mhash,
                     {{"kind", "segnet"},
                      {"arm", arm_name(arm)},
                      {"init_seed", init_seed},
                      {"train_seed", tc.seed},
                      {"train", tc}});

    std::string final_ckpt;
    auto on_epoch = [&](int epoch, seg::SegNet<float>& m, const train::TrainState& st) {
        char name[64];
        std::snprintf(name, sizeof(name), "/checkpoints/epoch_%04d.dfck", epoch + 1);
        final_ckpt = run_dir + name;
        nlohmann::json meta{{"kind", "segnet"},
                            {"config", m.config()},
                            {"arm", arm_name(arm)},
                            {"epoch", epoch + 1},
                            {"seed", tc.seed},
                            {"manifest_hash", hash_hex(mhash)}};
        train::save_model_checkpoint<float>(final_ckpt, m, meta);
        write_history_csv(run_dir + "/history.csv", st);
    };

    train::train_segmentation(model, data, tc, on_epoch);

    std::ofstream f(run_dir + "/final.json", std::ios::trunc);
    f << nlohmann::json{{"final_checkpoint", final_ckpt}, {"epochs", cfg.seg.epochs}}.dump(2)
      << '\n';
    return run_dir;
}

inline std::string cmd_train_gan(const ExperimentConfig& cfg) {
    cfg.validate();
    RunLock lock(cfg.output_root);
    const SplitManifest manifest = load_manifest(cfg.output_root + "/manifest.json");
    const std::uint64_t mhash = manifest_hash(manifest);
    const auto data = load_patches(cfg, manifest.train_tiles);

    gan::GeneratorConfig gc;
    gc.depth_levels = cfg.gan_depth_levels;
    gc.base_width = cfg.gan_base_width;
    gc.scale_factor = cfg.scale_factor;
    gc.noise_mode = cfg.gan_noise_mode == "none" ? gan::GeneratorConfig::NoiseMode::none
                                                 : gan::GeneratorConfig::NoiseMode::dropout;
    gan::DiscriminatorConfig dc;
    dc.scale_factor = cfg.scale_factor;

    gan::Generator<float> gen = gan::build_generator<float>(gc, cfg.derive("gan-init-g"));
    gan::Discriminator<float> disc =
        gan::build_discriminator<float>(dc, cfg.derive("gan-init-d"));

    train::GanTrainConfig tc = cfg.gan;
    tc.seed = cfg.derive("gan-train");

    const std::string run_dir = gan_run_dir(cfg);
    fs::create_directories(run_dir + "/checkpoints");
    write_run_config(run_dir, cfg, mhash,
                     {{"kind", "gan"}, {"train_seed", tc.seed}, {"train", tc}});

    std::string final_gen, final_disc;
    auto on_epoch = [&](int epoch, gan::Generator<float>& g, gan::Discriminator<float>& d,
                        const train::TrainState& st) {
        char gname[64], dname[64];
        std::snprintf(gname, sizeof(gname), "/checkpoints/gen_epoch_%04d.dfck", epoch + 1);
        std::snprintf(dname, sizeof(dname), "/checkpoints/disc_epoch_%04d.dfck", epoch + 1);
        final_gen = run_dir + gname;
        final_disc = run_dir + dname;
        train::save_model_checkpoint<float>(final_gen, g,
                                            {{"kind", "generator"},
                                             {"config", g.config()},
                                             {"epoch", epoch + 1},
                                             {"seed", tc.seed},
                                             {"manifest_hash", hash_hex(mhash)}});
        train::save_model_checkpoint<float>(final_disc, d,
                                            {{"kind", "discriminator"},
                                             {"config", d.config()},
                                             {"epoch", epoch + 1},
                                             {"seed", tc.seed},
                                             {"manifest_hash", hash_hex(mhash)}});
        write_history_csv(run_dir + "/history.csv", st);
    };

    train::train_gan(gen, disc, data, tc, on_epoch);

    std::ofstream f(run_dir + "/final.json", std::ios::trunc);
    f << nlohmann::json{{"final_generator", final_gen},
                        {"final_discriminator", final_disc},
                        {"epochs", cfg.gan.epochs}}
             .dump(2)
      << '\n';
    return run_dir;
}

// --- checkpoint loading ------------------------------------------------------

inline std::string final_checkpoint(const std::string& run_dir, const char* key) {
    std::ifstream f(run_dir + "/final.json");
    if (!f) throw IoError("run " + run_dir + " has no final.json (training incomplete?)");
    nlohmann::json j;
    f >> j;
    return j.at(key).get<std::string>();
}

inline seg::SegNet<float> load_segnet(const std::string& ckpt_path, nlohmann::json* meta_out = nullptr) {
    auto archive_meta = train::load_archive<float>(ckpt_path).meta;
    if (archive_meta.value("kind", "") != "segnet") {
        throw CheckpointError(ckpt_path + " is not a segmentation checkpoint");
    }
    seg::SegNet<float> model(archive_meta.at("config").get<seg::SegModelConfig>());
    nlohmann::json meta = train::load_model_checkpoint<float>(ckpt_path, model);
    if (meta_out) *meta_out = meta;
    return model;
}

inline gan::Generator<float> load_generator(const std::string& ckpt_path,
                                            nlohmann::json* meta_out = nullptr) {
    auto archive_meta = train::load_archive<float>(ckpt_path).meta;
    if (archive_meta.value("kind", "") != "generator") {
        throw CheckpointError(ckpt_path + " is not a generator checkpoint");
    }
    gan::Generator<float> gen(archive_meta.at("config").get<gan::GeneratorConfig>());
    nlohmann::json meta = train::load_model_checkpoint<float>(ckpt_path, gen);
    if (meta_out) *meta_out = meta;
    return gen;
}

// --- inference ---------------------------------------------------------------

// Maps a directory of RGB rasters to synthetic depth rasters: a network-range
// [-1,1] band plus a meters-scale variant via the configured clip_max.
inline int cmd_infer_depth(const ExperimentConfig& cfg, const std::string& generator_ckpt,
                           const std::string& input_dir, const std::string& out_dir) {
    gan::Generator<float> gen = load_generator(generator_ckpt);
    if (gen.config().in_channels != 3) {
        throw ConfigError("generator checkpoint expects " +
                          std::to_string(gen.config().in_channels) + " input channels, not RGB");
    }
    fs::create_directories(out_dir);

    std::vector<std::string> ids;
    const std::string suffix = "_RGB.npy";
    for (const auto& entry : fs::directory_iterator(input_dir)) {
        const std::string name = entry.path().filename().string();
        if (name.size() > suffix.size() &&
            name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
            ids.push_back(name.substr(0, name.size() - suffix.size()));
        }
    }
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw EmptyDatasetError("no *_RGB.npy rasters under " + input_dir);

    for (const auto& id : ids) {
        Tensor<std::uint8_t> rgb_hw3 = npy_load<std::uint8_t>(input_dir + "/" + id + "_RGB.npy");
        if (rgb_hw3.ndim() != 3 || rgb_hw3.dim(2) != 3) {
            throw ShapeError(id + "_RGB.npy: expected [H,W,3] uint8");
        }
        const int H = rgb_hw3.dim(0), W = rgb_hw3.dim(1);
        Tensor<float> x({1, 3, H, W});
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < W; ++c)
                for (int b = 0; b < 3; ++b) x.at(0, b, r, c) = rgb_to_net(rgb_hw3.at(r, c, b));

        const Tensor<float> depth = gan::generator_forward(gen, x, /*noise_on=*/false);
        Tensor<float> net({H, W}), meters({H, W});
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < W; ++c) {
                net.at(r, c) = depth.at(0, 0, r, c);
                meters.at(r, c) = depth_net_to_meters(depth.at(0, 0, r, c), cfg.depth_clip_max_m);
            }
        npy_save(out_dir + "/" + id + "_SYNDEPTH.npy", net);
        npy_save(out_dir + "/" + id + "_SYNDEPTH_M.npy", meters);
    }
    return static_cast<int>(ids.size());
}

// --- evaluation --------------------------------------------------------------

struct EvalOptions {
    std::vector<Arm> arms;
    std::map<std::string, std::string> seg_run_override;  // arm name -> run dir
    std::string gan_run_override;
    int panels = 0;
};

// Evaluates the requested arms on the shared test split. Every checkpoint
// must have trained against the manifest currently on disk.
inline std::vector<eval::MetricsReport> cmd_evaluate(const ExperimentConfig& cfg,
                                                     const EvalOptions& opt) {
    cfg.validate();
    if (opt.arms.empty()) throw ConfigError("no arms requested");
    RunLock lock(cfg.output_root);
    const SplitManifest manifest = load_manifest(cfg.output_root + "/manifest.json");
    const std::string mhash = hash_hex(manifest_hash(manifest));
    const auto tiles = load_tiles(cfg.dataset_root, manifest.test_tiles);

    const std::string eval_dir = cfg.output_root + "/eval";
    fs::create_directories(eval_dir);

    auto run_dir_for = [&](Arm arm) {
        const Arm train_arm = arm == Arm::rgb_synth_depth ? Arm::rgb_depth : arm;
        auto it = opt.seg_run_override.find(arm_name(arm));
        return it != opt.seg_run_override.end() ? it->second : seg_run_dir(cfg, train_arm);
    };

    std::optional<gan::Generator<float>> gen;
    eval::DepthGenerator synth_fn;
    const bool need_gen =
        std::count(opt.arms.begin(), opt.arms.end(), Arm::rgb_synth_depth) > 0 || opt.panels > 0;
    if (need_gen) {
        const std::string gdir =
            opt.gan_run_override.empty() ? gan_run_dir(cfg) : opt.gan_run_override;
        nlohmann::json gmeta;
        gen.emplace(load_generator(final_checkpoint(gdir, "final_generator"), &gmeta));
        if (gmeta.value("manifest_hash", mhash) != mhash) {
            throw ConsistencyError("generator checkpoint was trained against a different split");
        }
        synth_fn = eval::make_depth_generator(*gen);
    }

    std::vector<eval::MetricsReport> reports;
    std::map<std::string, seg::SegNet<float>> models;  // keyed by training arm
    for (Arm arm : opt.arms) {
        const Arm train_arm = arm == Arm::rgb_synth_depth ? Arm::rgb_depth : arm;
        const std::string run_dir = run_dir_for(arm);
        const std::string ckpt = final_checkpoint(run_dir, "final_checkpoint");
        nlohmann::json meta;
        auto it = models.find(ckpt);
        if (it == models.end()) {
            seg::SegNet<float> m = load_segnet(ckpt, &meta);
            if (meta.value("arm", "") != std::string(arm_name(train_arm))) {
                throw ConfigError("checkpoint " + ckpt + " was trained for arm " +
                                  meta.value("arm", "?") + ", expected " + arm_name(train_arm));
            }
            if (meta.value("manifest_hash", mhash) != mhash) {
                throw ConsistencyError("checkpoint " + ckpt +
                                       " was trained against a different split manifest");
            }
            it = models.emplace(ckpt, std::move(m)).first;
        }
        auto predictor = eval::make_segnet_predictor(it->second);
        eval::MetricsReport rep =
            eval::evaluate_arm(predictor, tiles, arm, cfg.patch_size, cfg.depth_clip_max_m,
                               synth_fn ? &synth_fn : nullptr);
        std::ofstream f(eval_dir + "/metrics_" + rep.arm + ".json", std::ios::trunc);
        f << nlohmann::json(rep).dump(2) << '\n';
        reports.push_back(std::move(rep));
    }

    const eval::ComparisonTable table = eval::compare_runs(reports);
    {
        std::ofstream f(eval_dir + "/comparison.csv", std::ios::trunc);
        f << table.to_csv();
    }
    {
        std::ofstream f(eval_dir + "/comparison.txt", std::ios::trunc);
        f << table.to_text();
    }

    if (opt.panels > 0) {
        fs::create_directories(eval_dir + "/panels");
        for (int i = 0; i < std::min<int>(opt.panels, static_cast<int>(tiles.size())); ++i) {
            eval::PanelInputs panel;
            panel.tile = &tiles[static_cast<std::size_t>(i)];
            panel.clip_max = cfg.depth_clip_max_m;
            if (synth_fn) {
                panel.synth_depth = eval::synth_depth_for_tile(synth_fn, tiles[i], cfg.patch_size,
                                                               cfg.depth_clip_max_m);
            }
            for (Arm arm : opt.arms) {
                const std::string ckpt = final_checkpoint(run_dir_for(arm), "final_checkpoint");
                auto predictor = eval::make_segnet_predictor(models.at(ckpt));
                panel.predictions.emplace_back(
                    arm_name(arm),
                    eval::predict_tile(predictor, tiles[i], arm, cfg.patch_size,
                                       cfg.depth_clip_max_m, synth_fn ? &synth_fn : nullptr));
            }
            eval::write_panel(eval_dir + "/panels/" + tiles[i].tile_id + ".ppm", panel);
        }
    }
    return reports;
}

// Re-renders the comparison table from stored per-arm metrics.
inline eval::ComparisonTable cmd_report(const ExperimentConfig& cfg) {
    const std::string eval_dir = cfg.output_root + "/eval";
    std::vector<eval::MetricsReport> reports;
    if (fs::is_directory(eval_dir)) {
        std::vector<std::string> files;
        for (const auto& entry : fs::directory_iterator(eval_dir)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("metrics_", 0) == 0 && name.size() > 5 &&
                name.compare(name.size() - 5, 5, ".json") == 0) {
                files.push_back(entry.path().string());
            }
        }
        std::sort(files.begin(), files.end());
        for (const auto& path : files) {
            std::ifstream f(path);
            nlohmann::json j;
            f >> j;
            reports.push_back(j.get<eval::MetricsReport>());
        }
    }
    if (reports.empty()) throw EmptyEvalError("no stored metrics under " + eval_dir);
    const eval::ComparisonTable table = eval::compare_runs(reports);
    std::ofstream f(eval_dir + "/comparison.csv", std::ios::trunc);
    f << table.to_csv();
    std::ofstream t(eval_dir + "/comparison.txt", std::ios::trunc);
    t << table.to_text();
    return table;
}

}  // namespace depthfill::cli
