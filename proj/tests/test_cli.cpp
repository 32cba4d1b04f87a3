#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "depthfill/cli/commands.hpp"
#include "depthfill/cli/config.hpp"
#include "test_util.hpp"

using namespace depthfill;
using namespace depthfill::cli;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(const testutil::TempDir& dir, int tiles = 8) {
    ToyDatasetSpec spec;
    spec.tiles = tiles;
    spec.size = 64;
    spec.seed = 5;
    make_toy_dataset(dir.sub("data"), spec);

    ExperimentConfig cfg;
    cfg.dataset_root = dir.sub("data");
    cfg.output_root = dir.sub("out");
    cfg.master_seed = 99;
    cfg.patch_size = 32;
    cfg.scale_factor = 1.0 / 16.0;
    cfg.depth_clip_max_m = 30.0f;
    cfg.seg.epochs = 1;
    cfg.seg.batch_size = 4;
    cfg.gan.epochs = 1;
    cfg.gan.decay_start_epoch = 0;
    cfg.gan.batch_size = 4;
    cfg.gan_depth_levels = 2;
    cfg.gan_base_width = 8;
    return cfg;
}

std::uint64_t dir_fingerprint(const std::string& root) {
    std::uint64_t h = 1469598103934665603ull;
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        h ^= fnv1a64(f);
        h = h * 1099511628211ull + fnv1a64(bytes);
    }
    return h;
}

}  // namespace

TEST_CASE("toy dataset layout") {
    testutil::TempDir dir("toy");
    ToyDatasetSpec spec;
    spec.tiles = 6;
    spec.size = 64;
    spec.locations = 2;
    auto ids = make_toy_dataset(dir.sub("data"), spec);
    REQUIRE(ids.size() == 6);

    int a = 0, b = 0;
    for (const auto& id : ids) (id[0] == 'A' ? a : b)++;
    REQUIRE(a == 3);
    REQUIRE(b == 3);

    for (const auto& id : ids) {
        for (const char* band : {"_RGB.npy", "_DSM.npy", "_DTM.npy", "_GTL.npy"}) {
            REQUIRE(fs::exists(dir.sub("data/" + id + band)));
        }
        RasterTile tile = load_tile_by_id(dir.sub("data"), id);
        REQUIRE(tile.height() == 64);
        // scenes contain both classes
        int buildings = 0;
        for (std::size_t i = 0; i < tile.labels.size(); ++i) buildings += tile.labels[i];
        REQUIRE(buildings > 0);
        REQUIRE(buildings < 64 * 64);
    }

    SECTION("same seed regenerates identical tiles") {
        make_toy_dataset(dir.sub("data2"), spec);
        REQUIRE(dir_fingerprint(dir.sub("data")) != 0);
        auto fp1 = dir_fingerprint(dir.sub("data"));
        // regenerate into a third directory and compare raster payloads
        make_toy_dataset(dir.sub("data3"), spec);
        auto a3 = npy_load<float>(dir.sub("data3/A_000_DSM.npy"));
        auto a1 = npy_load<float>(dir.sub("data/A_000_DSM.npy"));
        for (std::size_t i = 0; i < a1.size(); ++i) REQUIRE(a1[i] == a3[i]);
        (void)fp1;
    }
}

TEST_CASE("prepare is idempotent and never mutates the dataset root") {
    testutil::TempDir dir("prep");
    auto cfg = tiny_config(dir);

    const auto before = dir_fingerprint(cfg.dataset_root);
    auto first = cmd_prepare(cfg);
    REQUIRE_FALSE(first.already_prepared);
    REQUIRE(first.manifest.train_tiles.size() + first.manifest.test_tiles.size() == 8);
    REQUIRE(fs::exists(cfg.output_root + "/manifest.json"));
    REQUIRE(fs::exists(cfg.output_root + "/ndsm"));

    auto second = cmd_prepare(cfg);
    REQUIRE(second.already_prepared);
    REQUIRE(manifest_hash(second.manifest) == manifest_hash(first.manifest));

    REQUIRE(dir_fingerprint(cfg.dataset_root) == before);

    SECTION("ndsm artifacts equal normalize_height output") {
        for (const auto& id : first.manifest.train_tiles) {
            auto cached = npy_load<float>(cfg.output_root + "/ndsm/" + id + ".npy");
            RasterTile tile = load_tile_by_id(cfg.dataset_root, id);
            auto computed = normalize_height(tile);
            for (std::size_t i = 0; i < cached.size(); ++i) REQUIRE(cached[i] == computed[i]);
        }
    }

    SECTION("a changed split config fails the manifest check") {
        ExperimentConfig other = cfg;
        other.master_seed = 12345;
        REQUIRE_THROWS_AS(cmd_prepare(other), ConsistencyError);
    }

    SECTION("missing band is reported with the tile name") {
        fs::remove(cfg.dataset_root + "/A_001_DTM.npy");
        try {
            cmd_prepare(cfg);
            FAIL("expected IoError");
        } catch (const IoError& e) {
            REQUIRE(std::string(e.what()).find("A_001") != std::string::npos);
        }
    }
}

TEST_CASE("patch cache matches on-the-fly extraction") {
    testutil::TempDir dir("cache");
    auto cfg = tiny_config(dir, 4);
    cmd_prepare(cfg, /*cache_patches=*/true);

    RasterTile tile = load_tile_by_id(cfg.dataset_root, "A_000");
    auto patches = extract_patches(tile, normalize_height(tile), cfg.patch_size,
                                   cfg.depth_clip_max_m);
    for (const auto& p : patches) {
        char stem[64];
        std::snprintf(stem, sizeof(stem), "/r%05d_c%05d", p.origin_row, p.origin_col);
        auto rgb = npy_load<float>(cfg.output_root + "/patches/A_000" + stem + "_rgb.npy");
        for (std::size_t i = 0; i < rgb.size(); ++i) REQUIRE(rgb[i] == p.rgb[i]);
        auto depth = npy_load<float>(cfg.output_root + "/patches/A_000" + stem + "_depth.npy");
        for (std::size_t i = 0; i < depth.size(); ++i) REQUIRE(depth[i] == p.depth[i]);
    }
}

TEST_CASE("output root lock rejects concurrent commands") {
    testutil::TempDir dir("lock");
    auto cfg = tiny_config(dir, 4);
    {
        RunLock lock(cfg.output_root);
        REQUIRE_THROWS_AS(cmd_prepare(cfg), LockError);
    }
    REQUIRE_FALSE(fs::exists(cfg.output_root + "/.depthfill.lock"));
    cmd_prepare(cfg);  // lock released, command goes through
}

TEST_CASE("config hash is stable and field-sensitive") {
    testutil::TempDir dir("hash");
    auto cfg = tiny_config(dir, 4);

    auto h1 = config_hash(cfg);
    auto h2 = config_hash(cfg);
    REQUIRE(h1 == h2);

    SECTION("round trip through disk preserves the hash") {
        save_config(dir.sub("cfg.json"), cfg);
        auto back = load_config(dir.sub("cfg.json"));
        REQUIRE(config_hash(back) == h1);
    }

    SECTION("every field change moves the hash") {
        auto mutate = cfg;
        mutate.master_seed += 1;
        REQUIRE(config_hash(mutate) != h1);
        mutate = cfg;
        mutate.patch_size = 16;
        REQUIRE(config_hash(mutate) != h1);
        mutate = cfg;
        mutate.seg.base_lr *= 2.0;
        REQUIRE(config_hash(mutate) != h1);
        mutate = cfg;
        mutate.gan.lambda = 50.0;
        REQUIRE(config_hash(mutate) != h1);
    }
}

TEST_CASE("mini pipeline end to end") {
    testutil::TempDir dir("mini");
    auto cfg = tiny_config(dir);
    cmd_prepare(cfg);

    const std::string rgb_run = cmd_train_seg(cfg, Arm::rgb_only);
    REQUIRE(fs::exists(rgb_run + "/history.csv"));
    REQUIRE(fs::exists(rgb_run + "/final.json"));
    REQUIRE(fs::exists(rgb_run + "/checkpoints/epoch_0001.dfck"));

    cmd_train_seg(cfg, Arm::rgb_depth);
    cmd_train_seg(cfg, Arm::partial_depth);
    const std::string gan_run = cmd_train_gan(cfg);
    REQUIRE(fs::exists(gan_run + "/checkpoints/gen_epoch_0001.dfck"));

    SECTION("training twice with the same arm is blocked only by the lock, not state") {
        cmd_train_seg(cfg, Arm::rgb_only);  // overwrites its run dir deterministically
    }

    SECTION("evaluate writes metrics, comparison table, and panels") {
        EvalOptions opt;
        opt.arms = {Arm::rgb_only, Arm::partial_depth, Arm::rgb_synth_depth, Arm::rgb_depth};
        opt.panels = 1;
        auto reports = cmd_evaluate(cfg, opt);
        REQUIRE(reports.size() == 4);
        REQUIRE(fs::exists(cfg.output_root + "/eval/metrics_rgb_only.json"));
        REQUIRE(fs::exists(cfg.output_root + "/eval/comparison.csv"));
        REQUIRE(fs::exists(cfg.output_root + "/eval/comparison.txt"));

        // four-row table in canonical order
        auto table = cmd_report(cfg);
        REQUIRE(table.rows.size() == 4);
        REQUIRE(table.rows[0].arm == "rgb_only");
        REQUIRE(table.rows[3].arm == "rgb_depth");

        // one panel per requested tile
        int panels = 0;
        for (const auto& e : fs::directory_iterator(cfg.output_root + "/eval/panels")) {
            panels += e.is_regular_file() ? 1 : 0;
        }
        REQUIRE(panels == 1);
    }

    SECTION("infer-depth writes both scalings deterministically") {
        const std::string gen_ckpt = final_checkpoint(gan_run, "final_generator");
        const int n = cmd_infer_depth(cfg, gen_ckpt, cfg.dataset_root, dir.sub("synth"));
        REQUIRE(n == 8);
        auto net = npy_load<float>(dir.sub("synth/A_000_SYNDEPTH.npy"));
        REQUIRE(net.shape() == std::vector<int>{64, 64});
        for (std::size_t i = 0; i < net.size(); ++i) {
            REQUIRE(net[i] >= -1.0f);
            REQUIRE(net[i] <= 1.0f);
        }
        auto meters = npy_load<float>(dir.sub("synth/A_000_SYNDEPTH_M.npy"));
        for (std::size_t i = 0; i < meters.size(); ++i) {
            REQUIRE(meters[i] == depth_net_to_meters(net[i], cfg.depth_clip_max_m));
        }

        cmd_infer_depth(cfg, gen_ckpt, cfg.dataset_root, dir.sub("synth2"));
        auto again = npy_load<float>(dir.sub("synth2/A_000_SYNDEPTH.npy"));
        for (std::size_t i = 0; i < net.size(); ++i) REQUIRE(again[i] == net[i]);
    }

    SECTION("evaluating against a different manifest is a ConsistencyError") {
        // retrain the split with another master seed in a fresh output root,
        // then point evaluation at the old checkpoints
        ExperimentConfig other = cfg;
        other.output_root = dir.sub("out2");
        other.master_seed = 1234;
        cmd_prepare(other);
        EvalOptions opt;
        opt.arms = {Arm::rgb_only};
        opt.seg_run_override["rgb_only"] = rgb_run;
        REQUIRE_THROWS_AS(cmd_evaluate(other, opt), ConsistencyError);
    }
}
