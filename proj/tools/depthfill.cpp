// depthfill: data preparation, the four training/evaluation arms, RGB->depth
// translation, and Table-style reporting, all driven by one JSON config.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "depthfill/arm.hpp"
#include "depthfill/cli/commands.hpp"
#include "depthfill/cli/config.hpp"
#include "depthfill/data/toy.hpp"

namespace {

struct GlobalFlags {
    std::string config_path;
    std::int64_t seed = -1;
    bool deterministic = false;
    double scale = -1.0;
};

depthfill::cli::ExperimentConfig resolve_config(const GlobalFlags& g) {
    if (g.config_path.empty()) {
        throw depthfill::ConfigError("--config <path> is required for this command");
    }
    auto cfg = depthfill::cli::load_config(g.config_path);
    if (g.seed >= 0) cfg.master_seed = static_cast<std::uint64_t>(g.seed);
    if (g.deterministic) cfg.deterministic = true;
    if (g.scale > 0.0) cfg.scale_factor = g.scale;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"building-footprint segmentation with GAN-synthesized depth"};
    app.require_subcommand(1);

    GlobalFlags g;
    app.add_option("--config", g.config_path, "experiment config JSON");
    app.add_option("--seed", g.seed, "override the master seed");
    app.add_flag("--deterministic", g.deterministic, "single-stream, seed-ordered execution");
    app.add_option("--scale", g.scale, "override the model scale factor");

    auto* prepare = app.add_subcommand("prepare", "validate tiles, write nDSM + split manifest");
    bool cache_patches = false;
    prepare->add_flag("--cache-patches", cache_patches, "materialize the patch cache");

    auto* train_seg = app.add_subcommand("train-seg", "train one segmentation arm");
    std::string arm_str;
    train_seg->add_option("--arm", arm_str, "rgb_only | rgb_depth | partial_depth")->required();

    auto* train_gan = app.add_subcommand("train-gan", "train the RGB->depth translation GAN");

    auto* infer = app.add_subcommand("infer-depth", "generate synthetic depth rasters");
    std::string gen_ckpt, infer_in, infer_out;
    infer->add_option("--checkpoint", gen_ckpt, "generator checkpoint")->required();
    infer->add_option("--input", infer_in, "directory of *_RGB.npy rasters")->required();
    infer->add_option("--out", infer_out, "output directory")->required();

    auto* evaluate = app.add_subcommand("evaluate", "evaluate arms on the test split");
    std::string arms_csv = "rgb_only,partial_depth,rgb_synth_depth,rgb_depth";
    int panels = 0;
    evaluate->add_option("--arms", arms_csv, "comma-separated arm list");
    evaluate->add_option("--panels", panels, "write N qualitative panels");

    auto* report = app.add_subcommand("report", "re-render the comparison table");

    auto* toy = app.add_subcommand("make-toy-dataset", "emit the synthetic dataset");
    depthfill::ToyDatasetSpec toy_spec;
    std::string toy_out;
    toy->add_option("--out", toy_out, "output directory")->required();
    toy->add_option("--tiles", toy_spec.tiles, "number of tiles (default 40)");
    toy->add_option("--size", toy_spec.size, "tile size in pixels (default 256)");
    toy->add_option("--toy-seed", toy_spec.seed, "generator seed (default 7)");
    toy->add_option("--locations", toy_spec.locations, "number of location groups (default 2)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (prepare->parsed()) {
            auto cfg = resolve_config(g);
            auto result = depthfill::cli::cmd_prepare(cfg, cache_patches);
            if (result.already_prepared) {
                std::cout << "up to date: manifest unchanged ("
                          << result.manifest.train_tiles.size() << " train / "
                          << result.manifest.test_tiles.size() << " test tiles)\n";
            } else {
                std::cout << "prepared " << result.manifest.train_tiles.size() << " train / "
                          << result.manifest.test_tiles.size() << " test tiles\n";
            }
        } else if (train_seg->parsed()) {
            auto cfg = resolve_config(g);
            const auto arm = depthfill::arm_from_string(arm_str);
            std::cout << "run directory: " << depthfill::cli::cmd_train_seg(cfg, arm) << "\n";
        } else if (train_gan->parsed()) {
            auto cfg = resolve_config(g);
            std::cout << "run directory: " << depthfill::cli::cmd_train_gan(cfg) << "\n";
        } else if (infer->parsed()) {
            auto cfg = resolve_config(g);
            const int n = depthfill::cli::cmd_infer_depth(cfg, gen_ckpt, infer_in, infer_out);
            std::cout << "wrote synthetic depth for " << n << " rasters to " << infer_out << "\n";
        } else if (evaluate->parsed()) {
            auto cfg = resolve_config(g);
            depthfill::cli::EvalOptions opt;
            opt.panels = panels;
            std::string token;
            for (char c : arms_csv + ",") {
                if (c == ',') {
                    if (!token.empty()) opt.arms.push_back(depthfill::arm_from_string(token));
                    token.clear();
                } else {
                    token += c;
                }
            }
            auto reports = depthfill::cli::cmd_evaluate(cfg, opt);
            std::cout << depthfill::eval::compare_runs(reports).to_text();
        } else if (report->parsed()) {
            auto cfg = resolve_config(g);
            std::cout << depthfill::cli::cmd_report(cfg).to_text();
        } else if (toy->parsed()) {
            const auto ids = depthfill::make_toy_dataset(toy_out, toy_spec);
            std::cout << "wrote " << ids.size() << " tiles to " << toy_out << "\n";
        }
    } catch (const depthfill::Error& e) {
        std::cerr << nlohmann::json{{"error", e.kind()}, {"message", e.what()}}.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << nlohmann::json{{"error", "InternalError"}, {"message", e.what()}}.dump()
                  << "\n";
        return 2;
    }
    return 0;
}
