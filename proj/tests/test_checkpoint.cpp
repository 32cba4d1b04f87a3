#include <catch2/catch_amalgamated.hpp>

#include "depthfill/gan/generator.hpp"
#include "depthfill/seg/segnet.hpp"
#include "depthfill/train/checkpoint.hpp"
#include "depthfill/train/loops.hpp"
#include "test_util.hpp"

using namespace depthfill;
using namespace depthfill::train;

TEST_CASE("archive round trip") {
    testutil::TempDir dir("archive");
    Rng rng(1);
    std::map<std::string, Tensor<float>> tensors;
    tensors["a.weight"] = testutil::random_tensor<float>({3, 4}, rng);
    tensors["b.bias"] = testutil::random_tensor<float>({7}, rng);

    save_archive<float>(dir.sub("x.dfck"), {{"kind", "test"}, {"epoch", 3}}, tensors);
    auto back = load_archive<float>(dir.sub("x.dfck"));
    REQUIRE(back.meta.at("kind") == "test");
    REQUIRE(back.meta.at("epoch") == 3);
    REQUIRE(back.tensors.size() == 2);
    for (const auto& [name, t] : tensors) {
        REQUIRE(back.tensors.at(name).shape() == t.shape());
        for (std::size_t i = 0; i < t.size(); ++i) REQUIRE(back.tensors.at(name)[i] == t[i]);
    }

    SECTION("dtype mismatch fails loudly") {
        REQUIRE_THROWS_AS(load_archive<double>(dir.sub("x.dfck")), CheckpointError);
    }
    SECTION("garbage file fails loudly") {
        std::ofstream f(dir.sub("junk.dfck"), std::ios::binary);
        f << "not an archive at all";
        f.close();
        REQUIRE_THROWS_AS(load_archive<float>(dir.sub("junk.dfck")), CheckpointError);
    }
}

TEST_CASE("model checkpoints restore parameters and running stats") {
    testutil::TempDir dir("ckpt");
    seg::SegModelConfig cfg;
    cfg.scale_factor = 1.0 / 16.0;
    seg::SegNet<float> net = seg::build_segnet<float>(cfg, {5, ""});

    // push the running stats away from the defaults
    Rng rng(7);
    auto x = testutil::random_tensor<float>({2, 3, 32, 32}, rng);
    net.forward(x, true);

    const std::string path = dir.sub("seg.dfck");
    save_model_checkpoint<float>(path, net, {{"kind", "segnet"}, {"config", cfg}, {"epoch", 1}});

    seg::SegNet<float> restored(cfg);
    auto meta = load_model_checkpoint<float>(path, restored);
    REQUIRE(meta.at("kind") == "segnet");

    auto logits_a = seg::seg_forward(net, x);
    auto logits_b = seg::seg_forward(restored, x);
    for (std::size_t i = 0; i < logits_a.size(); ++i) REQUIRE(logits_a[i] == logits_b[i]);

    SECTION("shape mismatch on load fails loudly") {
        seg::SegModelConfig other = cfg;
        other.scale_factor = 0.25;
        seg::SegNet<float> wrong(other);
        REQUIRE_THROWS_AS(load_model_checkpoint<float>(path, wrong), CheckpointError);
    }

    SECTION("missing tensor fails loudly") {
        auto archive = load_archive<float>(path);
        archive.tensors.erase("enc.s0.c0.weight");
        nlohmann::json meta2 = archive.meta;
        nlohmann::json params = nlohmann::json::array();
        for (const auto& [name, t] : archive.tensors)
            params.push_back({{"name", name}, {"shape", t.shape()}});
        meta2["params"] = params;
        meta2.erase("dtype");
        save_archive<float>(dir.sub("broken.dfck"), meta2, archive.tensors);
        seg::SegNet<float> target(cfg);
        REQUIRE_THROWS_AS(load_model_checkpoint<float>(dir.sub("broken.dfck"), target),
                          CheckpointError);
    }
}

TEST_CASE("resuming from an epoch checkpoint reproduces the next iteration") {
    testutil::TempDir dir("resume");

    // learnable little dataset
    Rng rng(3);
    std::vector<PatchSample> data;
    for (int i = 0; i < 8; ++i) {
        PatchSample p;
        p.depth_present = true;
        p.rgb = testutil::random_tensor<float>({3, 32, 32}, rng);
        p.depth = testutil::random_tensor<float>({1, 32, 32}, rng);
        p.labels = Tensor<std::uint8_t>({32, 32});
        for (std::size_t k = 0; k < p.labels.size(); ++k) p.labels[k] = rng.bernoulli(0.4);
        data.push_back(std::move(p));
    }

    seg::SegModelConfig mc;
    mc.in_channels = 4;
    mc.scale_factor = 1.0 / 16.0;

    train::TrainConfig tc;
    tc.arm = Arm::rgb_depth;
    tc.batch_size = 4;
    tc.epochs = 3;
    tc.seed = 41;

    // full run, checkpoint after epoch 2, remember epoch-3 losses
    auto full = seg::build_segnet<float>(mc, {21, ""});
    std::string ckpt;
    std::vector<double> epoch3_losses;
    auto cb = [&](int epoch, seg::SegNet<float>& m, const train::TrainState&) {
        if (epoch == 1) {
            ckpt = dir.sub("epoch2.dfck");
            save_model_checkpoint<float>(ckpt, m, {{"kind", "segnet"}, {"config", mc}});
        }
    };
    auto full_state = train_segmentation(full, data, tc, cb);
    for (const auto& rec : full_state.history) {
        if (rec.epoch == 2) epoch3_losses.push_back(rec.losses[0].second);
    }
    REQUIRE_FALSE(epoch3_losses.empty());

    // resume from the checkpoint
    seg::SegNet<float> resumed(mc);
    load_model_checkpoint<float>(ckpt, resumed);
    train::TrainConfig rc = tc;
    rc.start_epoch = 2;
    auto resumed_state = train_segmentation(resumed, data, rc);
    REQUIRE(resumed_state.history.size() == epoch3_losses.size());
    // first resumed loss depends only on restored parameters (the optimizer
    // update happens after it), so it matches within float round-off
    REQUIRE(resumed_state.history.front().losses[0].second ==
            Catch::Approx(epoch3_losses.front()).epsilon(1e-6));
}
