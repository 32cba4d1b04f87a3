#include <catch2/catch_amalgamated.hpp>

#include "depthfill/nn/losses.hpp"
#include "depthfill/seg/segnet.hpp"
#include "test_util.hpp"

using namespace depthfill;
using namespace depthfill::seg;

TEST_CASE("segnet config") {
    SegModelConfig cfg;
    REQUIRE(cfg.num_stages() == 5);
    REQUIRE(cfg.total_convs() == 13);
    REQUIRE(cfg.spatial_divisor() == 32);

    SECTION("scaled widths") {
        cfg.scale_factor = 0.25;
        REQUIRE(cfg.stage_width(0) == 16);
        REQUIRE(cfg.stage_width(1) == 32);
        REQUIRE(cfg.stage_width(2) == 64);
        REQUIRE(cfg.stage_width(3) == 128);
        REQUIRE(cfg.stage_width(4) == 128);
    }

    SECTION("json round trip") {
        cfg.in_channels = 4;
        cfg.scale_factor = 0.5;
        nlohmann::json j = cfg;
        auto back = j.get<SegModelConfig>();
        REQUIRE(back.in_channels == 4);
        REQUIRE(back.scale_factor == 0.5);
        REQUIRE(back.encoder_spec == cfg.encoder_spec);
    }
}

TEST_CASE("build_segnet parameter shapes") {
    SECTION("3-channel first kernel at scale 1") {
        SegModelConfig cfg;
        SegNet<float> net = build_segnet<float>(cfg, {1, ""});
        auto params = net.params();
        REQUIRE(params.front()->name == "enc.s0.c0.weight");
        REQUIRE(params.front()->value.shape() == std::vector<int>{64, 3 * 3 * 3});
    }

    SECTION("4-channel input widens the first kernel only") {
        SegModelConfig cfg;
        cfg.in_channels = 4;
        SegNet<float> net = build_segnet<float>(cfg, {1, ""});
        REQUIRE(net.params().front()->value.shape() == std::vector<int>{64, 4 * 3 * 3});
    }
}

TEST_CASE("init_first_conv widens with the channel mean") {
    SECTION("identical slices copy through") {
        Tensor<double> w({2, 3, 3, 3});
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.7;
        auto out = init_first_conv(w, 1);
        REQUIRE(out.shape() == std::vector<int>{2, 4, 3, 3});
        for (int o = 0; o < 2; ++o)
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) REQUIRE(out.at(o, 3, r, c) == 0.7);
    }

    SECTION("hand value: mean of (0.3, 0.6, 0.9) is 0.6") {
        Tensor<double> w({1, 3, 1, 1});
        w.at(0, 0, 0, 0) = 0.3;
        w.at(0, 1, 0, 0) = 0.6;
        w.at(0, 2, 0, 0) = 0.9;
        auto out = init_first_conv(w, 1);
        REQUIRE(out.at(0, 3, 0, 0) == Catch::Approx(0.6).epsilon(1e-12));
    }

    SECTION("random kernel, two extra slices, element-wise mean oracle") {
        Rng rng(3);
        auto w = testutil::random_tensor<double>({4, 3, 3, 3}, rng);
        auto out = init_first_conv(w, 2);
        REQUIRE(out.shape() == std::vector<int>{4, 5, 3, 3});
        for (int o = 0; o < 4; ++o)
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) {
                    const double mean =
                        (w.at(o, 0, r, c) + w.at(o, 1, r, c) + w.at(o, 2, r, c)) / 3.0;
                    REQUIRE(out.at(o, 0, r, c) == w.at(o, 0, r, c));
                    REQUIRE(out.at(o, 3, r, c) == Catch::Approx(mean).epsilon(1e-12));
                    REQUIRE(out.at(o, 4, r, c) == Catch::Approx(mean).epsilon(1e-12));
                }
    }

    REQUIRE_THROWS_AS(init_first_conv(Tensor<double>({1, 3, 3, 3}), 0), InitError);
    REQUIRE_THROWS_AS(init_first_conv(Tensor<double>({1, 4, 3, 3}), 1), InitError);
}

TEST_CASE("seg_forward shape contract") {
    SegModelConfig cfg;
    cfg.scale_factor = 1.0 / 16.0;
    SegNet<float> net = build_segnet<float>(cfg, {7, ""});
    Rng rng(9);

    SECTION("output spatial dims equal input dims") {
        for (int size : {32, 64}) {
            auto x = testutil::random_tensor<float>({1, 3, size, size}, rng);
            auto logits = seg_forward(net, x);
            REQUIRE(logits.shape() == std::vector<int>{1, 2, size, size});
        }
        auto x = testutil::random_tensor<float>({2, 3, 32, 64}, rng);
        REQUIRE(seg_forward(net, x).shape() == std::vector<int>{2, 2, 32, 64});
    }

    SECTION("indivisible dims are a ShapeError") {
        auto x = testutil::random_tensor<float>({1, 3, 50, 50}, rng);
        REQUIRE_THROWS_AS(seg_forward(net, x), ShapeError);
    }

    SECTION("channel mismatch is a ShapeError") {
        auto x = testutil::random_tensor<float>({1, 4, 32, 32}, rng);
        REQUIRE_THROWS_AS(seg_forward(net, x), ShapeError);
    }
}

TEST_CASE("pretrained encoder loading") {
    SegModelConfig cfg;
    cfg.scale_factor = 1.0 / 16.0;
    cfg.in_channels = 4;
    SegNet<float> net(cfg);
    net.init_random(3);

    // build a fake pretrained archive for the 3-channel encoder
    std::map<std::string, Tensor<float>> archive;
    Rng rng(5);
    SegModelConfig ref_cfg = cfg;
    ref_cfg.in_channels = 3;
    SegNet<float> ref(ref_cfg);
    ref.init_random(11);
    for (auto* p : ref.params()) {
        if (p->name.rfind("enc.", 0) != 0) continue;
        if (p->name.find(".bn.") != std::string::npos) continue;
        Tensor<float> t = p->value;
        if (p->name.find(".weight") != std::string::npos) {
            // stored as [O,C,k,k]
            const int out_c = t.dim(0);
            const int in_ckk = t.dim(1);
            Tensor<float> w4({out_c, in_ckk / 9, 3, 3});
            for (std::size_t i = 0; i < t.size(); ++i) w4[i] = t[i];
            archive.emplace(p->name, std::move(w4));
        } else {
            archive.emplace(p->name, std::move(t));
        }
    }

    SECTION("first conv is widened by the rgb mean, others copied") {
        net.load_pretrained_encoder(archive);
        auto params = net.params();
        REQUIRE(params.front()->name == "enc.s0.c0.weight");
        const auto& w = params.front()->value;  // [4, 4*9] flat
        const auto& src = archive.at("enc.s0.c0.weight");
        for (int o = 0; o < w.dim(0); ++o) {
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) {
                    const float mean =
                        (src.at(o, 0, r, c) + src.at(o, 1, r, c) + src.at(o, 2, r, c)) / 3.0f;
                    REQUIRE(w[static_cast<std::size_t>(o) * 36 + 3 * 9 + r * 3 + c] ==
                            Catch::Approx(mean));
                }
        }
    }

    SECTION("shape mismatch beyond the first conv fails loudly") {
        auto bad = archive;
        bad["enc.s1.c0.weight"] = Tensor<float>({1, 1, 3, 3});
        REQUIRE_THROWS_AS(net.load_pretrained_encoder(bad), InitError);
    }

    SECTION("missing tensors fail loudly") {
        auto bad = archive;
        bad.erase("enc.s2.c1.weight");
        REQUIRE_THROWS_AS(net.load_pretrained_encoder(bad), InitError);
    }
}

TEST_CASE("segnet can take a training step that lowers the loss") {
    SegModelConfig cfg;
    cfg.scale_factor = 1.0 / 16.0;
    SegNet<double> net = build_segnet<double>(cfg, {13, ""});
    Rng rng(17);
    auto x = testutil::random_tensor<double>({2, 3, 32, 32}, rng);
    Tensor<std::uint8_t> labels({2, 32, 32});
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = rng.bernoulli(0.3) ? 1 : 0;

    auto params = net.params();
    double first_loss = 0.0, last_loss = 0.0;
    for (int step = 0; step < 8; ++step) {
        auto logits = net.forward(x, true);
        auto lv = nn::nll_segmentation_loss_with_grad(logits, labels);
        if (step == 0) first_loss = lv.value;
        last_loss = lv.value;
        nn::zero_grads(params);
        net.backward(lv.grad);
        for (auto* p : params) {
            for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] -= 0.5 * p->grad[i];
        }
    }
    REQUIRE(last_loss < first_loss);
}
