#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "depthfill/core/errors.hpp"
#include "depthfill/core/rng.hpp"
#include "depthfill/core/tensor.hpp"
#include "depthfill/nn/activations.hpp"
#include "depthfill/nn/batchnorm.hpp"
#include "depthfill/nn/conv.hpp"
#include "depthfill/nn/module.hpp"

namespace depthfill::gan {

// RGB -> depth translation net: stride-2 conv encoder, mirrored up-conv
// decoder with per-level skip concatenation, tanh output. Noise z enters as
// dropout in the innermost decoder levels.
struct GeneratorConfig {
    int in_channels = 3;
    int out_channels = 1;
    int depth_levels = 8;
    int base_width = 64;
    int max_width = 512;
    int kernel = 4;
    int stride = 2;
    enum class NoiseMode { dropout, none };
    NoiseMode noise_mode = NoiseMode::dropout;
    double dropout_rate = 0.5;
    int dropout_levels = 3;
    double scale_factor = 1.0;

    int level_width(int i) const {
        const long long w = std::min<long long>(static_cast<long long>(base_width) << i, max_width);
        return std::max(1, static_cast<int>(std::llround(w * scale_factor)));
    }

    int spatial_divisor() const { return 1 << depth_levels; }

    void validate() const {
        if (in_channels < 1 || out_channels < 1 || depth_levels < 2 || base_width < 1 ||
            kernel != 4 || stride != 2 || !(scale_factor > 0.0 && scale_factor <= 1.0)) {
            throw ConfigError("invalid generator config");
        }
    }
};

inline void to_json(nlohmann::json& j, const GeneratorConfig& c) {
    j = nlohmann::json{{"in_channels", c.in_channels},
                       {"out_channels", c.out_channels},
                       {"depth_levels", c.depth_levels},
                       {"base_width", c.base_width},
                       {"max_width", c.max_width},
                       {"kernel", c.kernel},
                       {"stride", c.stride},
                       {"noise_mode", c.noise_mode == GeneratorConfig::NoiseMode::dropout
                                          ? "dropout"
                                          : "none"},
                       {"dropout_rate", c.dropout_rate},
                       {"dropout_levels", c.dropout_levels},
                       {"scale_factor", c.scale_factor}};
}

inline void from_json(const nlohmann::json& j, GeneratorConfig& c) {
    j.at("in_channels").get_to(c.in_channels);
    j.at("out_channels").get_to(c.out_channels);
    j.at("depth_levels").get_to(c.depth_levels);
    j.at("base_width").get_to(c.base_width);
    j.at("max_width").get_to(c.max_width);
    j.at("kernel").get_to(c.kernel);
    j.at("stride").get_to(c.stride);
    c.noise_mode = j.at("noise_mode").get<std::string>() == "none"
                       ? GeneratorConfig::NoiseMode::none
                       : GeneratorConfig::NoiseMode::dropout;
    j.at("dropout_rate").get_to(c.dropout_rate);
    j.at("dropout_levels").get_to(c.dropout_levels);
    j.at("scale_factor").get_to(c.scale_factor);
}

namespace detail {

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    const int B = a.dim(0), H = a.dim(2), W = a.dim(3);
    Tensor<T> out({B, a.dim(1) + b.dim(1), H, W});
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int n = 0; n < B; ++n) {
        for (int c = 0; c < a.dim(1); ++c)
            std::copy_n(&a.at(n, c, 0, 0), plane, &out.at(n, c, 0, 0));
        for (int c = 0; c < b.dim(1); ++c)
            std::copy_n(&b.at(n, c, 0, 0), plane, &out.at(n, a.dim(1) + c, 0, 0));
    }
    return out;
}

template <class T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, int first) {
    const int B = x.dim(0), H = x.dim(2), W = x.dim(3);
    Tensor<T> a({B, first, H, W}), b({B, x.dim(1) - first, H, W});
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    for (int n = 0; n < B; ++n) {
        for (int c = 0; c < first; ++c) std::copy_n(&x.at(n, c, 0, 0), plane, &a.at(n, c, 0, 0));
        for (int c = first; c < x.dim(1); ++c)
            std::copy_n(&x.at(n, c, 0, 0), plane, &b.at(n, c - first, 0, 0));
    }
    return {std::move(a), std::move(b)};
}

}  // namespace detail

template <class T>
class Generator {
public:
    explicit Generator(GeneratorConfig cfg, std::uint64_t noise_seed = 0)
        : cfg_(cfg), noise_rng_(derive_seed(noise_seed, "gen-noise")) {
        cfg_.validate();
        build();
    }

    const GeneratorConfig& config() const { return cfg_; }

    void init_random(std::uint64_t seed) {
        Rng rng(seed);
        for (auto& e : enc_) e.conv.init_gaussian(0.02, rng);
        for (auto& d : dec_) d.convt.init_gaussian(0.02, rng);
    }

    void reseed_noise(std::uint64_t seed) { noise_rng_ = Rng(derive_seed(seed, "gen-noise")); }

    Tensor<T> forward(const Tensor<T>& rgb, bool training, bool noise_on) {
        check_input(rgb);
        const int L = cfg_.depth_levels;
        const bool dropout_active =
            noise_on && cfg_.noise_mode == GeneratorConfig::NoiseMode::dropout;

        enc_out_.assign(static_cast<std::size_t>(L), Tensor<T>{});
        Tensor<T> h = rgb;
        for (int i = 0; i < L; ++i) {
            h = enc_[i].forward(h, training);
            enc_out_[i] = h;
        }
        for (int i = L - 1; i >= 0; --i) {
            if (i < L - 1) h = detail::concat_channels(h, enc_out_[i]);
            h = dec_[i].forward(h, training, dropout_active, noise_rng_);
        }
        return h;
    }

    // Gradient w.r.t. the rgb input; parameter gradients accumulate in place.
    Tensor<T> backward(const Tensor<T>& gout) {
        const int L = cfg_.depth_levels;
        std::vector<Tensor<T>> skip_grad(static_cast<std::size_t>(L));
        Tensor<T> g = gout;
        for (int i = 0; i < L; ++i) {
            g = dec_[i].backward(g);
            if (i < L - 1) {
                auto [gd, ge] = detail::split_channels(g, cfg_.level_width(i));
                g = std::move(gd);
                skip_grad[i] = std::move(ge);
            }
        }
        for (int i = L - 1; i >= 0; --i) {
            if (i < L - 1) {
                for (std::size_t k = 0; k < g.size(); ++k) g[k] += skip_grad[i][k];
            }
            g = enc_[i].backward(g);
        }
        return g;
    }

    nn::ParamRefs<T> params() {
        nn::ParamRefs<T> out;
        for (auto& e : enc_) e.collect(out);
        for (auto& d : dec_) d.collect(out);
        return out;
    }

    nn::StateRefs<T> state() {
        nn::StateRefs<T> out;
        for (auto& e : enc_) e.collect_state(out);
        for (auto& d : dec_) d.collect_state(out);
        return out;
    }

private:
    struct EncBlock {
        nn::Conv2d<T> conv;
        nn::BatchNorm2d<T> bn;
        nn::LeakyReLU<T> act{T(0.2)};
        bool has_bn = true;

        Tensor<T> forward(const Tensor<T>& x, bool training) {
            Tensor<T> h = conv.forward(x);
            if (has_bn) h = bn.forward(h, training);
            return act.forward(h);
        }
        Tensor<T> backward(const Tensor<T>& gy) {
            Tensor<T> g = act.backward(gy);
            if (has_bn) g = bn.backward(g);
            return conv.backward(g);
        }
        void collect(nn::ParamRefs<T>& out) {
            conv.collect(out);
            if (has_bn) bn.collect(out);
        }
        void collect_state(nn::StateRefs<T>& out) {
            if (has_bn) bn.collect_state(out);
        }
    };

    struct DecBlock {
        nn::ConvTranspose2d<T> convt;
        nn::BatchNorm2d<T> bn;
        nn::ReLU<T> act;
        nn::Tanh<T> tanh;
        nn::Dropout<T> dropout{0.5};
        bool outermost = false;
        bool use_dropout = false;

        Tensor<T> forward(const Tensor<T>& x, bool training, bool noise, Rng& rng) {
            Tensor<T> h = convt.forward(x);
            if (outermost) return tanh.forward(h);
            h = bn.forward(h, training);
            h = act.forward(h);
            return dropout.forward(h, use_dropout && noise, rng);
        }
        Tensor<T> backward(const Tensor<T>& gy) {
            if (outermost) return convt.backward(tanh.backward(gy));
            Tensor<T> g = dropout.backward(gy);
            g = act.backward(g);
            g = bn.backward(g);
            return convt.backward(g);
        }
        void collect(nn::ParamRefs<T>& out) {
            convt.collect(out);
            if (!outermost) bn.collect(out);
        }
        void collect_state(nn::StateRefs<T>& out) {
            if (!outermost) bn.collect_state(out);
        }
    };

    void build() {
        const int L = cfg_.depth_levels;
        const int k = cfg_.kernel, s = cfg_.stride, p = (cfg_.kernel - cfg_.stride) / 2;
        for (int i = 0; i < L; ++i) {
            EncBlock e;
            const int in_c = i == 0 ? cfg_.in_channels : cfg_.level_width(i - 1);
            e.conv = nn::Conv2d<T>("gen.enc" + std::to_string(i), in_c, cfg_.level_width(i), k, s, p);
            e.has_bn = (i != 0);
            if (e.has_bn) e.bn = nn::BatchNorm2d<T>("gen.enc" + std::to_string(i) + ".bn",
                                                    cfg_.level_width(i));
            enc_.push_back(std::move(e));
        }
        for (int i = 0; i < L; ++i) {
            DecBlock d;
            const bool innermost = (i == L - 1);
            const int in_c = innermost ? cfg_.level_width(i) : 2 * cfg_.level_width(i);
            const int out_c = i == 0 ? cfg_.out_channels : cfg_.level_width(i - 1);
            d.convt =
                nn::ConvTranspose2d<T>("gen.dec" + std::to_string(i), in_c, out_c, k, s, p);
            d.outermost = (i == 0);
            if (!d.outermost) {
                d.bn = nn::BatchNorm2d<T>("gen.dec" + std::to_string(i) + ".bn", out_c);
                d.use_dropout = (i >= L - cfg_.dropout_levels);
                d.dropout = nn::Dropout<T>(cfg_.dropout_rate);
            }
            dec_.push_back(std::move(d));
        }
    }

    void check_input(const Tensor<T>& rgb) const {
        if (rgb.ndim() != 4 || rgb.dim(1) != cfg_.in_channels) {
            throw ShapeError("generator: expected [B," + std::to_string(cfg_.in_channels) +
                             ",H,W] input, got " + rgb.shape_string());
        }
        const int d = cfg_.spatial_divisor();
        if (rgb.dim(2) % d != 0 || rgb.dim(3) % d != 0) {
            throw ShapeError("generator: spatial dims of " + rgb.shape_string() +
                             " must be divisible by " + std::to_string(d));
        }
    }

    GeneratorConfig cfg_;
    std::vector<EncBlock> enc_;
    std::vector<DecBlock> dec_;
    std::vector<Tensor<T>> enc_out_;
    Rng noise_rng_;
};

template <class T>
Generator<T> build_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
    Generator<T> g(cfg, seed);
    g.init_random(seed);
    return g;
}

// Deterministic unless noise is on; output bounded by the tanh head.
template <class T>
Tensor<T> generator_forward(Generator<T>& gen, const Tensor<T>& rgb, bool noise_on) {
    return gen.forward(rgb, /*training=*/false, noise_on);
}

}  // namespace depthfill::gan
