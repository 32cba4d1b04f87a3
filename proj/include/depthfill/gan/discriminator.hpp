#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "depthfill/core/errors.hpp"
#include "depthfill/core/rng.hpp"
#include "depthfill/core/tensor.hpp"
#include "depthfill/gan/generator.hpp"
#include "depthfill/nn/activations.hpp"
#include "depthfill/nn/batchnorm.hpp"
#include "depthfill/nn/conv.hpp"
#include "depthfill/nn/module.hpp"

namespace depthfill::gan {

// Patch discriminator: a small conv stack whose 1-channel output map holds
// one real/fake score per overlapping input patch. With the defaults the
// receptive field is 70 px at output stride 8.
struct DiscriminatorConfig {
    int in_channels = 4;
    int base_width = 64;
    int max_width = 512;
    int n_stride2_blocks = 3;
    int kernel = 4;
    int padding = 1;
    double scale_factor = 1.0;

    int block_width(int i) const {
        const long long w = std::min<long long>(static_cast<long long>(base_width) << i, max_width);
        return std::max(1, static_cast<int>(std::llround(w * scale_factor)));
    }

    // (kernel, stride) per conv in forward order: n stride-2 blocks, one
    // stride-1 block, the 1-channel head.
    std::vector<std::pair<int, int>> layer_geometry() const {
        std::vector<std::pair<int, int>> g;
        for (int i = 0; i < n_stride2_blocks; ++i) g.emplace_back(kernel, 2);
        g.emplace_back(kernel, 1);
        g.emplace_back(kernel, 1);
        return g;
    }

    std::pair<int, int> score_map_dims(int H, int W) const {
        for (const auto& [k, s] : layer_geometry()) {
            H = (H + 2 * padding - k) / s + 1;
            W = (W + 2 * padding - k) / s + 1;
            if (H <= 0 || W <= 0) {
                throw ShapeError("discriminator input too small for its layer stack");
            }
        }
        return {H, W};
    }

    int receptive_field() const {
        int rf = 1, jump = 1;
        for (const auto& [k, s] : layer_geometry()) {
            rf += (k - 1) * jump;
            jump *= s;
        }
        return rf;
    }

    int output_stride() const {
        int jump = 1;
        for (const auto& [k, s] : layer_geometry()) jump *= s;
        return jump;
    }

    // Input-pixel interval [lo,hi] a given score-map position depends on
    // (may extend past the borders where padding contributed).
    std::pair<int, int> input_window(int out_row) const {
        int lo = out_row, hi = out_row;
        const auto geom = layer_geometry();
        for (auto it = geom.rbegin(); it != geom.rend(); ++it) {
            lo = lo * it->second - padding;
            hi = hi * it->second - padding + it->first - 1;
        }
        return {lo, hi};
    }

    void validate() const {
        if (in_channels < 1 || base_width < 1 || n_stride2_blocks < 1 || kernel != 4 ||
            padding < 0 || !(scale_factor > 0.0 && scale_factor <= 1.0)) {
            throw ConfigError("invalid discriminator config");
        }
    }
};

inline void to_json(nlohmann::json& j, const DiscriminatorConfig& c) {
    j = nlohmann::json{{"in_channels", c.in_channels},   {"base_width", c.base_width},
                       {"max_width", c.max_width},       {"n_stride2_blocks", c.n_stride2_blocks},
                       {"kernel", c.kernel},             {"padding", c.padding},
                       {"scale_factor", c.scale_factor}};
}

inline void from_json(const nlohmann::json& j, DiscriminatorConfig& c) {
    j.at("in_channels").get_to(c.in_channels);
    j.at("base_width").get_to(c.base_width);
    j.at("max_width").get_to(c.max_width);
    j.at("n_stride2_blocks").get_to(c.n_stride2_blocks);
    j.at("kernel").get_to(c.kernel);
    j.at("padding").get_to(c.padding);
    j.at("scale_factor").get_to(c.scale_factor);
}

template <class T>
class Discriminator {
public:
    explicit Discriminator(DiscriminatorConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        build();
    }

    const DiscriminatorConfig& config() const { return cfg_; }

    void init_random(std::uint64_t seed) {
        Rng rng(seed);
        for (auto& b : blocks_) b.conv.init_gaussian(0.02, rng);
    }

    // Raw per-patch scores; the losses apply the sigmoid.
    Tensor<T> forward(const Tensor<T>& stacked, bool training) {
        if (stacked.ndim() != 4 || stacked.dim(1) != cfg_.in_channels) {
            throw ShapeError("discriminator: expected [B," + std::to_string(cfg_.in_channels) +
                             ",H,W] input, got " + stacked.shape_string());
        }
        cfg_.score_map_dims(stacked.dim(2), stacked.dim(3));  // size guard
        Tensor<T> h = stacked;
        for (auto& b : blocks_) h = b.forward(h, training);
        return h;
    }

    Tensor<T> backward(const Tensor<T>& gscores) {
        Tensor<T> g = gscores;
        for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
        return g;
    }

    nn::ParamRefs<T> params() {
        nn::ParamRefs<T> out;
        for (auto& b : blocks_) b.collect(out);
        return out;
    }

    nn::StateRefs<T> state() {
        nn::StateRefs<T> out;
        for (auto& b : blocks_) b.collect_state(out);
        return out;
    }

private:
    struct Block {
        nn::Conv2d<T> conv;
        nn::BatchNorm2d<T> bn;
        nn::LeakyReLU<T> act{T(0.2)};
        bool has_bn = false;
        bool has_act = true;

        Tensor<T> forward(const Tensor<T>& x, bool training) {
            Tensor<T> h = conv.forward(x);
            if (has_bn) h = bn.forward(h, training);
            if (has_act) h = act.forward(h);
            return h;
        }
        Tensor<T> backward(const Tensor<T>& gy) {
            Tensor<T> g = gy;
            if (has_act) g = act.backward(g);
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

    void build() {
        const int k = cfg_.kernel, p = cfg_.padding;
        int in_c = cfg_.in_channels;
        for (int i = 0; i < cfg_.n_stride2_blocks; ++i) {
            Block b;
            b.conv = nn::Conv2d<T>("disc.b" + std::to_string(i), in_c, cfg_.block_width(i), k, 2, p);
            b.has_bn = (i != 0);
            if (b.has_bn) {
                b.bn = nn::BatchNorm2d<T>("disc.b" + std::to_string(i) + ".bn", cfg_.block_width(i));
            }
            in_c = cfg_.block_width(i);
            blocks_.push_back(std::move(b));
        }
        {
            Block b;
            const int w = cfg_.block_width(cfg_.n_stride2_blocks);
            b.conv = nn::Conv2d<T>("disc.b" + std::to_string(cfg_.n_stride2_blocks), in_c, w, k, 1, p);
            b.has_bn = true;
            b.bn = nn::BatchNorm2d<T>("disc.b" + std::to_string(cfg_.n_stride2_blocks) + ".bn", w);
            in_c = w;
            blocks_.push_back(std::move(b));
        }
        {
            Block head;
            head.conv = nn::Conv2d<T>("disc.head", in_c, 1, k, 1, p);
            head.has_bn = false;
            head.has_act = false;
            blocks_.push_back(std::move(head));
        }
    }

    DiscriminatorConfig cfg_;
    std::vector<Block> blocks_;
};

template <class T>
Discriminator<T> build_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) {
    Discriminator<T> d(cfg);
    d.init_random(seed);
    return d;
}

template <class T>
Tensor<T> channel_stack(const Tensor<T>& rgb, const Tensor<T>& depth) {
    if (rgb.dim(0) != depth.dim(0) || rgb.dim(2) != depth.dim(2) || rgb.dim(3) != depth.dim(3)) {
        throw ShapeError("channel stack: rgb " + rgb.shape_string() + " and depth " +
                         depth.shape_string() + " are not spatially aligned");
    }
    return detail::concat_channels(rgb, depth);
}

template <class T>
Tensor<T> discriminator_forward(Discriminator<T>& disc, const Tensor<T>& rgb,
                                const Tensor<T>& depth) {
    return disc.forward(channel_stack(rgb, depth), /*training=*/false);
}

}  // namespace depthfill::gan
