#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "depthfill/core/errors.hpp"
#include "depthfill/core/rng.hpp"
#include "depthfill/core/tensor.hpp"
#include "depthfill/nn/activations.hpp"
#include "depthfill/nn/batchnorm.hpp"
#include "depthfill/nn/conv.hpp"
#include "depthfill/nn/module.hpp"
#include "depthfill/nn/pooling.hpp"

namespace depthfill::seg {

// Encoder-decoder segmentation net configuration. The default encoder spec
// is the VGG16 convolution stack; scale_factor uniformly shrinks channel
// widths for desk-scale runs.
struct SegModelConfig {
    int in_channels = 3;
    int num_classes = 2;
    std::vector<std::pair<int, int>> encoder_spec = {{2, 64}, {2, 128}, {3, 256}, {3, 512}, {3, 512}};
    int kernel_size = 3;
    int pool_size = 2;
    double scale_factor = 1.0;

    int num_stages() const { return static_cast<int>(encoder_spec.size()); }
    int spatial_divisor() const { return 1 << num_stages(); }

    int stage_width(int i) const {
        const int w = encoder_spec[static_cast<std::size_t>(i)].second;
        return std::max(1, static_cast<int>(std::llround(w * scale_factor)));
    }

    int total_convs() const {
        int n = 0;
        for (const auto& [count, width] : encoder_spec) n += count;
        return n;
    }

    void validate() const {
        if (in_channels < 1 || num_classes < 2 || encoder_spec.empty() || kernel_size != 3 ||
            pool_size != 2 || !(scale_factor > 0.0 && scale_factor <= 1.0)) {
            throw ConfigError("invalid segmentation model config");
        }
    }
};

inline void to_json(nlohmann::json& j, const SegModelConfig& c) {
    j = nlohmann::json{{"in_channels", c.in_channels},
                       {"num_classes", c.num_classes},
                       {"encoder_spec", c.encoder_spec},
                       {"kernel_size", c.kernel_size},
                       {"pool_size", c.pool_size},
                       {"scale_factor", c.scale_factor}};
}

inline void from_json(const nlohmann::json& j, SegModelConfig& c) {
    j.at("in_channels").get_to(c.in_channels);
    j.at("num_classes").get_to(c.num_classes);
    j.at("encoder_spec").get_to(c.encoder_spec);
    j.at("kernel_size").get_to(c.kernel_size);
    j.at("pool_size").get_to(c.pool_size);
    j.at("scale_factor").get_to(c.scale_factor);
}

// Widens a pretrained first-layer kernel [O,3,k,k] to [O,3+extra,k,k]; each
// extra input slice is the element-wise mean of the three color slices.
template <class T>
Tensor<T> init_first_conv(const Tensor<T>& pretrained_first, int extra) {
    if (pretrained_first.ndim() != 4 || pretrained_first.dim(1) != 3) {
        throw InitError("init_first_conv expects a [O,3,k,k] kernel, got " +
                        pretrained_first.shape_string());
    }
    if (extra < 1) throw InitError("init_first_conv requires extra >= 1");
    const int O = pretrained_first.dim(0), k = pretrained_first.dim(2),
              kw = pretrained_first.dim(3);
    Tensor<T> out({O, 3 + extra, k, kw});
    for (int o = 0; o < O; ++o) {
        for (int r = 0; r < k; ++r) {
            for (int c = 0; c < kw; ++c) {
                T mean{0};
                for (int s = 0; s < 3; ++s) {
                    const T v = pretrained_first.at(o, s, r, c);
                    out.at(o, s, r, c) = v;
                    mean += v;
                }
                mean /= T{3};
                for (int e = 0; e < extra; ++e) out.at(o, 3 + e, r, c) = mean;
            }
        }
    }
    return out;
}

// He-init seed plus an optional externally supplied pretrained-encoder
// archive (a named-parameter archive; see train/checkpoint.hpp).
struct InitSpec {
    std::uint64_t seed = 0;
    std::string pretrained_encoder_path;
};

// SegNet-style network: VGG16 encoder with 2x2 max pooling, a mirrored
// decoder that upsamples through the recorded pooling indices, and a final
// 1-conv logits head.
template <class T>
class SegNet {
public:
    explicit SegNet(SegModelConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        build();
    }

    const SegModelConfig& config() const { return cfg_; }

    void init_random(std::uint64_t seed) {
        Rng rng(seed);
        for (auto& b : enc_) b.init(rng);
        for (auto& b : dec_) b.init(rng);
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) {
        check_input(x);
        Tensor<T> h = x;
        for (int s = 0; s < cfg_.num_stages(); ++s) {
            for (int i = enc_stage_begin_[s]; i < enc_stage_begin_[s + 1]; ++i) {
                h = enc_[i].forward(h, training);
            }
            h = pools_[s].forward(h);
        }
        for (int s = cfg_.num_stages() - 1; s >= 0; --s) {
            h = unpools_[s].forward(h, pools_[s].indices());
            for (int i = dec_stage_begin_[s + 1] - 1; i >= dec_stage_begin_[s]; --i) {
                h = dec_[i].forward(h, training);
            }
        }
        return h;
    }

    void backward(const Tensor<T>& dlogits) {
        Tensor<T> g = dlogits;
        for (int s = 0; s < cfg_.num_stages(); ++s) {
            for (int i = dec_stage_begin_[s]; i < dec_stage_begin_[s + 1]; ++i) {
                g = dec_[i].backward(g);
            }
            g = unpools_[s].backward(g);
        }
        for (int s = cfg_.num_stages() - 1; s >= 0; --s) {
            g = pools_[s].backward(g);
            for (int i = enc_stage_begin_[s + 1] - 1; i >= enc_stage_begin_[s]; --i) {
                g = enc_[i].backward(g);
            }
        }
    }

    nn::ParamRefs<T> params() {
        nn::ParamRefs<T> out;
        for (auto& b : enc_) b.collect(out);
        for (auto& b : dec_) b.collect(out);
        return out;
    }

    nn::StateRefs<T> state() {
        nn::StateRefs<T> out;
        for (auto& b : enc_) b.collect_state(out);
        for (auto& b : dec_) b.collect_state(out);
        return out;
    }

    // Replaces encoder convolution weights with an externally supplied
    // archive (named enc.s{stage}.c{conv}.weight/.bias, kernels [O,C,k,k]).
    // A 3-channel first kernel feeding a wider input is widened via
    // init_first_conv; any other mismatch fails loudly.
    template <class Archive>
    void load_pretrained_encoder(const Archive& tensors) {
        for (auto& b : enc_) {
            const std::string wname = b.conv.name() + ".weight";
            const std::string bname = b.conv.name() + ".bias";
            auto wit = tensors.find(wname);
            auto bit = tensors.find(bname);
            if (wit == tensors.end() || bit == tensors.end()) {
                throw InitError("pretrained encoder archive is missing " + wname);
            }
            Tensor<T> w = wit->second;
            const int k = cfg_.kernel_size;
            if (w.ndim() != 4 || w.dim(2) != k || w.dim(3) != k) {
                throw InitError(wname + ": expected [O,C,k,k] kernel, got " + w.shape_string());
            }
            if (&b == &enc_.front() && w.dim(1) == 3 && cfg_.in_channels > 3) {
                w = init_first_conv(w, cfg_.in_channels - 3);
            }
            if (w.dim(0) != b.conv.out_channels() || w.dim(1) != b.conv.in_channels()) {
                throw InitError(wname + ": kernel " + w.shape_string() + " does not fit layer");
            }
            if (bit->second.size() != static_cast<std::size_t>(b.conv.out_channels())) {
                throw InitError(bname + ": bias size mismatch");
            }
            // kernels are stored flat as [O, C*k*k]; same memory order
            for (std::size_t i = 0; i < w.size(); ++i) b.conv.weight.value[i] = w[i];
            for (std::size_t i = 0; i < bit->second.size(); ++i) b.conv.bias.value[i] = bit->second[i];
        }
    }

private:
    // conv -> batch norm -> relu, the repeated unit of both halves.
    // The logits head is a bare convolution (no_bn_relu).
    struct ConvBlock {
        nn::Conv2d<T> conv;
        nn::BatchNorm2d<T> bn;
        nn::ReLU<T> relu;
        bool bare = false;

        Tensor<T> forward(const Tensor<T>& x, bool training) {
            Tensor<T> h = conv.forward(x);
            if (bare) return h;
            h = bn.forward(h, training);
            return relu.forward(h);
        }
        Tensor<T> backward(const Tensor<T>& gy) {
            if (bare) return conv.backward(gy);
            Tensor<T> g = relu.backward(gy);
            g = bn.backward(g);
            return conv.backward(g);
        }
        void collect(nn::ParamRefs<T>& out) {
            conv.collect(out);
            if (!bare) bn.collect(out);
        }
        void collect_state(nn::StateRefs<T>& out) {
            if (!bare) bn.collect_state(out);
        }
        void init(Rng& rng) { conv.init(rng); }
    };

    void build() {
        const int S = cfg_.num_stages();
        const int k = cfg_.kernel_size;
        enc_stage_begin_.assign(S + 1, 0);
        dec_stage_begin_.assign(S + 1, 0);

        int in_c = cfg_.in_channels;
        for (int s = 0; s < S; ++s) {
            enc_stage_begin_[s] = static_cast<int>(enc_.size());
            const int count = cfg_.encoder_spec[s].first;
            const int width = cfg_.stage_width(s);
            for (int i = 0; i < count; ++i) {
                enc_.push_back(make_block("enc.s" + std::to_string(s) + ".c" + std::to_string(i),
                                          i == 0 ? in_c : width, width, k, false));
            }
            in_c = width;
        }
        enc_stage_begin_[S] = static_cast<int>(enc_.size());
        pools_.resize(S);
        unpools_.resize(S);

        // Decoder blocks are stored in backward-walk order (stage 0 head
        // first); forward iterates each stage's block list in reverse.
        for (int s = 0; s < S; ++s) {
            dec_stage_begin_[s] = static_cast<int>(dec_.size());
            const int count = cfg_.encoder_spec[s].first;
            const int width = cfg_.stage_width(s);
            const int out_width = s == 0 ? cfg_.num_classes : cfg_.stage_width(s - 1);
            for (int i = 0; i < count; ++i) {
                const bool last_conv = (i == 0);  // last in forward order
                const int in_w = width;
                const int out_w = last_conv ? out_width : width;
                const bool bare_head = (s == 0 && last_conv);
                dec_.push_back(make_block("dec.s" + std::to_string(s) + ".c" + std::to_string(i),
                                          in_w, out_w, k, bare_head));
            }
        }
        dec_stage_begin_[S] = static_cast<int>(dec_.size());
    }

    ConvBlock make_block(const std::string& name, int in_c, int out_c, int k, bool bare) {
        ConvBlock b;
        b.conv = nn::Conv2d<T>(name, in_c, out_c, k, 1, (k - 1) / 2);
        if (!bare) b.bn = nn::BatchNorm2d<T>(name + ".bn", out_c);
        b.bare = bare;
        return b;
    }

    void check_input(const Tensor<T>& x) const {
        if (x.ndim() != 4 || x.dim(1) != cfg_.in_channels) {
            throw ShapeError("segnet: expected [B," + std::to_string(cfg_.in_channels) +
                             ",H,W] input, got " + x.shape_string());
        }
        const int d = cfg_.spatial_divisor();
        if (x.dim(2) % d != 0 || x.dim(3) % d != 0) {
            throw ShapeError("segnet: spatial dims of " + x.shape_string() +
                             " must be divisible by " + std::to_string(d));
        }
    }

    SegModelConfig cfg_;
    std::vector<ConvBlock> enc_, dec_;
    std::vector<int> enc_stage_begin_, dec_stage_begin_;
    std::vector<nn::MaxPool2d<T>> pools_;
    std::vector<nn::MaxUnpool2d<T>> unpools_;
};

template <class T>
SegNet<T> build_segnet(const SegModelConfig& cfg, const InitSpec& init) {
    SegNet<T> net(cfg);
    net.init_random(init.seed);
    return net;
}

// Inference contract: per-pixel unnormalized class scores with the input's
// spatial dims.
template <class T>
Tensor<T> seg_forward(SegNet<T>& model, const Tensor<T>& x) {
    return model.forward(x, /*training=*/false);
}

// argmax over the class axis of [B,K,H,W] logits.
template <class T>
Tensor<std::uint8_t> argmax_labels(const Tensor<T>& logits) {
    const int B = logits.dim(0), K = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
    Tensor<std::uint8_t> out({B, H, W});
    for (int b = 0; b < B; ++b)
        for (int r = 0; r < H; ++r)
            for (int c = 0; c < W; ++c) {
                int best = 0;
                T best_v = logits.at(b, 0, r, c);
                for (int k = 1; k < K; ++k) {
                    const T v = logits.at(b, k, r, c);
                    if (v > best_v) {
                        best_v = v;
                        best = k;
                    }
                }
                out.at(b, r, c) = static_cast<std::uint8_t>(best);
            }
    return out;
}

}  // namespace depthfill::seg
