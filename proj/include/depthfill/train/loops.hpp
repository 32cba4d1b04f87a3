#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <type_traits>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "depthfill/arm.hpp"
#include "depthfill/core/errors.hpp"
#include "depthfill/core/rng.hpp"
#include "depthfill/data/patches.hpp"
#include "depthfill/gan/discriminator.hpp"
#include "depthfill/gan/generator.hpp"
#include "depthfill/nn/losses.hpp"
#include "depthfill/seg/segnet.hpp"
#include "depthfill/train/optim.hpp"
#include "depthfill/train/schedules.hpp"

namespace depthfill::train {

struct TrainConfig {
    double base_lr = 0.01;
    double weight_decay = 0.0005;
    double momentum = 0.9;
    double poly_power = 0.9;
    int epochs = 30;
    int start_epoch = 0;
    int batch_size = 4;
    std::uint64_t seed = 0;
    Arm arm = Arm::rgb_only;
    double partial_presence_p = 0.5;
    bool augment_flips = true;

    void validate() const {
        if (base_lr <= 0 || weight_decay < 0 || momentum < 0 || poly_power <= 0 || epochs <= 0 ||
            batch_size <= 0 || start_epoch < 0 || start_epoch >= epochs) {
            throw ConfigError("invalid segmentation training config");
        }
        if (arm == Arm::rgb_synth_depth) {
            throw ConfigError("rgb_synth_depth is an evaluation arm, not a training arm");
        }
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"base_lr", c.base_lr},       {"weight_decay", c.weight_decay},
                       {"momentum", c.momentum},     {"poly_power", c.poly_power},
                       {"epochs", c.epochs},         {"batch_size", c.batch_size},
                       {"seed", c.seed},             {"arm", arm_name(c.arm)},
                       {"partial_presence_p", c.partial_presence_p},
                       {"augment_flips", c.augment_flips}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    j.at("base_lr").get_to(c.base_lr);
    j.at("weight_decay").get_to(c.weight_decay);
    j.at("momentum").get_to(c.momentum);
    j.at("poly_power").get_to(c.poly_power);
    j.at("epochs").get_to(c.epochs);
    j.at("batch_size").get_to(c.batch_size);
    j.at("seed").get_to(c.seed);
    c.arm = arm_from_string(j.at("arm").get<std::string>());
    c.partial_presence_p = j.value("partial_presence_p", 0.5);
    c.augment_flips = j.value("augment_flips", true);
}

struct GanTrainConfig {
    double base_lr = 0.0002;
    int epochs = 200;
    int decay_start_epoch = 100;
    int start_epoch = 0;
    int batch_size = 4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    double lambda = 100.0;
    std::uint64_t seed = 0;
    bool augment_flips = true;

    void validate() const {
        if (base_lr <= 0 || epochs <= 0 || decay_start_epoch < 0 ||
            decay_start_epoch >= epochs || batch_size <= 0 || lambda < 0 || start_epoch < 0 ||
            start_epoch >= epochs) {
            throw ConfigError("invalid GAN training config");
        }
    }
};

inline void to_json(nlohmann::json& j, const GanTrainConfig& c) {
    j = nlohmann::json{{"base_lr", c.base_lr},
                       {"epochs", c.epochs},
                       {"decay_start_epoch", c.decay_start_epoch},
                       {"batch_size", c.batch_size},
                       {"adam_beta1", c.adam_beta1},
                       {"adam_beta2", c.adam_beta2},
                       {"lambda", c.lambda},
                       {"seed", c.seed},
                       {"augment_flips", c.augment_flips}};
}

inline void from_json(const nlohmann::json& j, GanTrainConfig& c) {
    j.at("base_lr").get_to(c.base_lr);
    j.at("epochs").get_to(c.epochs);
    j.at("decay_start_epoch").get_to(c.decay_start_epoch);
    j.at("batch_size").get_to(c.batch_size);
    j.at("adam_beta1").get_to(c.adam_beta1);
    j.at("adam_beta2").get_to(c.adam_beta2);
    j.at("lambda").get_to(c.lambda);
    j.at("seed").get_to(c.seed);
    c.augment_flips = j.value("augment_flips", true);
}

struct LossRecord {
    long long iter = 0;
    int epoch = 0;
    double lr = 0.0;
    std::vector<std::pair<std::string, double>> losses;
};

struct TrainState {
    int epoch = 0;
    long long global_iter = 0;
    std::vector<LossRecord> history;  // append-only
};

// Called at the end of every epoch; the CLI uses it to write checkpoints.
template <class Model>
using EpochCallback = std::function<void(int epoch, Model& model, const TrainState& state)>;

namespace detail {

// Stacks B patches into the network input for an arm. rgb_only never reads
// the depth channel.
template <class T>
Tensor<T> assemble_input(const std::vector<PatchSample>& batch, bool with_depth) {
    const int B = static_cast<int>(batch.size());
    const int h = batch[0].patch_size(), w = batch[0].patch_size();
    const int C = with_depth ? 4 : 3;
    Tensor<T> x({B, C, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int b = 0; b < B; ++b) {
        for (int c = 0; c < 3; ++c) {
            const float* src = batch[b].rgb.data() + c * plane;
            T* dst = &x.at(b, c, 0, 0);
            for (std::size_t i = 0; i < plane; ++i) dst[i] = static_cast<T>(src[i]);
        }
        if (with_depth) {
            const float* src = batch[b].depth.data();
            T* dst = &x.at(b, 3, 0, 0);
            for (std::size_t i = 0; i < plane; ++i) dst[i] = static_cast<T>(src[i]);
        }
    }
    return x;
}

template <class T>
Tensor<std::uint8_t> assemble_labels(const std::vector<PatchSample>& batch) {
    const int B = static_cast<int>(batch.size());
    const int h = batch[0].patch_size(), w = batch[0].patch_size();
    Tensor<std::uint8_t> y({B, h, w});
    for (int b = 0; b < B; ++b)
        std::memcpy(&y.at(b, 0, 0), batch[b].labels.data(),
                    static_cast<std::size_t>(h) * w);
    return y;
}

template <class T>
Tensor<T> assemble_depth(const std::vector<PatchSample>& batch) {
    const int B = static_cast<int>(batch.size());
    const int h = batch[0].patch_size(), w = batch[0].patch_size();
    Tensor<T> d({B, 1, h, w});
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int b = 0; b < B; ++b) {
        const float* src = batch[b].depth.data();
        T* dst = &d.at(b, 0, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) dst[i] = static_cast<T>(src[i]);
    }
    return d;
}

inline std::vector<std::size_t> epoch_order(std::size_t n, Rng& rng) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order.begin(), order.end());
    return order;
}

class DivergenceGuard {
public:
    // Non-finite losses are tolerated for up to two consecutive iterations
    // (the update is skipped); the third aborts the run. Checkpoints already
    // on disk are retained.
    bool record(bool finite, long long iter) {
        if (finite) {
            streak_ = 0;
            return true;
        }
        if (++streak_ >= 3) {
            throw DivergedError("loss non-finite for 3 consecutive iterations (iteration " +
                                std::to_string(iter) + "); last checkpoint retained");
        }
        return false;
    }

private:
    int streak_ = 0;
};

}  // namespace detail

// Segmentation training: SGD with momentum, per-iteration poly schedule over
// epochs x batches, flips as augmentation, per-epoch checkpoints through the
// callback. The partial_depth arm re-samples modality presence per batch
// element every epoch.
template <class T>
TrainState train_segmentation(
    seg::SegNet<T>& model, const std::vector<PatchSample>& data, const TrainConfig& cfg,
    const std::type_identity_t<EpochCallback<seg::SegNet<T>>>& on_epoch = {}) {
    cfg.validate();
    if (data.empty()) throw EmptyDatasetError("no training patches");
    if (static_cast<int>(data.size()) < cfg.batch_size) {
        throw ConfigError("fewer patches than one batch");
    }
    const bool with_depth = arm_in_channels(cfg.arm) == 4;
    if (model.config().in_channels != arm_in_channels(cfg.arm)) {
        throw ConfigError(std::string("model channels do not match arm ") + arm_name(cfg.arm));
    }
    if (with_depth) {
        for (const auto& s : data) {
            if (!s.depth_present && cfg.arm != Arm::partial_depth) {
                throw ConfigError("arm rgb_depth requires real depth on every patch");
            }
        }
    }

    const long long bpe = static_cast<long long>(data.size()) / cfg.batch_size;
    const long long max_iter = bpe * cfg.epochs;

    auto opt = SgdMomentum<T>(model.params(), cfg.momentum, cfg.weight_decay);
    TrainState state;
    state.global_iter = bpe * cfg.start_epoch;
    detail::DivergenceGuard guard;

    std::vector<PatchSample> batch(static_cast<std::size_t>(cfg.batch_size));
    for (int epoch = cfg.start_epoch; epoch < cfg.epochs; ++epoch) {
        Rng erng(derive_seed(cfg.seed, "epoch:" + std::to_string(epoch)));
        const auto order = detail::epoch_order(data.size(), erng);
        for (long long bi = 0; bi < bpe; ++bi) {
            const double lr = poly_lr(cfg.base_lr, state.global_iter, max_iter, cfg.poly_power);
            int present = 0;
            for (int k = 0; k < cfg.batch_size; ++k) {
                PatchSample s = data[order[static_cast<std::size_t>(bi) * cfg.batch_size + k]];
                if (cfg.augment_flips) s = augment(s, erng);
                if (cfg.arm == Arm::partial_depth) {
                    s = sample_partial_modality(s, cfg.partial_presence_p, erng);
                }
                present += (with_depth && s.depth_present) ? 1 : 0;
                batch[static_cast<std::size_t>(k)] = std::move(s);
            }
            const Tensor<T> x = detail::assemble_input<T>(batch, with_depth);
            const Tensor<std::uint8_t> y = detail::assemble_labels<T>(batch);

            double loss = std::numeric_limits<double>::quiet_NaN();
            bool ok = false;
            try {
                Tensor<T> logits = model.forward(x, /*training=*/true);
                auto lv = nn::nll_segmentation_loss_with_grad(logits, y);
                loss = static_cast<double>(lv.value);
                nn::zero_grads(model.params());
                model.backward(lv.grad);
                ok = true;
            } catch (const NumericalError&) {
                ok = false;
            }
            if (guard.record(ok && std::isfinite(loss), state.global_iter) && ok) {
                opt.step(lr);
            }

            LossRecord rec;
            rec.iter = state.global_iter;
            rec.epoch = epoch;
            rec.lr = lr;
            rec.losses = {{"loss", loss},
                          {"depth_present_frac",
                           static_cast<double>(present) / cfg.batch_size}};
            state.history.push_back(std::move(rec));
            ++state.global_iter;
        }
        state.epoch = epoch + 1;
        if (on_epoch) on_epoch(epoch, model, state);
    }
    return state;
}

// Adversarial training: per batch one discriminator update on a real pair
// and a fake pair, then one generator update on the adversarial term plus
// lambda times the L1 term. Both optimizers are Adam under the linear decay
// schedule. Only the generator matters downstream; the discriminator is
// checkpointed for resumption.
template <class T>
TrainState train_gan(
    gan::Generator<T>& gen, gan::Discriminator<T>& disc, const std::vector<PatchSample>& data,
    const GanTrainConfig& cfg,
    const std::type_identity_t<std::function<void(
        int, gan::Generator<T>&, gan::Discriminator<T>&, const TrainState&)>>& on_epoch = {}) {
    cfg.validate();
    if (data.empty()) throw EmptyDatasetError("no training pairs");
    if (static_cast<int>(data.size()) < cfg.batch_size) {
        throw ConfigError("fewer pairs than one batch");
    }
    for (const auto& s : data) {
        if (!s.depth_present) throw ConfigError("GAN training requires paired real depth");
    }

    const bool noise_on = gen.config().noise_mode == gan::GeneratorConfig::NoiseMode::dropout;
    const long long bpe = static_cast<long long>(data.size()) / cfg.batch_size;

    auto opt_g = Adam<T>(gen.params(), cfg.adam_beta1, cfg.adam_beta2);
    auto opt_d = Adam<T>(disc.params(), cfg.adam_beta1, cfg.adam_beta2);
    TrainState state;
    state.global_iter = bpe * cfg.start_epoch;
    detail::DivergenceGuard guard;

    std::vector<PatchSample> batch(static_cast<std::size_t>(cfg.batch_size));
    for (int epoch = cfg.start_epoch; epoch < cfg.epochs; ++epoch) {
        const double lr = linear_decay_lr(cfg.base_lr, epoch, cfg.decay_start_epoch, cfg.epochs);
        Rng erng(derive_seed(cfg.seed, "epoch:" + std::to_string(epoch)));
        const auto order = detail::epoch_order(data.size(), erng);
        for (long long bi = 0; bi < bpe; ++bi) {
            for (int k = 0; k < cfg.batch_size; ++k) {
                PatchSample s = data[order[static_cast<std::size_t>(bi) * cfg.batch_size + k]];
                if (cfg.augment_flips) s = augment(s, erng);
                batch[static_cast<std::size_t>(k)] = std::move(s);
            }
            const Tensor<T> rgb = detail::assemble_input<T>(batch, /*with_depth=*/false);
            const Tensor<T> real_depth = detail::assemble_depth<T>(batch);

            nn::GanLossTerms<T> terms;
            terms.lambda = static_cast<T>(cfg.lambda);
            bool ok = false;
            try {
                Tensor<T> fake = gen.forward(rgb, /*training=*/true, noise_on);

                // discriminator step; the fake pair is detached (no
                // gradient reaches the generator here)
                nn::zero_grads(disc.params());
                {
                    Tensor<T> scores_real =
                        disc.forward(gan::channel_stack(rgb, real_depth), /*training=*/true);
                    auto dl_real = nn::disc_real_term_with_grad(scores_real);
                    terms.d_loss_real = dl_real.value;
                    disc.backward(dl_real.grad);
                }
                {
                    Tensor<T> scores_fake =
                        disc.forward(gan::channel_stack(rgb, fake), /*training=*/true);
                    auto dl_fake = nn::disc_fake_term_with_grad(scores_fake);
                    terms.d_loss_fake = dl_fake.value;
                    disc.backward(dl_fake.grad);
                }
                opt_d.step(lr);

                // generator step against the updated discriminator
                nn::zero_grads(gen.params());
                Tensor<T> scores_fake_g =
                    disc.forward(gan::channel_stack(rgb, fake), /*training=*/true);
                auto g_adv = nn::gan_loss_generator_with_grad(scores_fake_g);
                terms.g_adv_loss = g_adv.value;
                Tensor<T> grad_stacked = disc.backward(g_adv.grad);
                auto [grad_rgb, grad_fake] = gan::detail::split_channels(grad_stacked, 3);
                (void)grad_rgb;  // the condition image is data, not a variable

                auto l1 = nn::l1_depth_loss_with_grad(real_depth, fake);
                terms.g_l1_loss = l1.value;
                for (std::size_t i = 0; i < grad_fake.size(); ++i) {
                    grad_fake[i] += terms.lambda * l1.grad[i];
                }
                gen.backward(grad_fake);
                opt_g.step(lr);
                ok = true;
            } catch (const NumericalError&) {
                ok = false;
            }

            const double d_loss =
                static_cast<double>(terms.d_loss_real) + static_cast<double>(terms.d_loss_fake);
            const double g_total = static_cast<double>(nn::total_generator_loss(terms));
            guard.record(ok && std::isfinite(d_loss) && std::isfinite(g_total),
                         state.global_iter);

            LossRecord rec;
            rec.iter = state.global_iter;
            rec.epoch = epoch;
            rec.lr = lr;
            rec.losses = {{"d_loss_real", terms.d_loss_real},
                          {"d_loss_fake", terms.d_loss_fake},
                          {"d_loss", d_loss},
                          {"g_adv", terms.g_adv_loss},
                          {"g_l1", terms.g_l1_loss},
                          {"g_total", g_total}};
            state.history.push_back(std::move(rec));
            ++state.global_iter;
        }
        state.epoch = epoch + 1;
        if (on_epoch) on_epoch(epoch, gen, disc, state);
    }
    return state;
}

}  // namespace depthfill::train
