#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "depthfill/nn/activations.hpp"
#include "depthfill/nn/batchnorm.hpp"
#include "depthfill/nn/conv.hpp"
#include "depthfill/nn/pooling.hpp"
#include "test_util.hpp"

using namespace depthfill;
using namespace depthfill::nn;

namespace {

// Direct-convolution oracle, no im2col.
Tensor<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w,
                           const Tensor<double>& bias, int out_c, int k, int stride, int pad) {
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Ho = (H + 2 * pad - k) / stride + 1, Wo = (W + 2 * pad - k) / stride + 1;
    Tensor<double> y({B, out_c, Ho, Wo});
    for (int b = 0; b < B; ++b)
        for (int oc = 0; oc < out_c; ++oc)
            for (int oh = 0; oh < Ho; ++oh)
                for (int ow = 0; ow < Wo; ++ow) {
                    double acc = bias[oc];
                    for (int c = 0; c < C; ++c)
                        for (int ki = 0; ki < k; ++ki)
                            for (int kj = 0; kj < k; ++kj) {
                                const int ih = oh * stride - pad + ki;
                                const int iw = ow * stride - pad + kj;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += x.at(b, c, ih, iw) *
                                       w[(static_cast<std::size_t>(oc) * C + c) * k * k +
                                         ki * k + kj];
                            }
                    y.at(b, oc, oh, ow) = acc;
                }
    return y;
}

// Scatter-style oracle for the fractionally strided convolution.
Tensor<double> convt_oracle(const Tensor<double>& x, const Tensor<double>& w,
                            const Tensor<double>& bias, int out_c, int k, int stride, int pad) {
    const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int Ho = (H - 1) * stride - 2 * pad + k, Wo = (W - 1) * stride - 2 * pad + k;
    Tensor<double> y({B, out_c, Ho, Wo});
    for (int b = 0; b < B; ++b) {
        for (int oc = 0; oc < out_c; ++oc)
            for (int oh = 0; oh < Ho; ++oh)
                for (int ow = 0; ow < Wo; ++ow) y.at(b, oc, oh, ow) = bias[oc];
        for (int c = 0; c < C; ++c)
            for (int ih = 0; ih < H; ++ih)
                for (int iw = 0; iw < W; ++iw)
                    for (int oc = 0; oc < out_c; ++oc)
                        for (int ki = 0; ki < k; ++ki)
                            for (int kj = 0; kj < k; ++kj) {
                                const int oh = ih * stride - pad + ki;
                                const int ow = iw * stride - pad + kj;
                                if (oh < 0 || oh >= Ho || ow < 0 || ow >= Wo) continue;
                                y.at(b, oc, oh, ow) +=
                                    x.at(b, c, ih, iw) *
                                    w[(static_cast<std::size_t>(c) * out_c + oc) * k * k +
                                      ki * k + kj];
                            }
    }
    return y;
}

double weighted_sum(const Tensor<double>& y, const Tensor<double>& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
}

}  // namespace

TEST_CASE("Conv2d forward matches the direct-convolution oracle") {
    Rng rng(11);
    for (auto [stride, pad] : {std::pair{1, 1}, std::pair{2, 1}, std::pair{1, 0}}) {
        Conv2d<double> conv("c", 3, 5, 3, stride, pad);
        conv.init(rng);
        auto x = testutil::random_tensor<double>({2, 3, 8, 8}, rng);
        auto y = conv.forward(x);
        auto ref = conv_oracle(x, conv.weight.value, conv.bias.value, 5, 3, stride, pad);
        REQUIRE(y.shape() == ref.shape());
        for (std::size_t i = 0; i < y.size(); ++i)
            REQUIRE(y[i] == Catch::Approx(ref[i]).margin(1e-12));
    }
}

TEST_CASE("Conv2d backward matches finite differences") {
    Rng rng(13);
    Conv2d<double> conv("c", 2, 3, 3, 2, 1);
    conv.init(rng);
    auto x = testutil::random_tensor<double>({1, 2, 6, 6}, rng);
    auto r = testutil::random_tensor<double>({1, 3, 3, 3}, rng);

    auto y = conv.forward(x);
    REQUIRE(y.shape() == r.shape());
    conv.weight.zero_grad();
    conv.bias.zero_grad();
    auto gx = conv.backward(r);

    const double h = 1e-6;
    auto loss_at = [&](const Tensor<double>& xx) {
        Conv2d<double> c2("c", 2, 3, 3, 2, 1);
        c2.weight.value = conv.weight.value;
        c2.bias.value = conv.bias.value;
        return weighted_sum(c2.forward(xx), r);
    };
    for (std::size_t i = 0; i < x.size(); i += 7) {
        auto xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        REQUIRE(gx[i] == Catch::Approx((loss_at(xp) - loss_at(xm)) / (2 * h)).margin(1e-6));
    }
    auto loss_at_w = [&](const Tensor<double>& ww) {
        Conv2d<double> c2("c", 2, 3, 3, 2, 1);
        c2.weight.value = ww;
        c2.bias.value = conv.bias.value;
        return weighted_sum(c2.forward(x), r);
    };
    for (std::size_t i = 0; i < conv.weight.value.size(); i += 5) {
        auto wp = conv.weight.value, wm = conv.weight.value;
        wp[i] += h;
        wm[i] -= h;
        REQUIRE(conv.weight.grad[i] ==
                Catch::Approx((loss_at_w(wp) - loss_at_w(wm)) / (2 * h)).margin(1e-6));
    }
}

TEST_CASE("ConvTranspose2d matches the scatter oracle and doubles dims") {
    Rng rng(17);
    ConvTranspose2d<double> up("u", 4, 2, 4, 2, 1);
    up.init(rng);
    auto x = testutil::random_tensor<double>({2, 4, 5, 5}, rng);
    auto y = up.forward(x);
    REQUIRE(y.shape() == std::vector<int>{2, 2, 10, 10});
    auto ref = convt_oracle(x, up.weight.value, up.bias.value, 2, 4, 2, 1);
    for (std::size_t i = 0; i < y.size(); ++i)
        REQUIRE(y[i] == Catch::Approx(ref[i]).margin(1e-12));
}

TEST_CASE("ConvTranspose2d backward matches finite differences") {
    Rng rng(19);
    ConvTranspose2d<double> up("u", 2, 2, 4, 2, 1);
    up.init(rng);
    auto x = testutil::random_tensor<double>({1, 2, 3, 3}, rng);
    auto y = up.forward(x);
    auto r = testutil::random_tensor<double>(y.shape(), rng);
    up.weight.zero_grad();
    up.bias.zero_grad();
    auto gx = up.backward(r);

    const double h = 1e-6;
    auto loss_at = [&](const Tensor<double>& xx, const Tensor<double>& ww) {
        ConvTranspose2d<double> u2("u", 2, 2, 4, 2, 1);
        u2.weight.value = ww;
        u2.bias.value = up.bias.value;
        return weighted_sum(u2.forward(xx), r);
    };
    for (std::size_t i = 0; i < x.size(); i += 3) {
        auto xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        REQUIRE(gx[i] == Catch::Approx((loss_at(xp, up.weight.value) -
                                        loss_at(xm, up.weight.value)) /
                                       (2 * h))
                             .margin(1e-6));
    }
    for (std::size_t i = 0; i < up.weight.value.size(); i += 11) {
        auto wp = up.weight.value, wm = up.weight.value;
        wp[i] += h;
        wm[i] -= h;
        REQUIRE(up.weight.grad[i] ==
                Catch::Approx((loss_at(x, wp) - loss_at(x, wm)) / (2 * h)).margin(1e-6));
    }
}

TEST_CASE("max pooling with indices") {
    SECTION("unique max picks the right corner") {
        Tensor<double> x({1, 2, 2}, {1, 2, 3, 4});
        auto [pooled, idx] = max_pool_with_indices(x);
        REQUIRE(pooled.at(0, 0, 0) == 4.0);
        REQUIRE(idx.at(0, 0, 0) == 3);  // bottom-right
    }

    SECTION("ties break to the first window position in row-major order") {
        Tensor<double> x({1, 4, 4});
        x.fill(2.5);
        auto [pooled, idx] = max_pool_with_indices(x);
        for (std::size_t i = 0; i < pooled.size(); ++i) {
            REQUIRE(pooled[i] == 2.5);
            REQUIRE(idx[i] == 0);  // top-left
        }
    }

    SECTION("random map matches an exhaustive window scan") {
        Rng rng(23);
        auto x = testutil::random_tensor<double>({3, 4, 4}, rng);
        auto [pooled, idx] = max_pool_with_indices(x);
        for (int c = 0; c < 3; ++c)
            for (int oh = 0; oh < 2; ++oh)
                for (int ow = 0; ow < 2; ++ow) {
                    double best = -1e30;
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b)
                            best = std::max(best, x.at(c, 2 * oh + a, 2 * ow + b));
                    REQUIRE(pooled.at(c, oh, ow) == best);
                }
    }

    SECTION("odd dims throw") {
        Tensor<double> x({1, 3, 4});
        REQUIRE_THROWS_AS(max_pool_with_indices(x), ShapeError);
    }
}

TEST_CASE("unpooling places values at recorded positions") {
    SECTION("round trip on distinct-valued windows") {
        Rng rng(29);
        Tensor<double> x({2, 6, 6});
        for (std::size_t i = 0; i < x.size(); ++i)
            x[i] = static_cast<double>(i) + rng.uniform(0.0, 0.5);  // strictly distinct
        auto [pooled, idx] = max_pool_with_indices(x);
        auto up = unpool_with_indices(pooled, idx);

        int nonzeros = 0;
        for (int c = 0; c < 2; ++c)
            for (int r = 0; r < 6; ++r)
                for (int col = 0; col < 6; ++col) {
                    if (up.at(c, r, col) != 0.0) {
                        ++nonzeros;
                        REQUIRE(up.at(c, r, col) == x.at(c, r, col));  // value at argmax spot
                    }
                }
        REQUIRE(nonzeros == 2 * 3 * 3);

        auto [pooled2, idx2] = max_pool_with_indices(up);
        for (std::size_t i = 0; i < pooled.size(); ++i) {
            REQUIRE(pooled2[i] == pooled[i]);
            REQUIRE(idx2[i] == idx[i]);
        }
    }

    SECTION("all-zero pooled map unpools to all zeros") {
        Tensor<double> pooled({1, 2, 2});
        Tensor<std::uint8_t> idx({1, 2, 2});
        auto up = unpool_with_indices(pooled, idx);
        for (std::size_t i = 0; i < up.size(); ++i) REQUIRE(up[i] == 0.0);
    }

    SECTION("random 2x2 pooled map yields exactly 4 nonzeros in 4x4") {
        Rng rng(31);
        Tensor<double> pooled({1, 2, 2});
        Tensor<std::uint8_t> idx({1, 2, 2});
        for (std::size_t i = 0; i < pooled.size(); ++i) {
            pooled[i] = rng.uniform(0.5, 1.0);
            idx[i] = static_cast<std::uint8_t>(rng.uniform_int(0, 3));
        }
        auto up = unpool_with_indices(pooled, idx);
        int nonzeros = 0;
        for (std::size_t i = 0; i < up.size(); ++i) nonzeros += up[i] != 0.0 ? 1 : 0;
        REQUIRE(nonzeros == 4);
    }

    SECTION("malformed indices throw IndexError") {
        Tensor<double> pooled({1, 1, 1});
        pooled.fill(1.0);
        Tensor<std::uint8_t> idx({1, 1, 1});
        idx[0] = 4;
        REQUIRE_THROWS_AS(unpool_with_indices(pooled, idx), IndexError);
    }
}

TEST_CASE("batch norm") {
    Rng rng(37);

    SECTION("training output is normalized per channel") {
        BatchNorm2d<double> bn("bn", 3);
        auto x = testutil::random_tensor<double>({4, 3, 5, 5}, rng, -2.0, 5.0);
        auto y = bn.forward(x, true);
        for (int c = 0; c < 3; ++c) {
            double mean = 0.0, var = 0.0;
            const double n = 4 * 25;
            for (int b = 0; b < 4; ++b)
                for (int r = 0; r < 5; ++r)
                    for (int col = 0; col < 5; ++col) mean += y.at(b, c, r, col);
            mean /= n;
            for (int b = 0; b < 4; ++b)
                for (int r = 0; r < 5; ++r)
                    for (int col = 0; col < 5; ++col)
                        var += (y.at(b, c, r, col) - mean) * (y.at(b, c, r, col) - mean);
            var /= n;
            REQUIRE(mean == Catch::Approx(0.0).margin(1e-10));
            REQUIRE(var == Catch::Approx(1.0).epsilon(1e-3));
        }
    }

    SECTION("inference uses running statistics") {
        BatchNorm2d<double> bn("bn", 1);
        auto x = testutil::random_tensor<double>({8, 1, 4, 4}, rng, 2.0, 4.0);
        for (int i = 0; i < 200; ++i) bn.forward(x, true);  // converge running stats
        auto y = bn.forward(x, false);
        // with gamma=1, beta=0 and running stats ~= batch stats, output ~ normalized
        double mean = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) mean += y[i];
        mean /= static_cast<double>(y.size());
        REQUIRE(mean == Catch::Approx(0.0).margin(0.05));
    }

    SECTION("backward matches finite differences for x, gamma, beta") {
        BatchNorm2d<double> bn("bn", 2);
        Rng prng(7);
        for (std::size_t i = 0; i < bn.gamma.value.size(); ++i) {
            bn.gamma.value[i] = prng.uniform(0.5, 1.5);
            bn.beta.value[i] = prng.uniform(-0.5, 0.5);
        }
        auto x = testutil::random_tensor<double>({2, 2, 3, 3}, rng);
        auto r = testutil::random_tensor<double>({2, 2, 3, 3}, rng);

        bn.forward(x, true);
        bn.gamma.zero_grad();
        bn.beta.zero_grad();
        auto gx = bn.backward(r);

        const double h = 1e-6;
        auto loss_with = [&](const Tensor<double>& xx, const Tensor<double>& gm,
                             const Tensor<double>& bt) {
            BatchNorm2d<double> b2("bn", 2);
            b2.gamma.value = gm;
            b2.beta.value = bt;
            return weighted_sum(b2.forward(xx, true), r);
        };
        for (std::size_t i = 0; i < x.size(); i += 5) {
            auto xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            const double fd = (loss_with(xp, bn.gamma.value, bn.beta.value) -
                               loss_with(xm, bn.gamma.value, bn.beta.value)) /
                              (2 * h);
            REQUIRE(gx[i] == Catch::Approx(fd).margin(1e-5));
        }
        for (int i = 0; i < 2; ++i) {
            auto gp = bn.gamma.value, gm2 = bn.gamma.value;
            gp[i] += h;
            gm2[i] -= h;
            const double fd =
                (loss_with(x, gp, bn.beta.value) - loss_with(x, gm2, bn.beta.value)) / (2 * h);
            REQUIRE(bn.gamma.grad[i] == Catch::Approx(fd).margin(1e-6));

            auto bp = bn.beta.value, bm = bn.beta.value;
            bp[i] += h;
            bm[i] -= h;
            const double fdb =
                (loss_with(x, bn.gamma.value, bp) - loss_with(x, bn.gamma.value, bm)) / (2 * h);
            REQUIRE(bn.beta.grad[i] == Catch::Approx(fdb).margin(1e-6));
        }
    }
}

TEST_CASE("activations") {
    Rng rng(41);
    auto x = testutil::random_tensor<double>({1, 2, 4, 4}, rng, -2.0, 2.0);

    SECTION("relu and leaky relu gradients gate on the input sign") {
        ReLU<double> relu;
        auto y = relu.forward(x);
        Tensor<double> ones(x.shape());
        ones.fill(1.0);
        auto g = relu.backward(ones);
        for (std::size_t i = 0; i < x.size(); ++i) {
            REQUIRE(y[i] == (x[i] > 0 ? x[i] : 0.0));
            REQUIRE(g[i] == (x[i] > 0 ? 1.0 : 0.0));
        }

        LeakyReLU<double> leaky(0.2);
        auto ly = leaky.forward(x);
        auto lg = leaky.backward(ones);
        for (std::size_t i = 0; i < x.size(); ++i) {
            REQUIRE(ly[i] == (x[i] > 0 ? x[i] : 0.2 * x[i]));
            REQUIRE(lg[i] == (x[i] > 0 ? 1.0 : 0.2));
        }
    }

    SECTION("tanh output is bounded and its gradient is 1-y^2") {
        Tanh<double> tanh_;
        auto y = tanh_.forward(x);
        Tensor<double> ones(x.shape());
        ones.fill(1.0);
        auto g = tanh_.backward(ones);
        for (std::size_t i = 0; i < x.size(); ++i) {
            REQUIRE(std::abs(y[i]) <= 1.0);
            REQUIRE(g[i] == Catch::Approx(1.0 - y[i] * y[i]));
        }
    }

    SECTION("dropout keeps ~half at rate 0.5 and scales by 2") {
        Dropout<double> drop(0.5);
        Rng drng(5);
        Tensor<double> big({1, 1, 64, 64});
        big.fill(1.0);
        auto y = drop.forward(big, true, drng);
        int kept = 0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            REQUIRE((y[i] == 0.0 || y[i] == 2.0));
            kept += y[i] != 0.0 ? 1 : 0;
        }
        const double frac = kept / 4096.0;
        REQUIRE(frac > 0.45);
        REQUIRE(frac < 0.55);

        auto inactive = drop.forward(big, false, drng);
        for (std::size_t i = 0; i < inactive.size(); ++i) REQUIRE(inactive[i] == 1.0);
    }
}
