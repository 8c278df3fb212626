// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "eresfd/kernels.hpp"
#include "oracles.hpp"

using namespace eresfd;

namespace {

ConvWeights random_weights(const ConvSpec& s, std::mt19937& rng) {
    ConvWeights w;
    w.kernel = oracle::random_tensor(s.weight_shape(), rng);
    if (s.has_bias) w.bias = oracle::random_vector(static_cast<std::size_t>(s.out_channels), rng);
    return w;
}

struct ConvCase {
    ConvSpec spec;
    Shape input;
};

// Covers the GEMM path, the stride-1 direct path (including narrow tails) and
// depthwise with every kernel/stride combination.
std::vector<ConvCase> random_cases(int count, std::uint32_t seed) {
    std::mt19937 rng(seed);
    const int kernels[] = {1, 3, 5, 7};
    const int strides[] = {1, 2, 4};
    std::vector<ConvCase> out;
    for (int i = 0; i < count; ++i) {
        ConvSpec s;
        s.kernel_h = s.kernel_w = kernels[rng() % 4];
        s.stride_h = s.stride_w = strides[rng() % 3];
        s.pad_h = s.pad_w = static_cast<int>(rng() % static_cast<unsigned>(s.kernel_h / 2 + 1));
        s.has_bias = rng() % 2 == 0;
        const int mode = static_cast<int>(rng() % 3);
        if (mode == 0) {
            const int c = 1 + static_cast<int>(rng() % 24);
            s.in_channels = s.out_channels = s.groups = c;
        } else if (mode == 1) {
            s.groups = 1 + static_cast<int>(rng() % 3);
            s.in_channels = s.groups * (1 + static_cast<int>(rng() % 4));
            s.out_channels = s.groups * (1 + static_cast<int>(rng() % 5));
        } else {
            s.in_channels = 1 + static_cast<int>(rng() % 20);
            s.out_channels = 1 + static_cast<int>(rng() % 40);
        }
        Shape in{1 + static_cast<int>(rng() % 2), s.in_channels, 0, 0};
        in.h = s.kernel_h + static_cast<int>(rng() % 30);
        in.w = s.kernel_w + static_cast<int>(rng() % 45);
        out.push_back({s, in});
    }
    return out;
}

}  // namespace

TEST(Conv2d, IdentityKernel) {
    ConvSpec s = ConvSpec::square(1, 1, 1, 1);
    ConvWeights w{Tensor(s.weight_shape(), 1.0f), {0.0f}};
    s.has_bias = true;
    std::mt19937 rng(1);
    const Tensor x = oracle::random_tensor({1, 1, 9, 13}, rng);
    EXPECT_EQ(conv2d(x, s, w), x);
    EXPECT_EQ(conv2d(x, s, w, {KernelPath::kReference, 1}), x);
}

TEST(Conv2d, ZeroKernelGivesBias) {
    const ConvSpec s = ConvSpec::square(3, 1, 4, 5, true);
    ConvWeights w{Tensor(s.weight_shape(), 0.0f), std::vector<float>(5, 7.0f)};
    std::mt19937 rng(2);
    const Tensor x = oracle::random_tensor({1, 4, 11, 20}, rng);
    for (const KernelPath p : {KernelPath::kReference, KernelPath::kOptimized}) {
        const Tensor y = conv2d(x, s, w, {p, 1});
        for (float v : y.data()) ASSERT_EQ(v, 7.0f);
    }
}

TEST(Conv2d, MatchesOracleOnFixedCase) {
    std::mt19937 rng(3);
    const ConvSpec s = ConvSpec::square(3, 1, 3, 8, true);
    const ConvWeights w = random_weights(s, rng);
    const Tensor x = oracle::random_tensor({1, 3, 16, 16}, rng);
    const Tensor want = oracle::conv2d(x, s, w.kernel, w.bias);
    EXPECT_LE(oracle::max_rel_error(conv2d(x, s, w, {KernelPath::kReference, 1}), want), 1e-5);
    EXPECT_LE(oracle::max_rel_error(conv2d(x, s, w, {KernelPath::kOptimized, 1}), want), 1e-5);
}

TEST(Conv2d, RandomCasesMatchOracleOnBothPaths) {
    int checked = 0;
    std::mt19937 rng(4);
    for (const ConvCase& c : random_cases(160, 11)) {
        const ConvWeights w = random_weights(c.spec, rng);
        const Tensor x = oracle::random_tensor(c.input, rng);
        const Tensor want = oracle::conv2d(x, c.spec, w.kernel, w.bias);
        const Tensor ref = conv2d(x, c.spec, w, {KernelPath::kReference, 1});
        const Tensor opt = conv2d(x, c.spec, w, {KernelPath::kOptimized, 1});
        ASSERT_LE(oracle::max_rel_error(ref, want), 1e-5) << "case " << checked << " " << c.input.str();
        ASSERT_LE(oracle::max_rel_error(opt, want), 1e-5) << "case " << checked << " " << c.input.str();
        ++checked;
    }
    EXPECT_GE(checked, 100);
}

TEST(Conv2d, DirectPathShapesMatchOracle) {
    // Stride-1 ungrouped 3x3 and 5x5 convs with widths around the vector tile
    // boundaries and channel counts around the output-channel block sizes.
    std::mt19937 rng(5);
    for (int k : {3, 5}) {
        for (int width : {8, 9, 15, 16, 17, 31, 32, 33, 40, 64}) {
            for (int oc : {1, 4, 7, 8, 9, 16, 17}) {
                const ConvSpec s = ConvSpec::square(k, 1, 5, oc, oc % 2 == 1);
                const ConvWeights w = random_weights(s, rng);
                const Tensor x = oracle::random_tensor({1, 5, 6, width}, rng);
                const Tensor want = oracle::conv2d(x, s, w.kernel, w.bias);
                ASSERT_LE(oracle::max_rel_error(conv2d(x, s, w), want), 1e-5) << "k " << k << " w " << width << " oc " << oc;
            }
        }
    }
}

TEST(Conv2d, ThreadCountDoesNotChangeResult) {
    std::mt19937 rng(6);
    for (const ConvSpec& s : {ConvSpec::square(3, 1, 16, 16), ConvSpec::square(3, 2, 16, 32, true),
                              ConvSpec::square(3, 1, 16, 16, true, 16), ConvSpec::square(1, 1, 16, 24)}) {
        const ConvWeights w = random_weights(s, rng);
        const Tensor x = oracle::random_tensor({1, 16, 23, 37}, rng);
        const Tensor one = conv2d(x, s, w, {KernelPath::kOptimized, 1});
        EXPECT_EQ(conv2d(x, s, w, {KernelPath::kOptimized, 3}), one);
        EXPECT_EQ(conv2d(x, s, w, {KernelPath::kOptimized, 4}), one);
    }
}

TEST(Conv2d, RejectsMismatchedInput) {
    const ConvSpec s = ConvSpec::square(3, 1, 4, 4);
    ConvWeights w{Tensor(s.weight_shape()), {}};
    EXPECT_THROW(conv2d(Tensor({1, 3, 8, 8}), s, w), std::invalid_argument);
    ConvWeights bad{Tensor(Shape{4, 4, 1, 1}), {}};
    EXPECT_ANY_THROW(conv2d(Tensor({1, 4, 8, 8}), s, bad));
}

TEST(Depthwise, OnesKernelIsIdentity) {
    const ConvSpec s = ConvSpec::square(1, 1, 6, 6, false, 6);
    ConvWeights w{Tensor(s.weight_shape(), 1.0f), {}};
    std::mt19937 rng(7);
    const Tensor x = oracle::random_tensor({1, 6, 10, 21}, rng);
    EXPECT_EQ(depthwise_conv2d(x, s, w), x);
}

TEST(Depthwise, ChannelsStaySeparate) {
    const ConvSpec s = ConvSpec::square(3, 1, 4, 4, false, 4);
    std::mt19937 rng(8);
    ConvWeights w = random_weights(s, rng);
    Tensor x = oracle::random_tensor({1, 4, 12, 12}, rng);
    std::fill_n(x.plane(0, 0), x.shape().plane(), 0.0f);
    const Tensor y = depthwise_conv2d(x, s, w);
    for (std::int64_t i = 0; i < y.shape().plane(); ++i) EXPECT_EQ(y.plane(0, 0)[i], 0.0f);
}

TEST(Depthwise, RandomCasesMatchOracle) {
    std::mt19937 rng(9);
    int checked = 0;
    for (int k : {1, 3, 5, 7}) {
        for (int stride : {1, 2, 4}) {
            for (int width : {7, 16, 29}) {
                const int c = 2 + static_cast<int>(rng() % 11);
                const ConvSpec s = ConvSpec::square(k, stride, c, c, checked % 2 == 0, c);
                const ConvWeights w = random_weights(s, rng);
                const Tensor x = oracle::random_tensor({1, c, k + 9, width + k}, rng);
                const Tensor want = oracle::conv2d(x, s, w.kernel, w.bias);
                for (const KernelPath p : {KernelPath::kReference, KernelPath::kOptimized}) {
                    ASSERT_LE(oracle::max_rel_error(depthwise_conv2d(x, s, w, {p, 1}), want), 1e-5)
                        << "k " << k << " s " << stride << " w " << width;
                }
                ++checked;
            }
        }
    }
}

TEST(Depthwise, RejectsDenseSpec) {
    const ConvSpec s = ConvSpec::square(3, 1, 4, 4);
    ConvWeights w{Tensor(s.weight_shape()), {}};
    EXPECT_THROW(depthwise_conv2d(Tensor({1, 4, 8, 8}), s, w), std::invalid_argument);
}

TEST(MaxPool, ConstantInput) {
    const Tensor x({1, 2, 6, 6}, 3.5f);
    const Tensor y = maxpool2d(x, PoolSpec{3, 2, 1});
    for (float v : y.data()) EXPECT_EQ(v, 3.5f);
}

TEST(MaxPool, TwoByTwo) {
    const Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
    const Tensor y = maxpool2d(x, PoolSpec{2, 2, 0});
    ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
    EXPECT_EQ(y.data()[0], 4.0f);
}

TEST(MaxPool, RandomCasesMatchOracleExactly) {
    std::mt19937 rng(10);
    for (int i = 0; i < 60; ++i) {
        const int k = 2 + static_cast<int>(rng() % 3);
        const int stride = 1 + static_cast<int>(rng() % 2);
        const int pad = static_cast<int>(rng() % static_cast<unsigned>(k / 2 + 1));
        // All-negative values check that padded positions never win.
        const Tensor x = oracle::random_tensor({1, 3, k + static_cast<int>(rng() % 12), k + static_cast<int>(rng() % 15)}, rng,
                                               -5.0f, -0.5f);
        const Tensor want = oracle::maxpool(x, k, stride, pad);
        for (const KernelPath p : {KernelPath::kReference, KernelPath::kOptimized}) {
            ASSERT_EQ(maxpool2d(x, PoolSpec{k, stride, pad}, {p, 1}), want) << "k " << k << " s " << stride << " p " << pad;
        }
    }
}

TEST(Upsample, SinglePixel) {
    const Tensor y = upsample_nearest2x(Tensor({1, 1, 1, 1}, 2.5f));
    EXPECT_EQ(y, Tensor({1, 1, 2, 2}, 2.5f));
}

TEST(Upsample, EvenSamplesRecoverInputAndMatchIndexMap) {
    std::mt19937 rng(11);
    const Tensor x = oracle::random_tensor({1, 16, 5, 7}, rng);
    const Tensor y = upsample_nearest2x(x);
    ASSERT_EQ(y.shape(), (Shape{1, 16, 10, 14}));
    for (int c = 0; c < 16; ++c) {
        for (int h = 0; h < 10; ++h) {
            for (int w = 0; w < 14; ++w) ASSERT_EQ(y.at(0, c, h, w), x.at(0, c, h / 2, w / 2));
        }
    }
}

TEST(CropSpatial, TopLeft) {
    std::mt19937 rng(12);
    const Tensor x = oracle::random_tensor({1, 2, 6, 8}, rng);
    const Tensor y = crop_spatial(x, 5, 7);
    ASSERT_EQ(y.shape(), (Shape{1, 2, 5, 7}));
    EXPECT_EQ(y.at(0, 1, 4, 6), x.at(0, 1, 4, 6));
}

TEST(FoldBatchnorm, IdentityNormalizationLeavesWeights) {
    std::mt19937 rng(13);
    const ConvSpec s = ConvSpec::square(3, 1, 4, 6);
    const ConvWeights w = random_weights(s, rng);
    BatchNormParams bn{std::vector<float>(6, 1.0f), std::vector<float>(6, 0.0f), std::vector<float>(6, 0.0f),
                       std::vector<float>(6, 1.0f), 0.0f};
    const ConvWeights f = fold_batchnorm(s, w, bn);
    for (std::int64_t i = 0; i < w.kernel.numel(); ++i) {
        EXPECT_NEAR(f.kernel.data()[i], w.kernel.data()[i], 1e-7);
    }
    for (float b : f.bias) EXPECT_EQ(b, 0.0f);
}

TEST(FoldBatchnorm, GammaTwoDoublesKernel) {
    std::mt19937 rng(14);
    const ConvSpec s = ConvSpec::square(3, 1, 2, 3);
    const ConvWeights w = random_weights(s, rng);
    BatchNormParams bn{std::vector<float>(3, 2.0f), std::vector<float>(3, 0.0f), std::vector<float>(3, 0.0f),
                       std::vector<float>(3, 1.0f), 0.0f};
    const ConvWeights f = fold_batchnorm(s, w, bn);
    for (std::int64_t i = 0; i < w.kernel.numel(); ++i) EXPECT_EQ(f.kernel.data()[i], 2.0f * w.kernel.data()[i]);
}

TEST(FoldBatchnorm, MatchesTwoStepEvaluation) {
    std::mt19937 rng(15);
    for (const bool bias : {false, true}) {
        for (const int groups : {1, 8}) {
            const ConvSpec s = ConvSpec::square(3, 1, 8, 8, bias, groups);
            const ConvWeights w = random_weights(s, rng);
            std::uniform_real_distribution<float> pos(0.5f, 2.0f);
            BatchNormParams bn;
            for (int c = 0; c < 8; ++c) {
                bn.gamma.push_back(pos(rng));
                bn.beta.push_back(pos(rng) - 1.0f);
                bn.running_mean.push_back(pos(rng) - 1.25f);
                bn.running_var.push_back(pos(rng));
            }
            const Tensor x = oracle::random_tensor({1, 8, 12, 12}, rng);
            const Tensor two_step = apply_batchnorm(conv2d(x, s, w, {KernelPath::kReference, 1}), bn);
            const ConvWeights f = fold_batchnorm(s, w, bn);
            ConvSpec folded = s;
            folded.has_bias = true;
            EXPECT_LE(oracle::max_rel_error(conv2d(x, folded, f, {KernelPath::kReference, 1}), two_step), 1e-5);
            EXPECT_LE(oracle::max_rel_error(conv2d(x, folded, f), two_step), 1e-5);
        }
    }
}

TEST(WeightedFusion, SingleInputNearIdentity) {
    std::mt19937 rng(16);
    const Tensor x = oracle::random_tensor({1, 3, 4, 4}, rng);
    const float w[] = {1.0f};
    EXPECT_LE(oracle::max_rel_error(weighted_fusion(std::span(&x, 1), w, 1e-4f), x), 2e-4);
}

TEST(WeightedFusion, EqualInputsEqualWeights) {
    std::mt19937 rng(17);
    const Tensor x = oracle::random_tensor({1, 3, 4, 4}, rng);
    const Tensor xs[] = {x, x};
    const float w[] = {0.7f, 0.7f};
    EXPECT_LE(oracle::max_rel_error(weighted_fusion(xs, w), x), 2e-4);
}

TEST(WeightedFusion, MatchesScalarFormula) {
    std::mt19937 rng(18);
    const Tensor a = oracle::random_tensor({1, 2, 3, 5}, rng);
    const Tensor b = oracle::random_tensor({1, 2, 3, 5}, rng);
    const Tensor xs[] = {a, b};
    const float w[] = {1.0f, 3.0f};
    const Tensor y = weighted_fusion(xs, w, 1e-4f);
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        const double want = (1.0 * a.data()[i] + 3.0 * b.data()[i]) / (4.0 + 1e-4);
        EXPECT_NEAR(y.data()[i], want, 1e-6);
    }
}

TEST(WeightedFusion, NegativeWeightsAreClamped) {
    const Tensor a({1, 1, 1, 2}, 2.0f);
    const Tensor b({1, 1, 1, 2}, 10.0f);
    const Tensor xs[] = {a, b};
    const float w[] = {1.0f, -5.0f};
    const Tensor y = weighted_fusion(xs, w, 0.0f);
    EXPECT_EQ(y.data()[0], 2.0f);
}

TEST(MaxOut, RejectsWrongChannelCount) {
    EXPECT_ANY_THROW(maxout_background(Tensor({1, 3, 1, 1}), 3));
}

TEST(MaxOut, ReducesFourToTwo) {
    // Channels: three background logits then the face logit.
    const Tensor x({1, 4, 1, 2}, {1, 5, 3, 0, 2, -1, 7, 8});
    const Tensor y = maxout_background(x, 3);
    ASSERT_EQ(y.shape(), (Shape{1, 2, 1, 2}));
    EXPECT_EQ(y.at(0, 0, 0, 0), 3.0f);
    EXPECT_EQ(y.at(0, 0, 0, 1), 5.0f);
    EXPECT_EQ(y.at(0, 1, 0, 0), 7.0f);
    EXPECT_EQ(y.at(0, 1, 0, 1), 8.0f);
}

TEST(Gemm, MatchesTripleLoop) {
    std::mt19937 rng(19);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 1 + static_cast<int>(rng() % 40);
        const int n = 1 + static_cast<int>(rng() % 90);
        const int k = 1 + static_cast<int>(rng() % 50);
        const auto a = oracle::random_vector(static_cast<std::size_t>(m * k), rng);
        const auto b = oracle::random_vector(static_cast<std::size_t>(k * n), rng);
        const auto bias = oracle::random_vector(static_cast<std::size_t>(m), rng);
        std::vector<float> c(static_cast<std::size_t>(m * n));
        detail::sgemm_bias(m, n, k, a.data(), b.data(), bias, c.data(), 1 + trial % 3);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                double want = bias[i];
                for (int p = 0; p < k; ++p) want += static_cast<double>(a[i * k + p]) * b[p * n + j];
                ASSERT_NEAR(c[i * n + j], want, 1e-5 * std::max(1.0, std::abs(want))) << m << "x" << n << "x" << k;
            }
        }
    }
}

TEST(KernelIsa, ReportsKnownName) {
    const std::string_view isa = kernel_isa();
    EXPECT_TRUE(isa == "baseline" || isa == "avx2" || isa == "avx512") << isa;
    if (const char* forced = std::getenv("ERESFD_ISA")) {
        // Forcing a lower level always works; a higher one only on capable CPUs.
        if (std::string_view(forced) == "baseline") EXPECT_EQ(isa, "baseline");
    }
}
