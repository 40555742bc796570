#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "avlit/afrcnn.hpp"
#include "gradcheck.hpp"

using namespace avlit;
using avlit::testing::grad_check;
using avlit::testing::random_tensor;
using avlit::testing::T64;

namespace {

BlockConfig audio_config() { return {.io_channels = 512, .bottleneck = 128, .stage_channels = 512, .stages = 5}; }
BlockConfig video_config() { return {.io_channels = 128, .bottleneck = 128, .stage_channels = 128, .stages = 5}; }
BlockConfig tiny_config() { return {.io_channels = 8, .bottleneck = 4, .stage_channels = 8, .stages = 2}; }

T64 weighted_sum(const T64& y, const T64& r) { return sum(mul(y, r)); }

void freeze(ParamList<double>& params) {
  for (auto& p : params) p.value.set_requires_grad(false);
}

}  // namespace

TEST(Afrcnn, AudioShapePreserved) {
  std::mt19937_64 rng(1);
  AfrcnnBlock<float> block(audio_config(), rng);
  auto x = Tensor<float>::full({512, 1599}, 0.1f);
  NoGradGuard no_grad;
  std::vector<std::size_t> lengths;
  auto y = block.forward(x, &lengths);
  EXPECT_EQ(y.shape(), (Shape{512, 1599}));
  EXPECT_EQ(lengths, (std::vector<std::size_t>{1599, 800, 400, 200, 100}));
}

TEST(Afrcnn, ShapePreservedAcrossConfigsAndLengths) {
  std::mt19937_64 rng(2);
  for (std::size_t stages : {1u, 2u, 3u, 4u}) {
    BlockConfig cfg{.io_channels = 6, .bottleneck = 3, .stage_channels = 5, .stages = stages};
    AfrcnnBlock<double> block(cfg, rng);
    for (std::size_t len = cfg.min_length(); len < cfg.min_length() + 9; ++len) {
      auto x = random_tensor({6, len}, rng, -1, 1, false);
      std::vector<std::size_t> lengths;
      auto y = block.forward(x, &lengths);
      EXPECT_EQ(y.shape(), x.shape());
      EXPECT_EQ(lengths, pyramid_lengths(len, stages));
      ASSERT_EQ(lengths.size(), stages);
      for (std::size_t s = 0; s < stages; ++s) {
        const auto expected = static_cast<std::size_t>(std::ceil(static_cast<double>(len) / std::ldexp(1.0, s)));
        EXPECT_EQ(lengths[s], expected) << "S=" << stages << " len=" << len << " s=" << s;
        EXPECT_GE(lengths[s], 1u);
      }
    }
  }
}

TEST(Afrcnn, ZeroInputWithZeroExitGivesZero) {
  std::mt19937_64 rng(3);
  AfrcnnBlock<double> block(tiny_config(), rng);
  for (auto& v : block.weights().exit.weight.mutable_data()) v = 0.0;
  for (auto& v : block.weights().exit.bias.mutable_data()) v = 0.0;
  auto y = block.forward(T64::zeros({8, 16}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Afrcnn, ResidualForm) {
  std::mt19937_64 rng(4);
  AfrcnnBlock<double> block(tiny_config(), rng);
  for (auto& v : block.weights().exit.weight.mutable_data()) v = 0.0;
  for (auto& v : block.weights().exit.bias.mutable_data()) v = 0.0;
  auto x = random_tensor({8, 21}, rng, -1, 1, false);
  auto y = block.forward(x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Afrcnn, TooShortInputIsConfigError) {
  std::mt19937_64 rng(5);
  BlockConfig cfg = tiny_config();
  cfg.stages = 4;
  AfrcnnBlock<double> block(cfg, rng);
  EXPECT_NO_THROW(block.forward(T64::zeros({8, 8})));
  EXPECT_THROW(block.forward(T64::zeros({8, 7})), ConfigError);
}

TEST(Afrcnn, WrongChannelsIsDimensionError) {
  std::mt19937_64 rng(6);
  AfrcnnBlock<double> block(tiny_config(), rng);
  EXPECT_THROW(block.forward(T64::zeros({7, 16})), DimensionError);
}

TEST(Afrcnn, InvalidConfigsRejected) {
  EXPECT_THROW((BlockConfig{.io_channels = 8, .bottleneck = 4, .stage_channels = 8, .stages = 0}.validate()),
               ConfigError);
  EXPECT_THROW((BlockConfig{.io_channels = 8, .bottleneck = 0, .stage_channels = 8, .stages = 2}.validate()),
               ConfigError);
  EXPECT_THROW((BlockConfig{.io_channels = 8, .bottleneck = 9, .stage_channels = 8, .stages = 2}.validate()),
               ConfigError);
  EXPECT_THROW(block_param_count({.io_channels = 8, .bottleneck = 4, .stage_channels = 8, .stages = 2,
                                  .down_kernel = 4}),
               ConfigError);
}

TEST(Afrcnn, ParamCountMatchesEnumeration) {
  std::mt19937_64 rng(7);
  for (const auto& cfg : {tiny_config(), video_config(), audio_config(),
                          BlockConfig{.io_channels = 5, .bottleneck = 3, .stage_channels = 7, .stages = 1},
                          BlockConfig{.io_channels = 9, .bottleneck = 2, .stage_channels = 4, .stages = 3,
                                      .down_kernel = 3}}) {
    AfrcnnBlock<float> block(cfg, rng);
    EXPECT_EQ(count_elements(block.parameters("b")), block_param_count(cfg));
  }
}

TEST(Afrcnn, ParamCountIndependentOfLength) {
  // The count takes no length at all; confirm the same weights serve any length.
  std::mt19937_64 rng(8);
  AfrcnnBlock<double> block(tiny_config(), rng);
  const auto before = count_elements(block.parameters(""));
  for (std::size_t len : {2u, 16u, 33u}) block.forward(T64::zeros({8, len}));
  EXPECT_EQ(count_elements(block.parameters("")), before);
  EXPECT_EQ(before, block_param_count(tiny_config()));
}

TEST(Afrcnn, AudioParamBudgetWithinTwentyPercent) {
  const double n = static_cast<double>(block_param_count(audio_config()));
  EXPECT_NEAR(n / 4.9e6, 1.0, 0.2) << n;
}

TEST(Afrcnn, VideoParamBudgetWithinTwentyPercent) {
  const double n = static_cast<double>(block_param_count(video_config()));
  EXPECT_NEAR(n / 0.35e6, 1.0, 0.2) << n;
}

TEST(Afrcnn, GradientCheckTinyBlock) {
  std::mt19937_64 rng(9);
  AfrcnnBlock<double> block(tiny_config(), rng);
  auto x = random_tensor({8, 16}, rng);
  auto r = random_tensor({8, 16}, rng, -1, 1, false);
  std::vector<T64> leaves{x};
  for (auto& p : block.parameters("")) leaves.push_back(p.value);
  auto res = grad_check(leaves, [&](const std::vector<T64>& l) { return weighted_sum(block.forward(l[0]), r); });
  EXPECT_LT(res.max_rel_error, 1e-4);
  EXPECT_GT(res.checked, 0u);
}

TEST(Afrcnn, GradientCheckThreeStagesOddLength) {
  std::mt19937_64 rng(10);
  BlockConfig cfg{.io_channels = 5, .bottleneck = 3, .stage_channels = 4, .stages = 3};
  AfrcnnBlock<double> block(cfg, rng);
  auto x = random_tensor({5, 13}, rng);
  auto r = random_tensor({5, 13}, rng, -1, 1, false);
  std::vector<T64> leaves{x};
  for (auto& p : block.parameters("")) leaves.push_back(p.value);
  auto res = grad_check(leaves, [&](const std::vector<T64>& l) { return weighted_sum(block.forward(l[0]), r); });
  EXPECT_LT(res.max_rel_error, 1e-4);
}

TEST(Afrcnn, SharedWeightsReceiveSumOfIterationGradients) {
  std::mt19937_64 rng(11);
  AfrcnnBlock<double> block(tiny_config(), rng);
  auto x = random_tensor({8, 16}, rng, -1, 1, false);
  auto r = random_tensor({8, 16}, rng, -1, 1, false);
  auto params = block.parameters("");

  for (auto& p : params) p.value.zero_grad();
  weighted_sum(block.forward(block.forward(x)), r).backward();
  std::vector<std::vector<double>> unrolled;
  for (auto& p : params) unrolled.emplace_back(p.value.grad().begin(), p.value.grad().end());

  auto frozen = block.clone();
  auto frozen_params = frozen.parameters("");
  freeze(frozen_params);

  // First iteration live, second replayed through a frozen copy.
  for (auto& p : params) p.value.zero_grad();
  weighted_sum(frozen.forward(block.forward(x)), r).backward();
  std::vector<std::vector<double>> first;
  for (auto& p : params) first.emplace_back(p.value.grad().begin(), p.value.grad().end());

  // Second iteration live, fed by the frozen first iteration.
  for (auto& p : params) p.value.zero_grad();
  weighted_sum(block.forward(frozen.forward(x)), r).backward();

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto second = params[i].value.grad();
    for (std::size_t k = 0; k < second.size(); ++k) {
      const double expected = first[i][k] + second[k];
      EXPECT_NEAR(unrolled[i][k], expected, 1e-10 * std::max(1.0, std::abs(expected))) << params[i].name;
    }
  }
}

TEST(Afrcnn, CloneIsIndependent) {
  std::mt19937_64 rng(12);
  AfrcnnBlock<double> block(tiny_config(), rng);
  auto copy = block.clone();
  auto x = random_tensor({8, 10}, rng, -1, 1, false);
  auto a = block.forward(x), b = copy.forward(x);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
  copy.weights().exit.bias.mutable_data()[0] += 1.0;
  EXPECT_NE(block.weights().exit.bias.data()[0], copy.weights().exit.bias.data()[0]);
}

TEST(Afrcnn, ParameterNamesUnique) {
  std::mt19937_64 rng(13);
  AfrcnnBlock<float> block(audio_config(), rng);
  auto params = block.parameters("audio_block");
  std::set<std::string> names;
  for (const auto& p : params) EXPECT_TRUE(names.insert(p.name).second) << p.name;
}
