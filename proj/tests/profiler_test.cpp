#include <gtest/gtest.h>

#include <sstream>

#include "avlit/errors.hpp"
#include "avlit/profiler.hpp"
#include "micro_config.hpp"

using namespace avlit;

namespace {

std::uint64_t instrumented_macs(const ModelConfig& c, double seconds) {
  AvlitModel<float> model(c, 1);
  const std::size_t T = input_samples(c, seconds), F = c.expected_frames(T);
  auto x = Tensor<float>::zeros({1, T});
  auto v = Tensor<float>::zeros({c.speakers, F, c.frame_height, c.frame_width});
  NoGradGuard no_grad;
  instrument::reset_macs();
  model.separate(x, v);
  return instrument::macs();
}

}  // namespace

TEST(CountParams, EqualAcrossPresets) {
  const auto p2 = count_params(preset("avlit-2"));
  EXPECT_EQ(p2, count_params(preset("avlit-4")));
  EXPECT_EQ(p2, count_params(preset("avlit-8")));
}

TEST(CountParams, ConstantInIterationCount) {
  auto c = preset("avlit-4");
  const auto base = count_params(c);
  for (std::size_t n = 1; n <= 16; ++n) {
    c.audio_iters = n;
    c.video_iters = std::max<std::size_t>(1, n / 2);
    c.fusion_positions = {0};
    EXPECT_EQ(count_params(c), base) << n;
  }
}

TEST(CountParams, MatchesReportAndEnumeration) {
  for (const auto& c : {preset("avlit-2"), avlit::testing::micro_config()}) {
    AvlitModel<float> model(c, 0);
    EXPECT_EQ(count_params(c), count_elements(model.parameters()));
    EXPECT_EQ(cost_report(c, 1.0).total_params(), count_params(c));
  }
}

TEST(CountParams, DefaultBudget) {
  const double p = static_cast<double>(count_params(preset("avlit-2")));
  EXPECT_NEAR(p, 5.75e6, 0.2 * 5.75e6);
}

TEST(CountMacs, AffineAcrossPresets) {
  const auto m2 = count_macs(preset("avlit-2"), 2.0);
  const auto m4 = count_macs(preset("avlit-4"), 2.0);
  const auto m8 = count_macs(preset("avlit-8"), 2.0);
  EXPECT_EQ(m8 - m4, 2 * (m4 - m2));
}

TEST(CountMacs, ExactlyAffineInAudioIterations) {
  auto c = preset("avlit-4");
  std::vector<std::uint64_t> macs;
  for (std::size_t n = 1; n <= 8; ++n) {
    c.audio_iters = n;
    macs.push_back(count_macs(c, 1.0));
  }
  for (std::size_t i = 2; i < macs.size(); ++i) EXPECT_EQ(macs[i] - macs[i - 1], macs[1] - macs[0]);
}

TEST(CountMacs, DefaultMagnitude) {
  const double g = static_cast<double>(count_macs(preset("avlit-4"), 2.0)) / 1e9;
  EXPECT_NEAR(g, 19.03, 0.25 * 19.03);
}

TEST(CountMacs, DoublingDurationDoublesConvCost) {
  const auto c = preset("avlit-2");
  const auto one = cost_report(c, 2.0), two = cost_report(c, 4.0);
  for (std::size_t i = 0; i < one.rows.size(); ++i) {
    // The video pyramid runs on 50 frames, where ceil() at deep levels is not negligible.
    if (one.rows[i].macs == 0 || one.rows[i].layer.rfind("video_block", 0) == 0) continue;
    const double ratio = static_cast<double>(two.rows[i].macs) / static_cast<double>(one.rows[i].macs);
    EXPECT_NEAR(ratio, 2.0, 0.02) << one.rows[i].layer;
  }
  const double total = static_cast<double>(two.total_macs()) / static_cast<double>(one.total_macs());
  EXPECT_NEAR(total, 2.0, 0.01);
}

TEST(CountMacs, MatchesInstrumentedForward) {
  auto c = avlit::testing::micro_config();
  EXPECT_EQ(count_macs(c, 0.05), instrumented_macs(c, 0.05));
  c.audio_iters = 3;
  c.video_iters = 2;
  c.fusion_positions = {0, 2};
  c.audio_block.stages = 3;
  EXPECT_EQ(count_macs(c, 0.0625), instrumented_macs(c, 0.0625));
  c.fusion_positions = {};
  EXPECT_EQ(count_macs(c, 0.0625), instrumented_macs(c, 0.0625));
  c.fusion_positions = {1};
  c.video_iters = 0;
  EXPECT_EQ(count_macs(c, 0.0625), instrumented_macs(c, 0.0625));
}

TEST(CountMacs, MatchesInstrumentedForwardAtFullWidth) {
  auto c = preset("avlit-2");
  c.audio_iters = 1;
  c.video_iters = 1;
  EXPECT_EQ(count_macs(c, 0.75), instrumented_macs(c, 0.75));
}

TEST(CountMacs, InvalidDurationRejected) {
  EXPECT_THROW(count_macs(preset("avlit-2"), 0.0), ConfigError);
  EXPECT_THROW(count_macs(preset("avlit-2"), 0.001), DimensionError);
}

TEST(CostReport, CsvTotalsAreColumnSums) {
  const auto r = cost_report(avlit::testing::micro_config(), 0.05);
  std::istringstream in(r.csv());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "layer,macs,params,act_elems");
  std::uint64_t sums[3] = {0, 0, 0}, totals[3] = {0, 0, 0};
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string name, v;
    std::getline(fields, name, ',');
    auto* dst = name == "total" ? totals : sums;
    for (int k = 0; k < 3; ++k) {
      std::getline(fields, v, ',');
      dst[k] += std::stoull(v);
    }
    rows += name != "total";
  }
  EXPECT_EQ(rows, r.rows.size());
  for (int k = 0; k < 3; ++k) EXPECT_EQ(sums[k], totals[k]);
  EXPECT_EQ(totals[0], r.total_macs());
  EXPECT_NE(r.table().find("N_A=2"), std::string::npos);
}

TEST(TimeInference, SingleTrialHasZeroSpread) {
  AvlitModel<float> model(avlit::testing::micro_config(), 0);
  const auto t = time_inference(model, 0.05, 1);
  EXPECT_EQ(t.trials, 1u);
  EXPECT_EQ(t.stddev, 0.0);
  EXPECT_GT(t.mean, 0.0);
  EXPECT_THROW(time_inference(model, 0.05, 0), ConfigError);
}

TEST(TimeInference, LatencyGrowsWithIterations) {
  auto c = preset("avlit-2");
  c.audio_block.stage_channels = 128;
  c.audio_block.bottleneck = 64;
  c.sample_rate = 8000;
  std::vector<double> means;
  for (std::size_t n : {2, 4, 8}) {
    c.audio_iters = n;
    c.video_iters = n / 2;
    means.push_back(time_inference(AvlitModel<float>(c, 0), 0.75, 3).mean);
  }
  EXPECT_LT(means[0], means[1]);
  EXPECT_LT(means[1], means[2]);
}
