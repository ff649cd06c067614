#include "modar/errors.hpp"
#include "modar/forecast.hpp"
#include "modar/rng.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

namespace modar::forecast {
namespace {

using testing::make_box;

/// Track x(t) = x0 + v t along +x, frames 0..n-1.
TrackletInput straight_track(int n, double x_last, double v, double yaw = 0.0) {
  TrackletInput in;
  for (int i = 0; i < n; ++i) {
    const double t = 0.1 * (i - (n - 1));
    in.entries.push_back({i, make_box(x_last + v * t, 0.0, 4.5, 2.0, yaw), 1.0});
  }
  return in;
}

const Trajectory& most_confident(const std::vector<Trajectory>& ts) {
  return *std::max_element(ts.begin(), ts.end(),
                           [](const Trajectory& a, const Trajectory& b) { return a.confidence < b.confidence; });
}

TEST(Validate, LengthAndOrder) {
  EXPECT_THROW(validate(TrackletInput{}), InvariantViolation);
  EXPECT_THROW(validate(straight_track(12, 0, 1)), InvariantViolation);
  TrackletInput bad = straight_track(3, 0, 1);
  bad.entries[2].frame_index = 1;
  EXPECT_THROW(validate(bad), InvariantViolation);
  EXPECT_NO_THROW(validate(straight_track(11, 0, 1)));
}

TEST(Stationary, AnchoredAtLastBox) {
  TrackletInput in;
  in.entries.push_back({0, make_box(10, 5), 1.0});
  const auto out = forecast_stationary(in);
  ASSERT_EQ(out.size(), 1U);
  ASSERT_EQ(out[0].waypoints.size(), static_cast<std::size_t>(kHorizon));
  EXPECT_EQ(out[0].waypoints.back().offset, 80);
  EXPECT_DOUBLE_EQ(out[0].waypoints.back().x, 10.0);
  EXPECT_DOUBLE_EQ(out[0].waypoints.back().y, 5.0);
  EXPECT_DOUBLE_EQ(out[0].waypoints.back().yaw, 0.0);

  const auto moving = forecast_stationary(straight_track(11, 3.0, 2.0));
  for (const auto& wp : moving[0].waypoints) EXPECT_DOUBLE_EQ(wp.x, 3.0);
}

TEST(ConstantVelocity, EightSecondHorizon) {
  const auto out = forecast_cv(straight_track(11, 1.0, 1.0));
  ASSERT_EQ(out.size(), 1U);
  EXPECT_NEAR(out[0].waypoints.back().x, 9.0, 1e-9);
  EXPECT_NEAR(out[0].waypoints[9].x, 2.0, 1e-9);
}

TEST(ConstantVelocity, StationaryTrackMatchesStationary) {
  const auto in = straight_track(11, 4.0, 0.0);
  const auto cv = forecast_cv(in);
  const auto st = forecast_stationary(in);
  for (int m = 0; m < kHorizon; ++m) {
    EXPECT_NEAR(cv[0].waypoints[static_cast<std::size_t>(m)].x, st[0].waypoints[static_cast<std::size_t>(m)].x, 1e-12);
    EXPECT_NEAR(cv[0].waypoints[static_cast<std::size_t>(m)].y, st[0].waypoints[static_cast<std::size_t>(m)].y, 1e-12);
  }
}

TEST(FitVelocity, UnbiasedUnderNoise) {
  // The least-squares slope over 11 frames has std sigma / sqrt(sum (t - tbar)^2).
  const double sigma = 0.1;
  double sxx = 0.0;
  for (int i = 0; i < 11; ++i) sxx += std::pow(0.1 * (i - 5), 2);
  const double slope_std = sigma / std::sqrt(sxx);
  int within = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(substream_seed(seed, "fit-velocity-test"));
    std::normal_distribution<double> n(0.0, sigma);
    auto in = straight_track(11, 0.0, 3.0);
    for (auto& e : in.entries) e.box.cx += n(rng);
    const Vec2 v = fit_velocity(in.entries, 0.1);
    within += std::abs(v.x() - 3.0) <= 3.0 * slope_std;
  }
  EXPECT_GE(within, 98);
}

TEST(MultiHypothesis, SixNormalizedHypotheses) {
  const auto out = forecast_multihyp(straight_track(11, 0.0, 5.0));
  ASSERT_EQ(out.size(), 6U);
  double total = 0.0;
  for (const auto& t : out) {
    EXPECT_GE(t.confidence, 0.0);
    EXPECT_EQ(t.waypoints.size(), static_cast<std::size_t>(kHorizon));
    total += t.confidence;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  const auto single = forecast_multihyp(straight_track(1, 0.0, 0.0));
  EXPECT_EQ(single.size(), 6U);
}

TEST(MultiHypothesis, ConstantVelocityWinsOnStraightTrack) {
  const auto in = straight_track(11, 0.0, 5.0);
  const auto& best = most_confident(forecast_multihyp(in));
  const auto cv = forecast_cv(in);
  EXPECT_NEAR(best.waypoints.back().x, cv[0].waypoints.back().x, 1e-6);
}

TEST(MultiHypothesis, StationaryWinsOnParkedTrack) {
  const auto in = straight_track(11, 7.0, 0.0);
  const auto& best = most_confident(forecast_multihyp(in));
  EXPECT_NEAR(best.waypoints.back().x, 7.0, 1e-9);
}

TEST(Reverse, ConstantVelocityRunsBackwards) {
  // Earliest position x = 5 at frame 0, moving +1 m/s.
  TrackletInput in;
  for (int i = 0; i < 11; ++i) in.entries.push_back({i, make_box(5.0 + 0.1 * i, 0.0), 1.0});
  const auto out = forecast_reverse(in, forecast_cv);
  ASSERT_EQ(out.size(), 1U);
  EXPECT_NEAR(out[0].waypoints[9].x, 4.0, 1e-9);
  // Heading still points along the motion.
  EXPECT_NEAR(out[0].waypoints[9].yaw, 0.0, 1e-9);
}

TEST(Reverse, StationaryInnerStaysAtEarliest) {
  TrackletInput in;
  for (int i = 0; i < 5; ++i) in.entries.push_back({i, make_box(2.0 + i, 1.0), 1.0});
  const auto out = forecast_reverse(in, forecast_stationary);
  for (const auto& wp : out[0].waypoints) {
    EXPECT_DOUBLE_EQ(wp.x, 2.0);
    EXPECT_DOUBLE_EQ(wp.y, 1.0);
  }
}

TEST(Metrics, Examples) {
  const auto cv = forecast_cv(straight_track(11, 0.0, 1.0));
  std::vector<std::optional<Vec2>> gt(kHorizon);
  for (int m = 1; m <= kHorizon; ++m) gt[static_cast<std::size_t>(m - 1)] = Vec2(0.1 * m, 0.0);
  const auto perfect = forecast_metrics(cv, gt);
  EXPECT_NEAR(perfect.ade, 0.0, 1e-9);
  EXPECT_NEAR(perfect.min_fde, 0.0, 1e-9);

  std::vector<std::optional<Vec2>> shifted(gt);
  for (auto& g : shifted) *g += Vec2(0.0, 1.0);
  const auto off = forecast_metrics(cv, shifted);
  EXPECT_NEAR(off.ade, 1.0, 1e-9);
  EXPECT_NEAR(off.fde, 1.0, 1e-9);

  std::vector<Trajectory> bank(6, forecast_stationary(straight_track(11, 0.0, 1.0))[0]);
  for (auto& t : bank) t.confidence = 0.19;
  bank[3] = cv[0];
  bank[3].confidence = 0.05;
  const auto mixed = forecast_metrics(bank, gt);
  EXPECT_NEAR(mixed.min_ade, 0.0, 1e-9);
  EXPECT_GT(mixed.ade, 0.0);

  EXPECT_THROW(forecast_metrics(cv, std::vector<std::optional<Vec2>>(kHorizon)), EmptyGroundTruth);
}

TEST(PredictorNames, RoundTrip) {
  for (auto k : {PredictorKind::kStationary, PredictorKind::kConstantVelocity, PredictorKind::kMultiHypothesis}) {
    EXPECT_EQ(predictor_from_string(to_string(k)), k);
  }
  EXPECT_FALSE(predictor_from_string("LSTM"));
}

}  // namespace
}  // namespace modar::forecast
