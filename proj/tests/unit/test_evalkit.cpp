#include "modar/errors.hpp"
#include "modar/evalkit.hpp"
#include "modar/rng.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>

namespace modar::eval {
namespace {

using geometry::kPi;
using testing::make_box;
using testing::scratch_dir;

TEST(MatchFrame, PerfectAndBelowThreshold) {
  const std::vector<Box3D> gts{make_box(0, 0)};
  const auto perfect = match_frame(gts, gts, 0.7);
  ASSERT_EQ(perfect.matches.size(), 1U);
  EXPECT_NEAR(perfect.matches[0].iou, 1.0, 1e-12);

  // Shifted along x so the IoU is 0.6.
  const double shift = 4.5 * (1.0 - 0.6) / (1.0 + 0.6);
  const std::vector<Box3D> dets{make_box(shift, 0)};
  ASSERT_NEAR(geometry::iou_3d(dets[0], gts[0]), 0.6, 1e-9);
  const auto miss = match_frame(dets, gts, 0.7);
  EXPECT_TRUE(miss.matches.empty());
  EXPECT_EQ(miss.unmatched_dets, std::vector<int>{0});
  EXPECT_EQ(miss.unmatched_gts, std::vector<int>{0});
}

TEST(MatchFrame, OneToOne) {
  const std::vector<Box3D> gts{make_box(0, 0)};
  const std::vector<Box3D> dets{make_box(0, 0), make_box(0.05, 0)};
  const auto m = match_frame(dets, gts, 0.5);
  EXPECT_EQ(m.matches.size(), 1U);
  EXPECT_EQ(m.unmatched_dets.size(), 1U);
}

TEST(ComputeAp, Examples) {
  const std::vector<ScoredDetection> exact{{0.9, true, 1.0}};
  auto r = compute_ap(exact, 1);
  EXPECT_DOUBLE_EQ(r.ap, 1.0);
  EXPECT_DOUBLE_EQ(r.aph, 1.0);

  const std::vector<ScoredDetection> flipped{{0.9, true, 0.0}};
  r = compute_ap(flipped, 1);
  EXPECT_DOUBLE_EQ(r.ap, 1.0);
  EXPECT_DOUBLE_EQ(r.aph, 0.0);

  r = compute_ap(exact, 2);
  EXPECT_DOUBLE_EQ(r.ap, 0.5);
  EXPECT_EQ(r.fn, 1);

  EXPECT_DOUBLE_EQ(compute_ap({}, 3).ap, 0.0);
  EXPECT_THROW(compute_ap(exact, 0), NoGroundTruth);
}

TEST(ComputeAp, EnvelopeOverFalsePositive) {
  // TP, FP, TP: precision 1, 1/2, 2/3 at recall 1/2, 1/2, 1. Envelope area 0.5 + 0.5 * 2/3.
  const std::vector<ScoredDetection> dets{{0.9, true, 1.0}, {0.8, false, 0.0}, {0.7, true, 1.0}};
  EXPECT_NEAR(compute_ap(dets, 2).ap, 0.5 + 1.0 / 3.0, 1e-12);
}

std::vector<ScoredDetection> random_dets(Rng& rng, int n) {
  std::uniform_int_distribution<int> score(0, 10);
  std::uniform_int_distribution<int> heading(0, 8);
  std::bernoulli_distribution tp(0.6);
  std::vector<ScoredDetection> out;
  for (int i = 0; i < n; ++i) {
    const bool t = tp(rng);
    out.push_back({score(rng) / 10.0, t, t ? heading(rng) / 8.0 : 0.0});
  }
  return out;
}

TEST(ComputeApProperties, BoundedAndPermutationInvariant) {
  Rng rng(substream_seed(4, "ap-test"));
  for (int trial = 0; trial < 200; ++trial) {
    auto dets = random_dets(rng, 1 + trial % 15);
    const int num_gt = static_cast<int>(std::count_if(dets.begin(), dets.end(), [](const auto& d) { return d.true_positive; })) + trial % 3;
    if (num_gt == 0) continue;
    const auto base = compute_ap(dets, num_gt);
    EXPECT_GE(base.aph, 0.0);
    EXPECT_LE(base.aph, base.ap + 1e-12);
    EXPECT_LE(base.ap, 1.0);
    std::shuffle(dets.begin(), dets.end(), rng);
    const auto shuffled = compute_ap(dets, num_gt);
    EXPECT_DOUBLE_EQ(shuffled.ap, base.ap);
    EXPECT_DOUBLE_EQ(shuffled.aph, base.aph);
  }
}

TEST(ComputeApProperties, ExtraFalsePositiveNeverHelps) {
  Rng rng(substream_seed(5, "ap-test"));
  for (int trial = 0; trial < 200; ++trial) {
    auto dets = random_dets(rng, 8);
    const int num_gt = 8;
    const auto before = compute_ap(dets, num_gt);
    dets.push_back({std::uniform_real_distribution<double>(0.0, 1.0)(rng), false, 0.0});
    const auto after = compute_ap(dets, num_gt);
    EXPECT_LE(after.ap, before.ap + 1e-12);
    EXPECT_LE(after.aph, before.aph + 1e-12);
  }
}

SequenceDataset gt_dataset(const std::vector<GtBox>& gts, int frames = 2) {
  SequenceDataset ds;
  for (int i = 0; i < frames; ++i) {
    Frame f;
    f.frame_index = i;
    f.timestamp_us = 100'000LL * i;
    f.gt_boxes = gts;
    ds.frames.push_back(f);
  }
  return ds;
}

GtBox gt(double x, double y, ObjectClass c, int points, double speed = 0.0) {
  GtBox g;
  g.box = c == ObjectClass::kVehicle ? make_box(x, y) : make_box(x, y, 0.8, 0.8, 0.0, c);
  g.num_points_inside = points;
  g.speed_mps = speed;
  return g;
}

TEST(Evaluate, PerfectDetectionsScoreOne) {
  const auto ds = gt_dataset({gt(10, 0, ObjectClass::kVehicle, 50), gt(40, 0, ObjectClass::kPedestrian, 3, 1.0),
                              gt(70, 0, ObjectClass::kVehicle, 2, 12.0)});
  DetectionsByFrame dets;
  for (const Frame& f : ds.frames) {
    for (const GtBox& g : f.gt_boxes) dets[f.frame_index].push_back(g.box);
  }
  const auto r = evaluate(dets, ds, EvalConfig{});
  for (const auto& [key, cell] : r.cells) {
    if (!cell.present()) continue;
    EXPECT_DOUBLE_EQ(*cell.ap, 1.0) << key.breakdown;
    EXPECT_DOUBLE_EQ(*cell.aph, 1.0) << key.breakdown;
  }
  EXPECT_FALSE(r.ap(ObjectClass::kCyclist, Difficulty::kL2));
  ASSERT_TRUE(r.mean_aph_l2);
  EXPECT_DOUBLE_EQ(*r.mean_aph_l2, 1.0);
  // Two vehicles qualify for L2, only one for L1.
  EXPECT_EQ(r.find(ObjectClass::kVehicle, Difficulty::kL2)->num_gt, 4);
  EXPECT_EQ(r.find(ObjectClass::kVehicle, Difficulty::kL1)->num_gt, 2);
}

TEST(Evaluate, NearOnlyDetectionsSplitRangeBuckets) {
  const auto ds = gt_dataset({gt(10, 0, ObjectClass::kVehicle, 50), gt(60, 0, ObjectClass::kVehicle, 20)});
  DetectionsByFrame dets;
  for (const Frame& f : ds.frames) dets[f.frame_index].push_back(f.gt_boxes[0].box);
  const auto r = evaluate(dets, ds, EvalConfig{});
  EXPECT_DOUBLE_EQ(*r.ap(ObjectClass::kVehicle, Difficulty::kL2, "RANGE_0_30"), 1.0);
  EXPECT_DOUBLE_EQ(*r.ap(ObjectClass::kVehicle, Difficulty::kL2, "RANGE_50_PLUS"), 0.0);
  EXPECT_FALSE(r.ap(ObjectClass::kVehicle, Difficulty::kL2, "RANGE_30_50"));
}

TEST(Evaluate, FrameSubsetAndEmptyDetections) {
  const auto ds = gt_dataset({gt(10, 0, ObjectClass::kVehicle, 50)}, 4);
  DetectionsByFrame dets;
  dets[1].push_back(ds.frames[1].gt_boxes[0].box);
  const auto subset = evaluate(dets, ds, EvalConfig{}, {1});
  EXPECT_DOUBLE_EQ(*subset.ap(ObjectClass::kVehicle, Difficulty::kL2), 1.0);
  const auto none = evaluate({}, ds, EvalConfig{});
  EXPECT_DOUBLE_EQ(*none.ap(ObjectClass::kVehicle, Difficulty::kL2), 0.0);
}

TEST(MeanPresent, SkipsAbsentClasses) {
  const std::vector<std::optional<double>> v{0.8, 0.6, std::nullopt};
  EXPECT_NEAR(*mean_present(v), 0.7, 1e-12);
  EXPECT_FALSE(mean_present(std::vector<std::optional<double>>{std::nullopt}));
}

TEST(BucketNames, FromEdges) {
  const EvalConfig c;
  EXPECT_EQ(range_bucket_names(c), (std::vector<std::string>{"RANGE_0_30", "RANGE_30_50", "RANGE_50_PLUS"}));
  EXPECT_EQ(speed_bucket_names(c).front(), "SPEED_STN");
}

TEST(EvalConfigTest, Validation) {
  EXPECT_NO_THROW(validate(EvalConfig{}));
  EvalConfig bad;
  bad.iou_threshold[ObjectClass::kVehicle] = 1.2;
  EXPECT_THROW(validate(bad), ConfigError);
  bad = EvalConfig{};
  bad.range_edges = {0.0, 50.0, 30.0};
  EXPECT_THROW(validate(bad), ConfigError);
}

EvalResult two_cells() {
  EvalResult r;
  Cell a;
  a.num_gt = 3;
  a.tp = 2;
  a.fn = 1;
  a.ap = 0.5;
  a.aph = 0.25;
  r.cells[{ObjectClass::kVehicle, Difficulty::kL2, "ALL"}] = a;
  r.cells[{ObjectClass::kPedestrian, Difficulty::kL1, "RANGE_0_30"}] = a;
  r.mean_aph_l2 = 0.25;
  return r;
}

TEST(Report, CsvRows) {
  const std::string empty = result_to_csv(EvalResult{});
  EXPECT_EQ(std::count(empty.begin(), empty.end(), '\n'), 1);
  EXPECT_EQ(empty.rfind("class,difficulty,breakdown,ap,aph,tp,fp,fn", 0), 0U);
  const std::string two = result_to_csv(two_cells());
  EXPECT_EQ(std::count(two.begin(), two.end(), '\n'), 3);
}

TEST(Report, RewriteIsByteIdentical) {
  const auto dir = scratch_dir("report");
  const std::vector<SweepPoint> sweep{{1, "1", 0.4}, {10, "10", 0.5}};
  write_report(two_cells(), sweep, dir / "a");
  write_report(two_cells(), sweep, dir / "b");
  for (const char* name : {"metrics.csv", "aph_vs_predictions.svg"}) {
    EXPECT_EQ(read_text_file(dir / "a" / name), read_text_file(dir / "b" / name)) << name;
  }
  EXPECT_NE(sweep_svg(sweep).find("<svg"), std::string::npos);
}

TEST(Report, JsonRoundTrip) {
  const EvalResult r = two_cells();
  const EvalResult back = result_from_json(result_to_json(r));
  ASSERT_EQ(back.cells.size(), 2U);
  EXPECT_EQ(back.aph(ObjectClass::kVehicle, Difficulty::kL2), 0.25);
  EXPECT_EQ(back.mean_aph_l2, r.mean_aph_l2);
}

}  // namespace
}  // namespace modar::eval
