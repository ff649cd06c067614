#include "modar/evalkit.hpp"

#include "modar/assignment.hpp"
#include "modar/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace modar::eval {

using geometry::kPi;

namespace {

std::string edge_label(double v) {
  std::ostringstream os;
  if (v == std::floor(v)) {
    os << static_cast<long long>(v);
  } else {
    os << v;
  }
  return os.str();
}

int bucket_of(double value, std::span<const double> edges) {
  int idx = -1;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (value >= edges[i]) idx = static_cast<int>(i);
  }
  return idx;
}

struct CellAccumulator {
  std::vector<ScoredDetection> dets;
  int num_gt = 0;
};

}  // namespace

std::string_view to_string(Difficulty d) { return d == Difficulty::kL1 ? "L1" : "L2"; }

double EvalConfig::threshold(ObjectClass c) const {
  auto it = iou_threshold.find(c);
  if (it == iou_threshold.end()) {
    throw ConfigError("no iou threshold for class " + std::string(modar::to_string(c)));
  }
  return it->second;
}

void validate(const EvalConfig& config) {
  for (ObjectClass c : kAllClasses) {
    const double t = config.threshold(c);
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("iou threshold must lie in (0, 1)");
  }
  for (const auto* edges : {&config.range_edges, &config.speed_edges}) {
    if (edges->empty() || edges->front() != 0.0 || !std::is_sorted(edges->begin(), edges->end()) ||
        std::adjacent_find(edges->begin(), edges->end()) != edges->end()) {
      throw ConfigError("bucket edges must start at 0 and increase strictly");
    }
  }
  if (config.speed_names.size() != config.speed_edges.size()) {
    throw ConfigError("speed bucket names do not match the speed edges");
  }
}

std::vector<std::string> range_bucket_names(const EvalConfig& config) {
  std::vector<std::string> out;
  const auto& e = config.range_edges;
  for (std::size_t i = 0; i < e.size(); ++i) {
    out.push_back("RANGE_" + edge_label(e[i]) + "_" +
                  (i + 1 < e.size() ? edge_label(e[i + 1]) : std::string("PLUS")));
  }
  return out;
}

std::vector<std::string> speed_bucket_names(const EvalConfig& config) {
  std::vector<std::string> out;
  for (const auto& n : config.speed_names) out.push_back("SPEED_" + n);
  return out;
}

FrameMatch match_frame(std::span<const Box3D> dets, std::span<const Box3D> gts,
                       double iou_threshold) {
  Eigen::MatrixXd iou(static_cast<Eigen::Index>(dets.size()), static_cast<Eigen::Index>(gts.size()));
  for (std::size_t i = 0; i < dets.size(); ++i) {
    for (std::size_t j = 0; j < gts.size(); ++j) {
      iou(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          geometry::iou_3d(dets[i], gts[j]);
    }
  }
  const auto assignment = max_weight_assignment(iou, iou_threshold);
  FrameMatch out;
  std::vector<bool> gt_used(gts.size(), false);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (assignment[i]) {
      const int j = *assignment[i];
      gt_used[static_cast<std::size_t>(j)] = true;
      out.matches.push_back({static_cast<int>(i), j, iou(static_cast<Eigen::Index>(i), j)});
    } else {
      out.unmatched_dets.push_back(static_cast<int>(i));
    }
  }
  for (std::size_t j = 0; j < gts.size(); ++j) {
    if (!gt_used[j]) out.unmatched_gts.push_back(static_cast<int>(j));
  }
  return out;
}

ApResult compute_ap(std::span<const ScoredDetection> dets, int num_gt) {
  if (num_gt <= 0) throw NoGroundTruth("no ground truth to compute AP against");
  std::vector<ScoredDetection> sorted(dets.begin(), dets.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ScoredDetection& a, const ScoredDetection& b) { return a.score > b.score; });

  ApResult out;
  std::vector<double> recall;
  std::vector<double> precision;
  std::vector<double> recall_h;
  std::vector<double> precision_h;
  int tp = 0;
  int fp = 0;
  double mass_h = 0.0;
  const auto n_gt = static_cast<double>(num_gt);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i].true_positive) {
      ++tp;
      mass_h += sorted[i].heading_weight;
    } else {
      ++fp;
    }
    // One operating point per distinct score.
    if (i + 1 < sorted.size() && sorted[i + 1].score == sorted[i].score) continue;
    const double n_det = static_cast<double>(tp + fp);
    recall.push_back(tp / n_gt);
    precision.push_back(tp / n_det);
    recall_h.push_back(mass_h / n_gt);
    precision_h.push_back(mass_h / n_det);
    out.pr.push_back({sorted[i].score, precision.back(), recall.back()});
  }

  auto area = [](const std::vector<double>& r, const std::vector<double>& p) {
    std::vector<double> envelope(p.size());
    double best = 0.0;
    for (std::size_t k = p.size(); k-- > 0;) {
      best = std::max(best, p[k]);
      envelope[k] = best;
    }
    double sum = 0.0;
    double previous = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) {
      sum += (r[k] - previous) * envelope[k];
      previous = r[k];
    }
    return sum;
  };
  out.ap = area(recall, precision);
  out.aph = area(recall_h, precision_h);
  out.tp = tp;
  out.fp = fp;
  out.fn = num_gt - tp;
  return out;
}

const Cell* EvalResult::find(ObjectClass c, Difficulty d, const std::string& breakdown) const {
  auto it = cells.find({c, d, breakdown});
  return it == cells.end() ? nullptr : &it->second;
}

std::optional<double> EvalResult::aph(ObjectClass c, Difficulty d, const std::string& breakdown) const {
  const Cell* cell = find(c, d, breakdown);
  return cell == nullptr ? std::nullopt : cell->aph;
}

std::optional<double> EvalResult::ap(ObjectClass c, Difficulty d, const std::string& breakdown) const {
  const Cell* cell = find(c, d, breakdown);
  return cell == nullptr ? std::nullopt : cell->ap;
}

std::optional<double> mean_present(std::span<const std::optional<double>> values) {
  double sum = 0.0;
  int n = 0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

EvalResult evaluate(const DetectionsByFrame& detections, const SequenceDataset& dataset,
                    const EvalConfig& config, const std::set<int>& frames) {
  validate(config);
  const auto range_names = range_bucket_names(config);
  const auto speed_names = speed_bucket_names(config);
  std::map<CellKey, CellAccumulator> acc;
  for (ObjectClass c : kAllClasses) {
    for (Difficulty d : {Difficulty::kL1, Difficulty::kL2}) {
      acc[{c, d, "ALL"}];
      for (const auto& n : range_names) acc[{c, d, n}];
      for (const auto& n : speed_names) acc[{c, d, n}];
    }
  }

  for (const Frame& frame : dataset.frames) {
    if (!frames.empty() && frames.count(frame.frame_index) == 0) continue;
    const Vec3 ego = frame.ego_pose.matrix().block<3, 1>(0, 3);
    auto range_of = [&](const Box3D& b) { return std::hypot(b.cx - ego.x(), b.cy - ego.y()); };
    static const std::vector<Box3D> kNone;
    auto it = detections.find(frame.frame_index);
    const std::vector<Box3D>& all_dets = it == detections.end() ? kNone : it->second;

    for (ObjectClass c : kAllClasses) {
      std::vector<Box3D> dets;
      for (const Box3D& b : all_dets) {
        if (b.object_class == c) dets.push_back(b);
      }
      std::vector<const GtBox*> gt_refs;
      std::vector<Box3D> gts;
      for (const GtBox& g : frame.gt_boxes) {
        if (g.box.object_class != c) continue;
        gt_refs.push_back(&g);
        gts.push_back(g.box);
      }
      const FrameMatch fm = match_frame(dets, gts, config.threshold(c));

      for (Difficulty d : {Difficulty::kL1, Difficulty::kL2}) {
        auto in_difficulty = [&](const GtBox& g) {
          return d == Difficulty::kL1 ? g.num_points_inside > config.l1_more_than_points
                                      : g.num_points_inside >= config.l2_min_points;
        };
        auto gt_breakdowns = [&](const GtBox& g) {
          std::vector<std::string> out{"ALL"};
          const int r = bucket_of(range_of(g.box), config.range_edges);
          if (r >= 0) out.push_back(range_names[static_cast<std::size_t>(r)]);
          const int s = bucket_of(g.speed_mps, config.speed_edges);
          if (s >= 0) out.push_back(speed_names[static_cast<std::size_t>(s)]);
          return out;
        };

        for (const GtBox* g : gt_refs) {
          if (!in_difficulty(*g)) continue;
          for (const auto& b : gt_breakdowns(*g)) ++acc[{c, d, b}].num_gt;
        }
        // Detections matched to gts outside the stratum are ignored.
        for (const Match& m : fm.matches) {
          const GtBox& g = *gt_refs[static_cast<std::size_t>(m.gt)];
          if (!in_difficulty(g)) continue;
          const Box3D& det = dets[static_cast<std::size_t>(m.det)];
          const double h = 1.0 - geometry::heading_delta(det.yaw, g.box.yaw) / kPi;
          for (const auto& b : gt_breakdowns(g)) acc[{c, d, b}].dets.push_back({det.score, true, h});
        }
        for (int di : fm.unmatched_dets) {
          const Box3D& det = dets[static_cast<std::size_t>(di)];
          acc[{c, d, "ALL"}].dets.push_back({det.score, false, 0.0});
          const int r = bucket_of(range_of(det), config.range_edges);
          if (r >= 0) acc[{c, d, range_names[static_cast<std::size_t>(r)]}].dets.push_back({det.score, false, 0.0});
        }
      }
    }
  }

  EvalResult result;
  for (auto& [key, a] : acc) {
    Cell cell;
    cell.num_gt = a.num_gt;
    for (const auto& sd : a.dets) (sd.true_positive ? cell.tp : cell.fp) += 1;
    cell.fn = a.num_gt - cell.tp;
    if (a.num_gt > 0) {
      const ApResult r = compute_ap(a.dets, a.num_gt);
      cell.ap = r.ap;
      cell.aph = r.aph;
      cell.pr = r.pr;
    }
    result.cells.emplace(key, std::move(cell));
  }
  std::vector<std::optional<double>> per_class;
  for (ObjectClass c : kAllClasses) per_class.push_back(result.aph(c, Difficulty::kL2));
  result.mean_aph_l2 = mean_present(per_class);
  return result;
}

nlohmann::json result_to_json(const EvalResult& result) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& [key, cell] : result.cells) {
    nlohmann::json pr = nlohmann::json::array();
    for (const PrPoint& p : cell.pr) pr.push_back({p.score, p.precision, p.recall});
    cells.push_back({{"class", modar::to_string(key.object_class)},
                     {"difficulty", to_string(key.difficulty)},
                     {"breakdown", key.breakdown},
                     {"num_gt", cell.num_gt},
                     {"tp", cell.tp},
                     {"fp", cell.fp},
                     {"fn", cell.fn},
                     {"ap", cell.ap ? nlohmann::json(*cell.ap) : nlohmann::json(nullptr)},
                     {"aph", cell.aph ? nlohmann::json(*cell.aph) : nlohmann::json(nullptr)},
                     {"pr", std::move(pr)}});
  }
  return {{"mean_aph_l2", result.mean_aph_l2 ? nlohmann::json(*result.mean_aph_l2) : nlohmann::json(nullptr)},
          {"cells", std::move(cells)}};
}

EvalResult result_from_json(const nlohmann::json& j) {
  try {
    EvalResult r;
    if (!j.at("mean_aph_l2").is_null()) r.mean_aph_l2 = j.at("mean_aph_l2").get<double>();
    for (const auto& c : j.at("cells")) {
      CellKey key;
      key.object_class = parse_class(c.at("class").get<std::string>());
      const auto diff = c.at("difficulty").get<std::string>();
      if (diff != "L1" && diff != "L2") throw MalformedFile("unknown difficulty '" + diff + "'");
      key.difficulty = diff == "L1" ? Difficulty::kL1 : Difficulty::kL2;
      key.breakdown = c.at("breakdown").get<std::string>();
      Cell cell;
      cell.num_gt = c.at("num_gt").get<int>();
      cell.tp = c.at("tp").get<int>();
      cell.fp = c.at("fp").get<int>();
      cell.fn = c.at("fn").get<int>();
      if (!c.at("ap").is_null()) cell.ap = c.at("ap").get<double>();
      if (!c.at("aph").is_null()) cell.aph = c.at("aph").get<double>();
      for (const auto& p : c.at("pr")) cell.pr.push_back({p.at(0), p.at(1), p.at(2)});
      r.cells.emplace(std::move(key), std::move(cell));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedFile(std::string("bad evaluation result: ") + e.what());
  }
}

}  // namespace modar::eval
