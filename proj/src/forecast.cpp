#include "modar/forecast.hpp"

#include "modar/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>

namespace modar::forecast {

using geometry::kPi;
using geometry::wrap_angle;

namespace {

constexpr std::array<std::pair<PredictorKind, std::string_view>, 3> kPredictorNames = {{
    {PredictorKind::kStationary, "STATIONARY"},
    {PredictorKind::kConstantVelocity, "CONSTANT_VELOCITY"},
    {PredictorKind::kMultiHypothesis, "MULTI_HYPOTHESIS"},
}};

double relative_time(const TrackletInput& input, const TrackletEntry& e) {
  return (e.frame_index - input.anchor_frame()) * input.dt;
}

struct LineFit {
  Vec2 velocity = Vec2::Zero();
  double residual_rms = 0.0;
};

LineFit fit_line(std::span<const TrackletEntry> entries, double dt) {
  LineFit fit;
  const auto n = static_cast<double>(entries.size());
  if (entries.size() < 2) return fit;
  const int ref = entries.back().frame_index;
  double t_mean = 0.0;
  Vec2 p_mean = Vec2::Zero();
  for (const auto& e : entries) {
    t_mean += (e.frame_index - ref) * dt;
    p_mean += Vec2(e.box.cx, e.box.cy);
  }
  t_mean /= n;
  p_mean /= n;
  double stt = 0.0;
  Vec2 stp = Vec2::Zero();
  for (const auto& e : entries) {
    const double dt_i = (e.frame_index - ref) * dt - t_mean;
    stt += dt_i * dt_i;
    stp += dt_i * (Vec2(e.box.cx, e.box.cy) - p_mean);
  }
  fit.velocity = stp / stt;
  double sq = 0.0;
  for (const auto& e : entries) {
    const double dt_i = (e.frame_index - ref) * dt - t_mean;
    const Vec2 r = Vec2(e.box.cx, e.box.cy) - (p_mean + dt_i * fit.velocity);
    sq += r.squaredNorm();
  }
  fit.residual_rms = std::sqrt(std::max(0.0, sq / (2.0 * n)));
  return fit;
}

double motion_heading(const Vec2& velocity, double fallback_yaw) {
  if (velocity.norm() > kHeadingSpeedThreshold) return std::atan2(velocity.y(), velocity.x());
  return fallback_yaw;
}

Trajectory constant_velocity_trajectory(const TrackletEntry& anchor, const Vec2& velocity,
                                        double dt, double spread, double growth_scale) {
  Trajectory traj;
  traj.waypoints.reserve(kHorizon);
  const double yaw = wrap_angle(motion_heading(velocity, anchor.box.yaw));
  for (int m = 1; m <= kHorizon; ++m) {
    const double s = growth_scale > 0.0 ? spread * (1.0 + m / growth_scale) : spread;
    traj.waypoints.push_back(
        {m, anchor.box.cx + m * dt * velocity.x(), anchor.box.cy + m * dt * velocity.y(), yaw, s, s});
  }
  return traj;
}

// Motion hypothesis anchored at the last observation; tau is seconds from the anchor.
struct Hypothesis {
  enum class Kind { kStationary, kConstantVelocity, kConstantTurn } kind = Kind::kStationary;
  Vec2 anchor = Vec2::Zero();
  double anchor_yaw = 0.0;
  Vec2 velocity = Vec2::Zero();
  double speed = 0.0;
  double heading = 0.0;  // motion heading at the anchor
  double yaw_rate = 0.0;

  Vec2 position(double tau) const {
    switch (kind) {
      case Kind::kStationary:
        return anchor;
      case Kind::kConstantVelocity:
        return anchor + tau * velocity;
      case Kind::kConstantTurn:
        if (std::abs(yaw_rate) < 1e-9) {
          return anchor + tau * speed * Vec2(std::cos(heading), std::sin(heading));
        }
        return anchor + speed / yaw_rate *
                            Vec2(std::sin(heading + yaw_rate * tau) - std::sin(heading),
                                 std::cos(heading) - std::cos(heading + yaw_rate * tau));
    }
    return anchor;
  }

  double yaw(double tau) const {
    switch (kind) {
      case Kind::kStationary:
        return wrap_angle(anchor_yaw);
      case Kind::kConstantVelocity:
        return wrap_angle(motion_heading(velocity, anchor_yaw));
      case Kind::kConstantTurn:
        if (speed > kHeadingSpeedThreshold) return wrap_angle(heading + yaw_rate * tau);
        return wrap_angle(anchor_yaw + yaw_rate * tau);
    }
    return anchor_yaw;
  }
};

double backcast_rmse(const Hypothesis& h, const TrackletInput& input) {
  double sq = 0.0;
  for (const auto& e : input.entries) {
    sq += (h.position(relative_time(input, e)) - Vec2(e.box.cx, e.box.cy)).squaredNorm();
  }
  return std::sqrt(sq / static_cast<double>(input.entries.size()));
}

// Least-squares slope of unwrapped box yaw against time.
double fit_yaw_rate(const TrackletInput& input) {
  const auto& es = input.entries;
  if (es.size() < 2) return 0.0;
  std::vector<double> yaws{es.front().box.yaw};
  for (std::size_t i = 1; i < es.size(); ++i) {
    yaws.push_back(yaws.back() + wrap_angle(es[i].box.yaw - es[i - 1].box.yaw));
  }
  double t_mean = 0.0;
  double y_mean = 0.0;
  for (std::size_t i = 0; i < es.size(); ++i) {
    t_mean += relative_time(input, es[i]);
    y_mean += yaws[i];
  }
  t_mean /= static_cast<double>(es.size());
  y_mean /= static_cast<double>(es.size());
  double stt = 0.0;
  double sty = 0.0;
  for (std::size_t i = 0; i < es.size(); ++i) {
    const double d = relative_time(input, es[i]) - t_mean;
    stt += d * d;
    sty += d * (yaws[i] - y_mean);
  }
  return sty / stt;
}

}  // namespace

std::string_view to_string(PredictorKind kind) {
  for (const auto& [k, n] : kPredictorNames) {
    if (k == kind) return n;
  }
  return "UNKNOWN";
}

std::optional<PredictorKind> predictor_from_string(std::string_view name) {
  for (const auto& [k, n] : kPredictorNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

void validate(const TrackletInput& input) {
  if (input.entries.empty() || input.entries.size() > static_cast<std::size_t>(kMaxInputFrames)) {
    throw InvariantViolation("tracklet length must be within 1..11");
  }
  for (std::size_t i = 1; i < input.entries.size(); ++i) {
    if (input.entries[i].frame_index <= input.entries[i - 1].frame_index) {
      throw InvariantViolation("tracklet frame indices must increase strictly");
    }
  }
}

Vec2 fit_velocity(std::span<const TrackletEntry> entries, double dt) {
  return fit_line(entries, dt).velocity;
}

std::vector<Trajectory> forecast_stationary(const TrackletInput& input) {
  validate(input);
  return {constant_velocity_trajectory(input.anchor(), Vec2::Zero(), input.dt, 0.0, 0.0)};
}

std::vector<Trajectory> forecast_cv(const TrackletInput& input) {
  validate(input);
  const LineFit fit = fit_line(input.entries, input.dt);
  return {constant_velocity_trajectory(input.anchor(), fit.velocity, input.dt, fit.residual_rms, 0.0)};
}

std::vector<Trajectory> forecast_multihyp(const TrackletInput& input) {
  validate(input);
  const TrackletEntry& anchor = input.anchor();
  if (input.entries.size() < 2) {
    auto single = constant_velocity_trajectory(anchor, Vec2::Zero(), input.dt, 0.0, 0.0);
    single.confidence = 1.0 / 6.0;
    return std::vector<Trajectory>(6, single);
  }

  const LineFit all = fit_line(input.entries, input.dt);
  const std::size_t tail = std::min<std::size_t>(3, input.entries.size());
  const LineFit recent =
      fit_line(std::span<const TrackletEntry>(input.entries).last(tail), input.dt);

  Hypothesis base;
  base.anchor = Vec2(anchor.box.cx, anchor.box.cy);
  base.anchor_yaw = anchor.box.yaw;

  std::array<Hypothesis, 6> bank;
  bank.fill(base);
  bank[1].kind = Hypothesis::Kind::kConstantVelocity;
  bank[1].velocity = all.velocity;
  bank[2].kind = Hypothesis::Kind::kConstantVelocity;
  bank[2].velocity = recent.velocity;
  {
    Hypothesis& turn = bank[3];
    turn.kind = Hypothesis::Kind::kConstantTurn;
    turn.yaw_rate = fit_yaw_rate(input);
    turn.speed = all.velocity.norm();
    double t_mean = 0.0;
    for (const auto& e : input.entries) t_mean += relative_time(input, e);
    t_mean /= static_cast<double>(input.entries.size());
    // The chord velocity describes the heading at the window's mean time.
    const double chord_heading = turn.speed > 1e-9 ? std::atan2(all.velocity.y(), all.velocity.x())
                                                   : anchor.box.yaw;
    turn.heading = chord_heading - turn.yaw_rate * t_mean;
  }
  bank[4].kind = Hypothesis::Kind::kConstantVelocity;
  bank[4].velocity = 0.5 * all.velocity;
  bank[5].kind = Hypothesis::Kind::kConstantVelocity;
  bank[5].velocity = 1.5 * all.velocity;

  std::array<double, 6> rmse{};
  std::array<double, 6> logits{};
  for (std::size_t h = 0; h < bank.size(); ++h) {
    rmse[h] = backcast_rmse(bank[h], input);
    logits[h] = -rmse[h] / kConfidenceTemperature;
  }
  const double max_logit = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - max_logit);

  std::vector<Trajectory> out;
  out.reserve(bank.size());
  for (std::size_t h = 0; h < bank.size(); ++h) {
    Trajectory traj;
    traj.confidence = std::exp(logits[h] - max_logit) / z;
    traj.waypoints.reserve(kHorizon);
    for (int m = 1; m <= kHorizon; ++m) {
      const double tau = m * input.dt;
      const Vec2 p = bank[h].position(tau);
      const double s = rmse[h] * (1.0 + m / 40.0);
      traj.waypoints.push_back({m, p.x(), p.y(), bank[h].yaw(tau), s, s});
    }
    out.push_back(std::move(traj));
  }
  return out;
}

std::vector<Trajectory> forecast_reverse(const TrackletInput& input, const Predictor& predictor) {
  validate(input);
  TrackletInput virtual_input;
  virtual_input.object_class = input.object_class;
  virtual_input.dt = input.dt;
  for (auto it = input.entries.rbegin(); it != input.entries.rend(); ++it) {
    TrackletEntry e = *it;
    e.frame_index = -it->frame_index;
    e.box.yaw = wrap_angle(e.box.yaw + kPi);  // heading follows the reversed velocity
    virtual_input.entries.push_back(e);
  }
  auto trajectories = predictor(virtual_input);
  for (auto& traj : trajectories) {
    for (auto& wp : traj.waypoints) wp.yaw = wrap_angle(wp.yaw - kPi);
  }
  return trajectories;
}

Predictor make_predictor(PredictorKind kind) {
  switch (kind) {
    case PredictorKind::kStationary:
      return forecast_stationary;
    case PredictorKind::kConstantVelocity:
      return forecast_cv;
    case PredictorKind::kMultiHypothesis:
      return forecast_multihyp;
  }
  return forecast_cv;
}

ForecastMetrics forecast_metrics(std::span<const Trajectory> predicted,
                                 std::span<const std::optional<Vec2>> gt_future) {
  const bool any_gt = std::any_of(gt_future.begin(), gt_future.end(),
                                  [](const auto& g) { return g.has_value(); });
  if (!any_gt || predicted.empty()) throw EmptyGroundTruth("no ground-truth future to compare");

  auto errors = [&](const Trajectory& traj) {
    double sum = 0.0;
    int count = 0;
    double last = 0.0;
    for (const auto& wp : traj.waypoints) {
      const auto idx = static_cast<std::size_t>(wp.offset - 1);
      if (wp.offset < 1 || idx >= gt_future.size() || !gt_future[idx]) continue;
      const double e = (Vec2(wp.x, wp.y) - *gt_future[idx]).norm();
      sum += e;
      ++count;
      last = e;
    }
    return std::pair<double, double>{count ? sum / count : 0.0, last};
  };

  std::size_t best = 0;
  for (std::size_t i = 1; i < predicted.size(); ++i) {
    if (predicted[i].confidence > predicted[best].confidence) best = i;
  }
  ForecastMetrics m;
  std::tie(m.ade, m.fde) = errors(predicted[best]);
  m.min_ade = std::numeric_limits<double>::infinity();
  m.min_fde = std::numeric_limits<double>::infinity();
  for (const auto& traj : predicted) {
    const auto [ade, fde] = errors(traj);
    m.min_ade = std::min(m.min_ade, ade);
    m.min_fde = std::min(m.min_fde, fde);
  }
  return m;
}

std::vector<Vec2> collect_spread_samples(std::span<const SequenceDataset> datasets,
                                         PredictorKind kind, int stride) {
  const Predictor predictor = make_predictor(kind);
  std::vector<Vec2> samples;
  for (const SequenceDataset& ds : datasets) {
    std::map<std::int64_t, TrackletInput> tracks;
    for (const Frame& f : ds.frames) {
      for (const GtBox& gt : f.gt_boxes) {
        auto& t = tracks[gt.track_id];
        t.object_class = gt.box.object_class;
        t.dt = ds.meta.frame_period_s;
        t.entries.push_back({f.frame_index, gt.box, 1.0});
      }
    }
    for (const auto& [id, full] : tracks) {
      for (std::size_t end = kMaxInputFrames; end <= full.entries.size();
           end += static_cast<std::size_t>(stride)) {
        TrackletInput window;
        window.object_class = full.object_class;
        window.dt = full.dt;
        window.entries.assign(full.entries.begin() + static_cast<std::ptrdiff_t>(end - kMaxInputFrames),
                              full.entries.begin() + static_cast<std::ptrdiff_t>(end));
        for (const auto& traj : predictor(window)) {
          for (const auto& wp : traj.waypoints) samples.emplace_back(wp.std_x, wp.std_y);
        }
      }
    }
  }
  return samples;
}

}  // namespace modar::forecast
