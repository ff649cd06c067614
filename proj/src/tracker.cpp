#include "modar/tracker.hpp"

#include "modar/assignment.hpp"
#include "modar/errors.hpp"

#include <algorithm>
#include <cmath>

namespace modar::track {

using geometry::kPi;
using geometry::wrap_angle;

namespace {

constexpr double kMinSize = 0.05;

Eigen::Matrix<double, 7, 10> measurement_matrix() {
  Eigen::Matrix<double, 7, 10> h = Eigen::Matrix<double, 7, 10>::Zero();
  for (int i = 0; i < 7; ++i) h(i, i) = 1.0;
  return h;
}

Measurement to_measurement(const Box3D& b) {
  Measurement z;
  z << b.cx, b.cy, b.cz, b.yaw, b.length, b.width, b.height;
  return z;
}

void symmetrize(StateCovariance& p) { p = 0.5 * (p + p.transpose()).eval(); }

}  // namespace

Box3D KalmanTrack::box(double score) const {
  Box3D b;
  b.cx = mean(0);
  b.cy = mean(1);
  b.cz = mean(2);
  b.yaw = wrap_angle(mean(3));
  b.length = std::max(mean(4), kMinSize);
  b.width = std::max(mean(5), kMinSize);
  b.height = std::max(mean(6), kMinSize);
  b.object_class = object_class;
  b.score = score;
  return b;
}

KalmanTrack init_track(std::int64_t track_id, const Box3D& detection, int frame_index,
                       const TrackerParams& params) {
  KalmanTrack t;
  t.track_id = track_id;
  t.object_class = detection.object_class;
  t.mean.head<7>() = to_measurement(detection);
  t.mean(3) = wrap_angle(t.mean(3));
  t.covariance = StateCovariance::Zero();
  for (int i = 0; i < 7; ++i) t.covariance(i, i) = params.measurement_noise(i);
  for (int i = 0; i < 3; ++i) t.covariance(7 + i, 7 + i) = params.initial_velocity_variance(i);
  t.hits = 1;
  t.confirmed = params.confirm_hits <= 1;
  t.history.push_back({frame_index, t.box(detection.score), detection.score});
  return t;
}

KalmanTrack kf_predict(const KalmanTrack& track, double dt, const TrackerParams& params) {
  StateCovariance f = StateCovariance::Identity();
  f(0, 7) = dt;
  f(1, 8) = dt;
  f(3, 9) = dt;
  KalmanTrack out = track;
  out.mean = f * track.mean;
  out.mean(3) = wrap_angle(out.mean(3));
  out.covariance = f * track.covariance * f.transpose();
  out.covariance.diagonal() += params.process_noise;
  symmetrize(out.covariance);
  return out;
}

KalmanTrack kf_update(const KalmanTrack& track, const Box3D& detection, const TrackerParams& params) {
  if (detection.object_class != track.object_class) {
    throw ClassMismatch("detection class " + std::string(to_string(detection.object_class)) +
                        " does not match track class " +
                        std::string(to_string(track.object_class)));
  }
  const auto h = measurement_matrix();
  Measurement z = to_measurement(detection);
  Measurement innovation = z - h * track.mean;
  innovation(3) = wrap_angle(innovation(3));
  if (std::abs(innovation(3)) > kPi / 2.0) innovation(3) = wrap_angle(innovation(3) - kPi);

  Eigen::Matrix<double, 7, 7> r = params.measurement_noise.asDiagonal();
  const Eigen::Matrix<double, 7, 7> s = h * track.covariance * h.transpose() + r;
  const Eigen::Matrix<double, 10, 7> gain =
      track.covariance * h.transpose() * s.ldlt().solve(Eigen::Matrix<double, 7, 7>::Identity());

  KalmanTrack out = track;
  out.mean = track.mean + gain * innovation;
  out.mean(3) = wrap_angle(out.mean(3));
  // Joseph form keeps the covariance PSD.
  const StateCovariance i_kh = StateCovariance::Identity() - gain * h;
  out.covariance = i_kh * track.covariance * i_kh.transpose() + gain * r * gain.transpose();
  symmetrize(out.covariance);
  return out;
}

Box3D align_partial_view(const Box3D& detection, const Box3D& predicted, double partial_ratio) {
  if (partial_ratio <= 0.0) return detection;
  const Vec2 u(std::cos(predicted.yaw), std::sin(predicted.yaw));
  const Vec2 v(-u.y(), u.x());
  const Vec2 du(std::cos(detection.yaw), std::sin(detection.yaw));
  const Vec2 dv(-du.y(), du.x());
  const double c = std::abs(du.dot(u));
  const double s = std::abs(dv.dot(u));
  // Extents of the detection footprint along the track axes.
  const double along_u = detection.length * c + detection.width * s;
  const double along_v = detection.length * s + detection.width * c;

  Vec2 center(detection.cx, detection.cy);
  const Vec2 target(predicted.cx, predicted.cy);
  bool partial = false;
  for (const auto& [axis, extent, full] :
       {std::tuple{u, along_u, predicted.length}, std::tuple{v, along_v, predicted.width}}) {
    if (extent >= partial_ratio * full) continue;
    partial = true;
    const Vec2 shift = 0.5 * (full - extent) * axis;
    const Vec2 ahead = center + shift;
    const Vec2 behind = center - shift;
    center = (ahead - target).norm() < (behind - target).norm() ? ahead : behind;
  }
  if (!partial) return detection;
  Box3D out = detection;
  out.cx = center.x();
  out.cy = center.y();
  out.length = predicted.length;
  out.width = predicted.width;
  out.yaw = predicted.yaw;
  return out;
}

std::vector<KalmanTrack> track_sequence(std::span<const FrameDetections> frames,
                                        const TrackerParams& params) {
  std::vector<KalmanTrack> active;
  std::vector<KalmanTrack> finished;
  std::int64_t next_id = 0;
  int previous_frame = 0;
  bool first = true;

  for (const FrameDetections& fd : frames) {
    if (!first) {
      const double dt = (fd.frame_index - previous_frame) * params.dt;
      for (auto& t : active) t = kf_predict(t, dt, params);
    }
    first = false;
    previous_frame = fd.frame_index;

    Eigen::MatrixXd benefit(static_cast<Eigen::Index>(active.size()),
                            static_cast<Eigen::Index>(fd.boxes.size()));
    for (std::size_t i = 0; i < active.size(); ++i) {
      const Box3D predicted = active[i].box();
      for (std::size_t j = 0; j < fd.boxes.size(); ++j) {
        benefit(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            fd.boxes[j].object_class == active[i].object_class
                ? geometry::iou_bev(predicted, fd.boxes[j])
                : 0.0;
      }
    }
    const auto assignment = max_weight_assignment(benefit, std::max(params.association_gate, 1e-12));

    std::vector<bool> det_used(fd.boxes.size(), false);
    std::vector<KalmanTrack> survivors;
    for (std::size_t i = 0; i < active.size(); ++i) {
      KalmanTrack& t = active[i];
      if (assignment[i]) {
        const auto j = static_cast<std::size_t>(*assignment[i]);
        det_used[j] = true;
        const Box3D det = t.confirmed ? align_partial_view(fd.boxes[j], t.box(), params.partial_ratio)
                                      : fd.boxes[j];
        t = kf_update(t, det, params);
        ++t.hits;
        t.consecutive_misses = 0;
        if (t.hits >= params.confirm_hits) t.confirmed = true;
        t.history.push_back({fd.frame_index, t.box(det.score), det.score});
        survivors.push_back(std::move(t));
      } else {
        ++t.consecutive_misses;
        if (t.consecutive_misses > params.max_misses) {
          t.terminated = true;
          finished.push_back(std::move(t));
        } else {
          survivors.push_back(std::move(t));
        }
      }
    }
    for (std::size_t j = 0; j < fd.boxes.size(); ++j) {
      if (!det_used[j]) survivors.push_back(init_track(next_id++, fd.boxes[j], fd.frame_index, params));
    }
    active = std::move(survivors);
  }

  std::vector<KalmanTrack> out;
  for (auto* group : {&finished, &active}) {
    for (auto& t : *group) {
      if (t.confirmed) out.push_back(std::move(t));
    }
  }
  std::sort(out.begin(), out.end(),
            [](const KalmanTrack& a, const KalmanTrack& b) { return a.track_id < b.track_id; });
  return out;
}

double tracking_score(const KalmanTrack& track, int frame_index, int window) {
  auto end = std::upper_bound(track.history.begin(), track.history.end(), frame_index,
                              [](int f, const HistoryEntry& e) { return f < e.frame_index; });
  if (end == track.history.begin()) {
    throw NoHistory("track " + std::to_string(track.track_id) + " has no history at frame " +
                    std::to_string(frame_index));
  }
  const auto count = std::min<std::ptrdiff_t>(window, end - track.history.begin());
  double sum = 0.0;
  for (auto it = end - count; it != end; ++it) sum += it->detection_score;
  return sum / static_cast<double>(count);
}

}  // namespace modar::track
