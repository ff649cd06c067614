#pragma once

#include "modar/geometry.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace modar::track {

/// [x, y, z, yaw, l, w, h, vx, vy, vyaw]
using StateVector = Eigen::Matrix<double, 10, 1>;
using StateCovariance = Eigen::Matrix<double, 10, 10>;
/// [x, y, z, yaw, l, w, h]
using Measurement = Eigen::Matrix<double, 7, 1>;

struct HistoryEntry {
  int frame_index = 0;
  Box3D box;  // posterior box after the update at this frame
  double detection_score = 0.0;
};

struct KalmanTrack {
  std::int64_t track_id = 0;
  ObjectClass object_class = ObjectClass::kVehicle;
  StateVector mean = StateVector::Zero();
  StateCovariance covariance = StateCovariance::Identity();
  int hits = 0;
  int consecutive_misses = 0;
  bool confirmed = false;
  /// Dropped by the miss limit before the end of the sequence.
  bool terminated = false;
  std::vector<HistoryEntry> history;

  Box3D box(double score = 1.0) const;
  int last_frame() const { return history.empty() ? -1 : history.back().frame_index; }
};

struct TrackerParams {
  Eigen::Matrix<double, 10, 1> process_noise =
      (Eigen::Matrix<double, 10, 1>() << 1e-4, 1e-4, 1e-4, 1e-3, 1e-5, 1e-5, 1e-5, 0.04, 0.04, 0.01)
          .finished();
  Eigen::Matrix<double, 7, 1> measurement_noise =
      (Eigen::Matrix<double, 7, 1>() << 0.0025, 0.0025, 0.0025, 0.01, 0.01, 0.01, 0.01).finished();
  /// Prior variance of the unobserved velocities at birth.
  Eigen::Vector3d initial_velocity_variance = Eigen::Vector3d(25.0, 25.0, 0.25);
  double association_gate = 0.1;  // minimum BEV IoU
  int confirm_hits = 2;
  int max_misses = 3;
  double dt = 0.1;
  /// A confirmed track treats a detection whose extent along one of its axes
  /// is below this fraction of its own as a partial view. 0 disables.
  double partial_ratio = 0.8;
};

/// Partial-view alignment: slides `detection` along each axis of `predicted`
/// where it is shorter than partial_ratio times the track's extent, toward
/// the end nearest the predicted center, and gives it the track's size and yaw.
/// Returns the detection unchanged when no axis is short.
Box3D align_partial_view(const Box3D& detection, const Box3D& predicted, double partial_ratio);

/// Per-frame detections, frames strictly increasing.
struct FrameDetections {
  int frame_index = 0;
  std::vector<Box3D> boxes;
};

KalmanTrack init_track(std::int64_t track_id, const Box3D& detection, int frame_index,
                       const TrackerParams& params = {});

/// Constant-velocity prediction; covariance F P F^T + Q.
KalmanTrack kf_predict(const KalmanTrack& track, double dt, const TrackerParams& params = {});

/// Linear update on [x, y, z, yaw, l, w, h]. A measurement whose heading
/// disagrees by more than pi/2 is flipped by pi first. Throws ClassMismatch.
KalmanTrack kf_update(const KalmanTrack& track, const Box3D& detection,
                      const TrackerParams& params = {});

/// Runs the full tracker; returns confirmed tracks ordered by id.
std::vector<KalmanTrack> track_sequence(std::span<const FrameDetections> frames,
                                        const TrackerParams& params = {});

/// Mean detection score over the most recent `window` history entries at or
/// before `frame_index`. Throws NoHistory.
double tracking_score(const KalmanTrack& track, int frame_index, int window = 11);

}  // namespace modar::track
