#pragma once

#include <vector>

#include "fgsgt/bbox.hpp"

namespace fgsgt::metrics {

/// Predicted and ground-truth boxes aligned by frame index.
struct Trajectory {
  std::vector<BBox> predicted;
  std::vector<BBox> ground_truth;

  void validate() const;
  std::size_t size() const { return predicted.size(); }
};

inline constexpr double kPrecisionThreshold = 20.0;
inline constexpr double kNormPrecisionThreshold = 0.2;

/// Thresholds 0, 1, ..., 50 pixels.
std::vector<double> default_precision_thresholds();
/// Overlap thresholds i / 20 for i = 0..20.
std::vector<double> success_thresholds();

/// Fraction of frames whose centre distance is <= each threshold.
std::vector<double> precision_curve(const Trajectory& traj, const std::vector<double>& thresholds);
double precision_at(const Trajectory& traj, double threshold = kPrecisionThreshold);

/// Fraction of frames with IoU strictly above each overlap threshold.
std::vector<double> success_curve(const Trajectory& traj);
/// Mean of the success curve.
double success_auc(const Trajectory& traj);

/// Fraction of frames whose centre error, divided per axis by the ground
/// truth extents, has Euclidean norm <= 0.2.
double norm_precision(const Trajectory& traj, double threshold = kNormPrecisionThreshold);

double mean_iou(const Trajectory& traj);

}  // namespace fgsgt::metrics
