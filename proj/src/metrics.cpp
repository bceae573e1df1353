#include "fgsgt/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fgsgt::metrics {

void Trajectory::validate() const {
  if (predicted.empty()) throw std::invalid_argument("metrics: empty trajectory");
  if (predicted.size() != ground_truth.size()) {
    throw std::invalid_argument("metrics: " + std::to_string(predicted.size()) + " predictions vs " +
                                std::to_string(ground_truth.size()) + " ground-truth boxes");
  }
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    if (!ground_truth[i].valid()) {
      throw std::invalid_argument("metrics: ground-truth box at frame " + std::to_string(i) + " has zero extent");
    }
  }
}

std::vector<double> default_precision_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 50; ++i) t.push_back(i);
  return t;
}

std::vector<double> success_thresholds() {
  std::vector<double> t;
  for (int i = 0; i <= 20; ++i) t.push_back(i / 20.0);
  return t;
}

std::vector<double> precision_curve(const Trajectory& traj, const std::vector<double>& thresholds) {
  traj.validate();
  std::vector<double> dist;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    dist.push_back(std::hypot(traj.predicted[i].cx - traj.ground_truth[i].cx, traj.predicted[i].cy - traj.ground_truth[i].cy));
  }
  std::vector<double> out;
  for (double t : thresholds) {
    std::size_t hit = 0;
    for (double d : dist) hit += d <= t ? 1 : 0;
    out.push_back(static_cast<double>(hit) / static_cast<double>(dist.size()));
  }
  return out;
}

double precision_at(const Trajectory& traj, double threshold) { return precision_curve(traj, {threshold}).front(); }

std::vector<double> success_curve(const Trajectory& traj) {
  traj.validate();
  std::vector<double> overlaps;
  for (std::size_t i = 0; i < traj.size(); ++i) overlaps.push_back(iou(traj.predicted[i], traj.ground_truth[i]));
  std::vector<double> out;
  for (double t : success_thresholds()) {
    std::size_t hit = 0;
    for (double o : overlaps) hit += o > t ? 1 : 0;
    out.push_back(static_cast<double>(hit) / static_cast<double>(overlaps.size()));
  }
  return out;
}

double success_auc(const Trajectory& traj) {
  const auto curve = success_curve(traj);
  double s = 0.0;
  for (double v : curve) s += v;
  return s / static_cast<double>(curve.size());
}

double norm_precision(const Trajectory& traj, double threshold) {
  traj.validate();
  std::size_t hit = 0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const BBox& g = traj.ground_truth[i];
    const double dx = (traj.predicted[i].cx - g.cx) / g.w;
    const double dy = (traj.predicted[i].cy - g.cy) / g.h;
    hit += std::hypot(dx, dy) <= threshold ? 1 : 0;
  }
  return static_cast<double>(hit) / static_cast<double>(traj.size());
}

double mean_iou(const Trajectory& traj) {
  traj.validate();
  double s = 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i) s += iou(traj.predicted[i], traj.ground_truth[i]);
  return s / static_cast<double>(traj.size());
}

}  // namespace fgsgt::metrics
