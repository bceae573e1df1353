#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "fgsgt/losses.hpp"
#include "fgsgt/model.hpp"
#include "fgsgt/synth.hpp"

namespace fgsgt::train {

struct TrainConfig {
  double lr = 1e-2;
  double momentum = 0.9;
  std::size_t steps = 1000;
  std::size_t log_every = 1;
  std::size_t checkpoint_every = 0;  // 0: only at the end
  // Anchor labelling and sampling.
  double pos_iou = 0.6;
  double neg_iou = 0.3;
  std::size_t cls_samples = 16;
  std::size_t cls_max_pos = 4;
  // Synthetic training set.
  std::size_t pairs = 200;
  std::size_t sequences = 20;
  std::size_t frames = 40;
  std::size_t max_gap = 8;    // frames between template and search
  double jitter = 12.0;       // max search-centre offset, in crop pixels
  double max_speed = 1.5;
  std::size_t distractors = 2;
  double noise_sigma = 3.0;

  void validate() const;
};

/// One template/search training example with its box in search-crop pixels.
struct Pair {
  Tensor z, x;
  BBox gt;
};

struct StepRecord {
  std::size_t step = 0;
  losses::LossBreakdown loss;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Template side of a scene of constant-size targets: sqrt((w+p)(h+p)) with
/// p = (w + h) / 2.
double context_size(const BBox& box);

/// Crops a pair from a rendered sequence. The search crop is centred on the
/// search-frame box shifted by (dx, dy) crop pixels.
Pair make_pair(const synth::Sequence& seq, std::size_t t_frame, std::size_t s_frame, double dx, double dy,
               const ModelConfig& model);

/// Deterministic training set drawn from random scenes.
std::vector<Pair> build_pairs(const TrainConfig& cfg, const synth::SceneSpec& scene, const ModelConfig& model,
                              std::uint64_t seed);

struct Sample {
  std::vector<std::size_t> indices;
  std::vector<double> labels;
};

/// Labels anchors by IoU with gt (the best anchor is always positive) and
/// draws up to cls_samples of them, at most cls_max_pos positive.
Sample sample_anchors(const siamese::AnchorGrid& anchors, const BBox& gt, const TrainConfig& cfg,
                      std::uint64_t seed);

struct PairLoss {
  losses::TotalLoss total;
  SearchOutput out;
  Tensor sal_gt;
};

/// Forward pass plus the weighted objective on one pair.
PairLoss pair_loss(Model& model, const Pair& pair, const Sample& sample, const losses::LossWeights& weights,
                   bool training);

/// SGD with momentum: v <- mu v + g, p <- p - lr v.
class Trainer {
 public:
  Trainer(Model& model, TrainConfig cfg, losses::LossWeights weights, std::uint64_t seed);

  /// Runs the step numbered step() + 1 on pairs[rng(step) % pairs.size()].
  StepRecord step(const std::vector<Pair>& pairs);
  std::size_t steps_done() const { return step_; }

  /// Parameters, buffers, momentum and step counter.
  std::vector<NamedTensor> state() const;
  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  Model& model_;
  TrainConfig cfg_;
  losses::LossWeights weights_;
  std::uint64_t seed_;
  std::vector<Tensor> velocity_;
  std::size_t step_ = 0;
};

/// CSV header: step,l_cls,l_reg,l_sal,y_0..y_N,total.
void write_log_header(std::ostream& out, std::size_t saliency_steps);
void write_log_row(std::ostream& out, const StepRecord& rec);

}  // namespace fgsgt::train
