#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "fgsgt/bbox.hpp"
#include "fgsgt/nn.hpp"

namespace fgsgt::saliency {

/// Probability map together with the logits it was squashed from. Keeping
/// the logits lets a zero residue reproduce the previous map bit-exactly.
struct SaliencyMap {
  Tensor logits;  // (B, 1, H, W)
  Tensor prob;    // sigmoid(logits), every element in [0, 1]
};

struct IntegratedFeatures {
  Tensor f_low;   // (B, C, H, W) on the Conv1 grid
  Tensor f_high;  // same shape as f_low
};

enum class FeatureSource { kLow, kHigh };

struct SaliencyConfig {
  std::array<std::size_t, 5> level_channels{8, 16, 32, 32, 32};
  std::size_t channels = 8;    // C of the integrated features
  std::size_t phi_hidden = 16;
  std::size_t steps = 2;       // number of refinement blocks N
  ActivationConfig act{0.25};
};

/// Three convolutions, each followed by a per-channel PReLU.
struct FeatureFusionNet {
  Conv2d reduce, mix1, mix2;
  Tensor slope0, slope1, slope2;
  Tensor forward(const Tensor& x) const;
};

struct IntegratedParams {
  FeatureFusionNet low, high;
};

/// Phi_i: maps Cat(S_{i-1}, F) to a one-channel residue in logit space.
struct SrrbParams {
  Conv2d conv1, conv2, conv3;
  ActivationConfig act;
};

struct SaliencyParams {
  SaliencyConfig cfg;
  IntegratedParams integrate;
  Conv2d s0_head;  // 1x1, C -> 1
  std::vector<SrrbParams> blocks;

  /// Registers every tensor under `prefix` (normally "srrb.").
  static SaliencyParams create(ParamStore& store, const std::string& prefix, const SaliencyConfig& cfg,
                               Initializer& init);
};

struct RefineResult {
  std::vector<SaliencyMap> maps;       // S_1 .. S_N
  std::vector<FeatureSource> sources;  // feature consumed by each step
  const SaliencyMap& final_or(const SaliencyMap& s0) const { return maps.empty() ? s0 : maps.back(); }
};

/// F_low from Conv1..Conv3 and F_high from Conv4..Conv5, both on Conv1's grid.
IntegratedFeatures build_integrated(const std::vector<Tensor>& conv_outs, const IntegratedParams& params);

/// 1x1 convolution + sigmoid over F_high.
SaliencyMap predict_s0(const Tensor& f_high, const Conv2d& head);

/// residue = Phi(Cat(S_prev, F)); S = sigmoid(logit(S_prev) + residue).
SaliencyMap srrb_step(const SaliencyMap& s_prev, const Tensor& f, const SrrbParams& params);

/// Odd steps consume F_low, even steps F_high.
RefineResult refine(const SaliencyMap& s0, const IntegratedFeatures& feats, std::size_t steps,
                    const std::vector<SrrbParams>& blocks);

/// Saliency ground truth on a grid whose cells are `cell` pixels wide: a
/// binary mask of cell centres inside the box, smoothed by one 3x3 mean
/// filter. Shape (1, 1, H, W).
Tensor box_saliency_target(std::size_t grid_h, std::size_t grid_w, double cell, const BBox& box);

/// Quantises a probability map to 8-bit grey levels, row-major.
std::vector<unsigned char> to_gray(const Tensor& prob, std::size_t batch_index = 0);

}  // namespace fgsgt::saliency
