#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "fgsgt/bbox.hpp"
#include "fgsgt/bilinear_fusion.hpp"
#include "fgsgt/fgpcb.hpp"
#include "fgsgt/nn.hpp"

namespace fgsgt::siamese {

/// Stride-8 mini backbone: five (conv 3x3 + BN + leaky) stages with stage 4
/// carrying the fine-grained parallel block, and 1x1 reductions on levels 3-5.
struct BackboneConfig {
  std::array<std::size_t, 5> widths{8, 16, 32, 32, 32};
  std::array<std::size_t, 5> strides{2, 2, 2, 1, 1};
  std::array<std::size_t, 5> dilations{1, 1, 1, 2, 4};
  std::size_t reduced_channels = 16;  // C*
  std::size_t fgpcb_branch_width = 8;
  std::size_t fusion_classes = 2;
  ActivationConfig act{0.25};

  std::size_t total_stride() const;
  void validate() const;
};

struct BackboneParams {
  BackboneConfig cfg;
  std::array<ConvBnAct, 5> stages;
  fgpcb::FgpcbParams fgpcb;
  fusion::FusionParams fusion;
  std::array<Conv2d, 3> reduce;
  std::array<BatchNorm2d, 3> reduce_bn;

  static BackboneParams create(ParamStore& store, const BackboneConfig& cfg, Initializer& init);
};

struct BackboneOutputs {
  std::vector<Tensor> raw;  // Conv1..Conv5
  Tensor f3, f4, f5;        // reduced to C*
  fgpcb::FgpcbOutputs fine; // X, Y, Z of the stage-4 block
};

struct HeadOutputs {
  Tensor cls;  // (B, 2A, h, w); channel k*A + a, k = 0 background, 1 foreground
  Tensor reg;  // (B, 4A, h, w); channel d*A + a, d over (dx, dy, dw, dh)
};

struct HeadParams {
  Conv2d cls_tower, cls_out, reg_tower, reg_out;
  ActivationConfig act;

  static HeadParams create(ParamStore& store, const std::string& name, std::size_t channels, std::size_t anchors,
                           Initializer& init, const ActivationConfig& act);
};

struct AnchorConfig {
  std::size_t stride = 8;
  double base_size = 16.0;  // side of the ratio-1 anchor in crop pixels
  std::vector<double> ratios{1.0 / 3.0, 0.5, 1.0, 2.0, 3.0};  // h / w
  std::size_t count() const { return ratios.size(); }
};

/// Anchors laid out as index a * (rows * cols) + r * cols + c, centred on the
/// search crop with one response cell per `stride` pixels.
struct AnchorGrid {
  std::vector<BBox> anchors;
  std::size_t per_cell = 0, rows = 0, cols = 0;
  double frame_size = 0;  // search crop side

  static AnchorGrid generate(const AnchorConfig& cfg, std::size_t rows, std::size_t cols, double search_size);
  std::size_t size() const { return anchors.size(); }
};

struct SelectConfig {
  double penalty_k = 0.04;
  double window_influence = 0.4;
  double size_lr = 0.3;
  double min_size = 4.0;
};

struct Selection {
  BBox box;           // in search-crop pixels, clamped to the crop
  double score = 0;   // raw foreground probability
  double pscore = 0;  // penalised, windowed score that won
  double penalty = 1;
  double lr = 0;      // size smoothing rate: penalty * score * size_lr
  std::size_t index = 0;
};

BackboneOutputs backbone_forward(const Tensor& image, BackboneParams& params, bool training);

/// Bilinear fusion head over the stage-4 block outputs.
fusion::FusionOutput fusion_head(const BackboneOutputs& feats, const BackboneParams& params);

/// Per-channel valid cross-correlation of a template over a search map.
Tensor dw_corr(const Tensor& search_feat, const Tensor& template_feat);

HeadOutputs rpn_head(const Tensor& corr, const HeadParams& head);

/// Elementwise sum_k weights[k] * outs[k] for cls and reg separately.
HeadOutputs weighted_fuse(const std::array<HeadOutputs, 3>& outs, const Tensor& cls_weights, const Tensor& reg_weights);

/// Foreground probability per anchor, (B, A*h*w).
Tensor anchor_scores(const Tensor& cls, std::size_t anchors);
/// Per-anchor deltas, (B, A*h*w, 4).
Tensor anchor_deltas(const Tensor& reg, std::size_t anchors);

/// Hanning window over the response grid, tiled over anchors.
std::vector<double> cosine_window(std::size_t rows, std::size_t cols, std::size_t per_cell);

/// Picks the best anchor of batch entry 0 after shape-change penalty and
/// cosine windowing. `prev` is the previous box in search-crop pixels.
Selection decode_and_select(const HeadOutputs& heads, const AnchorGrid& anchors, const BBox& prev,
                            const SelectConfig& cfg);

BBox clamp_to_frame(const BBox& box, double width, double height, double min_size);

}  // namespace fgsgt::siamese
