#pragma once

#include <cstddef>
#include <vector>

#include "fgsgt/tensor.hpp"

namespace fgsgt {

/// Geometry of a 2-D convolution. Padding is zero-fill and may differ per
/// axis so that 1x3 / 3x1 kernels can keep the spatial extent.
struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;

  /// "Same" padding for odd kernels: output extent = ceil(in / stride).
  static ConvSpec same(std::size_t in, std::size_t out, std::size_t kh, std::size_t kw,
                       std::size_t stride = 1, std::size_t dilation = 1);

  void validate() const;
  /// floor((in + 2*pad - dilation*(k-1) - 1) / stride) + 1; throws if < 1.
  std::size_t out_h(std::size_t in_h) const;
  std::size_t out_w(std::size_t in_w) const;
};

/// Leaky rectification slope for the negative half-line.
struct ActivationConfig {
  double alpha = 0.25;
  void validate() const;
};

enum class UpsampleMode { kNearest, kBilinear };

struct BatchNormConfig {
  bool training = true;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Elementwise.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor exp(const Tensor& x);
/// Natural log; input must be positive.
Tensor log(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Subgradient 0 at the origin.
Tensor abs(const Tensor& x);
Tensor leaky_relu(const Tensor& x, const ActivationConfig& cfg = {});
/// Parametric rectification with one learnable slope per channel (axis 1).
Tensor prelu(const Tensor& x, const Tensor& slopes);
/// sign(v) * sqrt(|v|). The derivative at exactly 0 is taken as 0.
Tensor signed_sqrt(const Tensor& x);

// Reductions.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Shape manipulation.
Tensor reshape(const Tensor& x, Shape shape);
/// Swaps the last two axes.
Tensor transpose_last2(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
Tensor index_select(const Tensor& x, std::size_t axis, const std::vector<std::size_t>& indices);

// Dense layers.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, const ConvSpec& spec);
Tensor matmul_batched(const Tensor& a, const Tensor& b);
/// x (B, In), weight (Out, In), bias (Out) -> (B, Out).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor softmax(const Tensor& x, std::size_t axis);
/// Row-wise L2 normalisation of a rank-2 tensor. All-zero rows are returned
/// as zeros and their indices appended to zero_rows when given.
Tensor l2_normalize_rows(const Tensor& x, std::vector<std::size_t>* zero_rows = nullptr);
/// Per-channel normalisation over (B, H, W). In training mode the batch
/// statistics are used and the running buffers updated in place.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, const BatchNormConfig& cfg);

// Spatial.
Tensor max_pool2d(const Tensor& x, std::size_t window, std::size_t stride, std::size_t padding = 0);
/// Average over the in-bounds part of each window.
Tensor avg_pool2d(const Tensor& x, std::size_t window, std::size_t stride, std::size_t padding = 0);
/// Integer-factor upsampling; bilinear uses half-pixel centres (align_corners off).
Tensor upsample(const Tensor& x, std::size_t factor, UpsampleMode mode);

/// Mean pixelwise binary cross-entropy of probabilities against targets in
/// [0, 1]; predictions clamped to [eps, 1 - eps]. Differentiable in pred only.
Tensor binary_cross_entropy(const Tensor& pred, const Tensor& target, double eps = 1e-7);

}  // namespace fgsgt
