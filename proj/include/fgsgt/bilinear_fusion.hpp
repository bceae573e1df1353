#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fgsgt/nn.hpp"

namespace fgsgt::fusion {

/// A (B, C, H, W) map viewed as a (B, C, S) matrix with S = H * W.
struct FlattenedFeature {
  Tensor data;

  static FlattenedFeature from_map(const Tensor& map);
  std::size_t batch() const { return data.dim(0); }
  std::size_t channels() const { return data.dim(1); }
  std::size_t spatial() const { return data.dim(2); }
};

struct NormalizedBilinear {
  Tensor values;                       // (B, C*C)
  std::vector<std::size_t> zero_rows;  // batch rows left unnormalised
};

struct FusionOutput {
  Tensor o_bp;     // (B, C*C), softmax of the summed normalised pairs
  Tensor o_fused;  // (B, K), softmax of the fully connected projection
  std::vector<std::size_t> zero_rows;
};

struct FusionParams {
  Linear fc;
  std::size_t channels = 0;
  std::size_t classes = 2;

  /// Registers the projection under `prefix` (normally "fusion.").
  static FusionParams create(ParamStore& store, const std::string& prefix, std::size_t channels, std::size_t classes,
                             Initializer& init);
};

/// out[b, i, j] = sum_s a[b, i, s] * b[b, j, s].
Tensor bilinear_pair(const FlattenedFeature& a, const FlattenedFeature& b);

/// Flatten to (B, C*C), signed square root, then L2 row normalisation.
NormalizedBilinear normalize_bilinear(const Tensor& m);

/// Both heads over N(XY) + N(XZ) + N(YZ).
FusionOutput fuse_classify(const FlattenedFeature& x, const FlattenedFeature& y, const FlattenedFeature& z,
                           const FusionParams& params);

/// Average-pools maps with differing grids down to the coarsest one so that
/// they can be flattened onto a common spatial axis.
std::vector<Tensor> align_to_coarsest(const std::vector<Tensor>& maps);

}  // namespace fgsgt::fusion
