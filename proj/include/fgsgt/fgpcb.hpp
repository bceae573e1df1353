#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "fgsgt/nn.hpp"

namespace fgsgt::fgpcb {

struct FgpcbConfig {
  std::size_t in_channels = 32;
  std::size_t branch_width = 8;  // per parallel branch; Concat doubles it in stage 1
  std::size_t out_channels = 32; // C_x, shared by X, Y and Z
  std::size_t pool_window = 2;
  std::size_t pool_stride = 2;
  ActivationConfig act{0.25};
  void validate() const;
};

/// One stage of the block. Stage 1 concatenates the two parallel branches and
/// adds a 3x3 residual before pooling; stages 2 and 3 add the branches and
/// use an identity residual.
struct Stage {
  ConvBnAct conv1x1;
  ConvBnAct conv3x3;
  ConvBnAct conv1x3;
  ConvBnAct conv3x1;
  ConvBnAct residual3x3;  // stage 1 only
  bool first = false;
};

struct FgpcbParams {
  FgpcbConfig cfg;
  Stage stage1, stage2, stage3;

  /// Registers every tensor under `prefix` (normally "fgpcb.").
  static FgpcbParams create(ParamStore& store, const std::string& prefix, const FgpcbConfig& cfg, Initializer& init);
};

struct FgpcbOutputs {
  Tensor x, y, z;
};

/// X = M(Conv3x1(Conv1x3(Concat(Conv1x1(F), Conv3x3(F)))) + Conv3x3(F)), M = max pooling.
Tensor stage1(const Tensor& f, FgpcbParams& params, bool training);
/// Y = Conv3x1(Conv1x3(Conv1x1(X) + Conv3x3(X))) + X.
Tensor stage2(const Tensor& x, FgpcbParams& params, bool training);
/// Z = Conv3x1(Conv1x3(Conv1x1(Y) + Conv3x3(Y))) + Y.
Tensor stage3(const Tensor& y, FgpcbParams& params, bool training);

FgpcbOutputs forward(const Tensor& f, FgpcbParams& params, bool training);

/// Receptive field (height, width) of a chain of convolutions applied in order.
std::pair<std::size_t, std::size_t> receptive_field(const std::vector<ConvSpec>& chain);

}  // namespace fgsgt::fgpcb
