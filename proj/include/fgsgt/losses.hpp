#pragma once

#include <cstddef>
#include <vector>

#include "fgsgt/bbox.hpp"
#include "fgsgt/tensor.hpp"

namespace fgsgt::losses {

inline constexpr double kProbEps = 1e-7;

struct LossWeights {
  double lambda_cls = 1.0;
  double lambda_reg = 1.2;
  double lambda_sal = 0.5;
  double lambda_iou = 1.0;  // lambda_G
  double lambda_l1 = 1.0;
  std::vector<double> step_weights{1.0, 1.0, 1.0};  // w_0 .. w_N

  void validate() const;
};

struct LossBreakdown {
  double l_cls = 0, l_reg = 0, l_sal = 0;
  std::vector<double> steps;  // y_0 .. y_N
  double total = 0;
};

struct SalLoss {
  Tensor value;
  std::vector<double> steps;
};

struct TotalLoss {
  Tensor value;
  LossBreakdown breakdown;
};

/// -1/2 * sum_j [u*_j log u_j + (1 - u*_j) log(1 - u_j)], u clamped to [eps, 1 - eps].
Tensor cls_loss(const Tensor& probs, const std::vector<double>& labels);

/// (1 / N_pos) * sum_{j : u*_j > 0} |lambda_G (1 - IoU(p_j, gt_j)) + lambda_1 * mean_k |d_jk - t_jk||
/// where p_j decodes the predicted deltas d_j against anchor j and t_j is the
/// ground-truth delta target. Returns 0 when no sample is positive.
Tensor reg_loss(const Tensor& pred_deltas, const std::vector<BBox>& anchors, const std::vector<BBox>& gt,
                const std::vector<double>& labels, const LossWeights& weights);

/// w_0 y_0 + sum_i w_i y_i with y_i the mean pixelwise BCE of S_i against gt.
SalLoss sal_loss(const std::vector<Tensor>& maps, const Tensor& gt, const std::vector<double>& step_weights);

TotalLoss total_loss(const Tensor& l_cls, const Tensor& l_reg, const SalLoss& l_sal, const LossWeights& weights);

}  // namespace fgsgt::losses
