#include "fgsgt/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "fgsgt/ops.hpp"

namespace fgsgt::losses {

void LossWeights::validate() const {
  for (double v : {lambda_cls, lambda_reg, lambda_sal, lambda_iou, lambda_l1}) {
    if (!(v >= 0.0)) throw std::invalid_argument("loss weights must be non-negative");
  }
  for (double v : step_weights) {
    if (!(v >= 0.0)) throw std::invalid_argument("saliency step weights must be non-negative");
  }
  if (lambda_cls == 0.0 && lambda_reg == 0.0 && lambda_sal == 0.0) {
    throw std::invalid_argument("at least one of lambda_cls, lambda_reg, lambda_sal must be positive");
  }
}

Tensor cls_loss(const Tensor& probs, const std::vector<double>& labels) {
  if (probs.numel() != labels.size()) {
    throw std::invalid_argument("cls_loss: " + std::to_string(probs.numel()) + " predictions for " +
                                std::to_string(labels.size()) + " labels");
  }
  for (double u : labels) {
    if (u != 0.0 && u != 1.0) throw std::invalid_argument("cls_loss: label " + std::to_string(u) + " is not 0 or 1");
  }
  const auto pv = probs.values();
  double s = 0.0;
  for (std::size_t j = 0; j < pv.size(); ++j) {
    const double u = std::clamp(pv[j], kProbEps, 1.0 - kProbEps);
    s += labels[j] * std::log(u) + (1.0 - labels[j]) * std::log(1.0 - u);
  }
  return Tensor::from_op("cls_loss", {1}, {-0.5 * s}, {probs}, [probs, labels](std::span<const double> g) {
    auto gp = probs.grad_mut();
    const auto pv = probs.values();
    for (std::size_t j = 0; j < pv.size(); ++j) {
      if (pv[j] < kProbEps || pv[j] > 1.0 - kProbEps) continue;
      gp[j] += -0.5 * g[0] * (labels[j] / pv[j] - (1.0 - labels[j]) / (1.0 - pv[j]));
    }
  });
}

namespace {

// 1 - IoU of the decoded prediction and its gradient w.r.t. the deltas.
double iou_loss_and_grad(const std::array<double, 4>& d, const BBox& anchor, const BBox& gt, std::array<double, 4>& grad) {
  const BBox p = decode_deltas(d, anchor);
  const double l = p.left(), r = p.right(), t = p.top(), b = p.bottom();
  const double iw_raw = std::min(r, gt.right()) - std::max(l, gt.left());
  const double ih_raw = std::min(b, gt.bottom()) - std::max(t, gt.top());
  const double iw = std::max(0.0, iw_raw), ih = std::max(0.0, ih_raw);
  const double inter = iw * ih;
  const double uni = p.area() + gt.area() - inter;
  const double value = inter / uni;

  // Partials of the intersection w.r.t. the prediction's edges.
  double dI_dr = 0, dI_dl = 0, dI_db = 0, dI_dt = 0;
  if (iw_raw > 0 && ih_raw > 0) {
    if (r < gt.right()) dI_dr = ih;
    if (l > gt.left()) dI_dl = -ih;
    if (b < gt.bottom()) dI_db = iw;
    if (t > gt.top()) dI_dt = -iw;
  }
  const double dI_dcx = dI_dr + dI_dl, dI_dw = 0.5 * (dI_dr - dI_dl);
  const double dI_dcy = dI_db + dI_dt, dI_dh = 0.5 * (dI_db - dI_dt);
  auto diou = [&](double dI, double dA) { return (dI * uni - inter * (dA - dI)) / (uni * uni); };
  const double g_cx = diou(dI_dcx, 0.0), g_cy = diou(dI_dcy, 0.0);
  const double g_w = diou(dI_dw, p.h), g_h = diou(dI_dh, p.w);
  // Loss is 1 - IoU; chain through the decode.
  grad = {-g_cx * anchor.w, -g_cy * anchor.h, -g_w * p.w, -g_h * p.h};
  return 1.0 - value;
}

}  // namespace

Tensor reg_loss(const Tensor& pred_deltas, const std::vector<BBox>& anchors, const std::vector<BBox>& gt,
                const std::vector<double>& labels, const LossWeights& weights) {
  if (pred_deltas.rank() != 2 || pred_deltas.dim(1) != 4) {
    throw std::invalid_argument("reg_loss: predictions must be (M, 4), got " + shape_str(pred_deltas.shape()));
  }
  const std::size_t M = pred_deltas.dim(0);
  if (anchors.size() != M || gt.size() != M || labels.size() != M) {
    throw std::invalid_argument("reg_loss: anchors, ground truth and labels must all have " + std::to_string(M) + " rows");
  }
  for (std::size_t j = 0; j < M; ++j) {
    if (!gt[j].valid()) throw std::invalid_argument("reg_loss: ground-truth box " + std::to_string(j) + " is degenerate");
    if (!anchors[j].valid()) throw std::invalid_argument("reg_loss: anchor " + std::to_string(j) + " is degenerate");
  }
  const auto dv = pred_deltas.values();
  std::size_t n_pos = 0;
  for (double u : labels) n_pos += u > 0 ? 1 : 0;

  std::vector<double> grad(M * 4, 0.0);
  double total = 0.0;
  if (n_pos > 0) {
    for (std::size_t j = 0; j < M; ++j) {
      if (!(labels[j] > 0)) continue;
      const std::array<double, 4> d{dv[j * 4], dv[j * 4 + 1], dv[j * 4 + 2], dv[j * 4 + 3]};
      const auto target = encode_deltas(gt[j], anchors[j]);
      std::array<double, 4> g_iou{};
      const double l_iou = iou_loss_and_grad(d, anchors[j], gt[j], g_iou);
      double l_1 = 0.0;
      for (std::size_t k = 0; k < 4; ++k) l_1 += std::fabs(d[k] - target[k]);
      l_1 /= 4.0;
      const double inner = weights.lambda_iou * l_iou + weights.lambda_l1 * l_1;
      total += std::fabs(inner);
      const double sign = inner > 0 ? 1.0 : (inner < 0 ? -1.0 : 0.0);
      for (std::size_t k = 0; k < 4; ++k) {
        const double diff = d[k] - target[k];
        const double g_l1 = (diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0)) / 4.0;
        grad[j * 4 + k] = sign * (weights.lambda_iou * g_iou[k] + weights.lambda_l1 * g_l1) / static_cast<double>(n_pos);
      }
    }
    total /= static_cast<double>(n_pos);
  }
  return Tensor::from_op("reg_loss", {1}, {total}, {pred_deltas}, [pred_deltas, grad = std::move(grad)](std::span<const double> g) {
    auto gd = pred_deltas.grad_mut();
    for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += g[0] * grad[i];
  });
}

SalLoss sal_loss(const std::vector<Tensor>& maps, const Tensor& gt, const std::vector<double>& step_weights) {
  if (maps.empty()) throw std::invalid_argument("sal_loss: at least S_0 is required");
  if (step_weights.size() != maps.size()) {
    throw std::invalid_argument("sal_loss: " + std::to_string(maps.size()) + " maps but " +
                                std::to_string(step_weights.size()) + " step weights");
  }
  SalLoss out;
  Tensor acc;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].shape() != gt.shape()) {
      throw std::invalid_argument("sal_loss: map S_" + std::to_string(i) + " has grid " + shape_str(maps[i].shape()) +
                                  ", ground truth " + shape_str(gt.shape()));
    }
    const Tensor y = binary_cross_entropy(maps[i], gt, kProbEps);
    out.steps.push_back(y.item());
    const Tensor term = scale(y, step_weights[i]);
    acc = acc.defined() ? add(acc, term) : term;
  }
  out.value = acc;
  return out;
}

TotalLoss total_loss(const Tensor& l_cls, const Tensor& l_reg, const SalLoss& l_sal, const LossWeights& weights) {
  TotalLoss out;
  out.value = add(add(scale(l_cls, weights.lambda_cls), scale(l_reg, weights.lambda_reg)),
                  scale(l_sal.value, weights.lambda_sal));
  out.breakdown.l_cls = l_cls.item();
  out.breakdown.l_reg = l_reg.item();
  out.breakdown.l_sal = l_sal.value.item();
  out.breakdown.steps = l_sal.steps;
  out.breakdown.total = out.value.item();
  return out;
}

}  // namespace fgsgt::losses
