#include "fgsgt/siamese.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fgsgt::siamese {

std::size_t BackboneConfig::total_stride() const {
  std::size_t s = 1;
  for (std::size_t v : strides) s *= v;
  return s;
}

void BackboneConfig::validate() const {
  for (std::size_t i = 0; i < 5; ++i) {
    if (widths[i] == 0 || strides[i] == 0 || dilations[i] == 0) {
      throw std::invalid_argument("backbone: stage " + std::to_string(i + 1) + " has a zero width, stride or dilation");
    }
  }
  if (reduced_channels == 0) throw std::invalid_argument("backbone: reduced channel width must be positive");
  act.validate();
}

BackboneParams BackboneParams::create(ParamStore& store, const BackboneConfig& cfg, Initializer& init) {
  cfg.validate();
  BackboneParams p;
  p.cfg = cfg;
  std::size_t in = 1;
  for (std::size_t i = 0; i < 5; ++i) {
    p.stages[i] = ConvBnAct::create(store, "backbone.conv" + std::to_string(i + 1),
                                    ConvSpec::same(in, cfg.widths[i], 3, 3, cfg.strides[i], cfg.dilations[i]), init, cfg.act);
    if (i == 3) {
      fgpcb::FgpcbConfig fc;
      fc.in_channels = cfg.widths[3];
      fc.branch_width = cfg.fgpcb_branch_width;
      fc.out_channels = cfg.widths[3];
      fc.act = cfg.act;
      p.fgpcb = fgpcb::FgpcbParams::create(store, "fgpcb.", fc, init);
    }
    in = cfg.widths[i];
  }
  p.fusion = fusion::FusionParams::create(store, "fusion.", cfg.widths[3], cfg.fusion_classes, init);
  for (std::size_t l = 0; l < 3; ++l) {
    const std::string name = "backbone.reduce" + std::to_string(l + 3);
    p.reduce[l] = Conv2d::create(store, name, ConvSpec::same(cfg.widths[l + 2], cfg.reduced_channels, 1, 1), init);
    p.reduce_bn[l] = BatchNorm2d::create(store, name + ".bn", cfg.reduced_channels);
  }
  return p;
}

BackboneOutputs backbone_forward(const Tensor& image, BackboneParams& params, bool training) {
  if (image.rank() != 4 || image.dim(1) != 1) {
    throw std::invalid_argument("backbone: expected a (B, 1, H, W) image, got " + shape_str(image.shape()));
  }
  const std::size_t stride = params.cfg.total_stride();
  if (image.dim(2) % stride != 0 || image.dim(3) % stride != 0) {
    throw std::invalid_argument("backbone: input extents " + std::to_string(image.dim(2)) + "x" +
                                std::to_string(image.dim(3)) + " are not divisible by the total stride " +
                                std::to_string(stride));
  }
  BackboneOutputs out;
  Tensor h = image;
  for (std::size_t i = 0; i < 5; ++i) {
    h = params.stages[i].forward(h, training);
    if (i == 3) {
      const std::size_t pool = params.fgpcb.cfg.pool_stride;
      if (h.dim(2) % pool != 0 || h.dim(3) % pool != 0) {
        throw std::invalid_argument("backbone: stage-4 grid " + shape_str(h.shape()) +
                                    " cannot round-trip through the pooled block");
      }
      out.fine = fgpcb::forward(h, params.fgpcb, training);
      h = add(h, upsample(out.fine.z, pool, UpsampleMode::kNearest));
    }
    out.raw.push_back(h);
  }
  out.f3 = params.reduce_bn[0].forward(params.reduce[0](out.raw[2]), training);
  out.f4 = params.reduce_bn[1].forward(params.reduce[1](out.raw[3]), training);
  out.f5 = params.reduce_bn[2].forward(params.reduce[2](out.raw[4]), training);
  return out;
}

fusion::FusionOutput fusion_head(const BackboneOutputs& feats, const BackboneParams& params) {
  const auto aligned = fusion::align_to_coarsest({feats.fine.x, feats.fine.y, feats.fine.z});
  return fusion::fuse_classify(fusion::FlattenedFeature::from_map(aligned[0]),
                               fusion::FlattenedFeature::from_map(aligned[1]),
                               fusion::FlattenedFeature::from_map(aligned[2]), params.fusion);
}

Tensor dw_corr(const Tensor& search, const Tensor& templ) {
  if (search.rank() != 4 || templ.rank() != 4) throw std::invalid_argument("dw_corr: operands must be (B, C, H, W)");
  if (search.dim(0) != templ.dim(0) || search.dim(1) != templ.dim(1)) {
    throw std::invalid_argument("dw_corr: batch/channel mismatch " + shape_str(search.shape()) + " vs " +
                                shape_str(templ.shape()));
  }
  const std::size_t B = search.dim(0), C = search.dim(1), Hs = search.dim(2), Ws = search.dim(3);
  const std::size_t Ht = templ.dim(2), Wt = templ.dim(3);
  if (Ht > Hs || Wt > Ws) {
    throw std::invalid_argument("dw_corr: template " + std::to_string(Ht) + "x" + std::to_string(Wt) +
                                " larger than search " + std::to_string(Hs) + "x" + std::to_string(Ws));
  }
  const std::size_t Ho = Hs - Ht + 1, Wo = Ws - Wt + 1;
  const auto sv = search.values(), tv = templ.values();
  std::vector<double> out(B * C * Ho * Wo, 0.0);
  for (std::size_t p = 0; p < B * C; ++p) {
    const double* sp = sv.data() + p * Hs * Ws;
    const double* tp = tv.data() + p * Ht * Wt;
    double* op = out.data() + p * Ho * Wo;
    for (std::size_t u = 0; u < Ht; ++u)
      for (std::size_t v = 0; v < Wt; ++v) {
        const double t = tp[u * Wt + v];
        for (std::size_t i = 0; i < Ho; ++i) {
          const double* srow = sp + (i + u) * Ws + v;
          double* orow = op + i * Wo;
          for (std::size_t j = 0; j < Wo; ++j) orow[j] += t * srow[j];
        }
      }
  }
  return Tensor::from_op("dw_corr", {B, C, Ho, Wo}, std::move(out), {search, templ},
                         [search, templ, B, C, Hs, Ws, Ht, Wt, Ho, Wo](std::span<const double> g) {
                           const auto sv = search.values(), tv = templ.values();
                           std::span<double> gs, gt;
                           if (search.requires_grad()) gs = search.grad_mut();
                           if (templ.requires_grad()) gt = templ.grad_mut();
                           for (std::size_t p = 0; p < B * C; ++p) {
                             const double* gp = g.data() + p * Ho * Wo;
                             for (std::size_t u = 0; u < Ht; ++u)
                               for (std::size_t v = 0; v < Wt; ++v) {
                                 const double t = tv[p * Ht * Wt + u * Wt + v];
                                 double acc = 0.0;
                                 for (std::size_t i = 0; i < Ho; ++i)
                                   for (std::size_t j = 0; j < Wo; ++j) {
                                     const std::size_t si = p * Hs * Ws + (i + u) * Ws + v + j;
                                     acc += gp[i * Wo + j] * sv[si];
                                     if (!gs.empty()) gs[si] += t * gp[i * Wo + j];
                                   }
                                 if (!gt.empty()) gt[p * Ht * Wt + u * Wt + v] += acc;
                               }
                           }
                         });
}

HeadParams HeadParams::create(ParamStore& store, const std::string& name, std::size_t channels, std::size_t anchors,
                              Initializer& init, const ActivationConfig& act) {
  act.validate();
  HeadParams h;
  h.act = act;
  h.cls_tower = Conv2d::create(store, name + ".cls_tower", ConvSpec::same(channels, channels, 3, 3), init);
  h.cls_out = Conv2d::create(store, name + ".cls_out", ConvSpec::same(channels, 2 * anchors, 1, 1), init);
  h.reg_tower = Conv2d::create(store, name + ".reg_tower", ConvSpec::same(channels, channels, 3, 3), init);
  h.reg_out = Conv2d::create(store, name + ".reg_out", ConvSpec::same(channels, 4 * anchors, 1, 1), init);
  return h;
}

HeadOutputs rpn_head(const Tensor& corr, const HeadParams& head) {
  HeadOutputs out;
  out.cls = head.cls_out(leaky_relu(head.cls_tower(corr), head.act));
  out.reg = head.reg_out(leaky_relu(head.reg_tower(corr), head.act));
  return out;
}

namespace {

Tensor weighted_sum(const std::array<Tensor, 3>& xs, const Tensor& w) {
  if (w.shape() != Shape{3}) throw std::invalid_argument("weighted_fuse: expected 3 weights, got " + shape_str(w.shape()));
  for (const Tensor& x : xs) {
    if (x.shape() != xs[0].shape()) {
      throw std::invalid_argument("weighted_fuse: branch shapes differ " + shape_str(x.shape()) + " vs " +
                                  shape_str(xs[0].shape()));
    }
  }
  const auto wv = w.values();
  std::vector<double> out(xs[0].numel(), 0.0);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto xv = xs[k].values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += wv[k] * xv[i];
  }
  return Tensor::from_op("weighted_sum", xs[0].shape(), std::move(out), {xs[0], xs[1], xs[2], w},
                         [xs, w](std::span<const double> g) {
                           const auto wv = w.values();
                           for (std::size_t k = 0; k < 3; ++k) {
                             if (!xs[k].requires_grad()) continue;
                             auto gx = xs[k].grad_mut();
                             for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += wv[k] * g[i];
                           }
                           if (w.requires_grad()) {
                             auto gw = w.grad_mut();
                             for (std::size_t k = 0; k < 3; ++k) {
                               const auto xv = xs[k].values();
                               double s = 0.0;
                               for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i] * g[i];
                               gw[k] += s;
                             }
                           }
                         });
}

}  // namespace

HeadOutputs weighted_fuse(const std::array<HeadOutputs, 3>& outs, const Tensor& cls_weights, const Tensor& reg_weights) {
  HeadOutputs r;
  r.cls = weighted_sum({outs[0].cls, outs[1].cls, outs[2].cls}, cls_weights);
  r.reg = weighted_sum({outs[0].reg, outs[1].reg, outs[2].reg}, reg_weights);
  return r;
}

AnchorGrid AnchorGrid::generate(const AnchorConfig& cfg, std::size_t rows, std::size_t cols, double search_size) {
  if (cfg.ratios.empty()) throw std::invalid_argument("anchors: at least one aspect ratio is required");
  AnchorGrid g;
  g.per_cell = cfg.ratios.size();
  g.rows = rows;
  g.cols = cols;
  g.frame_size = search_size;
  const double centre = search_size / 2.0;
  const double stride = static_cast<double>(cfg.stride);
  const double area = cfg.base_size * cfg.base_size;
  for (double ratio : cfg.ratios) {
    const double w = std::sqrt(area / ratio);
    const double h = w * ratio;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        const double cx = centre + (static_cast<double>(c) - (static_cast<double>(cols) - 1) / 2.0) * stride;
        const double cy = centre + (static_cast<double>(r) - (static_cast<double>(rows) - 1) / 2.0) * stride;
        g.anchors.push_back({cx, cy, w, h});
      }
  }
  return g;
}

Tensor anchor_scores(const Tensor& cls, std::size_t anchors) {
  const std::size_t B = cls.dim(0), cells = cls.dim(2) * cls.dim(3);
  if (cls.dim(1) != 2 * anchors) {
    throw std::invalid_argument("anchor_scores: cls has " + std::to_string(cls.dim(1)) + " channels, expected " +
                                std::to_string(2 * anchors));
  }
  const Tensor probs = softmax(reshape(cls, {B, 2, anchors * cells}), 1);
  return reshape(slice(probs, 1, 1, 1), {B, anchors * cells});
}

Tensor anchor_deltas(const Tensor& reg, std::size_t anchors) {
  const std::size_t B = reg.dim(0), cells = reg.dim(2) * reg.dim(3);
  if (reg.dim(1) != 4 * anchors) {
    throw std::invalid_argument("anchor_deltas: reg has " + std::to_string(reg.dim(1)) + " channels, expected " +
                                std::to_string(4 * anchors));
  }
  return transpose_last2(reshape(reg, {B, 4, anchors * cells}));
}

std::vector<double> cosine_window(std::size_t rows, std::size_t cols, std::size_t per_cell) {
  auto hann = [](std::size_t n) {
    std::vector<double> w(n, 1.0);
    if (n == 1) return w;
    for (std::size_t i = 0; i < n; ++i)
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1));
    return w;
  };
  const auto hr = hann(rows), hc = hann(cols);
  std::vector<double> out;
  out.reserve(rows * cols * per_cell);
  for (std::size_t a = 0; a < per_cell; ++a)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out.push_back(hr[r] * hc[c]);
  return out;
}

BBox clamp_to_frame(const BBox& box, double width, double height, double min_size) {
  BBox b = box;
  b.cx = std::clamp(b.cx, 0.0, width);
  b.cy = std::clamp(b.cy, 0.0, height);
  b.w = std::clamp(b.w, min_size, width);
  b.h = std::clamp(b.h, min_size, height);
  return b;
}

Selection decode_and_select(const HeadOutputs& heads, const AnchorGrid& grid, const BBox& prev, const SelectConfig& cfg) {
  if (grid.size() == 0) throw std::invalid_argument("decode_and_select: empty anchor set");
  if (heads.cls.dim(2) != grid.rows || heads.cls.dim(3) != grid.cols || heads.cls.dim(1) != 2 * grid.per_cell) {
    throw std::invalid_argument("decode_and_select: head grid " + shape_str(heads.cls.shape()) +
                                " does not match the anchor grid");
  }
  if (!prev.valid()) throw std::invalid_argument("decode_and_select: previous box must have positive extents");
  const std::size_t A = grid.per_cell, cells = grid.rows * grid.cols, N = grid.size();
  const auto cls = heads.cls.values(), reg = heads.reg.values();
  const auto window = cosine_window(grid.rows, grid.cols, A);

  auto change = [](double r) { return std::max(r, 1.0 / r); };
  auto size_of = [](double w, double h) {
    const double pad = (w + h) * 0.5;
    return std::sqrt((w + pad) * (h + pad));
  };
  const double prev_size = size_of(prev.w, prev.h);
  const double prev_ratio = prev.w / prev.h;

  Selection best;
  bool have = false;
  for (std::size_t j = 0; j < N; ++j) {
    const std::size_t a = j / cells, cell = j % cells;
    // Batch entry 0 only.
    const double bg = cls[(0 * A + a) * cells + cell];
    const double fg = cls[(1 * A + a) * cells + cell];
    const double m = std::max(bg, fg);
    const double score = std::exp(fg - m) / (std::exp(bg - m) + std::exp(fg - m));
    const std::array<double, 4> d{reg[(0 * A + a) * cells + cell], reg[(1 * A + a) * cells + cell],
                                  reg[(2 * A + a) * cells + cell], reg[(3 * A + a) * cells + cell]};
    const BBox box = decode_deltas(d, grid.anchors[j]);
    const double s_c = change(size_of(box.w, box.h) / prev_size);
    const double r_c = change(prev_ratio / (box.w / box.h));
    const double penalty = std::exp(-(r_c * s_c - 1.0) * cfg.penalty_k);
    const double pscore = penalty * score * (1.0 - cfg.window_influence) + window[j] * cfg.window_influence;
    if (!have || pscore > best.pscore) {
      have = true;
      best.box = box;
      best.score = score;
      best.pscore = pscore;
      best.penalty = penalty;
      best.index = j;
    }
  }
  best.lr = best.penalty * best.score * cfg.size_lr;
  best.box = clamp_to_frame(best.box, grid.frame_size, grid.frame_size, cfg.min_size);
  return best;
}

}  // namespace fgsgt::siamese
