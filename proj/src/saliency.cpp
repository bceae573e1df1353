#include "fgsgt/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fgsgt::saliency {

namespace {

FeatureFusionNet make_fusion_net(ParamStore& store, const std::string& name, std::size_t in, std::size_t c,
                                 Initializer& init) {
  FeatureFusionNet n;
  n.reduce = Conv2d::create(store, name + ".reduce", ConvSpec::same(in, c, 1, 1), init);
  n.slope0 = store.add_param(name + ".prelu0", Tensor::full({c}, 0.25));
  n.mix1 = Conv2d::create(store, name + ".mix1", ConvSpec::same(c, c, 3, 3), init);
  n.slope1 = store.add_param(name + ".prelu1", Tensor::full({c}, 0.25));
  n.mix2 = Conv2d::create(store, name + ".mix2", ConvSpec::same(c, c, 3, 3), init);
  n.slope2 = store.add_param(name + ".prelu2", Tensor::full({c}, 0.25));
  return n;
}

std::size_t grid_factor(const Tensor& fine, const Tensor& coarse, const char* what) {
  const std::size_t fh = fine.dim(2) / coarse.dim(2), fw = fine.dim(3) / coarse.dim(3);
  if (fh == 0 || fh != fw || fh * coarse.dim(2) != fine.dim(2) || fw * coarse.dim(3) != fine.dim(3)) {
    throw std::invalid_argument(std::string("build_integrated: ") + what + " grid " + shape_str(coarse.shape()) +
                                " does not evenly divide " + shape_str(fine.shape()));
  }
  return fh;
}

}  // namespace

Tensor FeatureFusionNet::forward(const Tensor& x) const {
  Tensor h = prelu(reduce(x), slope0);
  h = prelu(mix1(h), slope1);
  return prelu(mix2(h), slope2);
}

SaliencyParams SaliencyParams::create(ParamStore& store, const std::string& prefix, const SaliencyConfig& cfg,
                                      Initializer& init) {
  cfg.act.validate();
  SaliencyParams p;
  p.cfg = cfg;
  const auto& lc = cfg.level_channels;
  p.integrate.low = make_fusion_net(store, prefix + "f_low", lc[0] + lc[1] + lc[2], cfg.channels, init);
  p.integrate.high = make_fusion_net(store, prefix + "f_high", lc[3] + lc[4], cfg.channels, init);
  p.s0_head = Conv2d::create(store, prefix + "s0_head", ConvSpec::same(cfg.channels, 1, 1, 1), init);
  for (std::size_t i = 0; i < cfg.steps; ++i) {
    const std::string name = prefix + "block" + std::to_string(i + 1);
    SrrbParams b;
    b.act = cfg.act;
    b.conv1 = Conv2d::create(store, name + ".conv1", ConvSpec::same(cfg.channels + 1, cfg.phi_hidden, 3, 3), init);
    b.conv2 = Conv2d::create(store, name + ".conv2", ConvSpec::same(cfg.phi_hidden, cfg.phi_hidden, 3, 3), init);
    b.conv3 = Conv2d::create(store, name + ".conv3", ConvSpec::same(cfg.phi_hidden, 1, 3, 3), init);
    p.blocks.push_back(b);
  }
  return p;
}

IntegratedFeatures build_integrated(const std::vector<Tensor>& conv_outs, const IntegratedParams& params) {
  if (conv_outs.size() != 5) {
    throw std::invalid_argument("build_integrated: expected Conv1..Conv5 (5 maps), got " + std::to_string(conv_outs.size()));
  }
  for (std::size_t i = 0; i < 5; ++i) {
    const Tensor& t = conv_outs[i];
    if (t.rank() != 4 || t.dim(0) != conv_outs[0].dim(0)) {
      throw std::invalid_argument("build_integrated: Conv" + std::to_string(i + 1) + " map has shape " +
                                  shape_str(t.shape()));
    }
    if (i > 0 && (t.dim(2) > conv_outs[i - 1].dim(2) || t.dim(3) > conv_outs[i - 1].dim(3))) {
      throw std::invalid_argument("build_integrated: spatial extents must not grow with depth (Conv" +
                                  std::to_string(i + 1) + " is " + shape_str(t.shape()) + ")");
    }
  }
  const Tensor& f1 = conv_outs[0];
  const Tensor f2 = upsample(conv_outs[1], grid_factor(f1, conv_outs[1], "Conv2"), UpsampleMode::kBilinear);
  const Tensor f3 = upsample(conv_outs[2], grid_factor(f1, conv_outs[2], "Conv3"), UpsampleMode::kBilinear);
  IntegratedFeatures out;
  out.f_low = params.low.forward(concat({f1, f2, f3}, 1));

  const Tensor& f4 = conv_outs[3];
  const Tensor f5 = upsample(conv_outs[4], grid_factor(f4, conv_outs[4], "Conv5"), UpsampleMode::kBilinear);
  const Tensor high = params.high.forward(concat({f4, f5}, 1));
  out.f_high = upsample(high, grid_factor(f1, f4, "Conv4"), UpsampleMode::kBilinear);
  return out;
}

SaliencyMap predict_s0(const Tensor& f_high, const Conv2d& head) {
  SaliencyMap s;
  s.logits = head(f_high);
  s.prob = sigmoid(s.logits);
  return s;
}

SaliencyMap srrb_step(const SaliencyMap& s_prev, const Tensor& f, const SrrbParams& params) {
  const Shape& sp = s_prev.prob.shape();
  if (f.rank() != 4 || f.dim(0) != sp[0] || f.dim(2) != sp[2] || f.dim(3) != sp[3]) {
    throw std::invalid_argument("srrb_step: feature grid " + shape_str(f.shape()) + " does not match saliency map " +
                                shape_str(sp));
  }
  Tensor h = leaky_relu(params.conv1(concat({s_prev.prob, f}, 1)), params.act);
  h = leaky_relu(params.conv2(h), params.act);
  const Tensor residue = params.conv3(h);
  SaliencyMap s;
  s.logits = add(s_prev.logits, residue);
  s.prob = sigmoid(s.logits);
  return s;
}

RefineResult refine(const SaliencyMap& s0, const IntegratedFeatures& feats, std::size_t steps,
                    const std::vector<SrrbParams>& blocks) {
  if (blocks.size() < steps) {
    throw std::invalid_argument("refine: " + std::to_string(steps) + " steps requested but only " +
                                std::to_string(blocks.size()) + " blocks available");
  }
  RefineResult r;
  const SaliencyMap* prev = &s0;
  for (std::size_t i = 1; i <= steps; ++i) {
    const bool odd = (i % 2) == 1;
    r.sources.push_back(odd ? FeatureSource::kLow : FeatureSource::kHigh);
    r.maps.push_back(srrb_step(*prev, odd ? feats.f_low : feats.f_high, blocks[i - 1]));
    prev = &r.maps.back();
  }
  return r;
}

Tensor box_saliency_target(std::size_t grid_h, std::size_t grid_w, double cell, const BBox& box) {
  Tensor mask({1, 1, grid_h, grid_w});
  auto v = mask.values_mut();
  for (std::size_t r = 0; r < grid_h; ++r)
    for (std::size_t c = 0; c < grid_w; ++c) {
      const double x = (static_cast<double>(c) + 0.5) * cell;
      const double y = (static_cast<double>(r) + 0.5) * cell;
      v[r * grid_w + c] = (x >= box.left() && x <= box.right() && y >= box.top() && y <= box.bottom()) ? 1.0 : 0.0;
    }
  NoGradGuard guard;
  return avg_pool2d(mask, 3, 1, 1).detach();
}

std::vector<unsigned char> to_gray(const Tensor& prob, std::size_t batch_index) {
  const std::size_t h = prob.dim(2), w = prob.dim(3);
  const auto v = prob.values();
  std::vector<unsigned char> out(h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    const double p = std::clamp(v[batch_index * h * w + i], 0.0, 1.0);
    out[i] = static_cast<unsigned char>(std::lround(p * 255.0));
  }
  return out;
}

}  // namespace fgsgt::saliency
