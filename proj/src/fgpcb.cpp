#include "fgsgt/fgpcb.hpp"

#include <stdexcept>

namespace fgsgt::fgpcb {

void FgpcbConfig::validate() const {
  if (in_channels == 0 || branch_width == 0 || out_channels == 0) {
    throw std::invalid_argument("fgpcb: channel widths must be positive");
  }
  if (pool_window == 0 || pool_stride == 0) throw std::invalid_argument("fgpcb: pooling window and stride must be positive");
  act.validate();
}

namespace {

Stage make_stage(ParamStore& store, const std::string& name, const FgpcbConfig& cfg, std::size_t in, bool first,
                 Initializer& init) {
  Stage s;
  s.first = first;
  const std::size_t bw = cfg.branch_width, out = cfg.out_channels;
  s.conv1x1 = ConvBnAct::create(store, name + ".conv1x1", ConvSpec::same(in, bw, 1, 1), init, cfg.act);
  s.conv3x3 = ConvBnAct::create(store, name + ".conv3x3", ConvSpec::same(in, bw, 3, 3), init, cfg.act);
  const std::size_t merged = first ? 2 * bw : bw;
  s.conv1x3 = ConvBnAct::create(store, name + ".conv1x3", ConvSpec::same(merged, out, 1, 3), init, cfg.act);
  s.conv3x1 = ConvBnAct::create(store, name + ".conv3x1", ConvSpec::same(out, out, 3, 1), init, cfg.act);
  if (first) s.residual3x3 = ConvBnAct::create(store, name + ".residual3x3", ConvSpec::same(in, out, 3, 3), init, cfg.act);
  return s;
}

void check_input(const char* where, const Tensor& t, std::size_t channels) {
  if (t.rank() != 4 || t.dim(1) != channels) {
    throw std::invalid_argument(std::string("fgpcb ") + where + ": expected (B, " + std::to_string(channels) +
                                ", H, W) input, got " + shape_str(t.shape()));
  }
}

// Shared body of stages 2 and 3.
Tensor additive_stage(const Tensor& in, Stage& s, bool training) {
  const Tensor a = s.conv1x1.forward(in, training);
  const Tensor b = s.conv3x3.forward(in, training);
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("fgpcb: parallel branch shapes differ " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  const Tensor main = s.conv3x1.forward(s.conv1x3.forward(add(a, b), training), training);
  if (main.shape() != in.shape()) {
    throw std::invalid_argument("fgpcb: residual closure needs " + shape_str(in.shape()) + ", main path gives " +
                                shape_str(main.shape()));
  }
  return add(main, in);
}

}  // namespace

FgpcbParams FgpcbParams::create(ParamStore& store, const std::string& prefix, const FgpcbConfig& cfg, Initializer& init) {
  cfg.validate();
  FgpcbParams p;
  p.cfg = cfg;
  p.stage1 = make_stage(store, prefix + "stage1", cfg, cfg.in_channels, true, init);
  p.stage2 = make_stage(store, prefix + "stage2", cfg, cfg.out_channels, false, init);
  p.stage3 = make_stage(store, prefix + "stage3", cfg, cfg.out_channels, false, init);
  return p;
}

Tensor stage1(const Tensor& f, FgpcbParams& params, bool training) {
  check_input("stage 1", f, params.cfg.in_channels);
  Stage& s = params.stage1;
  const Tensor a = s.conv1x1.forward(f, training);
  const Tensor b = s.conv3x3.forward(f, training);
  const Tensor main = s.conv3x1.forward(s.conv1x3.forward(concat({a, b}, 1), training), training);
  const Tensor residual = s.residual3x3.forward(f, training);
  if (main.shape() != residual.shape()) {
    throw std::invalid_argument("fgpcb stage 1: concat path " + shape_str(main.shape()) + " and residual path " +
                                shape_str(residual.shape()) + " disagree");
  }
  return max_pool2d(add(main, residual), params.cfg.pool_window, params.cfg.pool_stride);
}

Tensor stage2(const Tensor& x, FgpcbParams& params, bool training) {
  check_input("stage 2", x, params.cfg.out_channels);
  return additive_stage(x, params.stage2, training);
}

Tensor stage3(const Tensor& y, FgpcbParams& params, bool training) {
  check_input("stage 3", y, params.cfg.out_channels);
  return additive_stage(y, params.stage3, training);
}

FgpcbOutputs forward(const Tensor& f, FgpcbParams& params, bool training) {
  FgpcbOutputs out;
  out.x = stage1(f, params, training);
  out.y = stage2(out.x, params, training);
  out.z = stage3(out.y, params, training);
  return out;
}

std::pair<std::size_t, std::size_t> receptive_field(const std::vector<ConvSpec>& chain) {
  std::size_t rf_h = 1, rf_w = 1, jump = 1;
  for (const ConvSpec& c : chain) {
    rf_h += (c.kernel_h - 1) * c.dilation * jump;
    rf_w += (c.kernel_w - 1) * c.dilation * jump;
    jump *= c.stride;
  }
  return {rf_h, rf_w};
}

}  // namespace fgsgt::fgpcb
