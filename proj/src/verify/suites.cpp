#include "fgsgt/verify/suites.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <random>

#include "fgsgt/bilinear_fusion.hpp"
#include "fgsgt/fgpcb.hpp"
#include "fgsgt/losses.hpp"
#include "fgsgt/model.hpp"
#include "fgsgt/ops.hpp"
#include "fgsgt/saliency.hpp"
#include "fgsgt/siamese.hpp"
#include "fgsgt/trainer.hpp"
#include "fgsgt/verify/oracles.hpp"

namespace fgsgt::verify {

bool SuiteReport::pass() const {
  return std::all_of(cases.begin(), cases.end(), [](const CaseResult& c) { return c.pass; });
}

double SuiteReport::worst() const {
  double w = 0;
  for (const auto& c : cases) w = std::max(w, c.metric);
  return w;
}

void print_report(std::ostream& out, const std::string& title, const SuiteReport& report) {
  char buf[512];
  for (const auto& c : report.cases) {
    std::snprintf(buf, sizeof buf, "  %-4s %-28s worst %.3e  %s\n", c.pass ? "ok" : "FAIL", c.name.c_str(), c.metric,
                  c.detail.c_str());
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "%s: %zu cases, %s, %.1fs\n", title.c_str(), report.cases.size(),
                report.pass() ? "all passed" : "FAILURES", report.seconds);
  out << buf;
}

namespace {

using Rng = std::mt19937_64;

double uni(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

Tensor rnd(Shape s, Rng& rng, double lo = -1, double hi = 1, bool grad = true) {
  std::vector<double> v(shape_numel(s));
  for (double& x : v) x = uni(rng, lo, hi);
  return Tensor(std::move(s), std::move(v), grad);
}

// Uniform in [-hi, -lo] U [lo, hi].
Tensor rnd_away(Shape s, Rng& rng, double lo, double hi) {
  std::vector<double> v(shape_numel(s));
  for (double& x : v) x = (rng() & 1 ? 1 : -1) * uni(rng, lo, hi);
  return Tensor(std::move(s), std::move(v), true);
}

// Scalar probe of a tensor-valued function: sum(op() * R), R fixed.
std::function<Tensor()> probe(Rng& rng, std::function<Tensor()> op) {
  Shape s;
  {
    NoGradGuard g;
    s = op().shape();
  }
  const Tensor r = rnd(s, rng, -1, 1, false);
  return [op, r] { return sum(mul(op(), r)); };
}

struct Built {
  std::function<Tensor()> f;
  std::vector<Tensor> inputs;
  std::size_t max_entries = 0;  // 0: suite default
};

std::vector<Tensor> params_of(const ParamStore& store) {
  std::vector<Tensor> out;
  for (const auto& p : store.params()) out.push_back(p.tensor);
  return out;
}

ConvSpec random_conv(Rng& rng) {
  ConvSpec s;
  s.in_channels = pick(rng, 1, 3);
  s.out_channels = pick(rng, 1, 3);
  s.kernel_h = pick(rng, 1, 3);
  s.kernel_w = pick(rng, 1, 3);
  s.stride = pick(rng, 1, 2);
  s.dilation = pick(rng, 1, 2);
  s.pad_h = pick(rng, 0, 2);
  s.pad_w = pick(rng, 0, 2);
  return s;
}

struct GradCase {
  const char* name;
  std::function<Built(Rng&)> build;
};

std::vector<GradCase> grad_cases() {
  std::vector<GradCase> c;
  auto unary = [](const char* name, std::function<Tensor(const Tensor&)> op, std::function<Tensor(Rng&)> make) {
    return GradCase{name, [op, make](Rng& rng) {
                      Tensor x = make(rng);
                      return Built{probe(rng, [op, x] { return op(x); }), {x}};
                    }};
  };
  auto plain = [](Rng& rng) { return rnd({2, 3, 4}, rng); };
  auto away = [](Rng& rng) { return rnd_away({2, 3, 4}, rng, 0.1, 1.0); };

  c.push_back({"add", [](Rng& rng) {
                 Tensor a = rnd({3, 4}, rng), b = rnd({3, 4}, rng);
                 return Built{probe(rng, [a, b] { return add(a, b); }), {a, b}};
               }});
  c.push_back({"sub", [](Rng& rng) {
                 Tensor a = rnd({3, 4}, rng), b = rnd({3, 4}, rng);
                 return Built{probe(rng, [a, b] { return sub(a, b); }), {a, b}};
               }});
  c.push_back({"mul", [](Rng& rng) {
                 Tensor a = rnd({3, 4}, rng), b = rnd({3, 4}, rng);
                 return Built{probe(rng, [a, b] { return mul(a, b); }), {a, b}};
               }});
  c.push_back(unary("scale", [](const Tensor& x) { return scale(x, -1.7); }, plain));
  c.push_back(unary("add_scalar", [](const Tensor& x) { return add_scalar(x, 0.3); }, plain));
  c.push_back(unary("exp", [](const Tensor& x) { return exp(x); }, plain));
  c.push_back(unary("log", [](const Tensor& x) { return log(x); }, [](Rng& rng) { return rnd({2, 3, 4}, rng, 0.2, 2.0); }));
  c.push_back(unary("sigmoid", [](const Tensor& x) { return sigmoid(x); }, [](Rng& rng) { return rnd({2, 3, 4}, rng, -4, 4); }));
  c.push_back(unary("abs", [](const Tensor& x) { return abs(x); }, away));
  c.push_back(unary("leaky_relu", [](const Tensor& x) { return leaky_relu(x, {0.25}); }, away));
  c.push_back({"prelu", [](Rng& rng) {
                 Tensor x = rnd_away({2, 3, 2, 2}, rng, 0.1, 1.0), a = rnd({3}, rng, 0.05, 0.5);
                 return Built{probe(rng, [x, a] { return prelu(x, a); }), {x, a}};
               }});
  c.push_back(unary("signed_sqrt", [](const Tensor& x) { return signed_sqrt(x); },
                    [](Rng& rng) { return rnd_away({2, 3, 4}, rng, 0.2, 2.0); }));
  c.push_back(unary("sum", [](const Tensor& x) { return sum(x); }, plain));
  c.push_back(unary("mean", [](const Tensor& x) { return mean(x); }, plain));
  c.push_back(unary("reshape", [](const Tensor& x) { return reshape(x, {4, 6}); }, plain));
  c.push_back(unary("transpose_last2", [](const Tensor& x) { return transpose_last2(x); }, plain));
  c.push_back({"concat", [](Rng& rng) {
                 Tensor a = rnd({2, 1, 3}, rng), b = rnd({2, 2, 3}, rng), d = rnd({2, 3, 3}, rng);
                 return Built{probe(rng, [a, b, d] { return concat({a, b, d}, 1); }), {a, b, d}};
               }});
  c.push_back({"slice", [](Rng& rng) {
                 Tensor x = rnd({3, 5, 4}, rng);
                 const std::size_t axis = pick(rng, 0, 2), n = x.dim(axis);
                 const std::size_t start = pick(rng, 0, n - 1), len = pick(rng, 1, n - start);
                 return Built{probe(rng, [x, axis, start, len] { return slice(x, axis, start, len); }), {x}};
               }});
  c.push_back({"index_select", [](Rng& rng) {
                 Tensor x = rnd({3, 5, 2}, rng);
                 std::vector<std::size_t> idx;
                 for (int i = 0; i < 7; ++i) idx.push_back(pick(rng, 0, 4));  // repeats allowed
                 return Built{probe(rng, [x, idx] { return index_select(x, 1, idx); }), {x}};
               }});
  c.push_back({"conv2d", [](Rng& rng) {
                 ConvSpec s = random_conv(rng);
                 const std::size_t eh = s.dilation * (s.kernel_h - 1) + 1, ew = s.dilation * (s.kernel_w - 1) + 1;
                 Tensor x = rnd({2, s.in_channels, eh + pick(rng, 0, 4), ew + pick(rng, 0, 4)}, rng);
                 Tensor w = rnd({s.out_channels, s.in_channels, s.kernel_h, s.kernel_w}, rng);
                 Tensor b = rnd({s.out_channels}, rng);
                 return Built{probe(rng, [x, w, b, s] { return conv2d(x, w, b, s); }), {x, w, b}};
               }});
  c.push_back({"matmul_batched", [](Rng& rng) {
                 const std::size_t B = pick(rng, 1, 3), M = pick(rng, 1, 4), K = pick(rng, 1, 4), N = pick(rng, 1, 4);
                 Tensor a = rnd({B, M, K}, rng), b = rnd({B, K, N}, rng);
                 return Built{probe(rng, [a, b] { return matmul_batched(a, b); }), {a, b}};
               }});
  c.push_back({"linear", [](Rng& rng) {
                 Tensor x = rnd({3, 5}, rng), w = rnd({4, 5}, rng), b = rnd({4}, rng);
                 return Built{probe(rng, [x, w, b] { return linear(x, w, b); }), {x, w, b}};
               }});
  c.push_back({"softmax", [](Rng& rng) {
                 Tensor x = rnd({2, 3, 4}, rng, -2, 2);
                 const std::size_t axis = pick(rng, 0, 2);
                 return Built{probe(rng, [x, axis] { return softmax(x, axis); }), {x}};
               }});
  c.push_back(unary("l2_normalize_rows", [](const Tensor& x) { return l2_normalize_rows(x); },
                    [](Rng& rng) { return rnd({3, 5}, rng); }));
  c.push_back({"batch_norm.train", [](Rng& rng) {
                 Tensor x = rnd({2, 3, 3, 3}, rng, -2, 2), g = rnd({3}, rng, 0.5, 1.5), b = rnd({3}, rng);
                 Tensor rm = Tensor::zeros({3}), rv = Tensor::full({3}, 1.0);
                 return Built{probe(rng, [x, g, b, rm, rv]() mutable {
                               return batch_norm(x, g, b, rm, rv, {true, 0.1, 1e-5});
                             }),
                              {x, g, b}};
               }});
  c.push_back({"batch_norm.eval", [](Rng& rng) {
                 Tensor x = rnd({2, 3, 3, 3}, rng, -2, 2), g = rnd({3}, rng, 0.5, 1.5), b = rnd({3}, rng);
                 Tensor rm = rnd({3}, rng, -1, 1, false), rv = rnd({3}, rng, 0.5, 2, false);
                 return Built{probe(rng, [x, g, b, rm, rv]() mutable {
                               return batch_norm(x, g, b, rm, rv, {false, 0.1, 1e-5});
                             }),
                              {x, g, b}};
               }});
  c.push_back({"max_pool2d", [](Rng& rng) {
                 const std::size_t win = pick(rng, 2, 3), st = pick(rng, 1, 2), pad = pick(rng, 0, win / 2);
                 Tensor x = rnd({2, 2, win + pick(rng, 0, 4), win + pick(rng, 0, 4)}, rng);
                 return Built{probe(rng, [x, win, st, pad] { return max_pool2d(x, win, st, pad); }), {x}};
               }});
  c.push_back({"avg_pool2d", [](Rng& rng) {
                 const std::size_t win = pick(rng, 2, 3), st = pick(rng, 1, 2), pad = pick(rng, 0, win / 2);
                 Tensor x = rnd({2, 2, win + pick(rng, 0, 4), win + pick(rng, 0, 4)}, rng);
                 return Built{probe(rng, [x, win, st, pad] { return avg_pool2d(x, win, st, pad); }), {x}};
               }});
  c.push_back({"upsample.nearest", [](Rng& rng) {
                 Tensor x = rnd({1, 2, 3, 2}, rng);
                 const std::size_t f = pick(rng, 2, 3);
                 return Built{probe(rng, [x, f] { return upsample(x, f, UpsampleMode::kNearest); }), {x}};
               }});
  c.push_back({"upsample.bilinear", [](Rng& rng) {
                 Tensor x = rnd({1, 2, 3, 2}, rng);
                 const std::size_t f = pick(rng, 2, 3);
                 return Built{probe(rng, [x, f] { return upsample(x, f, UpsampleMode::kBilinear); }), {x}};
               }});
  c.push_back({"binary_cross_entropy", [](Rng& rng) {
                 Tensor p = rnd({1, 1, 3, 4}, rng, 0.05, 0.95), t = rnd({1, 1, 3, 4}, rng, 0, 1, false);
                 return Built{[p, t] { return binary_cross_entropy(p, t, 1e-7); }, {p}};
               }});
  c.push_back({"dw_corr", [](Rng& rng) {
                 const std::size_t ht = pick(rng, 1, 3), wt = pick(rng, 1, 3);
                 Tensor s = rnd({2, 3, ht + pick(rng, 0, 3), wt + pick(rng, 0, 3)}, rng), t = rnd({2, 3, ht, wt}, rng);
                 return Built{probe(rng, [s, t] { return siamese::dw_corr(s, t); }), {s, t}};
               }});
  c.push_back({"weighted_fuse", [](Rng& rng) {
                 std::array<siamese::HeadOutputs, 3> outs;
                 std::vector<Tensor> inputs;
                 for (auto& o : outs) {
                   o.cls = rnd({1, 4, 2, 2}, rng);
                   o.reg = rnd({1, 8, 2, 2}, rng);
                   inputs.push_back(o.cls);
                   inputs.push_back(o.reg);
                 }
                 Tensor lc = rnd({3}, rng), lr = rnd({3}, rng);
                 inputs.push_back(lc);
                 inputs.push_back(lr);
                 auto f = probe(rng, [outs, lc, lr] {
                   const auto h = siamese::weighted_fuse(outs, softmax(lc, 0), softmax(lr, 0));
                   return concat({reshape(h.cls, {16}), reshape(h.reg, {32})}, 0);
                 });
                 return Built{f, inputs};
               }});
  c.push_back({"rpn_head", [](Rng& rng) {
                 ParamStore store;
                 Initializer init(rng());
                 auto head = siamese::HeadParams::create(store, "head", 4, 5, init, {0.25});
                 Tensor corr = rnd({1, 4, 3, 3}, rng);
                 auto f = probe(rng, [corr, head] {
                   const auto h = siamese::rpn_head(corr, head);
                   return concat({reshape(h.cls, {90}), reshape(h.reg, {180})}, 0);
                 });
                 auto inputs = params_of(store);
                 inputs.push_back(corr);
                 return Built{f, inputs, 8};
               }});
  c.push_back({"fgpcb", [](Rng& rng) {
                 ParamStore store;
                 Initializer init(rng());
                 fgpcb::FgpcbConfig cfg;
                 cfg.in_channels = 4;
                 cfg.branch_width = 2;
                 cfg.out_channels = 4;
                 auto params = fgpcb::FgpcbParams::create(store, "fgpcb.", cfg, init);
                 Tensor x = rnd({2, 4, 4, 4}, rng);
                 auto f = probe(rng, [x, params]() mutable {
                   const auto o = fgpcb::forward(x, params, true);
                   return concat({reshape(o.x, {32}), reshape(o.y, {32}), reshape(o.z, {32})}, 0);
                 });
                 auto inputs = params_of(store);
                 inputs.push_back(x);
                 return Built{f, inputs, 6};
               }});
  c.push_back({"bilinear_fusion", [](Rng& rng) {
                 ParamStore store;
                 Initializer init(rng());
                 auto params = fusion::FusionParams::create(store, "fusion.", 3, 3, init);
                 // Positive maps keep every bilinear entry away from the signed-root kink.
                 Tensor x = rnd({2, 3, 2, 2}, rng, 0.2, 1), y = rnd({2, 3, 2, 2}, rng, 0.2, 1), z = rnd({2, 3, 2, 2}, rng, 0.2, 1);
                 auto f = probe(rng, [x, y, z, params] {
                   const auto o = fusion::fuse_classify(fusion::FlattenedFeature::from_map(x), fusion::FlattenedFeature::from_map(y),
                                                        fusion::FlattenedFeature::from_map(z), params);
                   return concat({reshape(o.o_bp, {18}), reshape(o.o_fused, {6})}, 0);
                 });
                 auto inputs = params_of(store);
                 for (const Tensor& t : {x, y, z}) inputs.push_back(t);
                 return Built{f, inputs};
               }});
  c.push_back({"srrb_chain", [](Rng& rng) {
                 ParamStore store;
                 Initializer init(rng());
                 saliency::SaliencyConfig cfg;
                 cfg.level_channels = {2, 3, 4, 4, 4};
                 cfg.channels = 2;
                 cfg.phi_hidden = 3;
                 cfg.steps = 2;
                 auto params = saliency::SaliencyParams::create(store, "srrb.", cfg, init);
                 std::vector<Tensor> raw{rnd({1, 2, 8, 8}, rng), rnd({1, 3, 4, 4}, rng), rnd({1, 4, 2, 2}, rng),
                                         rnd({1, 4, 2, 2}, rng), rnd({1, 4, 2, 2}, rng)};
                 auto f = probe(rng, [raw, params] {
                   const auto feats = saliency::build_integrated(raw, params.integrate);
                   const auto s0 = saliency::predict_s0(feats.f_high, params.s0_head);
                   const auto r = saliency::refine(s0, feats, params.cfg.steps, params.blocks);
                   return concat({s0.prob, r.maps[0].prob, r.maps[1].prob}, 1);
                 });
                 auto inputs = params_of(store);
                 for (const Tensor& t : raw) inputs.push_back(t);
                 return Built{f, inputs, 6};
               }});
  c.push_back({"cls_loss", [](Rng& rng) {
                 Tensor p = rnd({12}, rng, 0.05, 0.95);
                 std::vector<double> labels(12);
                 for (double& u : labels) u = static_cast<double>(rng() & 1);
                 return Built{[p, labels] { return losses::cls_loss(p, labels); }, {p}};
               }});
  c.push_back({"reg_loss", [](Rng& rng) {
                 const std::size_t M = 6;
                 Tensor d = rnd({M, 4}, rng, -0.3, 0.3);
                 std::vector<BBox> anchors, gts;
                 std::vector<double> labels;
                 for (std::size_t j = 0; j < M; ++j) {
                   anchors.push_back({uni(rng, 20, 40), uni(rng, 20, 40), uni(rng, 8, 24), uni(rng, 8, 24)});
                   const BBox& a = anchors.back();
                   gts.push_back({a.cx + uni(rng, -4, 4), a.cy + uni(rng, -4, 4), a.w * uni(rng, 0.7, 1.4), a.h * uni(rng, 0.7, 1.4)});
                   labels.push_back(j < 2 ? 1.0 : static_cast<double>(rng() & 1));
                 }
                 losses::LossWeights w;
                 w.lambda_iou = uni(rng, 0.5, 2);
                 w.lambda_l1 = uni(rng, 0.5, 2);
                 return Built{[d, anchors, gts, labels, w] { return losses::reg_loss(d, anchors, gts, labels, w); }, {d}};
               }});
  c.push_back({"sal_loss", [](Rng& rng) {
                 std::vector<Tensor> maps;
                 for (int i = 0; i < 3; ++i) maps.push_back(rnd({1, 1, 4, 4}, rng, 0.05, 0.95));
                 Tensor gt = rnd({1, 1, 4, 4}, rng, 0, 1, false);
                 std::vector<double> w{uni(rng, 0.5, 2), uni(rng, 0.5, 2), uni(rng, 0.5, 2)};
                 return Built{[maps, gt, w] { return losses::sal_loss(maps, gt, w).value; }, maps};
               }});
  c.push_back({"total_loss", [](Rng& rng) {
                 Tensor a = rnd({1}, rng, 0.1, 2), b = rnd({1}, rng, 0.1, 2), s = rnd({1}, rng, 0.1, 2);
                 losses::LossWeights w;
                 w.lambda_cls = uni(rng, 0, 2);
                 w.lambda_reg = uni(rng, 0, 2);
                 w.lambda_sal = uni(rng, 0.1, 2);
                 return Built{[a, b, s, w] { return losses::total_loss(a, b, {s, {s.item()}}, w).value; }, {a, b, s}};
               }});
  c.push_back({"pipeline.total", [](Rng& rng) {
                 ModelConfig mc;
                 mc.backbone.widths = {4, 4, 4, 4, 4};
                 mc.backbone.reduced_channels = 4;
                 mc.backbone.fgpcb_branch_width = 2;
                 mc.saliency.channels = 2;
                 mc.saliency.phi_hidden = 3;
                 mc.template_size = 16;
                 mc.search_size = 32;
                 auto model = std::make_shared<Model>(Model::create(mc, rng()));
                 train::Pair pair;
                 pair.z = rnd({1, 1, 16, 16}, rng, 0, 1, false);
                 pair.x = rnd({1, 1, 32, 32}, rng, 0, 1, false);
                 pair.gt = {uni(rng, 12, 20), uni(rng, 12, 20), uni(rng, 10, 20), uni(rng, 10, 20)};
                 const auto sample = train::sample_anchors(model->anchors, pair.gt, train::TrainConfig{}, rng());
                 losses::LossWeights w;
                 auto f = [model, pair, sample, w] { return train::pair_loss(*model, pair, sample, w, true).total.value; };
                 return Built{f, params_of(model->store), 2};
               }});
  return c;
}

}  // namespace

SuiteReport gradcheck_suite(std::size_t seeds, const GradCheckOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteReport report;
  for (const GradCase& gc : grad_cases()) {
    CaseResult cr;
    cr.name = gc.name;
    std::size_t checked = 0, kinks = 0;
    for (std::size_t seed = 0; seed < seeds; ++seed) {
      Rng rng(0x9e3779b97f4a7c15ULL * (seed + 1) ^ std::hash<std::string>{}(gc.name));
      const Built b = gc.build(rng);
      GradCheckOptions o = opts;
      if (b.max_entries) o.max_entries = std::min(o.max_entries, b.max_entries);
      const auto r = gradcheck(b.f, b.inputs, o, rng);
      checked += r.checked;
      kinks += r.kinks;
      if (r.max_rel_error >= cr.metric) {
        cr.metric = r.max_rel_error;
        if (!r.worst.empty()) cr.detail = "seed " + std::to_string(seed) + " " + r.worst;
      }
      if (!r.pass) cr.pass = false;
    }
    cr.detail = std::to_string(seeds) + " seeds, " + std::to_string(checked) + " entries, " + std::to_string(kinks) +
                " on kinks" + (cr.pass ? "" : "; " + cr.detail);
    report.cases.push_back(cr);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

namespace {

double max_abs_diff(std::span<const double> a, const std::vector<double>& b) {
  if (a.size() != b.size()) return HUGE_VAL;
  double m = 0;
  for (std::size_t i = 0; i < b.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

struct OracleCase {
  const char* name;
  double tol;
  std::function<double(Rng&)> run;  // returns the discrepancy of one instance
};

std::vector<OracleCase> oracle_cases() {
  std::vector<OracleCase> c;
  c.push_back({"conv2d", 1e-12, [](Rng& rng) {
                 ConvSpec s = random_conv(rng);
                 s.stride = pick(rng, 1, 3);
                 const std::size_t eh = s.dilation * (s.kernel_h - 1) + 1, ew = s.dilation * (s.kernel_w - 1) + 1;
                 const std::size_t B = pick(rng, 1, 2), H = eh + pick(rng, 0, 6), W = ew + pick(rng, 0, 6);
                 const Tensor x = rnd({B, s.in_channels, H, W}, rng, -1, 1, false);
                 const Tensor w = rnd({s.out_channels, s.in_channels, s.kernel_h, s.kernel_w}, rng, -1, 1, false);
                 const Tensor b = rnd({s.out_channels}, rng, -1, 1, false);
                 return max_abs_diff(conv2d(x, w, b, s).values(), oracle::conv2d(vals(x), B, H, W, vals(w), vals(b), s));
               }});
  c.push_back({"max_pool2d", 1e-12, [](Rng& rng) {
                 const std::size_t win = pick(rng, 1, 3), st = pick(rng, 1, 3), pad = pick(rng, 0, win / 2);
                 const std::size_t B = pick(rng, 1, 2), C = pick(rng, 1, 3), H = win + pick(rng, 0, 6), W = win + pick(rng, 0, 6);
                 const Tensor x = rnd({B, C, H, W}, rng, -1, 1, false);
                 return max_abs_diff(max_pool2d(x, win, st, pad).values(), oracle::max_pool2d(vals(x), B, C, H, W, win, st, pad));
               }});
  c.push_back({"matmul_batched", 1e-12, [](Rng& rng) {
                 const std::size_t B = pick(rng, 1, 3), M = pick(rng, 1, 6), K = pick(rng, 1, 6), N = pick(rng, 1, 6);
                 const Tensor a = rnd({B, M, K}, rng, -1, 1, false), b = rnd({B, K, N}, rng, -1, 1, false);
                 return max_abs_diff(matmul_batched(a, b).values(), oracle::matmul(vals(a), vals(b), B, M, K, N));
               }});
  c.push_back({"bilinear_pair", 1e-12, [](Rng& rng) {
                 const std::size_t B = pick(rng, 1, 3), C = pick(rng, 1, 5), H = pick(rng, 1, 4), W = pick(rng, 1, 4);
                 const Tensor x = rnd({B, C, H, W}, rng, -1, 1, false), y = rnd({B, C, H, W}, rng, -1, 1, false);
                 const auto got = fusion::bilinear_pair(fusion::FlattenedFeature::from_map(x), fusion::FlattenedFeature::from_map(y));
                 return max_abs_diff(got.values(), oracle::bilinear_pair(vals(x), vals(y), B, C, H * W));
               }});
  c.push_back({"dw_corr", 1e-12, [](Rng& rng) {
                 const std::size_t B = pick(rng, 1, 2), C = pick(rng, 1, 4), Ht = pick(rng, 1, 4), Wt = pick(rng, 1, 4);
                 const std::size_t Hs = Ht + pick(rng, 0, 5), Ws = Wt + pick(rng, 0, 5);
                 const Tensor s = rnd({B, C, Hs, Ws}, rng, -1, 1, false), t = rnd({B, C, Ht, Wt}, rng, -1, 1, false);
                 return max_abs_diff(siamese::dw_corr(s, t).values(), oracle::dw_corr(vals(s), vals(t), B, C, Hs, Ws, Ht, Wt));
               }});
  c.push_back({"weighted_fuse", 1e-12, [](Rng& rng) {
                 const std::size_t A = pick(rng, 1, 5), h = pick(rng, 1, 5), w = pick(rng, 1, 5);
                 std::array<siamese::HeadOutputs, 3> outs;
                 std::array<std::vector<double>, 3> cls, reg;
                 for (std::size_t k = 0; k < 3; ++k) {
                   outs[k].cls = rnd({1, 2 * A, h, w}, rng, -1, 1, false);
                   outs[k].reg = rnd({1, 4 * A, h, w}, rng, -1, 1, false);
                   cls[k] = vals(outs[k].cls);
                   reg[k] = vals(outs[k].reg);
                 }
                 const Tensor wc = rnd({3}, rng, 0, 1, false), wr = rnd({3}, rng, 0, 1, false);
                 const auto got = siamese::weighted_fuse(outs, wc, wr);
                 const std::array<double, 3> ac{wc.values()[0], wc.values()[1], wc.values()[2]};
                 const std::array<double, 3> ar{wr.values()[0], wr.values()[1], wr.values()[2]};
                 return std::max(max_abs_diff(got.cls.values(), oracle::weighted_fuse(cls, ac)),
                                 max_abs_diff(got.reg.values(), oracle::weighted_fuse(reg, ar)));
               }});
  c.push_back({"decode_and_select", 1e-12, [](Rng& rng) {
                 siamese::AnchorConfig ac;
                 ac.ratios.clear();
                 const std::size_t A = pick(rng, 1, 5);
                 for (std::size_t a = 0; a < A; ++a) ac.ratios.push_back(uni(rng, 0.3, 3));
                 ac.base_size = uni(rng, 8, 24);
                 const std::size_t rows = pick(rng, 1, 6), cols = pick(rng, 1, 6);
                 const auto grid = siamese::AnchorGrid::generate(ac, rows, cols, 64);
                 siamese::HeadOutputs h;
                 h.cls = rnd({1, 2 * A, rows, cols}, rng, -3, 3, false);
                 h.reg = rnd({1, 4 * A, rows, cols}, rng, -0.5, 0.5, false);
                 siamese::SelectConfig cfg;
                 cfg.penalty_k = uni(rng, 0, 0.2);
                 cfg.window_influence = uni(rng, 0, 0.6);
                 const BBox prev{32, 32, uni(rng, 8, 24), uni(rng, 8, 24)};
                 const auto got = siamese::decode_and_select(h, grid, prev, cfg);
                 const auto want = oracle::select(vals(h.cls), vals(h.reg), grid.anchors, rows, cols, A, prev, cfg, 64);
                 if (got.index != want.index) return HUGE_VAL;
                 return std::max({std::fabs(got.box.cx - want.box.cx), std::fabs(got.box.cy - want.box.cy),
                                  std::fabs(got.box.w - want.box.w), std::fabs(got.box.h - want.box.h),
                                  std::fabs(got.pscore - want.pscore)});
               }});
  c.push_back({"normalized_fusion", 1e-10, [](Rng& rng) {
                 ParamStore store;
                 Initializer init(rng());
                 const std::size_t B = pick(rng, 1, 3), C = pick(rng, 1, 4), K = pick(rng, 2, 4), H = pick(rng, 1, 3), W = pick(rng, 1, 3);
                 auto params = fusion::FusionParams::create(store, "fusion.", C, K, init);
                 const Tensor x = rnd({B, C, H, W}, rng, -1, 1, false), y = rnd({B, C, H, W}, rng, -1, 1, false),
                              z = rnd({B, C, H, W}, rng, -1, 1, false);
                 const auto got = fusion::fuse_classify(fusion::FlattenedFeature::from_map(x), fusion::FlattenedFeature::from_map(y),
                                                        fusion::FlattenedFeature::from_map(z), params);
                 const auto want = oracle::fusion(vals(x), vals(y), vals(z), B, C, H * W, vals(params.fc.weight),
                                                  vals(params.fc.bias), K);
                 return std::max(max_abs_diff(got.o_bp.values(), want.o_bp), max_abs_diff(got.o_fused.values(), want.o_fused));
               }});
  return c;
}

}  // namespace

SuiteReport oracle_suite(std::size_t instances) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteReport report;
  NoGradGuard guard;
  for (const OracleCase& oc : oracle_cases()) {
    CaseResult cr;
    cr.name = oc.name;
    std::size_t failures = 0;
    for (std::size_t i = 0; i < instances; ++i) {
      Rng rng(1000003ULL * (i + 1) ^ std::hash<std::string>{}(oc.name));
      const double d = oc.run(rng);
      cr.metric = std::max(cr.metric, d);
      if (!(d <= oc.tol)) ++failures;
    }
    cr.pass = failures == 0;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%zu instances, tol %.0e, %zu over", instances, oc.tol, failures);
    cr.detail = buf;
    report.cases.push_back(cr);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace fgsgt::verify
