#include "fgsgt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

#include "fgsgt/checkpoint.hpp"
#include "fgsgt/io.hpp"

namespace fgsgt::train {

namespace {

constexpr const char* kMomentumPrefix = "optim.momentum.";
constexpr const char* kStepName = "optim.step";

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

std::string describe(const losses::LossBreakdown& b) {
  std::ostringstream os;
  os.precision(17);
  os << "l_cls=" << b.l_cls << " l_reg=" << b.l_reg << " l_sal=" << b.l_sal;
  for (std::size_t i = 0; i < b.steps.size(); ++i) os << " y_" << i << "=" << b.steps[i];
  os << " total=" << b.total;
  return os.str();
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr >= 0) || !std::isfinite(lr)) throw std::invalid_argument("train: lr must be a finite non-negative number");
  if (!(momentum >= 0 && momentum < 1)) throw std::invalid_argument("train: momentum must lie in [0, 1)");
  if (!(neg_iou <= pos_iou)) throw std::invalid_argument("train: neg_iou must not exceed pos_iou");
  if (cls_samples == 0 || cls_max_pos == 0 || cls_max_pos > cls_samples) {
    throw std::invalid_argument("train: need 0 < cls_max_pos <= cls_samples");
  }
  if (pairs == 0 || sequences == 0 || frames < 2) throw std::invalid_argument("train: empty training set");
  if (log_every == 0) throw std::invalid_argument("train: log_every must be positive");
  if (jitter < 0 || noise_sigma < 0 || max_speed < 0) throw std::invalid_argument("train: negative jitter, noise or speed");
}

double context_size(const BBox& box) {
  const double p = (box.w + box.h) / 2;
  return std::sqrt((box.w + p) * (box.h + p));
}

Pair make_pair(const synth::Sequence& seq, std::size_t t_frame, std::size_t s_frame, double dx, double dy,
               const ModelConfig& model) {
  const BBox& bt = seq.boxes.at(t_frame);
  const BBox& bs = seq.boxes.at(s_frame);
  const double s_z = context_size(bt);
  const double s_x = s_z * static_cast<double>(model.search_size) / static_cast<double>(model.template_size);
  const double scale = static_cast<double>(model.search_size) / s_x;
  Pair p;
  p.z = image_tensor(io::crop_resize(seq.frames[t_frame], bt.cx, bt.cy, s_z, model.template_size), model.template_size);
  p.x = image_tensor(io::crop_resize(seq.frames[s_frame], bs.cx + dx / scale, bs.cy + dy / scale, s_x, model.search_size),
                     model.search_size);
  const double half = static_cast<double>(model.search_size) / 2;
  p.gt = {half - dx, half - dy, bs.w * scale, bs.h * scale};
  return p;
}

std::vector<Pair> build_pairs(const TrainConfig& cfg, const synth::SceneSpec& scene, const ModelConfig& model,
                              std::uint64_t seed) {
  cfg.validate();
  std::vector<synth::Sequence> seqs;
  synth::SceneSpec base = scene;
  base.frames = cfg.frames;
  base.distractors = cfg.distractors;
  base.noise_sigma = cfg.noise_sigma;
  for (std::size_t s = 0; s < cfg.sequences; ++s) {
    auto rng = stream(seed, 1, s);
    seqs.push_back(synth::render(synth::random_scene(base, rng(), cfg.max_speed)));
  }
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < cfg.pairs; ++i) {
    auto rng = stream(seed, 2, i);
    std::uniform_real_distribution<double> jit(-cfg.jitter, cfg.jitter);
    const std::size_t s = i % cfg.sequences;
    const std::size_t gap = std::min<std::size_t>(rng() % (cfg.max_gap + 1), cfg.frames - 1);
    const std::size_t t = rng() % (cfg.frames - gap);
    const double dx = jit(rng), dy = jit(rng);
    pairs.push_back(make_pair(seqs[s], t, t + gap, dx, dy, model));
  }
  return pairs;
}

Sample sample_anchors(const siamese::AnchorGrid& anchors, const BBox& gt, const TrainConfig& cfg, std::uint64_t seed) {
  if (anchors.size() == 0) throw std::invalid_argument("sample_anchors: empty anchor set");
  std::vector<double> ious(anchors.size());
  std::size_t best = 0;
  for (std::size_t j = 0; j < anchors.size(); ++j) {
    ious[j] = iou(anchors.anchors[j], gt);
    if (ious[j] > ious[best]) best = j;
  }
  std::vector<std::size_t> pos{best}, neg;
  for (std::size_t j = 0; j < anchors.size(); ++j) {
    if (j == best) continue;
    if (ious[j] >= cfg.pos_iou) pos.push_back(j);
    else if (ious[j] < cfg.neg_iou) neg.push_back(j);
  }
  std::mt19937_64 rng(seed);
  // The best anchor stays first; the rest are shuffled.
  std::shuffle(pos.begin() + 1, pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  Sample s;
  const std::size_t n_pos = std::min(pos.size(), cfg.cls_max_pos);
  const std::size_t n_neg = std::min(neg.size(), cfg.cls_samples - n_pos);
  for (std::size_t i = 0; i < n_pos; ++i) {
    s.indices.push_back(pos[i]);
    s.labels.push_back(1.0);
  }
  for (std::size_t i = 0; i < n_neg; ++i) {
    s.indices.push_back(neg[i]);
    s.labels.push_back(0.0);
  }
  return s;
}

PairLoss pair_loss(Model& model, const Pair& pair, const Sample& sample, const losses::LossWeights& weights,
                   bool training) {
  PairLoss r;
  const TemplateEmbedding emb = model.embed_template(pair.z, training);
  r.out = model.forward_search(emb, pair.x, training);
  const std::size_t A = model.anchors.per_cell, N = model.anchors.size();

  const Tensor probs = siamese::anchor_scores(r.out.fused.cls, A);
  const Tensor picked = reshape(index_select(probs, 1, sample.indices), {sample.indices.size()});
  const Tensor l_cls = losses::cls_loss(picked, sample.labels);

  const Tensor deltas = reshape(siamese::anchor_deltas(r.out.fused.reg, A), {N, 4});
  std::vector<BBox> anchors, gts;
  for (std::size_t j : sample.indices) {
    anchors.push_back(model.anchors.anchors[j]);
    gts.push_back(pair.gt);
  }
  const Tensor l_reg = losses::reg_loss(index_select(deltas, 0, sample.indices), anchors, gts, sample.labels, weights);

  const std::size_t gh = r.out.s0.prob.dim(2), gw = r.out.s0.prob.dim(3);
  r.sal_gt = saliency::box_saliency_target(gh, gw, static_cast<double>(model.cfg.search_size) / static_cast<double>(gh),
                                           pair.gt);
  std::vector<Tensor> maps{r.out.s0.prob};
  for (const auto& m : r.out.refined.maps) maps.push_back(m.prob);
  const auto l_sal = losses::sal_loss(maps, r.sal_gt, weights.step_weights);
  r.total = losses::total_loss(l_cls, l_reg, l_sal, weights);
  return r;
}

Trainer::Trainer(Model& model, TrainConfig cfg, losses::LossWeights weights, std::uint64_t seed)
    : model_(model), cfg_(std::move(cfg)), weights_(std::move(weights)), seed_(seed) {
  cfg_.validate();
  weights_.validate();
  if (weights_.step_weights.size() != model_.cfg.saliency.steps + 1) {
    throw std::invalid_argument("train: " + std::to_string(weights_.step_weights.size()) +
                                " saliency step weights for " + std::to_string(model_.cfg.saliency.steps) +
                                " refinement steps");
  }
  for (const auto& p : model_.store.params()) velocity_.push_back(Tensor::zeros(p.tensor.shape()));
}

StepRecord Trainer::step(const std::vector<Pair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("train: no pairs");
  const std::size_t k = step_ + 1;
  auto rng = stream(seed_, 3, k);
  const Pair& pair = pairs[rng() % pairs.size()];
  const Sample sample = sample_anchors(model_.anchors, pair.gt, cfg_, rng());

  model_.store.zero_grad();
  const PairLoss pl = pair_loss(model_, pair, sample, weights_, true);
  const auto& b = pl.total.breakdown;
  bool finite = std::isfinite(b.total) && std::isfinite(b.l_cls) && std::isfinite(b.l_reg) && std::isfinite(b.l_sal);
  for (double y : b.steps) finite = finite && std::isfinite(y);
  if (!finite) throw NonFiniteLoss("non-finite loss at step " + std::to_string(k) + ": " + describe(b));
  pl.total.value.backward();

  const auto& params = model_.store.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor param = params[i].tensor;
    auto p = param.values_mut();
    const auto g = params[i].tensor.grad();
    auto v = velocity_[i].values_mut();
    for (std::size_t e = 0; e < p.size(); ++e) {
      v[e] = cfg_.momentum * v[e] + g[e];
      p[e] -= cfg_.lr * v[e];
    }
  }
  step_ = k;
  return {k, b};
}

std::vector<NamedTensor> Trainer::state() const {
  std::vector<NamedTensor> out = model_.store.all();
  const auto& params = model_.store.params();
  for (std::size_t i = 0; i < params.size(); ++i) out.push_back({kMomentumPrefix + params[i].name, velocity_[i]});
  out.push_back({kStepName, Tensor({1}, {static_cast<double>(step_)})});
  return out;
}

void Trainer::save(const std::filesystem::path& path) const { checkpoint::save(path, state()); }

void Trainer::load(const std::filesystem::path& path) {
  const auto extras = checkpoint::restore(model_.store, checkpoint::load(path));
  const auto& params = model_.store.params();
  for (auto& v : velocity_) std::fill(v.values_mut().begin(), v.values_mut().end(), 0.0);
  step_ = 0;
  for (const auto& e : extras) {
    if (e.name == kStepName) {
      step_ = static_cast<std::size_t>(e.tensor.item());
      continue;
    }
    if (e.name.rfind(kMomentumPrefix, 0) != 0) {
      throw std::runtime_error("checkpoint entry '" + e.name + "' matches no parameter or optimiser slot");
    }
    const std::string pname = e.name.substr(std::string(kMomentumPrefix).size());
    std::size_t i = 0;
    while (i < params.size() && params[i].name != pname) ++i;
    if (i == params.size() || velocity_[i].shape() != e.tensor.shape()) {
      throw std::runtime_error("checkpoint momentum slot '" + e.name + "' does not match the model");
    }
    std::copy(e.tensor.values().begin(), e.tensor.values().end(), velocity_[i].values_mut().begin());
  }
}

void write_log_header(std::ostream& out, std::size_t saliency_steps) {
  out << "step,l_cls,l_reg,l_sal";
  for (std::size_t i = 0; i <= saliency_steps; ++i) out << ",y_" << i;
  out << ",total\n";
}

void write_log_row(std::ostream& out, const StepRecord& rec) {
  char buf[64];
  out << rec.step;
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, ",%.17g", v);
    out << buf;
  };
  put(rec.loss.l_cls);
  put(rec.loss.l_reg);
  put(rec.loss.l_sal);
  for (double y : rec.loss.steps) put(y);
  put(rec.loss.total);
  out << '\n';
}

}  // namespace fgsgt::train
