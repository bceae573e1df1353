#include "fgsgt/model.hpp"

#include <stdexcept>
#include <string>

namespace fgsgt {

void ModelConfig::sync() {
  saliency.level_channels = backbone.widths;
  saliency.act = backbone.act;
}

void ModelConfig::validate() const {
  backbone.validate();
  const std::size_t stride = backbone.total_stride();
  if (anchors.stride != stride) {
    throw std::invalid_argument("model: anchor stride " + std::to_string(anchors.stride) +
                                " differs from the backbone stride " + std::to_string(stride));
  }
  if (template_size % stride != 0 || search_size % stride != 0) {
    throw std::invalid_argument("model: crop sizes must be multiples of " + std::to_string(stride));
  }
  if (template_size >= search_size) throw std::invalid_argument("model: template crop must be smaller than search crop");
  if (anchors.ratios.empty()) throw std::invalid_argument("model: at least one anchor ratio is required");
  if (saliency.level_channels != backbone.widths) {
    throw std::invalid_argument("model: saliency level widths do not match the backbone");
  }
}

std::size_t ModelConfig::response_size() const {
  const std::size_t stride = backbone.total_stride();
  return search_size / stride - template_size / stride + 1;
}

Model Model::create(const ModelConfig& cfg_in, std::uint64_t seed) {
  ModelConfig cfg = cfg_in;
  cfg.sync();
  cfg.validate();
  Model m;
  m.cfg = cfg;
  Initializer init(seed);
  m.backbone = siamese::BackboneParams::create(m.store, cfg.backbone, init);
  for (std::size_t k = 0; k < 3; ++k) {
    m.heads[k] = siamese::HeadParams::create(m.store, "head" + std::to_string(k + 3), cfg.backbone.reduced_channels,
                                             cfg.anchors.count(), init, cfg.backbone.act);
  }
  // Zero logits start the weighted fusion as a plain average.
  m.cls_mix = m.store.add_param("fuse.cls_logits", Tensor::zeros({3}));
  m.reg_mix = m.store.add_param("fuse.reg_logits", Tensor::zeros({3}));
  m.saliency = saliency::SaliencyParams::create(m.store, "srrb.", cfg.saliency, init);
  const std::size_t r = cfg.response_size();
  m.anchors = siamese::AnchorGrid::generate(cfg.anchors, r, r, static_cast<double>(cfg.search_size));
  return m;
}

TemplateEmbedding Model::embed_template(const Tensor& z, bool training) {
  const auto out = siamese::backbone_forward(z, backbone, training);
  return {{out.f3, out.f4, out.f5}};
}

SearchOutput Model::forward_search(const TemplateEmbedding& t, const Tensor& x, bool training) {
  const auto feats = siamese::backbone_forward(x, backbone, training);
  SearchOutput out;
  const std::array<Tensor, 3> levels{feats.f3, feats.f4, feats.f5};
  for (std::size_t k = 0; k < 3; ++k) {
    out.branches[k] = siamese::rpn_head(siamese::dw_corr(levels[k], t.feats[k]), heads[k]);
  }
  out.fused = siamese::weighted_fuse(out.branches, softmax(cls_mix, 0), softmax(reg_mix, 0));
  const auto integrated = saliency::build_integrated(feats.raw, saliency.integrate);
  out.s0 = saliency::predict_s0(integrated.f_high, saliency.s0_head);
  out.refined = saliency::refine(out.s0, integrated, saliency.cfg.steps, saliency.blocks);
  out.aux = siamese::fusion_head(feats, backbone);
  return out;
}

Tensor image_tensor(const std::vector<double>& pixels, std::size_t size) {
  if (pixels.size() != size * size) throw std::invalid_argument("image_tensor: pixel count does not match crop size");
  std::vector<double> v(pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = pixels[i] / 255.0;
  return Tensor({1, 1, size, size}, std::move(v));
}

}  // namespace fgsgt
