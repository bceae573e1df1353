#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "fgsgt/saliency.hpp"
#include "fgsgt/siamese.hpp"

namespace fgsgt {

struct ModelConfig {
  siamese::BackboneConfig backbone;
  saliency::SaliencyConfig saliency;
  siamese::AnchorConfig anchors;
  std::size_t template_size = 32;
  std::size_t search_size = 64;

  /// Copies the backbone widths and activation into the saliency config.
  void sync();
  void validate() const;
  /// Cells per side of the correlation response.
  std::size_t response_size() const;
};

/// Template embedding reused for every search frame of a track.
struct TemplateEmbedding {
  std::array<Tensor, 3> feats;  // reduced Conv3, Conv4, Conv5
};

struct SearchOutput {
  std::array<siamese::HeadOutputs, 3> branches;
  siamese::HeadOutputs fused;
  saliency::SaliencyMap s0;
  saliency::RefineResult refined;
  fusion::FusionOutput aux;  // bilinear fusion head over the search features
};

/// Full tracker network: shared backbone, one RPN head per tapped level,
/// softmax-weighted branch fusion, and the saliency refinement branch on the
/// search image.
struct Model {
  ModelConfig cfg;
  ParamStore store;
  siamese::BackboneParams backbone;
  std::array<siamese::HeadParams, 3> heads;
  Tensor cls_mix, reg_mix;  // fusion-weight logits, one per branch
  saliency::SaliencyParams saliency;
  siamese::AnchorGrid anchors;

  static Model create(const ModelConfig& cfg, std::uint64_t seed);

  TemplateEmbedding embed_template(const Tensor& z, bool training);
  SearchOutput forward_search(const TemplateEmbedding& t, const Tensor& x, bool training);
};

/// Grey levels 0..255 mapped to network input scale.
Tensor image_tensor(const std::vector<double>& pixels, std::size_t size);

}  // namespace fgsgt
