#pragma once

#include <cstddef>
#include <vector>

#include "fgsgt/io.hpp"
#include "fgsgt/model.hpp"

namespace fgsgt::track {

/// Single-owner state advanced one frame at a time.
struct TrackState {
  BBox box;  // image pixels
  std::size_t frame = 0;
  TemplateEmbedding templ;
};

struct FrameResult {
  BBox box;
  double score = 0;
  Tensor saliency;  // final refined map on the search crop, (1, 1, h, w)
};

class Tracker {
 public:
  Tracker(Model& model, siamese::SelectConfig select) : model_(model), select_(select) {}

  void init(const io::GrayImage& frame, const BBox& box);
  FrameResult update(const io::GrayImage& frame);
  const TrackState& state() const { return state_; }

 private:
  Model& model_;
  siamese::SelectConfig select_;
  TrackState state_;
};

}  // namespace fgsgt::track
