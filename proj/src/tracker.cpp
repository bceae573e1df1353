#include "fgsgt/tracker.hpp"

#include <algorithm>
#include <stdexcept>

#include "fgsgt/trainer.hpp"

namespace fgsgt::track {

void Tracker::init(const io::GrayImage& frame, const BBox& box) {
  if (!box.valid()) throw std::invalid_argument("tracker: initial box must have positive extents");
  NoGradGuard guard;
  const double s_z = train::context_size(box);
  const std::size_t tz = model_.cfg.template_size;
  state_.box = box;
  state_.frame = 0;
  state_.templ = model_.embed_template(image_tensor(io::crop_resize(frame, box.cx, box.cy, s_z, tz), tz), false);
}

FrameResult Tracker::update(const io::GrayImage& frame) {
  NoGradGuard guard;
  const BBox prev = state_.box;
  const std::size_t sx_px = model_.cfg.search_size;
  const double s_x = train::context_size(prev) * static_cast<double>(sx_px) / static_cast<double>(model_.cfg.template_size);
  const double scale = static_cast<double>(sx_px) / s_x;
  const Tensor x = image_tensor(io::crop_resize(frame, prev.cx, prev.cy, s_x, sx_px), sx_px);
  const SearchOutput out = model_.forward_search(state_.templ, x, false);

  const double half = static_cast<double>(sx_px) / 2;
  const BBox prev_crop{half, half, prev.w * scale, prev.h * scale};
  const auto sel = siamese::decode_and_select(out.fused, model_.anchors, prev_crop, select_);

  // Back to image pixels; the size moves toward the proposal at rate lr.
  BBox next;
  next.cx = prev.cx + (sel.box.cx - half) / scale;
  next.cy = prev.cy + (sel.box.cy - half) / scale;
  next.w = prev.w * (1 - sel.lr) + (sel.box.w / scale) * sel.lr;
  next.h = prev.h * (1 - sel.lr) + (sel.box.h / scale) * sel.lr;
  next = siamese::clamp_to_frame(next, static_cast<double>(frame.width), static_cast<double>(frame.height),
                                 select_.min_size);
  state_.box = next;
  ++state_.frame;
  return {next, sel.score, out.refined.final_or(out.s0).prob};
}

}  // namespace fgsgt::track
