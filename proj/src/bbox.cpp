#include "fgsgt/bbox.hpp"

#include <algorithm>
#include <cmath>

namespace fgsgt {

double iou(const BBox& a, const BBox& b) {
  if (!a.valid() || !b.valid()) return 0.0;
  const double iw = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.left(), b.left()));
  const double ih = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top()));
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

std::array<double, 4> encode_deltas(const BBox& box, const BBox& anchor) {
  return {(box.cx - anchor.cx) / anchor.w, (box.cy - anchor.cy) / anchor.h, std::log(box.w / anchor.w),
          std::log(box.h / anchor.h)};
}

BBox decode_deltas(const std::array<double, 4>& d, const BBox& anchor) {
  return {anchor.cx + d[0] * anchor.w, anchor.cy + d[1] * anchor.h, anchor.w * std::exp(d[2]), anchor.h * std::exp(d[3])};
}

}  // namespace fgsgt
