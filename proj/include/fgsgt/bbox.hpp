#pragma once

#include <array>

namespace fgsgt {

/// Axis-aligned box in pixels, centre + size.
struct BBox {
  double cx = 0, cy = 0, w = 0, h = 0;

  double left() const { return cx - w / 2; }
  double right() const { return cx + w / 2; }
  double top() const { return cy - h / 2; }
  double bottom() const { return cy + h / 2; }
  double area() const { return w * h; }
  bool valid() const { return w > 0 && h > 0; }

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Intersection over union; 0 when either box has no area.
double iou(const BBox& a, const BBox& b);

/// Regression target of `box` relative to `anchor`:
/// ((cx - ax) / aw, (cy - ay) / ah, ln(w / aw), ln(h / ah)).
std::array<double, 4> encode_deltas(const BBox& box, const BBox& anchor);
BBox decode_deltas(const std::array<double, 4>& deltas, const BBox& anchor);

}  // namespace fgsgt
