#ifndef CYCCONF_BOX_HPP_
#define CYCCONF_BOX_HPP_

#include <algorithm>

namespace cycconf {

// Axis-aligned box in pixel coordinates, x2 > x1 and y2 > y1 when valid.
struct BBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double score = 0.0;
  int category = -1;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  bool valid() const { return x2 > x1 && y2 > y1; }
};

inline double box_intersection(const BBox& a, const BBox& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (w <= 0 || h <= 0) return 0.0;
  return w * h;
}

inline double box_iou(const BBox& a, const BBox& b) {
  const double inter = box_intersection(a, b);
  if (inter <= 0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

inline BBox clip_box(const BBox& b, double w, double h) {
  BBox out = b;
  out.x1 = std::clamp(b.x1, 0.0, w);
  out.y1 = std::clamp(b.y1, 0.0, h);
  out.x2 = std::clamp(b.x2, 0.0, w);
  out.y2 = std::clamp(b.y2, 0.0, h);
  return out;
}

}  // namespace cycconf

#endif  // CYCCONF_BOX_HPP_
