#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace accnn {

/// Axis-aligned box in image pixels, center-size form (c_x, c_y, w, h).
struct BBox {
  double cx = 0, cy = 0, w = 0, h = 0;

  double x1() const { return cx - w / 2; }
  double y1() const { return cy - h / 2; }
  double x2() const { return cx + w / 2; }
  double y2() const { return cy + h / 2; }
  double area() const { return w * h; }

  static BBox from_corners(double x1, double y1, double x2, double y2) {
    return {(x1 + x2) / 2, (y1 + y2) / 2, x2 - x1, y2 - y1};
  }

  std::array<double, 4> corners() const { return {x1(), y1(), x2(), y2()}; }

  bool valid() const { return w > 0 && h > 0; }

  bool intersects_image(double img_w, double img_h) const {
    return x2() > 0 && y2() > 0 && x1() < img_w && y1() < img_h;
  }
};

/// Intersection over union; 0 for disjoint or degenerate boxes.
inline double iou(const BBox& a, const BBox& b) {
  const double ix1 = std::max(a.x1(), b.x1());
  const double iy1 = std::max(a.y1(), b.y1());
  const double ix2 = std::min(a.x2(), b.x2());
  const double iy2 = std::min(a.y2(), b.y2());
  const double iw = ix2 - ix1, ih = iy2 - iy1;
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

/// Clips a box to [0, img_w] x [0, img_h]; throws if nothing remains.
inline BBox clip_to_image(const BBox& box, double img_w, double img_h) {
  const double x1 = std::max(0.0, box.x1());
  const double y1 = std::max(0.0, box.y1());
  const double x2 = std::min(img_w, box.x2());
  const double y2 = std::min(img_h, box.y2());
  if (x2 <= x1 || y2 <= y1) {
    throw std::invalid_argument("clip_to_image: box lies fully outside the image");
  }
  return BBox::from_corners(x1, y1, x2, y2);
}

/// Horizontal mirror about the vertical image midline.
inline BBox flip_horizontal(const BBox& box, double img_w) {
  return {img_w - box.cx, box.cy, box.w, box.h};
}

}  // namespace accnn
