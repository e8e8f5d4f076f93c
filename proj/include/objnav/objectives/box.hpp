#pragma once

#include <algorithm>
#include <cmath>

namespace objnav::objectives {

// Axis-aligned box in corner form, x1 <= x2 and y1 <= y2.
template <class Scalar>
struct Box {
  Scalar x1{};
  Scalar y1{};
  Scalar x2{};
  Scalar y2{};

  friend bool operator==(const Box&, const Box&) = default;
};

template <class Scalar>
Scalar box_area(const Box<Scalar>& b) {
  return (b.x2 - b.x1) * (b.y2 - b.y1);
}

template <class Scalar>
Scalar intersection_area(const Box<Scalar>& a, const Box<Scalar>& b) {
  const Scalar w = std::max(Scalar(0), std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const Scalar h = std::max(Scalar(0), std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  return w * h;
}

// Area of the smallest axis-aligned box containing both.
template <class Scalar>
Scalar enclosing_area(const Box<Scalar>& a, const Box<Scalar>& b) {
  return (std::max(a.x2, b.x2) - std::min(a.x1, b.x1)) * (std::max(a.y2, b.y2) - std::min(a.y1, b.y1));
}

// Intersection over union; 0 when the union is empty.
template <class Scalar>
Scalar iou(const Box<Scalar>& a, const Box<Scalar>& b) {
  const Scalar inter = intersection_area(a, b);
  const Scalar uni = box_area(a) + box_area(b) - inter;
  return uni > Scalar(0) ? inter / uni : Scalar(0);
}

// Generalized IoU: IoU - (hull - union) / hull, in (-1, 1].
// Degenerate conventions: coincident zero-area boxes give 1; with an empty
// union the IoU term is 0, and an empty hull contributes no penalty.
template <class Scalar>
Scalar giou(const Box<Scalar>& a, const Box<Scalar>& b) {
  const Scalar inter = intersection_area(a, b);
  const Scalar uni = box_area(a) + box_area(b) - inter;
  if (uni <= Scalar(0) && a == b) return Scalar(1);
  const Scalar hull = enclosing_area(a, b);
  const Scalar overlap = uni > Scalar(0) ? inter / uni : Scalar(0);
  const Scalar penalty = hull > Scalar(0) ? std::max(Scalar(0), (hull - uni) / hull) : Scalar(0);
  return overlap - penalty;
}

// Sum of absolute coordinate differences.
template <class Scalar>
Scalar l1_box(const Box<Scalar>& a, const Box<Scalar>& b) {
  using std::abs;
  return abs(a.x1 - b.x1) + abs(a.y1 - b.y1) + abs(a.x2 - b.x2) + abs(a.y2 - b.y2);
}

}  // namespace objnav::objectives
