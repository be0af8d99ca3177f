#include "mplab/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace mplab::geom {

bool is_valid(const BBox& b) {
  return std::isfinite(b.x) && std::isfinite(b.y) && std::isfinite(b.w) &&
         std::isfinite(b.h) && b.w >= 0.0 && b.h >= 0.0;
}

double center_distance(const BBox& a, const BBox& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

double iou(const BBox& a, const BBox& b) {
  const double area_a = a.w * a.h;
  const double area_b = b.w * b.h;
  if (area_a <= 0.0 || area_b <= 0.0) return 0.0;
  const double ix = std::min(a.x + a.w / 2, b.x + b.w / 2) -
                    std::max(a.x - a.w / 2, b.x - b.w / 2);
  const double iy = std::min(a.y + a.h / 2, b.y + b.h / 2) -
                    std::max(a.y - a.h / 2, b.y - b.h / 2);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  return inter / (area_a + area_b - inter);
}

double wrap_angle(double a) {
  a = std::fmod(a, 2.0 * M_PI);
  if (a > M_PI) a -= 2.0 * M_PI;
  if (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

void apply_point(const Egomotion& e, double px, double py, double& ox, double& oy) {
  const double dx = px - e.tx;
  const double dy = py - e.ty;
  const double c = std::cos(e.theta);
  const double s = std::sin(e.theta);
  ox = e.scale * (c * dx - s * dy);
  oy = e.scale * (s * dx + c * dy);
}

BBox apply_egomotion(const Egomotion& e, const BBox& b) {
  BBox out;
  apply_point(e, b.x, b.y, out.x, out.y);
  out.w = e.scale * b.w;
  out.h = e.scale * b.h;
  return out;
}

Egomotion compose(const Egomotion& e1, const Egomotion& e2) {
  // e2(e1(p)) = s1*s2 * R(t1+t2) * (p - (t1 + R(-theta1)*t2/s1))
  const double c = std::cos(e1.theta);
  const double s = std::sin(e1.theta);
  Egomotion out;
  out.tx = e1.tx + (c * e2.tx + s * e2.ty) / e1.scale;
  out.ty = e1.ty + (-s * e2.tx + c * e2.ty) / e1.scale;
  out.theta = wrap_angle(e1.theta + e2.theta);
  out.scale = e1.scale * e2.scale;
  return out;
}

Egomotion invert(const Egomotion& e) {
  const double c = std::cos(e.theta);
  const double s = std::sin(e.theta);
  Egomotion out;
  out.scale = 1.0 / e.scale;
  out.theta = wrap_angle(-e.theta);
  out.tx = -e.scale * (c * e.tx - s * e.ty);
  out.ty = -e.scale * (s * e.tx + c * e.ty);
  return out;
}

namespace {

void clamp_axis(double center, double extent, double limit, double& out_center,
                double& out_extent) {
  double lo = center - extent / 2;
  double hi = center + extent / 2;
  if (lo >= limit) {
    out_center = limit;
    out_extent = 0.0;
    return;
  }
  if (hi <= 0.0) {
    out_center = 0.0;
    out_extent = 0.0;
    return;
  }
  lo = std::max(lo, 0.0);
  hi = std::min(hi, limit);
  out_center = (lo + hi) / 2;
  out_extent = hi - lo;
}

}  // namespace

BBox clamp_to_frame(const BBox& b, double frame_w, double frame_h) {
  BBox out;
  clamp_axis(b.x, b.w, frame_w, out.x, out.w);
  clamp_axis(b.y, b.h, frame_h, out.y, out.h);
  return out;
}

double visible_fraction(const BBox& b, double frame_w, double frame_h) {
  const double area = b.w * b.h;
  if (area <= 0.0) {
    const bool inside = b.x >= 0.0 && b.x <= frame_w && b.y >= 0.0 && b.y <= frame_h;
    return inside ? 1.0 : 0.0;
  }
  const double ix = std::min(b.x + b.w / 2, frame_w) - std::max(b.x - b.w / 2, 0.0);
  const double iy = std::min(b.y + b.h / 2, frame_h) - std::max(b.y - b.h / 2, 0.0);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  return (ix * iy) / area;
}

}  // namespace mplab::geom
