#pragma once

namespace mplab::geom {

// Axis-aligned box, center parameterization. Units are pixels of whatever
// frame the box lives in.
struct BBox {
  double x = 0.0;  // center
  double y = 0.0;  // center
  double w = 0.0;
  double h = 0.0;

  bool operator==(const BBox&) const = default;
};

bool is_valid(const BBox& b);

double center_distance(const BBox& a, const BBox& b);

// Intersection over union. Boxes with zero area never overlap anything,
// including themselves, so the result is 0.
double iou(const BBox& a, const BBox& b);

// Planar similarity transform: p' = scale * R(theta) * (p - t).
// Also serves as the frame-to-frame egomotion relation and as a camera
// pose mapping world coordinates to view coordinates.
struct Egomotion {
  double tx = 0.0;
  double ty = 0.0;
  double theta = 0.0;
  double scale = 1.0;

  bool operator==(const Egomotion&) const = default;
};

// Wraps into (-pi, pi].
double wrap_angle(double a);

void apply_point(const Egomotion& e, double px, double py, double& ox, double& oy);

// Transforms the box center through the similarity and scales its extent.
BBox apply_egomotion(const Egomotion& e, const BBox& b);

// Composition: apply(compose(e1, e2), p) == apply(e2, apply(e1, p)).
Egomotion compose(const Egomotion& e1, const Egomotion& e2);

Egomotion invert(const Egomotion& e);

// Clips the box to [0, w] x [0, h] and re-centers. A box entirely outside
// collapses to a zero-area box pinned to the nearest frame edge.
BBox clamp_to_frame(const BBox& b, double frame_w, double frame_h);

// Fraction of the box area inside [0, w] x [0, h]. Zero-area boxes count
// as fully visible when their center is in frame and invisible otherwise.
double visible_fraction(const BBox& b, double frame_w, double frame_h);

}  // namespace mplab::geom
