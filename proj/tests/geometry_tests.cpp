#include <doctest.h>

#include <cmath>

#include "mplab/geometry.hpp"
#include "mplab/rng.hpp"

using namespace mplab;
using geom::BBox;
using geom::Egomotion;

namespace {

BBox random_box(rng::SplitMix64& gen) {
  return {gen.uniform(-20.0, 84.0), gen.uniform(-20.0, 84.0),
          gen.uniform(0.0, 12.0), gen.uniform(0.0, 12.0)};
}

Egomotion random_ego(rng::SplitMix64& gen) {
  return {gen.uniform(-8.0, 8.0), gen.uniform(-8.0, 8.0),
          gen.uniform(-3.0, 3.0), gen.uniform(0.5, 2.0)};
}

}  // namespace

// 3-4-5 triangle between centers.
TEST_CASE("center_distance on offset centers") {
  CHECK(geom::center_distance({5, 5, 4, 4}, {8, 9, 4, 4}) == doctest::Approx(5.0));
}

// Extents do not matter, only centers.
TEST_CASE("center_distance ignores extents") {
  CHECK(geom::center_distance({7, 7, 1, 2}, {7, 7, 9, 9}) == doctest::Approx(0.0));
  CHECK(geom::center_distance({0, 0, 1, 1}, {1, 0, 1, 1}) == doctest::Approx(1.0));
}

TEST_CASE("center_distance is symmetric and nonnegative") {
  rng::SplitMix64 gen(11);
  for (int i = 0; i < 200; ++i) {
    const BBox a = random_box(gen);
    const BBox b = random_box(gen);
    const double d = geom::center_distance(a, b);
    CHECK(d == doctest::Approx(geom::center_distance(b, a)));
    CHECK(d >= 0.0);
  }
}

TEST_CASE("iou of identical positive-area boxes is 1") {
  CHECK(geom::iou({5, 5, 4, 4}, {5, 5, 4, 4}) == doctest::Approx(1.0));
}

// Half-width offset: intersection 2x4 = 8, union 32 - 8 = 24.
TEST_CASE("iou of half-overlapping boxes") {
  CHECK(geom::iou({5, 5, 4, 4}, {7, 5, 4, 4}) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("iou of disjoint boxes is 0") {
  CHECK(geom::iou({0, 0, 2, 2}, {10, 10, 2, 2}) == doctest::Approx(0.0));
}

// Zero-area boxes overlap nothing, including themselves.
TEST_CASE("iou with zero-area operands is 0") {
  CHECK(geom::iou({3, 3, 0, 0}, {3, 3, 0, 0}) == 0.0);
  CHECK(geom::iou({3, 3, 0, 4}, {3, 3, 2, 2}) == 0.0);
}

TEST_CASE("iou stays in [0,1] and is symmetric") {
  rng::SplitMix64 gen(12);
  for (int i = 0; i < 200; ++i) {
    const BBox a = random_box(gen);
    const BBox b = random_box(gen);
    const double v = geom::iou(a, b);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v == doctest::Approx(geom::iou(b, a)));
  }
}

TEST_CASE("apply_egomotion identity leaves boxes unchanged") {
  const BBox b{5, 5, 2, 2};
  const BBox out = geom::apply_egomotion({0, 0, 0, 1}, b);
  CHECK(out == b);
}

// Translation moves the center opposite the camera shift.
TEST_CASE("apply_egomotion pure translation") {
  const BBox out = geom::apply_egomotion({1, 0, 0, 1}, {5, 5, 2, 2});
  CHECK(out.x == doctest::Approx(4.0));
  CHECK(out.y == doctest::Approx(5.0));
  CHECK(out.w == doctest::Approx(2.0));
  CHECK(out.h == doctest::Approx(2.0));
}

// Scaling about the origin doubles centers and extents.
TEST_CASE("apply_egomotion pure scaling") {
  const BBox out = geom::apply_egomotion({0, 0, 0, 2}, {3, 4, 2, 2});
  CHECK(out.x == doctest::Approx(6.0));
  CHECK(out.y == doctest::Approx(8.0));
  CHECK(out.w == doctest::Approx(4.0));
  CHECK(out.h == doctest::Approx(4.0));
}

// Applying e1 then e2 equals applying compose(e1, e2) once.
TEST_CASE("egomotion composition matches sequential application") {
  rng::SplitMix64 gen(13);
  for (int i = 0; i < 100; ++i) {
    const Egomotion e1 = random_ego(gen);
    const Egomotion e2 = random_ego(gen);
    const BBox b = random_box(gen);
    const BBox seq = geom::apply_egomotion(e2, geom::apply_egomotion(e1, b));
    const BBox once = geom::apply_egomotion(geom::compose(e1, e2), b);
    CHECK(std::abs(seq.x - once.x) < 1e-9);
    CHECK(std::abs(seq.y - once.y) < 1e-9);
    CHECK(std::abs(seq.w - once.w) < 1e-9);
    CHECK(std::abs(seq.h - once.h) < 1e-9);
  }
}

TEST_CASE("invert undoes an egomotion") {
  rng::SplitMix64 gen(14);
  for (int i = 0; i < 100; ++i) {
    const Egomotion e = random_ego(gen);
    const BBox b = random_box(gen);
    const BBox back = geom::apply_egomotion(geom::invert(e), geom::apply_egomotion(e, b));
    CHECK(std::abs(back.x - b.x) < 1e-9);
    CHECK(std::abs(back.y - b.y) < 1e-9);
    CHECK(std::abs(back.w - b.w) < 1e-9);
    CHECK(std::abs(back.h - b.h) < 1e-9);
  }
}

TEST_CASE("wrap_angle lands in (-pi, pi]") {
  CHECK(geom::wrap_angle(M_PI) == doctest::Approx(M_PI));
  CHECK(geom::wrap_angle(-M_PI) == doctest::Approx(M_PI));
  CHECK(geom::wrap_angle(3 * M_PI) == doctest::Approx(M_PI));
  CHECK(geom::wrap_angle(0.25) == doctest::Approx(0.25));
  CHECK(geom::wrap_angle(2 * M_PI + 0.25) == doctest::Approx(0.25));
}

TEST_CASE("clamp_to_frame keeps interior boxes") {
  const BBox b{5, 5, 2, 2};
  CHECK(geom::clamp_to_frame(b, 64, 64) == b);
}

// A box straddling the left edge loses its out-of-frame half.
TEST_CASE("clamp_to_frame clips a straddling box") {
  const BBox out = geom::clamp_to_frame({-3, 5, 4, 4}, 64, 64);
  CHECK(out.w == doctest::Approx(0.0).epsilon(1e-12));
  const BBox out2 = geom::clamp_to_frame({1, 5, 4, 4}, 64, 64);
  CHECK(out2.x == doctest::Approx(1.5));
  CHECK(out2.w == doctest::Approx(3.0));
  CHECK(out2.h == doctest::Approx(4.0));
}

TEST_CASE("clamp_to_frame pins a fully outside box to the nearest corner") {
  const BBox out = geom::clamp_to_frame({-10, -10, 2, 2}, 64, 64);
  CHECK(out.x == doctest::Approx(0.0));
  CHECK(out.y == doctest::Approx(0.0));
  CHECK(out.w == doctest::Approx(0.0));
  CHECK(out.h == doctest::Approx(0.0));
}

TEST_CASE("clamped boxes always lie inside the frame") {
  rng::SplitMix64 gen(15);
  for (int i = 0; i < 300; ++i) {
    const BBox c = geom::clamp_to_frame(random_box(gen), 64, 48);
    CHECK(c.x - c.w / 2 >= -1e-12);
    CHECK(c.x + c.w / 2 <= 64 + 1e-12);
    CHECK(c.y - c.h / 2 >= -1e-12);
    CHECK(c.y + c.h / 2 <= 48 + 1e-12);
  }
}

TEST_CASE("visible_fraction spans 0 to 1") {
  CHECK(geom::visible_fraction({32, 32, 4, 4}, 64, 64) == doctest::Approx(1.0));
  CHECK(geom::visible_fraction({-30, -30, 4, 4}, 64, 64) == doctest::Approx(0.0));
  // Half the box hangs off the left edge.
  CHECK(geom::visible_fraction({0, 32, 4, 4}, 64, 64) == doctest::Approx(0.5));
}
