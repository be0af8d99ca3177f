#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "mplab/grid.hpp"
#include "mplab/rng.hpp"
#include "mplab/tensor.hpp"

using namespace mplab;
using world::CellLabel;
using world::SemanticGrid;

TEST_CASE("semantic grid stores and returns labels") {
  SemanticGrid g(4, 3, CellLabel::kRoad);
  CHECK(g.width == 4);
  CHECK(g.height == 3);
  CHECK(g.at(0, 0) == CellLabel::kRoad);
  g.set(2, 1, CellLabel::kBuilding);
  CHECK(g.at(2, 1) == CellLabel::kBuilding);
  CHECK(g.in_bounds(3, 2));
  CHECK_FALSE(g.in_bounds(4, 0));
  CHECK_FALSE(g.in_bounds(0, -1));
}

// Majority vote per block; the 2x2 block with three road cells stays road.
TEST_CASE("downsample_majority picks the dominant label") {
  SemanticGrid g(4, 4, CellLabel::kRoad);
  g.set(0, 0, CellLabel::kSidewalk);
  const SemanticGrid d = world::downsample_majority(g, 2);
  CHECK(d.width == 2);
  CHECK(d.height == 2);
  CHECK(d.at(0, 0) == CellLabel::kRoad);
  CHECK(d.at(1, 1) == CellLabel::kRoad);
}

// Two-versus-two tie resolves to the lower label id.
TEST_CASE("downsample_majority breaks ties toward the lower id") {
  SemanticGrid g(2, 2, CellLabel::kBuilding);
  g.set(0, 0, CellLabel::kSidewalk);
  g.set(1, 0, CellLabel::kSidewalk);
  const SemanticGrid d = world::downsample_majority(g, 2);
  CHECK(d.at(0, 0) == CellLabel::kSidewalk);
}

TEST_CASE("append_one_hot writes plane-major indicators") {
  SemanticGrid g(2, 1, CellLabel::kRoad);
  g.set(1, 0, CellLabel::kCrossing);
  std::vector<double> out;
  world::append_one_hot(g, 6, out);
  REQUIRE(out.size() == 12);
  // Road plane marks cell 0, crossing plane marks cell 1.
  CHECK(out[0] == 1.0);
  CHECK(out[1] == 0.0);
  CHECK(out[4] == 0.0);
  CHECK(out[5] == 1.0);
  double total = 0;
  for (double v : out) total += v;
  CHECK(total == doctest::Approx(2.0));
}

TEST_CASE("label_name covers every label") {
  for (int i = 0; i < world::kLabelCount; ++i)
    CHECK(world::label_name(static_cast<CellLabel>(i)) != nullptr);
}

TEST_CASE("splitmix streams are deterministic per seed") {
  rng::SplitMix64 a(42), b(42), c(43);
  for (int i = 0; i < 32; ++i) {
    const std::uint64_t va = a.next_u64();
    CHECK(va == b.next_u64());
  }
  bool differs = false;
  rng::SplitMix64 a2(42);
  for (int i = 0; i < 32; ++i) differs |= a2.next_u64() != c.next_u64();
  CHECK(differs);
}

TEST_CASE("uniform01 stays in the half-open unit interval") {
  rng::SplitMix64 gen(7);
  for (int i = 0; i < 10000; ++i) {
    const double u = gen.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("uniform_int covers its inclusive range") {
  rng::SplitMix64 gen(8);
  std::vector<int> seen(5, 0);
  for (int i = 0; i < 5000; ++i) {
    const int v = gen.uniform_int(0, 4);
    REQUIRE(v >= 0);
    REQUIRE(v <= 4);
    ++seen[static_cast<std::size_t>(v)];
  }
  for (int count : seen) CHECK(count > 0);
  CHECK_THROWS_AS(gen.uniform_int(3, 2), std::invalid_argument);
}

// Sample moments of the Box-Muller normal match the standard normal.
TEST_CASE("normal draws have near-standard moments") {
  rng::SplitMix64 gen(9);
  const int n = 20000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    const double v = gen.normal();
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("categorical respects the weights") {
  rng::SplitMix64 gen(10);
  const std::vector<double> probs{0.2, 0.8};
  int ones = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i)
    if (gen.categorical(probs) == 1) ++ones;
  // 3 sigma of Binomial(10000, 0.8) is about 120.
  CHECK(std::abs(ones - 8000) < 150);
}

TEST_CASE("mix produces distinct stream keys") {
  CHECK(rng::mix(1, 2) != rng::mix(2, 1));
  CHECK(rng::mix(1, 2) != rng::mix(1, 3));
  CHECK(rng::mix(1, 2, 3) != rng::mix(1, 2, 4));
  CHECK(rng::mix(5, 6) == rng::mix(5, 6));
}

TEST_CASE("tensor shape must match the value count") {
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), std::invalid_argument);
  const Tensor t = Tensor::zeros({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.at(1, 2) == 0.0);
}
