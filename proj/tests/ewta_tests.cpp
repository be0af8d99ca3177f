#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "mplab/ewta.hpp"
#include "mplab/rng.hpp"

using namespace mplab;
using geom::BBox;
using ewta::HypothesisSet;

namespace {

HypothesisSet random_hyps(rng::SplitMix64& gen, int n) {
  HypothesisSet h;
  for (int i = 0; i < n; ++i)
    h.boxes.push_back({gen.uniform(0.0, 64.0), gen.uniform(0.0, 64.0),
                       gen.uniform(1.0, 8.0), gen.uniform(1.0, 8.0)});
  return h;
}

}  // namespace

// Distances to gt are 9 and 1; the closest hypothesis wins.
TEST_CASE("ewta_loss keeps only the closest hypothesis at k=1") {
  const HypothesisSet h{{{0, 0, 1, 1}, {10, 0, 1, 1}}};
  const ewta::EwtaResult r = ewta::ewta_loss(h, {9, 0, 1, 1}, 1);
  CHECK(r.loss == doctest::Approx(1.0));
  CHECK(r.winners == std::vector<int>{1});
}

TEST_CASE("ewta_loss averages over the k closest at k=2") {
  const HypothesisSet h{{{0, 0, 1, 1}, {10, 0, 1, 1}}};
  const ewta::EwtaResult r = ewta::ewta_loss(h, {9, 0, 1, 1}, 2);
  CHECK(r.loss == doctest::Approx(5.0));
  CHECK(r.winners == std::vector<int>{0, 1});
}

TEST_CASE("an exact hypothesis match gives zero loss") {
  const HypothesisSet h{{{3, 3, 2, 2}, {7, 7, 2, 2}, {1, 1, 1, 1}}};
  const ewta::EwtaResult r = ewta::ewta_loss(h, {7, 7, 2, 2}, 1);
  CHECK(r.loss == doctest::Approx(0.0));
  CHECK(r.winners == std::vector<int>{1});
}

// Equidistant hypotheses resolve to the lower index.
TEST_CASE("ewta_loss breaks distance ties by index") {
  const HypothesisSet h{{{2, 0, 1, 1}, {-2, 0, 1, 1}}};
  const ewta::EwtaResult r = ewta::ewta_loss(h, {0, 0, 1, 1}, 1);
  CHECK(r.winners == std::vector<int>{0});
}

TEST_CASE("permuting hypotheses permutes winners and keeps the loss") {
  rng::SplitMix64 gen(71);
  const HypothesisSet h = random_hyps(gen, 8);
  const BBox gt{30, 30, 4, 4};
  const ewta::EwtaResult base = ewta::ewta_loss(h, gt, 3);

  HypothesisSet rev;
  rev.boxes.assign(h.boxes.rbegin(), h.boxes.rend());
  const ewta::EwtaResult flipped = ewta::ewta_loss(rev, gt, 3);
  CHECK(flipped.loss == doctest::Approx(base.loss));
  std::vector<int> mapped;
  for (int w : base.winners) mapped.push_back(7 - w);
  std::sort(mapped.begin(), mapped.end());
  CHECK(flipped.winners == mapped);
}

// Dropping far hypotheses can only shrink the mean winner distance.
TEST_CASE("loss at k=1 never exceeds loss at k=n") {
  rng::SplitMix64 gen(72);
  for (int trial = 0; trial < 50; ++trial) {
    const HypothesisSet h = random_hyps(gen, 10);
    const BBox gt{gen.uniform(0.0, 64.0), gen.uniform(0.0, 64.0), 3, 3};
    CHECK(ewta::ewta_loss(h, gt, 1).loss <=
          ewta::ewta_loss(h, gt, 10).loss + 1e-12);
  }
}

// Perturbing a losing hypothesis leaves the loss untouched; the analytic
// gradient for it must also be zero.
TEST_CASE("non-winners get no gradient") {
  rng::SplitMix64 gen(73);
  const HypothesisSet h = random_hyps(gen, 6);
  const BBox gt{32, 32, 4, 4};
  const ewta::EwtaResult r = ewta::ewta_loss(h, gt, 2);

  std::vector<std::array<double, 4>> grad(6, {0, 0, 0, 0});
  ewta::ewta_loss_grad(h, gt, 2, grad);
  for (int i = 0; i < 6; ++i) {
    const bool winner =
        std::find(r.winners.begin(), r.winners.end(), i) != r.winners.end();
    double mag = 0;
    for (double g : grad[static_cast<std::size_t>(i)]) mag += std::abs(g);
    if (winner)
      CHECK(mag > 0.0);
    else
      CHECK(mag == 0.0);
  }

  HypothesisSet moved = h;
  const int loser = [&] {
    for (int i = 0; i < 6; ++i)
      if (std::find(r.winners.begin(), r.winners.end(), i) == r.winners.end())
        return i;
    return -1;
  }();
  REQUIRE(loser >= 0);
  moved.boxes[static_cast<std::size_t>(loser)].x += 0.5;
  CHECK(ewta::ewta_loss(moved, gt, 2).loss == doctest::Approx(r.loss));
}

// Analytic winner gradients against central differences on the loss.
TEST_CASE("ewta gradient matches finite differences") {
  rng::SplitMix64 gen(74);
  HypothesisSet h = random_hyps(gen, 5);
  const BBox gt{20, 24, 3, 3};
  std::vector<std::array<double, 4>> grad(5, {0, 0, 0, 0});
  ewta::ewta_loss_grad(h, gt, 2, grad);

  const double eps = 1e-6;
  for (int i = 0; i < 5; ++i)
    for (int d = 0; d < 4; ++d) {
      auto nudge = [&](double delta) {
        HypothesisSet n = h;
        double* f = &n.boxes[static_cast<std::size_t>(i)].x;
        f[d] += delta;
        return ewta::ewta_loss(n, gt, 2).loss;
      };
      const double fd = (nudge(eps) - nudge(-eps)) / (2 * eps);
      CHECK(fd == doctest::Approx(grad[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)])
                      .epsilon(1e-5));
    }
}

TEST_CASE("stage_for_step follows the fixed budget schedule") {
  const ewta::Schedule s{{20, 10, 5, 2, 1}, 100};
  CHECK(ewta::stage_for_step(s, 0) == 20);
  CHECK(ewta::stage_for_step(s, 99) == 20);
  CHECK(ewta::stage_for_step(s, 100) == 10);
  CHECK(ewta::stage_for_step(s, 250) == 5);
  CHECK(ewta::stage_for_step(s, 499) == 1);
  // The final stage persists past the total budget.
  CHECK(ewta::stage_for_step(s, ewta::total_steps(s) + 1000) == 1);
  CHECK(ewta::total_steps(s) == 500);
}

TEST_CASE("make_halving_schedule halves down to one") {
  const ewta::Schedule s = ewta::make_halving_schedule(20, 50);
  CHECK(s.stages == std::vector<int>{20, 10, 5, 2, 1});
  CHECK(s.steps_per_stage == 50);
  const ewta::Schedule odd = ewta::make_halving_schedule(7, 10);
  CHECK(odd.stages == std::vector<int>{7, 3, 1});
}

TEST_CASE("schedule validation rejects malformed stage lists") {
  CHECK_NOTHROW(ewta::validate({{20, 10, 5, 2, 1}, 100}, 20));
  CHECK_THROWS_AS(ewta::validate({{20, 10, 5, 2, 1}, 0}, 20), std::invalid_argument);
  CHECK_THROWS_AS(ewta::validate({{10, 5, 1}, 100}, 20), std::invalid_argument);
  CHECK_THROWS_AS(ewta::validate({{20, 10, 2}, 100}, 20), std::invalid_argument);
  CHECK_THROWS_AS(ewta::validate({{20, 20, 1}, 100}, 20), std::invalid_argument);
}

TEST_CASE("multi_target_loss reduces to ewta_loss on a single target") {
  rng::SplitMix64 gen(75);
  const HypothesisSet h = random_hyps(gen, 6);
  const BBox gt{10, 12, 2, 2};
  CHECK(ewta::multi_target_loss(h, {gt}, 1) ==
        doctest::Approx(ewta::ewta_loss(h, gt, 1).loss));
}

TEST_CASE("multi_target_loss is zero when every target has an exact hypothesis") {
  const HypothesisSet h{{{5, 5, 2, 2}, {40, 40, 3, 3}}};
  const std::vector<BBox> gts{{40, 40, 3, 3}, {5, 5, 2, 2}};
  CHECK(ewta::multi_target_loss(h, gts, 1) == doctest::Approx(0.0));
}

// With all hypotheses on one target, the other contributes its full
// distance, so the mean is half the separation.
TEST_CASE("multi_target_loss splits distance across missed targets") {
  HypothesisSet h;
  for (int i = 0; i < 20; ++i) h.boxes.push_back({10, 10, 2, 2});
  const std::vector<BBox> gts{{10, 10, 2, 2}, {10, 34, 2, 2}};
  CHECK(ewta::multi_target_loss(h, gts, 1) == doctest::Approx(12.0));
}

TEST_CASE("multi_target_loss rejects an empty target list") {
  const HypothesisSet h{{{0, 0, 1, 1}}};
  CHECK_THROWS_AS(ewta::multi_target_loss(h, {}, 1), std::invalid_argument);
}

TEST_CASE("head_to_hypotheses produces positive extents") {
  rng::SplitMix64 gen(76);
  std::vector<double> raw(4 * 7);
  for (auto& v : raw) v = gen.uniform(-30.0, 30.0);
  const HypothesisSet h = ewta::head_to_hypotheses(raw, 7, 64, 64);
  REQUIRE(h.n() == 7);
  for (const auto& b : h.boxes) {
    CHECK(b.w > 0.0);
    CHECK(b.h > 0.0);
    CHECK(std::isfinite(b.x));
    CHECK(std::isfinite(b.y));
  }
}

// A zero head sits every hypothesis at the frame center.
TEST_CASE("zero head centers its hypotheses") {
  const std::vector<double> raw(8, 0.0);
  const HypothesisSet h = ewta::head_to_hypotheses(raw, 2, 64, 48);
  for (const auto& b : h.boxes) {
    CHECK(b.x == doctest::Approx(32.0));
    CHECK(b.y == doctest::Approx(24.0));
  }
}

// Chain rule through the head transform against central differences of
// loss(head_to_hypotheses(raw)).
TEST_CASE("head_grad_to_raw matches finite differences") {
  rng::SplitMix64 gen(77);
  std::vector<double> raw(4 * 4);
  for (auto& v : raw) v = gen.uniform(-2.0, 2.0);
  const BBox gt{30, 26, 4, 4};

  auto loss_of = [&](const std::vector<double>& r) {
    return ewta::ewta_loss(ewta::head_to_hypotheses(r, 4, 64, 64), gt, 2).loss;
  };

  const HypothesisSet h = ewta::head_to_hypotheses(raw, 4, 64, 64);
  std::vector<std::array<double, 4>> grad_boxes(4, {0, 0, 0, 0});
  ewta::ewta_loss_grad(h, gt, 2, grad_boxes);
  std::vector<double> grad_raw(raw.size());
  ewta::head_grad_to_raw(raw, 4, 64, 64, grad_boxes, grad_raw);

  const double eps = 1e-6;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    std::vector<double> up = raw, down = raw;
    up[i] += eps;
    down[i] -= eps;
    const double fd = (loss_of(up) - loss_of(down)) / (2 * eps);
    const double scale = std::max({std::abs(fd), std::abs(grad_raw[i]), 1e-7});
    CHECK(std::abs(fd - grad_raw[i]) / scale < 1e-4);
  }
}

TEST_CASE("append_normalized_boxes centers on the frame and scales extents") {
  std::vector<double> out;
  const std::vector<BBox> boxes{{32, 24, 8, 8}};
  ewta::append_normalized_boxes(boxes, 64, 48, out);
  REQUIRE(out.size() == 4);
  CHECK(out[0] == doctest::Approx(0.0));
  CHECK(out[1] == doctest::Approx(0.0));
  CHECK(out[2] == doctest::Approx(1.0));
  CHECK(out[3] == doctest::Approx(8.0 / 6.0));
}
