#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "mplab/episode_io.hpp"
#include "mplab/geometry.hpp"
#include "mplab/rng.hpp"
#include "mplab/worldsim.hpp"

using namespace mplab;
using geom::BBox;
using world::AgentClass;
using world::CellLabel;
using world::Episode;
using world::SemanticGrid;
using world::WorldConfig;

namespace {

WorldConfig scenario_config(const std::string& name) {
  WorldConfig cfg;
  cfg.scenario = name;
  return cfg;
}

std::string episode_bytes(const Episode& ep) {
  std::ostringstream os;
  io::save_episode(ep, os);
  return os.str();
}

bool visible(const Episode& ep, int agent, int t) {
  return ep.visibility(agent, t) >= ep.cfg.visibility_threshold;
}

// Scenario heroes spawn first, so they always hold agent id 0.
constexpr int kHero = 0;

}  // namespace

TEST_CASE("generate_map is deterministic per seed") {
  const SemanticGrid a = world::generate_map(0, 64, 64);
  const SemanticGrid b = world::generate_map(0, 64, 64);
  CHECK(a == b);
  const SemanticGrid c = world::generate_map(1, 64, 64);
  const SemanticGrid d = world::generate_map(2, 64, 64);
  CHECK_FALSE(c == d);
}

TEST_CASE("generate_map rejects dimensions below 32") {
  CHECK_THROWS_AS(world::generate_map(0, 31, 64), std::invalid_argument);
  CHECK_THROWS_AS(world::generate_map(0, 64, 16), std::invalid_argument);
}

// Every crossing cell touches a road or another crossing cell; zebras
// exist to span roads.
TEST_CASE("crossing cells are 4-adjacent to road cells") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const SemanticGrid g = world::generate_map(seed, 64, 64);
    int crossings = 0;
    for (int y = 0; y < g.height; ++y)
      for (int x = 0; x < g.width; ++x) {
        if (g.at(x, y) != CellLabel::kCrossing) continue;
        ++crossings;
        bool near_road = false;
        const int dx[4] = {1, -1, 0, 0};
        const int dy[4] = {0, 0, 1, -1};
        for (int d = 0; d < 4; ++d) {
          const int nx = x + dx[d], ny = y + dy[d];
          if (g.in_bounds(nx, ny) &&
              (g.at(nx, ny) == CellLabel::kRoad || g.at(nx, ny) == CellLabel::kCrossing))
            near_road = true;
        }
        CHECK(near_road);
      }
    CHECK(crossings > 0);
  }
}

TEST_CASE("map contains core static classes and no agent labels") {
  const SemanticGrid g = world::generate_map(3, 64, 64);
  std::vector<int> counts(world::kLabelCount, 0);
  for (CellLabel c : g.cells) ++counts[static_cast<std::size_t>(c)];
  CHECK(counts[static_cast<int>(CellLabel::kRoad)] > 0);
  CHECK(counts[static_cast<int>(CellLabel::kSidewalk)] > 0);
  CHECK(counts[static_cast<int>(CellLabel::kBuilding)] > 0);
  CHECK(counts[static_cast<int>(CellLabel::kPedestrian)] == 0);
  CHECK(counts[static_cast<int>(CellLabel::kVehicle)] == 0);
}

TEST_CASE("episode generation is a pure function of seed and config") {
  const WorldConfig cfg = scenario_config("default");
  const Episode a = world::generate_episode(7, cfg);
  const Episode b = world::generate_episode(7, cfg);
  CHECK(episode_bytes(a) == episode_bytes(b));
  const Episode c = world::generate_episode(8, cfg);
  CHECK(episode_bytes(a) != episode_bytes(c));
}

TEST_CASE("agents spawn on legal cells for their class") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const WorldConfig cfg = scenario_config("default");
    const world::WorldMap map = world::build_world(seed, cfg);
    const auto agents = world::spawn_agents(map, cfg, rng::mix(seed, 99));
    CHECK(agents.size() ==
          static_cast<std::size_t>(cfg.pedestrians + cfg.vehicles));
    for (const auto& a : agents) {
      const CellLabel cell = map.grid.at(static_cast<int>(std::floor(a.px)),
                                         static_cast<int>(std::floor(a.py)));
      if (a.cls == AgentClass::kPedestrian) {
        const bool legal = cell == CellLabel::kSidewalk || cell == CellLabel::kCrossing;
        CHECK(legal);
      } else {
        const bool legal = cell == CellLabel::kRoad || cell == CellLabel::kCrossing;
        CHECK(legal);
      }
    }
  }
}

TEST_CASE("static frames never contain agent labels") {
  const Episode ep = world::generate_episode(11, scenario_config("default"));
  for (const auto& frame : ep.frames) {
    for (CellLabel c : frame.statics.cells) {
      CHECK(c != CellLabel::kPedestrian);
      CHECK(c != CellLabel::kVehicle);
    }
  }
}

// The straight scenario has no junctions, so no stochastic branching:
// empty decision logs, and pedestrians either stride at full speed or
// reverse in place at a sidewalk end.
TEST_CASE("straight scenario runs without branch decisions") {
  const Episode ep = world::generate_episode(13, scenario_config("straight"));
  int moves = 0;
  for (const auto& frame : ep.frames) CHECK(frame.decisions.empty());
  for (int t = 0; t + 1 < ep.length(); ++t) {
    const auto& a0 = ep.agent_at(kHero, t);
    const auto& a1 = ep.agent_at(kHero, t + 1);
    const double d = std::hypot(a1.px - a0.px, a1.py - a0.py);
    const bool stride = std::abs(d - ep.cfg.ped_speed) < 1e-12;
    const bool reversal = d < 1e-12;
    CHECK((stride || reversal));
    if (stride) ++moves;
  }
  CHECK(moves > ep.length() / 2);
}

// The branching scenario walks its hero into a zebra entry, where the
// cross-or-continue draw is logged with the configured probabilities.
TEST_CASE("branching scenario logs a half-half crossing decision") {
  WorldConfig cfg = scenario_config("branching");
  cfg.p_cross = 0.5;
  const Episode ep = world::generate_episode(17, cfg);
  bool found = false;
  for (const auto& frame : ep.frames)
    for (const auto& d : frame.decisions) {
      if (d.agent != kHero) continue;
      found = true;
      REQUIRE(d.options.size() == 2);
      CHECK(d.options[0].prob == doctest::Approx(0.5));
      CHECK(d.options[1].prob == doctest::Approx(0.5));
    }
  CHECK(found);
}

TEST_CASE("branch decision probabilities always sum to one") {
  for (std::uint64_t seed = 20; seed < 26; ++seed) {
    const Episode ep = world::generate_episode(seed, scenario_config("default"));
    for (const auto& frame : ep.frames)
      for (const auto& d : frame.decisions) {
        double total = 0;
        bool chosen_listed = false;
        for (const auto& opt : d.options) {
          total += opt.prob;
          CHECK(opt.prob >= 0.0);
          chosen_listed = chosen_listed || opt.id == d.chosen_id;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(chosen_listed);
      }
  }
}

TEST_CASE("enumerate_future without branches returns one certain outcome") {
  const Episode ep = world::generate_episode(13, scenario_config("straight"));
  int t0 = -1;
  for (int t = 0; t + 5 < ep.length(); ++t)
    if (visible(ep, kHero, t)) {
      t0 = t;
      break;
    }
  REQUIRE(t0 >= 0);
  const auto fd = world::enumerate_future(ep, kHero, t0, 5);
  REQUIRE(fd.outcomes.size() == 1);
  CHECK(fd.outcomes[0].prob == doctest::Approx(1.0));
  const BBox realized = ep.image_box(kHero, t0 + 5);
  CHECK(geom::center_distance(fd.outcomes[0].box, realized) < 1e-9);
}

TEST_CASE("a single half-half branch yields two equal outcomes") {
  WorldConfig cfg = scenario_config("branching");
  cfg.p_cross = 0.5;
  bool found = false;
  for (std::uint64_t seed = 30; seed < 42 && !found; ++seed) {
    const Episode ep = world::generate_episode(seed, cfg);
    for (int t = 4; t + 15 < ep.length() && !found; ++t) {
      if (!visible(ep, kHero, t)) continue;
      const auto fd = world::enumerate_future(ep, kHero, t, 15);
      if (fd.outcomes.size() != 2) continue;
      found = true;
      CHECK(fd.outcomes[0].prob == doctest::Approx(0.5));
      CHECK(fd.outcomes[1].prob == doctest::Approx(0.5));
      CHECK(geom::center_distance(fd.outcomes[0].box, fd.outcomes[1].box) > 1.0);
    }
  }
  CHECK(found);
}

TEST_CASE("enumeration probabilities sum to one over many windows") {
  const Episode ep = world::generate_episode(23, scenario_config("default"));
  int windows = 0;
  for (int agent = 0; agent < 5; ++agent)
    for (int t = 0; t + 10 < ep.length(); t += 5) {
      if (!visible(ep, agent, t)) continue;
      const auto fd = world::enumerate_future(ep, agent, t, 10);
      double total = 0;
      for (const auto& oc : fd.outcomes) total += oc.prob;
      CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
      ++windows;
    }
  CHECK(windows > 0);
}

// Replaying the window under fresh decision seeds reproduces the
// enumerated outcome set with matching frequencies (3 sigma).
TEST_CASE("monte carlo rollouts converge to enumerated probabilities") {
  WorldConfig cfg = scenario_config("branching");
  cfg.p_cross = 0.5;
  const Episode ep = world::generate_episode(17, cfg);
  int t0 = -1;
  world::FutureDistribution fd;
  const int dt = 15;
  for (int t = 0; t + dt < ep.length(); ++t) {
    if (!visible(ep, kHero, t)) continue;
    fd = world::enumerate_future(ep, kHero, t, dt);
    if (fd.outcomes.size() >= 2) {
      t0 = t;
      break;
    }
  }
  REQUIRE(t0 >= 0);

  const int rollouts = 10000;
  std::vector<int> hits(fd.outcomes.size(), 0);
  for (int r = 0; r < rollouts; ++r) {
    std::vector<world::AgentState> agents =
        ep.frames[static_cast<std::size_t>(t0)].agents;
    std::vector<world::DecisionPoint> log;
    world::RngSink sink(rng::mix(4242, static_cast<std::uint64_t>(r)), &log);
    for (int s = 0; s < dt; ++s)
      agents = world::step_agents(ep.map, ep.cfg, agents, t0 + s, sink);
    const BBox box =
        geom::apply_egomotion(ep.frames[static_cast<std::size_t>(t0 + dt)].view,
                              world::world_box(agents[kHero]));
    int best = 0;
    double best_d = 1e18;
    for (std::size_t i = 0; i < fd.outcomes.size(); ++i) {
      const double d = geom::center_distance(box, fd.outcomes[i].box);
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(i);
      }
    }
    // Dynamics are deterministic given the decisions, so each rollout
    // lands exactly on one enumerated outcome.
    REQUIRE(best_d < 1e-6);
    ++hits[static_cast<std::size_t>(best)];
  }
  for (std::size_t i = 0; i < fd.outcomes.size(); ++i) {
    const double p = fd.outcomes[i].prob;
    const double sigma = std::sqrt(p * (1 - p) * rollouts);
    CHECK(std::abs(hits[i] - p * rollouts) <= 3 * sigma + 1e-9);
  }
}

TEST_CASE("enumeration over the branch cap is an explicit error") {
  WorldConfig cfg = scenario_config("branching");
  cfg.p_cross = 0.5;
  Episode ep = world::generate_episode(17, cfg);
  int t0 = -1;
  for (int t = 0; t + 15 < ep.length(); ++t) {
    if (!visible(ep, kHero, t)) continue;
    if (world::enumerate_future(ep, kHero, t, 15).outcomes.size() >= 2) {
      t0 = t;
      break;
    }
  }
  REQUIRE(t0 >= 0);
  ep.cfg.branch_cap = 1;
  CHECK_THROWS_AS(world::enumerate_future(ep, kHero, t0, 15), std::runtime_error);
}

// Each emergence event's agent must actually cross the visibility
// threshold between t and t + dt.
TEST_CASE("emergence events respect the visibility threshold") {
  int events = 0;
  for (std::uint64_t seed = 50; seed < 58; ++seed) {
    const Episode ep = world::generate_episode(seed, scenario_config("default"));
    for (int t = 0; t + 5 < ep.length(); ++t) {
      for (const AgentClass cls : {AgentClass::kPedestrian, AgentClass::kVehicle}) {
        const auto boxes = world::emergence_events(ep, t, 5, cls);
        for (const auto& box : boxes) {
          ++events;
          int match = -1;
          for (const auto& a : ep.frames[static_cast<std::size_t>(t + 5)].agents)
            if (a.cls == cls &&
                geom::center_distance(ep.image_box(a.id, t + 5), box) < 1e-9)
              match = a.id;
          REQUIRE(match >= 0);
          CHECK(ep.visibility(match, t) < ep.cfg.visibility_threshold);
          CHECK(ep.visibility(match, t + 5) >= ep.cfg.visibility_threshold);
        }
      }
    }
  }
  CHECK(events > 0);
}

// Agents comfortably visible at both ends never count as emergence.
TEST_CASE("fully visible agents are not emergence events") {
  for (std::uint64_t seed = 50; seed < 54; ++seed) {
    const Episode ep = world::generate_episode(seed, scenario_config("default"));
    for (int t = 0; t + 5 < ep.length(); t += 3) {
      const auto boxes = world::emergence_events(ep, t, 5, AgentClass::kVehicle);
      for (const auto& a : ep.frames[static_cast<std::size_t>(t)].agents) {
        if (a.cls != AgentClass::kVehicle) continue;
        if (ep.visibility(a.id, t) < ep.cfg.visibility_threshold) continue;
        const BBox future = ep.image_box(a.id, t + 5);
        for (const auto& box : boxes)
          CHECK(geom::center_distance(box, future) > 1e-9);
      }
    }
  }
}

TEST_CASE("render_inputs is bit-identical across calls") {
  const Episode ep = world::generate_episode(61, scenario_config("default"));
  const Tensor a = world::render_inputs(ep, kHero, 6, 5, 15);
  const Tensor b = world::render_inputs(ep, kHero, 6, 5, 15);
  CHECK(a.shape == b.shape);
  CHECK(a.values == b.values);
}

// Omitting the agent removes exactly one mask plane per observed frame.
TEST_CASE("maskless inputs shrink by the mask planes") {
  const Episode ep = world::generate_episode(61, scenario_config("default"));
  const Tensor with_mask = world::render_inputs(ep, kHero, 6, 5, 15);
  const Tensor without = world::render_inputs(ep, -1, 6, 5, 15);
  const int cells = (ep.cfg.view_w / world::kDownsampleFactor) *
                    (ep.cfg.view_h / world::kDownsampleFactor);
  CHECK(static_cast<int>(with_mask.values.size()) ==
        static_cast<int>(without.values.size()) + 5 * cells);
  CHECK(static_cast<int>(with_mask.values.size()) ==
        world::render_input_size(ep.cfg, 5, true));
  CHECK(static_cast<int>(without.values.size()) ==
        world::render_input_size(ep.cfg, 5, false));
}

// Hand-counted mask footprints on the 16x16 lattice of a 64x64 view.
TEST_CASE("box masks mark exactly the overlapped blocks") {
  std::vector<double> mask;
  world::append_box_mask(BBox{10, 10, 6, 6}, 64, 64, mask);
  REQUIRE(mask.size() == 256);
  // Spans (7, 13) on both axes: blocks 1, 2 and 3 of each axis overlap.
  double total = 0;
  for (double v : mask) {
    CHECK((v == 0.0 || v == 1.0));
    total += v;
  }
  CHECK(total == doctest::Approx(9.0));
  for (int cy = 1; cy <= 3; ++cy)
    for (int cx = 1; cx <= 3; ++cx)
      CHECK(mask[static_cast<std::size_t>(cy * 16 + cx)] == 1.0);

  mask.clear();
  world::append_box_mask(BBox{0, 0, 8, 8}, 64, 64, mask);
  double corner_total = 0;
  for (double v : mask) corner_total += v;
  CHECK(corner_total == doctest::Approx(1.0));
  CHECK(mask[0] == 1.0);

  mask.clear();
  world::append_box_mask(BBox{10, 10, 0, 0}, 64, 64, mask);
  double empty_total = 0;
  for (double v : mask) empty_total += v;
  CHECK(empty_total == doctest::Approx(0.0));

  mask.clear();
  world::append_box_mask(BBox{32, 32, 64, 64}, 64, 64, mask);
  double full_total = 0;
  for (double v : mask) full_total += v;
  CHECK(full_total == doctest::Approx(256.0));
}

TEST_CASE("composed egomotion chains the per-frame relations") {
  const Episode ep = world::generate_episode(71, scenario_config("default"));
  const geom::Egomotion direct = world::composed_ego(ep, 3, 2);
  const geom::Egomotion manual =
      geom::compose(ep.frames[3].ego, ep.frames[4].ego);
  CHECK(direct.tx == doctest::Approx(manual.tx).epsilon(1e-12));
  CHECK(direct.ty == doctest::Approx(manual.ty).epsilon(1e-12));
  CHECK(direct.theta == doctest::Approx(manual.theta).epsilon(1e-12));
  CHECK(direct.scale == doctest::Approx(manual.scale).epsilon(1e-12));
}
