#include "mplab/worldsim.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include "mplab/rng.hpp"

namespace mplab::world {

namespace {

constexpr int kRoadWidth = 6;
constexpr int kSidewalkWidth = 3;
constexpr int kZebraDepth = 2;
constexpr double kPedExtent = 1.6;
constexpr double kVehicleLong = 3.5;
constexpr double kVehicleShort = 1.8;

// Option ids shared by policies and tests.
constexpr int kOptContinue = 0;
constexpr int kOptCross = 1;
constexpr int kOptStraight = 0;
constexpr int kOptRight = 1;
constexpr int kOptLeft = 2;

double road_center(const RoadSeg& r) { return (r.lo + r.hi) / 2.0; }

// Sidewalk center line on one side of a road. side -1 is the
// low-coordinate flank.
double sidewalk_line(const RoadSeg& r, int side) {
  return side < 0 ? r.lo - 1.5 : r.hi + 1.5;
}

void set_extent(AgentState& a) {
  if (a.cls == AgentClass::kPedestrian) {
    a.w = kPedExtent;
    a.h = kPedExtent;
    return;
  }
  if (std::abs(a.dirx) >= std::abs(a.diry)) {
    a.w = kVehicleLong;
    a.h = kVehicleShort;
  } else {
    a.w = kVehicleShort;
    a.h = kVehicleLong;
  }
}

struct Arms {
  bool east = false, west = false, north = false, south = false;
  int h_road = -1, v_road = -1;
};

Arms junction_arms(const WorldMap& map, const Rect& j) {
  Arms arms;
  for (std::size_t i = 0; i < map.roads.size(); ++i) {
    const auto& r = map.roads[i];
    if (!r.vertical && r.lo == j.y0 && r.hi == j.y1 && r.a <= j.x0 && r.b >= j.x1) {
      arms.h_road = static_cast<int>(i);
      arms.west = r.a < j.x0;
      arms.east = r.b > j.x1;
    }
    if (r.vertical && r.lo == j.x0 && r.hi == j.x1 && r.a <= j.y0 && r.b >= j.y1) {
      arms.v_road = static_cast<int>(i);
      arms.north = r.a < j.y0;
      arms.south = r.b > j.y1;
    }
  }
  return arms;
}

void fill_rect(SemanticGrid& g, const Rect& r, CellLabel v) {
  for (int y = std::max(0, r.y0); y < std::min(g.height, r.y1); ++y)
    for (int x = std::max(0, r.x0); x < std::min(g.width, r.x1); ++x)
      g.set(x, y, v);
}

Rect road_rect(const RoadSeg& r) {
  return r.vertical ? Rect{r.lo, r.a, r.hi, r.b} : Rect{r.a, r.lo, r.b, r.hi};
}

}  // namespace

void finalize_world(WorldMap& map) {
  if (map.w < 32 || map.h < 32)
    throw std::invalid_argument("finalize_world: world smaller than 32 cells");
  for (const auto& r : map.roads) {
    if (r.hi - r.lo != kRoadWidth)
      throw std::invalid_argument("finalize_world: road width must be " +
                                  std::to_string(kRoadWidth));
    if (r.b - r.a < 2 * kRoadWidth)
      throw std::invalid_argument("finalize_world: road too short");
  }

  map.junctions.clear();
  map.zebras.clear();
  for (std::size_t i = 0; i < map.roads.size(); ++i) {
    for (std::size_t j = 0; j < map.roads.size(); ++j) {
      const auto& h = map.roads[i];
      const auto& v = map.roads[j];
      if (h.vertical || !v.vertical) continue;
      const bool overlap_x = v.lo < h.b && v.hi > h.a;
      const bool overlap_y = h.lo < v.b && h.hi > v.a;
      if (overlap_x && overlap_y)
        map.junctions.push_back({v.lo, h.lo, v.hi, h.hi});
    }
  }

  for (const auto& j : map.junctions) {
    const Arms arms = junction_arms(map, j);
    if (arms.h_road < 0 || arms.v_road < 0)
      throw std::logic_error("finalize_world: junction without both roads");
    if (arms.west)
      map.zebras.push_back({arms.h_road, 1, {j.x0 - kZebraDepth, j.y0, j.x0, j.y1}});
    if (arms.east)
      map.zebras.push_back({arms.h_road, 1, {j.x1, j.y0, j.x1 + kZebraDepth, j.y1}});
    if (arms.north)
      map.zebras.push_back({arms.v_road, 0, {j.x0, j.y0 - kZebraDepth, j.x1, j.y0}});
    if (arms.south)
      map.zebras.push_back({arms.v_road, 0, {j.x0, j.y1, j.x1, j.y1 + kZebraDepth}});
  }

  map.grid = SemanticGrid(map.w, map.h, CellLabel::kBuilding);
  for (const auto& r : map.roads) fill_rect(map.grid, road_rect(r), CellLabel::kRoad);
  for (const auto& r : map.roads) {
    Rect low = road_rect(r);
    Rect high = low;
    if (r.vertical) {
      low.x1 = low.x0;
      low.x0 -= kSidewalkWidth;
      high.x0 = high.x1;
      high.x1 += kSidewalkWidth;
    } else {
      low.y1 = low.y0;
      low.y0 -= kSidewalkWidth;
      high.y0 = high.y1;
      high.y1 += kSidewalkWidth;
    }
    for (const Rect& band : {low, high})
      for (int y = std::max(0, band.y0); y < std::min(map.h, band.y1); ++y)
        for (int x = std::max(0, band.x0); x < std::min(map.w, band.x1); ++x)
          if (map.grid.at(x, y) == CellLabel::kBuilding)
            map.grid.set(x, y, CellLabel::kSidewalk);
  }
  for (const auto& z : map.zebras) fill_rect(map.grid, z.rect, CellLabel::kCrossing);
  for (const auto& o : map.obstructions) fill_rect(map.grid, o, CellLabel::kObstruction);
}

WorldMap build_world(std::uint64_t seed, const WorldConfig& cfg) {
  WorldMap map;
  map.w = cfg.world_w();
  map.h = cfg.world_h();
  rng::SplitMix64 gen(seed);

  // Road band starting slots, quantized so distinct seeds still share a
  // common positional vocabulary.
  auto slot = [&](int span) {
    const int lo_min = cfg.margin + 8;
    const int lo_max = span - cfg.margin - 8 - kRoadWidth;
    const int slots = (lo_max - lo_min) / 4 + 1;
    return lo_min + 4 * gen.uniform_int(0, slots - 1);
  };

  if (cfg.scenario == "branching") {
    map.roads.push_back({false, slot(map.h), 0, 0, map.w});
    map.roads.back().hi = map.roads.back().lo + kRoadWidth;
    map.roads.push_back({true, slot(map.w), 0, 0, map.h});
    map.roads.back().hi = map.roads.back().lo + kRoadWidth;
  } else if (cfg.scenario == "straight") {
    const bool vertical = gen.uniform_int(0, 1) == 1;
    const int span = vertical ? map.w : map.h;
    RoadSeg r{vertical, slot(span), 0, 0, vertical ? map.h : map.w};
    r.hi = r.lo + kRoadWidth;
    map.roads.push_back(r);
  } else if (cfg.scenario == "default") {
    const int n_h = gen.uniform_int(1, 2);
    const int n_v = gen.uniform_int(1, 2);
    auto place = [&](bool vertical, int count) {
      const int span = vertical ? map.w : map.h;
      std::vector<int> taken;
      for (int i = 0; i < count; ++i) {
        int lo = 0;
        bool ok = false;
        for (int attempt = 0; attempt < 32 && !ok; ++attempt) {
          lo = slot(span);
          ok = true;
          for (int other : taken)
            if (std::abs(other - lo) < 20) ok = false;
        }
        if (!ok) continue;
        taken.push_back(lo);
        map.roads.push_back(
            {vertical, lo, lo + kRoadWidth, 0, vertical ? map.h : map.w});
      }
    };
    place(false, n_h);
    place(true, n_v);
  } else {
    throw std::invalid_argument("build_world: unknown scenario '" + cfg.scenario + "'");
  }

  finalize_world(map);

  // Obstructions go on building cells a short way out from a sidewalk.
  const int want = gen.uniform_int(3, 6);
  for (int placed = 0, attempt = 0; placed < want && attempt < 64; ++attempt) {
    const int sx = gen.uniform_int(2, 4);
    const int sy = gen.uniform_int(2, 4);
    const auto& r = map.roads[static_cast<std::size_t>(
        gen.uniform_int(0, static_cast<int>(map.roads.size()) - 1))];
    const int side = gen.uniform_int(0, 1) == 0 ? -1 : 1;
    const int along = gen.uniform_int(r.a + 4, r.b - 4 - sx);
    const int gap = gen.uniform_int(1, 3);
    int perp;
    if (side < 0)
      perp = r.lo - kSidewalkWidth - gap - (r.vertical ? sx : sy);
    else
      perp = r.hi + kSidewalkWidth + gap;
    Rect rect = r.vertical ? Rect{perp, along, perp + sx, along + sy}
                           : Rect{along, perp, along + sx, perp + sy};
    if (rect.x0 < 1 || rect.y0 < 1 || rect.x1 > map.w - 1 || rect.y1 > map.h - 1)
      continue;
    bool clear = true;
    for (int y = rect.y0; y < rect.y1 && clear; ++y)
      for (int x = rect.x0; x < rect.x1 && clear; ++x)
        if (map.grid.at(x, y) != CellLabel::kBuilding) clear = false;
    if (!clear) continue;
    map.obstructions.push_back(rect);
    fill_rect(map.grid, rect, CellLabel::kObstruction);
    ++placed;
  }
  return map;
}

SemanticGrid generate_map(std::uint64_t seed, int w, int h) {
  if (w < 32 || h < 32)
    throw std::invalid_argument("generate_map: dimensions below 32 cells");
  WorldConfig cfg;
  cfg.view_w = w;
  cfg.view_h = h;
  cfg.margin = 0;
  WorldMap map = build_world(seed, cfg);
  return map.grid;
}

geom::BBox world_box(const AgentState& a) { return {a.px, a.py, a.w, a.h}; }

int RngSink::choose(const AgentState& agent, int step,
                    const std::vector<BranchOption>& options) {
  rng::SplitMix64 gen(rng::mix(seed_, static_cast<std::uint64_t>(agent.id),
                               static_cast<std::uint64_t>(step)));
  std::vector<double> probs(options.size());
  for (std::size_t i = 0; i < options.size(); ++i) probs[i] = options[i].prob;
  const int idx = gen.categorical(probs);
  if (log_) log_->push_back({agent.id, step, options[static_cast<std::size_t>(idx)].id, options});
  return idx;
}

namespace {

void check_legal_cell(const WorldMap& map, const AgentState& a) {
  const int cx = static_cast<int>(std::floor(a.px));
  const int cy = static_cast<int>(std::floor(a.py));
  if (!map.grid.in_bounds(cx, cy))
    throw std::logic_error("step_agent: agent " + std::to_string(a.id) +
                           " left the world grid");
  const CellLabel c = map.grid.at(cx, cy);
  const bool ok = a.cls == AgentClass::kPedestrian
                      ? (c == CellLabel::kSidewalk || c == CellLabel::kCrossing)
                      : (c == CellLabel::kRoad || c == CellLabel::kCrossing);
  if (!ok)
    throw std::logic_error("step_agent: agent " + std::to_string(a.id) +
                           " on illegal cell " + label_name(c));
}

AgentState step_pedestrian(const WorldMap& map, const WorldConfig& cfg,
                           AgentState a, int step, DecisionSink& sink) {
  const RoadSeg& road = map.roads[static_cast<std::size_t>(a.road)];
  if (a.policy == PolicyState::kCrossing) {
    a.px += a.dirx * a.speed;
    a.py += a.diry * a.speed;
    const double travel = road.vertical ? a.px : a.py;
    const double target = road.vertical ? a.tx : a.ty;
    const double dir = road.vertical ? a.dirx : a.diry;
    if ((dir > 0 && travel >= target) || (dir < 0 && travel <= target)) {
      if (road.vertical)
        a.px = target;
      else
        a.py = target;
      a.dirx = a.sdirx;
      a.diry = a.sdiry;
      a.side = -a.side;
      a.policy = PolicyState::kWalking;
    }
    return a;
  }

  const bool walk_x = std::abs(a.dirx) > std::abs(a.diry);
  const double nx = a.px + a.dirx * a.speed;
  const double ny = a.py + a.diry * a.speed;
  const double main_new = walk_x ? nx : ny;
  const double main_old = walk_x ? a.px : a.py;
  const double limit = walk_x ? map.w : map.h;
  const double lo_stop = road.a + 1.0;
  const double hi_stop = road.b - 1.0;
  if (main_new < std::max(2.0, lo_stop) || main_new > std::min(limit - 2.0, hi_stop)) {
    a.dirx = -a.dirx;
    a.diry = -a.diry;
    a.sdirx = -a.sdirx;
    a.sdiry = -a.sdiry;
    return a;
  }

  const int cell_old = static_cast<int>(std::floor(main_old));
  const int cell_new = static_cast<int>(std::floor(main_new));
  if (cell_new != cell_old) {
    for (const auto& z : map.zebras) {
      if (z.road != a.road) continue;
      // A zebra whose travel axis is perpendicular to the walk crosses
      // the road being walked along.
      const bool perpendicular = (z.axis == 1) == walk_x;
      if (!perpendicular) continue;
      const int z0 = walk_x ? z.rect.x0 : z.rect.y0;
      const int z1 = walk_x ? z.rect.x1 : z.rect.y1;
      if (cell_new < z0 || cell_new >= z1 || (cell_old >= z0 && cell_old < z1))
        continue;
      const std::vector<BranchOption> options = {{kOptContinue, 1.0 - cfg.p_cross},
                                                 {kOptCross, cfg.p_cross}};
      const int idx = sink.choose(a, step, options);
      if (options[static_cast<std::size_t>(idx)].id == kOptCross) {
        a.sdirx = a.dirx;
        a.sdiry = a.diry;
        const double corridor = (z0 + z1) / 2.0;
        const double cross_sign = a.side < 0 ? 1.0 : -1.0;
        if (walk_x) {
          a.px = corridor;
          a.dirx = 0.0;
          a.diry = cross_sign;
          a.ty = sidewalk_line(road, -a.side);
        } else {
          a.py = corridor;
          a.diry = 0.0;
          a.dirx = cross_sign;
          a.tx = sidewalk_line(road, -a.side);
        }
        a.policy = PolicyState::kCrossing;
        return a;
      }
      break;
    }
  }
  a.px = nx;
  a.py = ny;
  return a;
}

AgentState step_vehicle(const WorldMap& map, const WorldConfig& cfg,
                        AgentState a, int step, DecisionSink& sink) {
  if (a.policy == PolicyState::kTurning) {
    const double dx = a.tx - a.px;
    const double dy = a.ty - a.py;
    const double dist = std::hypot(dx, dy);
    if (dist <= a.speed) {
      a.px = a.tx;
      a.py = a.ty;
      a.dirx = a.sdirx;
      a.diry = a.sdiry;
      a.policy = PolicyState::kWalking;
      set_extent(a);
    } else {
      a.px += dx / dist * a.speed;
      a.py += dy / dist * a.speed;
    }
    return a;
  }

  const RoadSeg& road = map.roads[static_cast<std::size_t>(a.road)];
  const double nx = a.px + a.dirx * a.speed;
  const double ny = a.py + a.diry * a.speed;
  const bool drive_x = std::abs(a.dirx) > std::abs(a.diry);
  const double main_new = drive_x ? nx : ny;
  const double limit = drive_x ? map.w : map.h;
  if (main_new < std::max(2.0, road.a + 2.0) ||
      main_new > std::min(limit - 2.0, road.b - 2.0)) {
    a.dirx = -a.dirx;
    a.diry = -a.diry;
    return a;
  }

  const int ox = static_cast<int>(std::floor(a.px));
  const int oy = static_cast<int>(std::floor(a.py));
  const int cx = static_cast<int>(std::floor(nx));
  const int cy = static_cast<int>(std::floor(ny));
  for (std::size_t ji = 0; ji < map.junctions.size(); ++ji) {
    const Rect& j = map.junctions[ji];
    if (!j.contains(cx, cy) || j.contains(ox, oy)) continue;
    const Arms arms = junction_arms(map, j);
    // Exits relative to the heading; an arm must exist to be offered.
    const double rx = -a.diry, ry = a.dirx;   // right turn
    const double lx = a.diry, ly = -a.dirx;   // left turn
    auto arm_open = [&](double ex, double ey) {
      if (ex > 0.5) return arms.east;
      if (ex < -0.5) return arms.west;
      if (ey > 0.5) return arms.south;
      return arms.north;
    };
    std::vector<BranchOption> options;
    if (arm_open(a.dirx, a.diry))
      options.push_back({kOptStraight, cfg.vehicle_p_straight});
    const double turn_mass = (1.0 - cfg.vehicle_p_straight) / 2.0;
    if (arm_open(rx, ry)) options.push_back({kOptRight, turn_mass});
    if (arm_open(lx, ly)) options.push_back({kOptLeft, turn_mass});
    if (options.empty()) break;
    double total = 0.0;
    for (const auto& o : options) total += o.prob;
    for (auto& o : options) o.prob /= total;
    const int idx = sink.choose(a, step, options);
    const int chosen = options[static_cast<std::size_t>(idx)].id;
    if (chosen != kOptStraight) {
      a.policy = PolicyState::kTurning;
      a.tx = (j.x0 + j.x1) / 2.0;
      a.ty = (j.y0 + j.y1) / 2.0;
      if (chosen == kOptRight) {
        a.sdirx = rx;
        a.sdiry = ry;
      } else {
        a.sdirx = lx;
        a.sdiry = ly;
      }
      const Arms exit_arms = arms;
      a.road = std::abs(a.sdirx) > 0.5 ? exit_arms.h_road : exit_arms.v_road;
      const double dx = a.tx - a.px;
      const double dy = a.ty - a.py;
      const double dist = std::hypot(dx, dy);
      if (dist <= a.speed) {
        a.px = a.tx;
        a.py = a.ty;
        a.dirx = a.sdirx;
        a.diry = a.sdiry;
        a.policy = PolicyState::kWalking;
        set_extent(a);
      } else {
        a.px += dx / dist * a.speed;
        a.py += dy / dist * a.speed;
      }
      return a;
    }
    break;
  }
  a.px = nx;
  a.py = ny;
  return a;
}

}  // namespace

AgentState step_agent(const WorldMap& map, const WorldConfig& cfg,
                      const AgentState& agent, int step, DecisionSink& sink) {
  check_legal_cell(map, agent);
  if (agent.cls == AgentClass::kPedestrian)
    return step_pedestrian(map, cfg, agent, step, sink);
  return step_vehicle(map, cfg, agent, step, sink);
}

std::vector<AgentState> step_agents(const WorldMap& map, const WorldConfig& cfg,
                                    const std::vector<AgentState>& agents,
                                    int step, DecisionSink& sink) {
  std::vector<AgentState> out;
  out.reserve(agents.size());
  for (const auto& a : agents) out.push_back(step_agent(map, cfg, a, step, sink));
  return out;
}

std::vector<AgentState> spawn_agents(const WorldMap& map, const WorldConfig& cfg,
                                     std::uint64_t seed) {
  rng::SplitMix64 gen(seed);
  std::vector<AgentState> out;
  int next_id = 0;

  auto pick_road = [&](bool vertical_ok, bool horizontal_ok) {
    std::vector<int> candidates;
    for (std::size_t i = 0; i < map.roads.size(); ++i)
      if ((map.roads[i].vertical && vertical_ok) ||
          (!map.roads[i].vertical && horizontal_ok))
        candidates.push_back(static_cast<int>(i));
    if (candidates.empty()) throw std::logic_error("spawn_agents: no usable road");
    return candidates[static_cast<std::size_t>(
        gen.uniform_int(0, static_cast<int>(candidates.size()) - 1))];
  };

  auto add_pedestrian = [&](int road_idx, int side, double main, double heading) {
    const RoadSeg& r = map.roads[static_cast<std::size_t>(road_idx)];
    AgentState a;
    a.id = next_id++;
    a.cls = AgentClass::kPedestrian;
    a.speed = cfg.ped_speed;
    a.road = road_idx;
    a.side = side;
    if (r.vertical) {
      a.px = sidewalk_line(r, side);
      a.py = main;
      a.dirx = 0.0;
      a.diry = heading;
    } else {
      a.px = main;
      a.py = sidewalk_line(r, side);
      a.dirx = heading;
      a.diry = 0.0;
    }
    set_extent(a);
    out.push_back(a);
  };

  auto add_vehicle = [&](int road_idx, double main, double heading) {
    const RoadSeg& r = map.roads[static_cast<std::size_t>(road_idx)];
    AgentState a;
    a.id = next_id++;
    a.cls = AgentClass::kVehicle;
    a.speed = cfg.vehicle_speed;
    a.road = road_idx;
    if (r.vertical) {
      a.px = road_center(r);
      a.py = main;
      a.dirx = 0.0;
      a.diry = heading;
    } else {
      a.px = main;
      a.py = road_center(r);
      a.dirx = heading;
      a.diry = 0.0;
    }
    set_extent(a);
    out.push_back(a);
  };

  int pedestrians_left = cfg.pedestrians;
  if (cfg.scenario == "branching") {
    if (map.junctions.empty())
      throw std::logic_error("spawn_agents: branching scenario without junction");
    const Rect j = map.junctions.front();
    const bool along_h = gen.uniform_int(0, 1) == 0;
    const Arms arms = junction_arms(map, j);
    const int road_idx = along_h ? arms.h_road : arms.v_road;
    const int side = gen.uniform_int(0, 1) == 0 ? -1 : 1;
    const double heading = gen.uniform_int(0, 1) == 0 ? 1.0 : -1.0;
    // Entry boundary of the first perpendicular zebra zone on the path.
    const int j_lo = along_h ? j.x0 : j.y0;
    const int j_hi = along_h ? j.x1 : j.y1;
    const double entry_cell = heading > 0 ? j_lo - kZebraDepth : j_hi + kZebraDepth - 1;
    const int entry_step = gen.uniform_int(10, 14);
    const double inset = heading > 0 ? 0.3 : 0.7;
    const double main = entry_cell + inset - heading * (entry_step * cfg.ped_speed);
    add_pedestrian(road_idx, side, main, heading);
    pedestrians_left -= 1;
  } else if (cfg.scenario == "straight") {
    const int road_idx = pick_road(true, true);
    const int side = gen.uniform_int(0, 1) == 0 ? -1 : 1;
    const double heading = gen.uniform_int(0, 1) == 0 ? 1.0 : -1.0;
    const RoadSeg& r = map.roads[static_cast<std::size_t>(road_idx)];
    const double center = r.vertical ? map.h / 2.0 : map.w / 2.0;
    add_pedestrian(road_idx, side, center + gen.uniform(-6.0, 6.0), heading);
    pedestrians_left -= 1;
  }

  for (int i = 0; i < pedestrians_left; ++i) {
    const int road_idx = pick_road(true, true);
    const RoadSeg& r = map.roads[static_cast<std::size_t>(road_idx)];
    const int side = gen.uniform_int(0, 1) == 0 ? -1 : 1;
    const double heading = gen.uniform_int(0, 1) == 0 ? 1.0 : -1.0;
    const double main = gen.uniform(r.a + 4.0, r.b - 4.0);
    add_pedestrian(road_idx, side, main, heading);
  }
  for (int i = 0; i < cfg.vehicles; ++i) {
    const int road_idx = pick_road(true, true);
    const RoadSeg& r = map.roads[static_cast<std::size_t>(road_idx)];
    const double heading = gen.uniform_int(0, 1) == 0 ? 1.0 : -1.0;
    const double main = gen.uniform(r.a + 4.0, r.b - 4.0);
    add_vehicle(road_idx, main, heading);
  }

  for (const auto& a : out) check_legal_cell(map, a);
  return out;
}

SemanticGrid render_static(const WorldMap& map, const geom::Egomotion& view,
                           int view_w, int view_h) {
  const geom::Egomotion inv = geom::invert(view);
  SemanticGrid out(view_w, view_h);
  for (int iy = 0; iy < view_h; ++iy)
    for (int ix = 0; ix < view_w; ++ix) {
      double wx, wy;
      geom::apply_point(inv, ix + 0.5, iy + 0.5, wx, wy);
      const int cx = static_cast<int>(std::floor(wx));
      const int cy = static_cast<int>(std::floor(wy));
      out.set(ix, iy,
              map.grid.in_bounds(cx, cy) ? map.grid.at(cx, cy) : CellLabel::kOffMap);
    }
  return out;
}

SemanticGrid render_full(const WorldMap& map, const std::vector<AgentState>& agents,
                         const geom::Egomotion& view, int view_w, int view_h) {
  SemanticGrid out = render_static(map, view, view_w, view_h);
  for (const auto& a : agents) {
    const geom::BBox b = geom::apply_egomotion(view, world_box(a));
    const CellLabel label = a.cls == AgentClass::kPedestrian ? CellLabel::kPedestrian
                                                             : CellLabel::kVehicle;
    const int x0 = std::max(0, static_cast<int>(std::floor(b.x - b.w / 2)));
    const int x1 = std::min(view_w - 1, static_cast<int>(std::floor(b.x + b.w / 2)));
    const int y0 = std::max(0, static_cast<int>(std::floor(b.y - b.h / 2)));
    const int y1 = std::min(view_h - 1, static_cast<int>(std::floor(b.y + b.h / 2)));
    for (int iy = y0; iy <= y1; ++iy)
      for (int ix = x0; ix <= x1; ++ix) {
        const double cx = ix + 0.5;
        const double cy = iy + 0.5;
        if (cx >= b.x - b.w / 2 && cx < b.x + b.w / 2 && cy >= b.y - b.h / 2 &&
            cy < b.y + b.h / 2)
          out.set(ix, iy, label);
      }
  }
  return out;
}

const AgentState& Episode::agent_at(int agent_id, int t) const {
  if (t < 0 || t >= length())
    throw std::invalid_argument("Episode: frame " + std::to_string(t) + " out of range");
  for (const auto& a : frames[static_cast<std::size_t>(t)].agents)
    if (a.id == agent_id) return a;
  throw std::invalid_argument("Episode: no agent with id " + std::to_string(agent_id));
}

geom::BBox Episode::image_box(int agent_id, int t) const {
  const AgentState& a = agent_at(agent_id, t);
  return geom::apply_egomotion(frames[static_cast<std::size_t>(t)].view, world_box(a));
}

double Episode::visibility(int agent_id, int t) const {
  return geom::visible_fraction(image_box(agent_id, t), cfg.view_w, cfg.view_h);
}

Episode simulate(const WorldMap& map, const WorldConfig& cfg,
                 std::vector<AgentState> initial, const geom::Egomotion& step_ego,
                 std::uint64_t seed) {
  Episode ep;
  ep.seed = seed;
  ep.cfg = cfg;
  ep.map = map;
  ep.frames.reserve(static_cast<std::size_t>(cfg.episode_len));

  geom::Egomotion view{static_cast<double>(cfg.margin),
                       static_cast<double>(cfg.margin), 0.0, 1.0};
  std::vector<AgentState> agents = std::move(initial);
  for (int t = 0; t < cfg.episode_len; ++t) {
    Frame fr;
    fr.view = view;
    fr.statics = render_static(map, view, cfg.view_w, cfg.view_h);
    fr.full = render_full(map, agents, view, cfg.view_w, cfg.view_h);
    fr.agents = agents;
    if (t < cfg.episode_len - 1) {
      fr.ego = step_ego;
      RngSink sink(rng::mix(seed, 0xdecaf), &fr.decisions);
      agents = step_agents(map, cfg, agents, t, sink);
      view = geom::compose(view, step_ego);
    }
    ep.frames.push_back(std::move(fr));
  }
  return ep;
}

Episode generate_episode(std::uint64_t seed, const WorldConfig& cfg) {
  if (cfg.episode_len < 2)
    throw std::invalid_argument("generate_episode: episode length below 2");
  const WorldMap map = build_world(rng::mix(seed, 1), cfg);
  std::vector<AgentState> agents = spawn_agents(map, cfg, rng::mix(seed, 2));

  rng::SplitMix64 gen(rng::mix(seed, 3));
  const double near_one = 1.0 + 0.4 * (cfg.ego_zoom - 1.0);
  const double zoom = gen.uniform(std::min(near_one, cfg.ego_zoom),
                                  std::max(near_one, cfg.ego_zoom));
  const double angle = gen.uniform(0.0, 2.0 * M_PI);
  const double mag = gen.uniform(0.3 * cfg.ego_drift, cfg.ego_drift);
  const double dx = mag * std::cos(angle);
  const double dy = mag * std::sin(angle);
  geom::Egomotion step_ego;
  step_ego.scale = zoom;
  step_ego.theta = 0.0;
  step_ego.tx = cfg.view_w / 2.0 * (1.0 - 1.0 / zoom) - dx / zoom;
  step_ego.ty = cfg.view_h / 2.0 * (1.0 - 1.0 / zoom) - dy / zoom;

  Episode ep = simulate(map, cfg, std::move(agents), step_ego, rng::mix(seed, 4));
  ep.seed = seed;
  return ep;
}

namespace {

// Replays a fixed choice prefix, then takes the first option at every
// further decision, recording everything for sibling expansion.
class ForcedSink : public DecisionSink {
 public:
  explicit ForcedSink(std::vector<int> prefix) : prefix_(std::move(prefix)) {}

  int choose(const AgentState& agent, int step,
             const std::vector<BranchOption>& options) override {
    const std::size_t pos = taken_.size();
    const int idx = pos < prefix_.size() ? prefix_[pos] : 0;
    if (idx < 0 || idx >= static_cast<int>(options.size()))
      throw std::logic_error("ForcedSink: prefix index out of range");
    taken_.push_back(idx);
    log_.push_back({agent.id, step, options[static_cast<std::size_t>(idx)].id, options});
    return idx;
  }

  const std::vector<int>& taken() const { return taken_; }
  const std::vector<DecisionPoint>& log() const { return log_; }

 private:
  std::vector<int> prefix_;
  std::vector<int> taken_;
  std::vector<DecisionPoint> log_;
};

}  // namespace

FutureDistribution enumerate_future(const Episode& ep, int agent_id, int t, int dt) {
  if (dt < 1) throw std::invalid_argument("enumerate_future: dt must be positive");
  if (t < 0 || t + dt >= ep.length())
    throw std::invalid_argument("enumerate_future: window exceeds episode");
  if (ep.visibility(agent_id, t) < ep.cfg.visibility_threshold)
    throw std::invalid_argument("enumerate_future: agent not visible at t");

  const AgentState start = ep.agent_at(agent_id, t);
  FutureDistribution dist;
  dist.agent_id = agent_id;
  long long leaves = 0;

  // Depth-first walk over decision prefixes. Each call replays one path
  // to the horizon; sibling expansion starts at the first decision past
  // the fixed prefix, so every branch combination is visited once.
  std::function<void(std::vector<int>, std::size_t)> explore =
      [&](std::vector<int> prefix, std::size_t fixed) {
        ForcedSink sink(std::move(prefix));
        AgentState s = start;
        for (int step = t; step < t + dt; ++step)
          s = step_agent(ep.map, ep.cfg, s, step, sink);
        if (++leaves > ep.cfg.branch_cap)
          throw std::runtime_error("enumerate_future: branch count exceeds cap of " +
                                   std::to_string(ep.cfg.branch_cap));
        double prob = 1.0;
        for (std::size_t d = 0; d < sink.log().size(); ++d)
          prob *= sink.log()[d]
                      .options[static_cast<std::size_t>(sink.taken()[d])]
                      .prob;
        const geom::BBox box = geom::apply_egomotion(
            ep.frames[static_cast<std::size_t>(t + dt)].view, world_box(s));
        bool merged = false;
        for (auto& o : dist.outcomes) {
          if (std::abs(o.box.x - box.x) < 1e-9 && std::abs(o.box.y - box.y) < 1e-9 &&
              std::abs(o.box.w - box.w) < 1e-9 && std::abs(o.box.h - box.h) < 1e-9) {
            o.prob += prob;
            merged = true;
            break;
          }
        }
        if (!merged) dist.outcomes.push_back({box, prob});

        const std::vector<int> taken = sink.taken();
        const auto& log = sink.log();
        for (std::size_t d = fixed; d < taken.size(); ++d)
          for (std::size_t j = 1; j < log[d].options.size(); ++j) {
            std::vector<int> next(taken.begin(), taken.begin() + static_cast<long>(d));
            next.push_back(static_cast<int>(j));
            explore(std::move(next), d + 1);
          }
      };

  explore({}, 0);

  double total = 0.0;
  for (const auto& o : dist.outcomes) total += o.prob;
  if (std::abs(total - 1.0) > 1e-9)
    throw std::logic_error("enumerate_future: probabilities sum to " +
                           std::to_string(total));
  std::stable_sort(dist.outcomes.begin(), dist.outcomes.end(),
                   [](const FutureOutcome& a, const FutureOutcome& b) {
                     if (a.prob != b.prob) return a.prob > b.prob;
                     if (a.box.x != b.box.x) return a.box.x < b.box.x;
                     return a.box.y < b.box.y;
                   });
  return dist;
}

std::vector<geom::BBox> emergence_events(const Episode& ep, int t, int dt,
                                         AgentClass cls) {
  if (t < 0 || dt < 1 || t + dt >= ep.length())
    throw std::invalid_argument("emergence_events: window exceeds episode");
  std::vector<geom::BBox> out;
  for (const auto& a : ep.frames[static_cast<std::size_t>(t)].agents) {
    if (a.cls != cls) continue;
    if (ep.visibility(a.id, t) >= ep.cfg.visibility_threshold) continue;
    if (ep.visibility(a.id, t + dt) < ep.cfg.visibility_threshold) continue;
    out.push_back(ep.image_box(a.id, t + dt));
  }
  return out;
}

void append_frame_encoding(const SemanticGrid& full, std::vector<double>& out) {
  append_one_hot(downsample_majority(full, kDownsampleFactor), kLabelCount, out);
}

void append_static_encoding(const SemanticGrid& statics, std::vector<double>& out) {
  append_one_hot(downsample_majority(statics, kDownsampleFactor), kStaticLabelCount,
                 out);
}

void append_box_mask(const geom::BBox& box, int view_w, int view_h,
                     std::vector<double>& out) {
  const int gw = view_w / kDownsampleFactor;
  const int gh = view_h / kDownsampleFactor;
  for (int cy = 0; cy < gh; ++cy)
    for (int cx = 0; cx < gw; ++cx) {
      const double x0 = cx * kDownsampleFactor;
      const double y0 = cy * kDownsampleFactor;
      const bool hit = box.w > 0 && box.h > 0 &&
                       box.x - box.w / 2 < x0 + kDownsampleFactor &&
                       box.x + box.w / 2 > x0 &&
                       box.y - box.h / 2 < y0 + kDownsampleFactor &&
                       box.y + box.h / 2 > y0;
      out.push_back(hit ? 1.0 : 0.0);
    }
}

geom::Egomotion composed_ego(const Episode& ep, int t, int dt) {
  if (t < 0 || dt < 0 || t + dt >= ep.length())
    throw std::invalid_argument("composed_ego: window exceeds episode");
  geom::Egomotion e;
  for (int s = t; s < t + dt; ++s)
    e = geom::compose(e, ep.frames[static_cast<std::size_t>(s)].ego);
  return e;
}

Tensor render_inputs(const Episode& ep, int agent_id, int t, int observe,
                     int horizon) {
  if (observe < 1) throw std::invalid_argument("render_inputs: observe must be >= 1");
  if (t - observe + 1 < 0)
    throw std::invalid_argument("render_inputs: observation window precedes episode");
  if (t + horizon >= ep.length())
    throw std::invalid_argument("render_inputs: horizon exceeds episode");
  if (agent_id >= 0) {
    for (int f = t - observe + 1; f <= t; ++f)
      if (ep.visibility(agent_id, f) < ep.cfg.visibility_threshold)
        throw std::invalid_argument("render_inputs: agent " + std::to_string(agent_id) +
                                    " not visible at frame " + std::to_string(f));
  }

  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(
      render_input_size(ep.cfg, observe, agent_id >= 0)));
  for (int f = t - observe + 1; f <= t; ++f) {
    append_frame_encoding(ep.frames[static_cast<std::size_t>(f)].full, values);
    if (agent_id >= 0)
      append_box_mask(ep.image_box(agent_id, f), ep.cfg.view_w, ep.cfg.view_h, values);
  }
  const geom::Egomotion e = composed_ego(ep, t, horizon);
  values.push_back(e.tx);
  values.push_back(e.ty);
  values.push_back(e.theta);
  values.push_back(e.scale);

  Tensor out;
  out.shape = {static_cast<int>(values.size())};
  out.values = std::move(values);
  return out;
}

int render_input_size(const WorldConfig& cfg, int observe, bool with_mask) {
  const int cells = (cfg.view_w / kDownsampleFactor) * (cfg.view_h / kDownsampleFactor);
  const int per_frame = kLabelCount * cells + (with_mask ? cells : 0);
  return observe * per_frame + 4;
}

}  // namespace mplab::world
