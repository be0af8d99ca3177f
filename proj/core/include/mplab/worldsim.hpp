#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mplab/geometry.hpp"
#include "mplab/grid.hpp"
#include "mplab/tensor.hpp"

namespace mplab::world {

// Scene pixels per feature-grid cell.
inline constexpr int kDownsampleFactor = 4;

struct WorldConfig {
  int view_w = 64;
  int view_h = 64;
  int margin = 16;  // world cells beyond the initial view on each side
  int episode_len = 40;
  int pedestrians = 2;
  int vehicles = 3;
  double p_cross = 0.5;             // pedestrian crossing probability per entry
  double vehicle_p_straight = 0.5;  // probability mass for going straight
  double ped_speed = 0.6;           // world cells per step
  double vehicle_speed = 1.5;
  double ego_zoom = 0.985;  // per-step view scale; < 1 widens the view
  double ego_drift = 0.25;  // per-step view drift upper bound, image px
  double visibility_threshold = 0.25;
  int branch_cap = 64;
  std::string scenario = "default";  // default | branching | straight

  int world_w() const { return view_w + 2 * margin; }
  int world_h() const { return view_h + 2 * margin; }
};

// Straight road strip along one axis. lo/hi is the cell range on the
// cross axis, a/b the extent along the main axis, both half open. A road
// ending at another road's band forms a T junction.
struct RoadSeg {
  bool vertical = false;
  int lo = 0;
  int hi = 0;
  int a = 0;
  int b = 0;
};

struct Rect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half open

  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
};

// Marked crossing on one junction arm. axis is the pedestrian travel
// direction while crossing: 0 walks along x (over a vertical road),
// 1 walks along y (over a horizontal road). road indexes the crossed road.
struct Zebra {
  int road = 0;
  int axis = 0;
  Rect rect;
};

struct WorldMap {
  int w = 0;
  int h = 0;
  SemanticGrid grid;
  std::vector<RoadSeg> roads;
  std::vector<Rect> junctions;
  std::vector<Zebra> zebras;
  std::vector<Rect> obstructions;
};

// Derives junctions, zebras, and the rasterized grid from roads and
// obstructions. Roads and obstructions must already be set.
void finalize_world(WorldMap& map);

WorldMap build_world(std::uint64_t seed, const WorldConfig& cfg);

// Static map only; convenience wrapper over build_world.
SemanticGrid generate_map(std::uint64_t seed, int w, int h);

enum class AgentClass : std::uint8_t { kPedestrian = 0, kVehicle = 1 };

enum class PolicyState : std::uint8_t {
  kWalking = 0,
  kCrossing = 1,
  kTurning = 2,
  kStopped = 3,
};

struct AgentState {
  int id = 0;
  AgentClass cls = AgentClass::kPedestrian;
  double px = 0.0, py = 0.0;    // world position, center
  double dirx = 0.0, diry = 0.0;  // unit heading
  double speed = 0.0;
  double w = 0.0, h = 0.0;  // world box extents
  PolicyState policy = PolicyState::kWalking;
  int road = 0;       // road currently walked or driven along
  int side = 0;       // pedestrians: -1 low-coordinate sidewalk, +1 other
  double sdirx = 0.0, sdiry = 0.0;  // heading to resume after a maneuver
  double tx = 0.0, ty = 0.0;        // maneuver target point
};

geom::BBox world_box(const AgentState& a);

struct BranchOption {
  int id = 0;
  double prob = 0.0;
};

struct DecisionPoint {
  int agent = 0;
  int step = 0;
  int chosen_id = 0;
  std::vector<BranchOption> options;
};

// Receives every stochastic policy branch. Returns the index into
// options of the outcome to take. Simulation draws via an rng-backed
// sink; enumeration substitutes forced choices.
struct DecisionSink {
  virtual ~DecisionSink() = default;
  virtual int choose(const AgentState& agent, int step,
                     const std::vector<BranchOption>& options) = 0;
};

// Draws from a stream keyed by (seed, agent id, step), so each decision
// is independent of evaluation order, and appends to the log.
class RngSink : public DecisionSink {
 public:
  RngSink(std::uint64_t seed, std::vector<DecisionPoint>* log)
      : seed_(seed), log_(log) {}
  int choose(const AgentState& agent, int step,
             const std::vector<BranchOption>& options) override;

 private:
  std::uint64_t seed_;
  std::vector<DecisionPoint>* log_;
};

// Advances one agent by one step. Decisions go through the sink; all
// other dynamics are deterministic and independent of other agents.
AgentState step_agent(const WorldMap& map, const WorldConfig& cfg,
                      const AgentState& agent, int step, DecisionSink& sink);

std::vector<AgentState> step_agents(const WorldMap& map, const WorldConfig& cfg,
                                    const std::vector<AgentState>& agents,
                                    int step, DecisionSink& sink);

std::vector<AgentState> spawn_agents(const WorldMap& map, const WorldConfig& cfg,
                                     std::uint64_t seed);

struct Frame {
  SemanticGrid full;     // view with agents stamped in
  SemanticGrid statics;  // view without agents
  std::vector<AgentState> agents;        // world coordinates
  geom::Egomotion ego;                   // view relation t -> t+1
  geom::Egomotion view;                  // world -> view at t
  std::vector<DecisionPoint> decisions;  // branches taken during t -> t+1
};

struct Episode {
  std::uint64_t seed = 0;
  WorldConfig cfg;
  WorldMap map;
  std::vector<Frame> frames;

  int length() const { return static_cast<int>(frames.size()); }
  const AgentState& agent_at(int agent_id, int t) const;
  geom::BBox image_box(int agent_id, int t) const;
  double visibility(int agent_id, int t) const;
};

SemanticGrid render_static(const WorldMap& map, const geom::Egomotion& view,
                           int view_w, int view_h);
SemanticGrid render_full(const WorldMap& map, const std::vector<AgentState>& agents,
                         const geom::Egomotion& view, int view_w, int view_h);

// Runs the world forward from prepared initial conditions. step_ego is
// the constant per-step view relation.
Episode simulate(const WorldMap& map, const WorldConfig& cfg,
                 std::vector<AgentState> initial, const geom::Egomotion& step_ego,
                 std::uint64_t seed);

Episode generate_episode(std::uint64_t seed, const WorldConfig& cfg);

struct FutureOutcome {
  geom::BBox box;  // in the view frame of t + dt
  double prob = 0.0;
};

struct FutureDistribution {
  int agent_id = 0;
  std::vector<FutureOutcome> outcomes;  // probabilities sum to 1
};

// Exhaustively expands every branch decision of one agent over
// (t, t + dt] and returns the exact reachable outcome distribution.
// Throws std::runtime_error when the branch count exceeds the cap.
FutureDistribution enumerate_future(const Episode& ep, int agent_id, int t, int dt);

// Boxes (view frame of t + dt) of agents of the class that are below the
// visibility threshold at t and at or above it at t + dt.
std::vector<geom::BBox> emergence_events(const Episode& ep, int t, int dt,
                                         AgentClass cls);

// Feature vector: per observed frame (oldest first) the one-hot encoded
// downsampled view and, when agent_id >= 0, a binary box mask plane;
// then the composed view relation t -> t + horizon as 4 values.
// agent_id < 0 renders agent-free features for emergence prediction.
Tensor render_inputs(const Episode& ep, int agent_id, int t, int observe,
                     int horizon);

// Feature vector length produced by render_inputs.
int render_input_size(const WorldConfig& cfg, int observe, bool with_mask);

// One frame's downsampled one-hot encoding (all labels), appended to out.
// render_inputs is built from these; exposed so training code can cache
// per-frame encodings.
void append_frame_encoding(const SemanticGrid& full, std::vector<double>& out);

// Same for the static grid, restricted to the static label channels.
void append_static_encoding(const SemanticGrid& statics, std::vector<double>& out);

// Binary mask plane on the downsampled lattice: 1 for cells whose block
// overlaps the box with positive area.
void append_box_mask(const geom::BBox& box, int view_w, int view_h,
                     std::vector<double>& out);

// View relation composed over [t, t + dt), i.e. from frame t to t + dt.
geom::Egomotion composed_ego(const Episode& ep, int t, int dt);

}  // namespace mplab::world
