#include "mplab/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace mplab::cfg {

namespace {

struct Key {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

long long to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': '" + v +
                                "' is not an integer");
  }
  if (used != v.size())
    throw std::invalid_argument("config key '" + key + "': '" + v +
                                "' is not an integer");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': '" + v +
                                "' is not a number");
  }
  if (used != v.size())
    throw std::invalid_argument("config key '" + key + "': '" + v +
                                "' is not a number");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw std::invalid_argument("config key '" + key + "': '" + v +
                              "' is not a boolean (0/1/true/false)");
}

std::string num(double v) {
  char buf[48];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

#define INT_KEY(name, field)                                              \
  Key {                                                                   \
    name,                                                                 \
        [](RunConfig& c, const std::string& v) {                          \
          c.field = static_cast<int>(to_int(name, v));                    \
        },                                                                \
        [](const RunConfig& c) { return std::to_string(c.field); }        \
  }
#define DBL_KEY(name, field)                                              \
  Key {                                                                   \
    name,                                                                 \
        [](RunConfig& c, const std::string& v) {                          \
          c.field = to_double(name, v);                                   \
        },                                                                \
        [](const RunConfig& c) { return num(c.field); }                   \
  }
#define BOOL_KEY(name, field)                                             \
  Key {                                                                   \
    name,                                                                 \
        [](RunConfig& c, const std::string& v) {                          \
          c.field = to_bool(name, v);                                     \
        },                                                                \
        [](const RunConfig& c) { return c.field ? "1" : "0"; }            \
  }
#define STR_KEY(name, field)                                              \
  Key {                                                                   \
    name, [](RunConfig& c, const std::string& v) { c.field = v; },        \
        [](const RunConfig& c) { return c.field; }                        \
  }

const std::vector<Key>& registry() {
  static const std::vector<Key> keys = {
      INT_KEY("world.view_w", world.view_w),
      INT_KEY("world.view_h", world.view_h),
      INT_KEY("world.margin", world.margin),
      INT_KEY("world.episode_len", world.episode_len),
      INT_KEY("world.pedestrians", world.pedestrians),
      INT_KEY("world.vehicles", world.vehicles),
      DBL_KEY("world.p_cross", world.p_cross),
      DBL_KEY("world.vehicle_p_straight", world.vehicle_p_straight),
      DBL_KEY("world.ped_speed", world.ped_speed),
      DBL_KEY("world.vehicle_speed", world.vehicle_speed),
      DBL_KEY("world.ego_zoom", world.ego_zoom),
      DBL_KEY("world.ego_drift", world.ego_drift),
      DBL_KEY("world.visibility_threshold", world.visibility_threshold),
      INT_KEY("world.branch_cap", world.branch_cap),
      STR_KEY("world.scenario", world.scenario),
      INT_KEY("gen.episodes", gen_episodes),
      STR_KEY("ewta.stages", ewta_stages),
      INT_KEY("ewta.steps_per_stage", ewta_steps_per_stage),
      INT_KEY("train.batch", train_batch),
      DBL_KEY("train.lr", train_lr),
      INT_KEY("train.hidden", train_hidden),
      INT_KEY("train.layers", train_layers),
      DBL_KEY("train.dropout", train_dropout),
      INT_KEY("train.fit_hidden", train_fit_hidden),
      INT_KEY("train.fit_steps", train_fit_steps),
      STR_KEY("rpn.class", rpn_class),
      INT_KEY("fln.k", fln_k),
      INT_KEY("fln.observe", fln_observe),
      INT_KEY("fln.horizon", fln_horizon),
      BOOL_KEY("fln.use_prior", fln_use_prior),
      BOOL_KEY("fln.bayesian", fln_bayesian),
      INT_KEY("epn.k", epn_k),
      INT_KEY("epn.horizon", epn_horizon),
      STR_KEY("epn.class", epn_class),
      INT_KEY("eval.episodes", eval_episodes),
      STR_KEY("eval.methods", eval_methods),
  };
  return keys;
}

#undef INT_KEY
#undef DBL_KEY
#undef BOOL_KEY
#undef STR_KEY

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

void check(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument("config: " + message);
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value, got '" + stripped + "'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    bool found = false;
    for (const auto& k : registry()) {
      if (key == k.name) {
        k.set(c, value);
        found = true;
        break;
      }
    }
    if (!found)
      throw std::invalid_argument("unknown config key '" + key + "' (line " +
                                  std::to_string(line_no) + ")");
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const RunConfig& c) {
  std::string out;
  for (const auto& k : registry()) {
    out += k.name;
    out += " = ";
    out += k.get(c);
    out += '\n';
  }
  return out;
}

std::vector<int> ewta_stage_list(const RunConfig& c) {
  std::vector<int> stages;
  std::istringstream is(c.ewta_stages);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    int v = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size())
      throw std::invalid_argument("config: ewta.stages holds a non-integer '" +
                                  item + "'");
    stages.push_back(v);
  }
  if (stages.empty())
    throw std::invalid_argument("config: ewta.stages must list at least one stage");
  if (stages.back() != 1)
    throw std::invalid_argument("config: ewta.stages must end at 1");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (stages[i] < 1)
      throw std::invalid_argument("config: ewta.stages entries must be >= 1");
    if (i > 0 && stages[i] >= stages[i - 1])
      throw std::invalid_argument("config: ewta.stages must strictly decrease");
  }
  return stages;
}

int hypothesis_count(const RunConfig& c) { return ewta_stage_list(c).front(); }

long long worst_case_outcomes(const RunConfig& c, int dt) {
  // Consecutive pedestrian decision zones along a road are 8 cells apart
  // (zebra band plus junction width); vehicle junction entries are at
  // least 14 cells apart. Each pedestrian entry doubles the outcomes,
  // each vehicle entry at most triples them.
  const double ped_travel = dt * c.world.ped_speed;
  const double veh_travel = dt * c.world.vehicle_speed;
  const long long ped_entries = static_cast<long long>(ped_travel / 8.0) + 1;
  const long long veh_entries = static_cast<long long>(veh_travel / 14.0) + 1;
  long long ped_outcomes = 1, veh_outcomes = 1;
  for (long long i = 0; i < ped_entries && ped_outcomes < (1ll << 40); ++i)
    ped_outcomes *= 2;
  for (long long i = 0; i < veh_entries && veh_outcomes < (1ll << 40); ++i)
    veh_outcomes *= 3;
  return std::max(ped_outcomes, veh_outcomes);
}

void validate_config(const RunConfig& c) {
  check(c.world.view_w > 0 && c.world.view_h > 0, "view dimensions must be positive");
  check(c.world.view_w % world::kDownsampleFactor == 0 &&
            c.world.view_h % world::kDownsampleFactor == 0,
        "view dimensions must be divisible by " +
            std::to_string(world::kDownsampleFactor));
  check(c.world.margin >= 0, "world.margin must be >= 0");
  check(c.world.episode_len >= 2, "world.episode_len must be >= 2");
  check(c.world.pedestrians >= 0 && c.world.vehicles >= 0,
        "agent counts must be >= 0");
  check(c.world.p_cross >= 0.0 && c.world.p_cross <= 1.0,
        "world.p_cross must lie in [0, 1]");
  check(c.world.vehicle_p_straight >= 0.0 && c.world.vehicle_p_straight <= 1.0,
        "world.vehicle_p_straight must lie in [0, 1]");
  check(c.world.ped_speed > 0.0 && c.world.vehicle_speed > 0.0,
        "agent speeds must be positive");
  check(c.world.ego_zoom > 0.0, "world.ego_zoom must be positive");
  check(c.world.ego_drift >= 0.0, "world.ego_drift must be >= 0");
  check(c.world.visibility_threshold > 0.0 && c.world.visibility_threshold <= 1.0,
        "world.visibility_threshold must lie in (0, 1]");
  check(c.world.branch_cap >= 1, "world.branch_cap must be >= 1");
  check(c.world.scenario == "default" || c.world.scenario == "branching" ||
            c.world.scenario == "straight",
        "world.scenario must be default, branching or straight");
  check(c.gen_episodes >= 1, "gen.episodes must be >= 1");
  ewta_stage_list(c);
  check(c.ewta_steps_per_stage >= 1, "ewta.steps_per_stage must be >= 1");
  check(c.train_batch >= 1, "train.batch must be >= 1");
  check(c.train_lr > 0.0, "train.lr must be positive");
  check(c.train_hidden >= 1 && c.train_layers >= 1,
        "network layout must have >= 1 hidden layer of width >= 1");
  check(c.train_dropout >= 0.0 && c.train_dropout < 1.0,
        "train.dropout must lie in [0, 1)");
  check(c.train_fit_hidden >= 1, "train.fit_hidden must be >= 1");
  check(c.train_fit_steps >= 1, "train.fit_steps must be >= 1");
  check(c.rpn_class == "ped" || c.rpn_class == "veh",
        "rpn.class must be ped or veh");
  check(c.epn_class == "ped" || c.epn_class == "veh",
        "epn.class must be ped or veh");
  check(c.fln_k >= 1 && c.epn_k >= 1, "mixture sizes must be >= 1");
  check(c.fln_k <= hypothesis_count(c) && c.epn_k <= hypothesis_count(c),
        "mixture sizes cannot exceed the hypothesis count");
  check(c.fln_observe >= 1, "fln.observe must be >= 1");
  check(c.fln_horizon >= 1 && c.epn_horizon >= 1, "horizons must be >= 1");
  check(c.fln_observe + c.fln_horizon <= c.world.episode_len,
        "fln.observe + fln.horizon must fit within world.episode_len");
  check(1 + c.epn_horizon <= c.world.episode_len,
        "epn.horizon must fit within world.episode_len");
  check(c.eval_episodes >= 1, "eval.episodes must be >= 1");
  check(c.eval_episodes < c.gen_episodes,
        "eval.episodes must leave at least one training episode");
  check(!c.eval_methods.empty(), "eval.methods must not be empty");
  {
    std::istringstream is(c.eval_methods);
    std::string m;
    while (std::getline(is, m, ',')) {
      if (m.empty()) continue;
      check(m == "auto" || m == "kalman" || m == "linear" || m == "fln" ||
                m == "fln_noprior" || m == "fln_bayes",
            "eval.methods holds unknown method '" + m + "'");
    }
  }

  const int dt = std::max(c.fln_horizon, c.epn_horizon);
  const long long worst = worst_case_outcomes(c, dt);
  if (worst > c.world.branch_cap)
    throw std::invalid_argument(
        "config: branch depth over a " + std::to_string(dt) +
        "-step window allows up to " + std::to_string(worst) +
        " outcomes, above world.branch_cap = " +
        std::to_string(c.world.branch_cap));
}

}  // namespace mplab::cfg
