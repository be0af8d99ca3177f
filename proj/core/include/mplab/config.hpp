#pragma once

#include <string>
#include <vector>

#include "mplab/worldsim.hpp"

namespace mplab::cfg {

// Every tunable of the toolchain, grouped by dotted prefix in the config
// file. Defaults reproduce the benchmark setup.
struct RunConfig {
  world::WorldConfig world;

  int gen_episodes = 64;  // episodes written by the generator

  // Winner counts per training stage, descending to 1. The first entry
  // is the hypothesis count N of every sampling head.
  std::string ewta_stages = "20,10,5,2,1";
  int ewta_steps_per_stage = 2000;

  int train_batch = 32;
  double train_lr = 1e-3;
  int train_hidden = 256;  // width of each sampling-head hidden layer
  int train_layers = 3;    // sampling-head hidden layer count
  double train_dropout = 0.1;
  int train_fit_hidden = 500;  // width of the two fitting-head layers
  int train_fit_steps = 2000;

  std::string rpn_class = "ped";  // ped | veh

  int fln_k = 4;  // mixture components
  int fln_observe = 5;
  int fln_horizon = 15;
  bool fln_use_prior = true;
  bool fln_bayesian = false;  // dropout-sampling variant

  int epn_k = 8;
  int epn_horizon = 5;
  std::string epn_class = "ped";

  int eval_episodes = 16;  // held-out tail of the generated set
  // Comma-separated selection from {kalman, linear, fln, fln_noprior,
  // fln_bayes}; "auto" picks the baselines plus every checkpoint found.
  std::string eval_methods = "auto";
};

// Flat key = value text, one pair per line, '#' comments. Unknown keys
// and unparsable values raise std::invalid_argument naming the key.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Emits every key with its current value; parse(serialize(c)) == c.
std::string serialize_config(const RunConfig& c);

// Stage list parsed from ewta_stages. Throws std::invalid_argument when
// the list is malformed (non-numeric, not strictly decreasing, or not
// ending at 1).
std::vector<int> ewta_stage_list(const RunConfig& c);

// First entry of the stage list: the hypothesis count N.
int hypothesis_count(const RunConfig& c);

// Range checks plus the branch-budget rule: the worst-case number of
// enumerable outcomes inside one prediction window must fit the
// enumeration cap. Throws std::invalid_argument describing the failure.
void validate_config(const RunConfig& c);

// Worst-case outcome count for one agent over a dt-step window, from the
// minimum spacing of decision zones along a road.
long long worst_case_outcomes(const RunConfig& c, int dt);

}  // namespace mplab::cfg
