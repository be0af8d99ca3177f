#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mplab/config.hpp"
#include "mplab/ewta.hpp"
#include "mplab/mixture.hpp"
#include "mplab/tinynet.hpp"
#include "mplab/worldsim.hpp"

namespace mplab::pipeline {

struct TrainLogEntry {
  long long step = 0;
  int stage_k = 0;  // EWTA winner count, mixture size, or 0 for plain regression
  double loss = 0.0;
};

struct TrainLog {
  std::vector<TrainLogEntry> entries;
  long long skipped = 0;  // samples dropped for failing the visibility window

  std::string to_text() const;
};

world::AgentClass parse_class(const std::string& name);

// Hidden stack shared by every model: train_layers relu layers of width
// train_hidden with dropout, then a linear output layer.
std::vector<nn::LayerSpec> mlp_specs(int in, int out, const cfg::RunConfig& c);

// Predicts where agents of one class can sit in a scene, from the static
// view alone. Output head holds `hypotheses` boxes.
struct RpnModel {
  nn::Network net;
  std::string cls;
  int hypotheses = 0;
  int view_w = 0, view_h = 0;
};

// Carries the reachability boxes of frame t into the view of t + dt,
// given the planned view change. Embeds the upstream RpnModel so the
// full prior chain travels as one unit.
struct RtnModel {
  nn::Network net;
  RpnModel rpn;
};

// Localizes one observed agent dt steps ahead: a sampling head trained
// under the shrinking-winner scheme plus a fitting head that turns the
// frozen hypotheses into a mixture. The bayesian variant replaces the
// hypothesis head with a single-box head sampled through dropout.
struct FlnModel {
  nn::Network sampling;
  nn::Network fitting;  // unused when bayesian
  RtnModel prior;       // unused when use_prior is false
  std::string cls;
  int hypotheses = 0, k = 0, observe = 0, horizon = 0;
  bool use_prior = true;
  bool bayesian = false;
  int view_w = 0, view_h = 0;
};

// Same two-head scheme predicting where unseen agents of a class will
// have entered the view dt steps ahead; no object mask in the input.
struct EpnModel {
  nn::Network sampling;
  nn::Network fitting;
  RtnModel prior;
  std::string cls;
  int hypotheses = 0, k = 0, horizon = 0;
  int view_w = 0, view_h = 0;
};

// Input feature widths, fixed by the view size and window lengths.
int rpn_input_size(const cfg::RunConfig& c);
int rtn_input_size(const cfg::RunConfig& c);
int fln_input_size(const cfg::RunConfig& c);
int epn_input_size(const cfg::RunConfig& c);

struct GridSample {
  std::vector<double> input;       // static view encoding
  std::vector<geom::BBox> gts;     // boxes of the class in that view
};

// One sample per frame holding at least one sufficiently visible agent
// of the class; frames without one are skipped.
std::vector<GridSample> build_rpn_dataset(const std::vector<world::Episode>& eps,
                                          const std::string& cls);

RpnModel train_rpn(const std::vector<GridSample>& dataset,
                   const cfg::RunConfig& c, std::uint64_t seed,
                   TrainLog* log = nullptr);

// Eval-mode reachability boxes for a static view.
ewta::HypothesisSet rpn_boxes(const RpnModel& m, const world::SemanticGrid& statics);

// Self-supervision target for the transfer net: the reachability boxes
// of the static view at t + dt.
ewta::HypothesisSet rtn_targets(const RpnModel& m, const world::Episode& ep,
                                int t, int dt);

RtnModel train_rtn(const RpnModel& rpn, const std::vector<world::Episode>& eps,
                   const cfg::RunConfig& c, std::uint64_t seed,
                   TrainLog* log = nullptr);

// Full prior chain at inference time: reachability at t, carried to the
// view of t + dt.
ewta::HypothesisSet transferred_prior(const RtnModel& m, const world::Episode& ep,
                                      int t, int dt);

FlnModel train_fln(const RtnModel& rtn, const std::vector<world::Episode>& eps,
                   const cfg::RunConfig& c, std::uint64_t seed,
                   TrainLog* log = nullptr);

EpnModel train_epn(const RtnModel& rtn, const std::vector<world::Episode>& eps,
                   const cfg::RunConfig& c, std::uint64_t seed,
                   TrainLog* log = nullptr);

// Assembled input rows for the two predictors.
std::vector<double> fln_input(const FlnModel& m, const world::Episode& ep,
                              int agent_id, int t);
std::vector<double> epn_input(const EpnModel& m, const world::Episode& ep, int t);

struct Prediction {
  ewta::HypothesisSet hyps;
  mix::GaussianMixture mixture;
};

// Eval-mode forward of both heads. Deterministic; the seed only matters
// for the bayesian variant, whose samples come from dropout.
Prediction predict(const FlnModel& m, const std::vector<double>& input,
                   std::uint64_t seed = 0);
Prediction predict(const EpnModel& m, const std::vector<double>& input);

// Hypothesis set viewed as a mixture: uniform weights, shared isotropic
// sigma. The reference point for "the predictor beats its own prior".
mix::GaussianMixture boxes_as_mixture(const ewta::HypothesisSet& hyps,
                                      double sigma);

void save_rpn(const RpnModel& m, const std::filesystem::path& path);
RpnModel load_rpn(const std::filesystem::path& path);
void save_rtn(const RtnModel& m, const std::filesystem::path& path);
RtnModel load_rtn(const std::filesystem::path& path);
void save_fln(const FlnModel& m, const std::filesystem::path& path);
FlnModel load_fln(const std::filesystem::path& path);
void save_epn(const EpnModel& m, const std::filesystem::path& path);
EpnModel load_epn(const std::filesystem::path& path);

}  // namespace mplab::pipeline
