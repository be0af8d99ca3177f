#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "mplab/tensor.hpp"

namespace mplab::nn {

struct LayerSpec {
  int in = 0;
  int out = 0;
  bool relu = false;
  double dropout = 0.0;
};

struct Layer {
  Eigen::MatrixXd W;       // in x out
  Eigen::RowVectorXd b;    // 1 x out
  bool relu = false;
  double dropout = 0.0;
};

struct Network {
  std::vector<Layer> layers;
  // When set, dropout stays active in eval-mode forwards, which turns
  // repeated forwards with different seeds into posterior samples.
  bool bayesian = false;

  int input_size() const;
  int output_size() const;
  long long parameter_count() const;
};

// Glorot-uniform weights, zero biases. Deterministic for a fixed seed.
Network init_network(const std::vector<LayerSpec>& specs, std::uint64_t seed);

enum class Mode { kTrain, kEval };

// Activation record of one forward pass, consumed by backward().
struct Tape {
  bool train = false;
  Eigen::MatrixXd input;
  std::vector<Eigen::MatrixXd> pre;   // per layer, before relu
  std::vector<Eigen::MatrixXd> post;  // per layer, after relu and dropout
  std::vector<Eigen::MatrixXd> mask;  // dropout scales, empty when unused
};

// Input is [features] or [batch, features]; the output keeps the rank.
// The seed drives dropout masks and has no effect when no dropout fires.
Tensor forward(const Network& net, const Tensor& input, Mode mode,
               std::uint64_t seed, Tape* tape = nullptr);

struct Gradients {
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::RowVectorXd> db;
};

// d loss / d parameters given d loss / d output. Requires a tape recorded
// by a train-mode forward; throws std::logic_error otherwise.
Gradients backward(const Network& net, const Tape& tape, const Tensor& dout);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Eigen::MatrixXd> mW, vW;
  std::vector<Eigen::RowVectorXd> mb, vb;
  long long step = 0;
};

// Bias-corrected Adam update. Throws std::runtime_error on non-finite
// gradients or parameters, naming the offending layer.
void adam_step(Network& net, const Gradients& grads, AdamState& state,
               const AdamConfig& cfg);

// Named networks plus string metadata, stored in the binary checkpoint
// format (magic "MPLAB-CK v1", layer size table, little-endian f64
// parameters). Round-trips bit-exactly.
struct ModelFile {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, Network>> nets;

  const Network& net(const std::string& name) const;
  const std::string& meta_value(const std::string& key) const;
};

void save_network(std::ostream& out, const Network& net);
Network load_network(std::istream& in);

void save_model_file(const std::filesystem::path& path, const ModelFile& file);
ModelFile load_model_file(const std::filesystem::path& path);

}  // namespace mplab::nn
