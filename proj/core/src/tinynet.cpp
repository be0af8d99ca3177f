#include "mplab/tinynet.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "mplab/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace mplab::nn {

namespace {

void check_specs(const std::vector<LayerSpec>& specs) {
  if (specs.empty()) throw std::invalid_argument("init_network: no layers");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].in <= 0 || specs[i].out <= 0)
      throw std::invalid_argument("init_network: non-positive layer size");
    if (specs[i].dropout < 0.0 || specs[i].dropout >= 1.0)
      throw std::invalid_argument("init_network: dropout outside [0, 1)");
    if (i > 0 && specs[i].in != specs[i - 1].out)
      throw std::invalid_argument("init_network: layer sizes do not chain");
  }
}

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
as_matrix(const Tensor& t, int& batch) {
  if (t.rank() == 1) {
    batch = 1;
    return {t.values.data(), 1, t.shape[0]};
  }
  if (t.rank() == 2) {
    batch = t.shape[0];
    return {t.values.data(), t.shape[0], t.shape[1]};
  }
  throw std::invalid_argument("forward: input rank must be 1 or 2");
}

}  // namespace

int Network::input_size() const {
  if (layers.empty()) throw std::logic_error("Network: empty");
  return static_cast<int>(layers.front().W.rows());
}

int Network::output_size() const {
  if (layers.empty()) throw std::logic_error("Network: empty");
  return static_cast<int>(layers.back().W.cols());
}

long long Network::parameter_count() const {
  long long n = 0;
  for (const auto& l : layers) n += l.W.size() + l.b.size();
  return n;
}

Network init_network(const std::vector<LayerSpec>& specs, std::uint64_t seed) {
  check_specs(specs);
  Network net;
  net.layers.resize(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    auto& layer = net.layers[i];
    const auto& spec = specs[i];
    layer.relu = spec.relu;
    layer.dropout = spec.dropout;
    layer.W.resize(spec.in, spec.out);
    layer.b = Eigen::RowVectorXd::Zero(spec.out);
    const double limit = std::sqrt(6.0 / (spec.in + spec.out));
    rng::SplitMix64 gen(rng::mix(seed, static_cast<std::uint64_t>(i)));
    for (int r = 0; r < spec.in; ++r)
      for (int c = 0; c < spec.out; ++c)
        layer.W(r, c) = gen.uniform(-limit, limit);
  }
  return net;
}

Tensor forward(const Network& net, const Tensor& input, Mode mode,
               std::uint64_t seed, Tape* tape) {
  if (net.layers.empty()) throw std::logic_error("forward: empty network");
  int batch = 0;
  const auto x = as_matrix(input, batch);
  if (x.cols() != net.input_size())
    throw std::invalid_argument("forward: input has " + std::to_string(x.cols()) +
                                " features, network expects " +
                                std::to_string(net.input_size()));

  if (tape) {
    tape->train = (mode == Mode::kTrain);
    tape->input = x;
    tape->pre.assign(net.layers.size(), {});
    tape->post.assign(net.layers.size(), {});
    tape->mask.assign(net.layers.size(), {});
  }

  const bool drop_active = (mode == Mode::kTrain) || net.bayesian;
  Eigen::MatrixXd act = x;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    Eigen::MatrixXd z = act * layer.W;
    z.rowwise() += layer.b;
    if (tape) tape->pre[l] = z;
    if (layer.relu) z = z.cwiseMax(0.0);
    if (layer.dropout > 0.0 && drop_active) {
      const double keep = 1.0 - layer.dropout;
      rng::SplitMix64 gen(rng::mix(seed, 0x6d61736bull, static_cast<std::uint64_t>(l)));
      Eigen::MatrixXd mask(z.rows(), z.cols());
      for (Eigen::Index r = 0; r < z.rows(); ++r)
        for (Eigen::Index c = 0; c < z.cols(); ++c)
          mask(r, c) = gen.uniform01() < layer.dropout ? 0.0 : 1.0 / keep;
      z = z.cwiseProduct(mask);
      if (tape) tape->mask[l] = std::move(mask);
    }
    if (tape) tape->post[l] = z;
    act = std::move(z);
  }

  Tensor out;
  if (input.rank() == 1) {
    out.shape = {static_cast<int>(act.cols())};
  } else {
    out.shape = {batch, static_cast<int>(act.cols())};
  }
  out.values.resize(static_cast<std::size_t>(act.size()));
  for (Eigen::Index r = 0; r < act.rows(); ++r)
    for (Eigen::Index c = 0; c < act.cols(); ++c)
      out.values[static_cast<std::size_t>(r) * act.cols() + c] = act(r, c);
  return out;
}

Gradients backward(const Network& net, const Tape& tape, const Tensor& dout) {
  if (!tape.train)
    throw std::logic_error("backward: requires a tape from a train-mode forward");
  if (tape.post.size() != net.layers.size())
    throw std::logic_error("backward: tape does not match network");
  int batch = 0;
  const auto dy = as_matrix(dout, batch);
  if (dy.rows() != tape.input.rows() || dy.cols() != net.output_size())
    throw std::invalid_argument("backward: dout shape mismatch");

  Gradients grads;
  grads.dW.resize(net.layers.size());
  grads.db.resize(net.layers.size());

  Eigen::MatrixXd d = dy;
  for (int l = static_cast<int>(net.layers.size()) - 1; l >= 0; --l) {
    const auto& layer = net.layers[static_cast<std::size_t>(l)];
    if (layer.dropout > 0.0 && tape.mask[static_cast<std::size_t>(l)].size() > 0)
      d = d.cwiseProduct(tape.mask[static_cast<std::size_t>(l)]);
    if (layer.relu)
      d = d.cwiseProduct(
          (tape.pre[static_cast<std::size_t>(l)].array() > 0.0).cast<double>().matrix());
    const Eigen::MatrixXd& below =
        l == 0 ? tape.input : tape.post[static_cast<std::size_t>(l) - 1];
    grads.dW[static_cast<std::size_t>(l)] = below.transpose() * d;
    grads.db[static_cast<std::size_t>(l)] = d.colwise().sum();
    if (l > 0) d = d * layer.W.transpose();
  }
  return grads;
}

void adam_step(Network& net, const Gradients& grads, AdamState& state,
               const AdamConfig& cfg) {
  if (grads.dW.size() != net.layers.size())
    throw std::invalid_argument("adam_step: gradient layer count mismatch");
  if (state.mW.empty()) {
    state.mW.resize(net.layers.size());
    state.vW.resize(net.layers.size());
    state.mb.resize(net.layers.size());
    state.vb.resize(net.layers.size());
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      state.mW[l] = Eigen::MatrixXd::Zero(net.layers[l].W.rows(), net.layers[l].W.cols());
      state.vW[l] = Eigen::MatrixXd::Zero(net.layers[l].W.rows(), net.layers[l].W.cols());
      state.mb[l] = Eigen::RowVectorXd::Zero(net.layers[l].b.size());
      state.vb[l] = Eigen::RowVectorXd::Zero(net.layers[l].b.size());
    }
  }
  state.step += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    if (!grads.dW[l].allFinite() || !grads.db[l].allFinite())
      throw std::runtime_error("adam_step: non-finite gradient in layer " +
                               std::to_string(l));
    auto& layer = net.layers[l];
    state.mW[l] = cfg.beta1 * state.mW[l] + (1.0 - cfg.beta1) * grads.dW[l];
    state.vW[l] = cfg.beta2 * state.vW[l] +
                  (1.0 - cfg.beta2) * grads.dW[l].cwiseProduct(grads.dW[l]);
    state.mb[l] = cfg.beta1 * state.mb[l] + (1.0 - cfg.beta1) * grads.db[l];
    state.vb[l] = cfg.beta2 * state.vb[l] +
                  (1.0 - cfg.beta2) * grads.db[l].cwiseProduct(grads.db[l]);
    layer.W -= (cfg.lr / c1) * state.mW[l].cwiseQuotient(
                                   ((state.vW[l] / c2).cwiseSqrt().array() + cfg.eps).matrix());
    layer.b -= (cfg.lr / c1) * state.mb[l].cwiseQuotient(
                                   ((state.vb[l] / c2).cwiseSqrt().array() + cfg.eps).matrix());
    if (!layer.W.allFinite() || !layer.b.allFinite())
      throw std::runtime_error("adam_step: non-finite parameters in layer " +
                               std::to_string(l));
  }
}

namespace {

constexpr char kMagic[] = "MPLAB-CK v1\n";

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

double read_f64(std::istream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const std::uint32_t len = read_u32(in);
  if (len > (1u << 20)) throw std::runtime_error("checkpoint: implausible string length");
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

}  // namespace

void save_network(std::ostream& out, const Network& net) {
  write_u32(out, static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& layer : net.layers) {
    write_u32(out, static_cast<std::uint32_t>(layer.W.rows()));
    write_u32(out, static_cast<std::uint32_t>(layer.W.cols()));
    out.put(layer.relu ? 1 : 0);
    write_f64(out, layer.dropout);
  }
  out.put(net.bayesian ? 1 : 0);
  std::vector<double> buffer;
  for (const auto& layer : net.layers) {
    buffer.resize(static_cast<std::size_t>(layer.W.size()));
    std::size_t idx = 0;
    for (Eigen::Index r = 0; r < layer.W.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.W.cols(); ++c) buffer[idx++] = layer.W(r, c);
    out.write(reinterpret_cast<const char*>(buffer.data()),
              static_cast<std::streamsize>(buffer.size() * sizeof(double)));
    for (Eigen::Index c = 0; c < layer.b.size(); ++c) write_f64(out, layer.b(c));
  }
}

Network load_network(std::istream& in) {
  const std::uint32_t count = read_u32(in);
  if (count == 0 || count > 1024) throw std::runtime_error("checkpoint: bad layer count");
  Network net;
  net.layers.resize(count);
  for (auto& layer : net.layers) {
    const std::uint32_t rows = read_u32(in);
    const std::uint32_t cols = read_u32(in);
    if (rows == 0 || cols == 0 || static_cast<std::uint64_t>(rows) * cols > (1ull << 28))
      throw std::runtime_error("checkpoint: bad layer shape");
    layer.relu = in.get() == 1;
    layer.dropout = read_f64(in);
    layer.W.resize(rows, cols);
    layer.b.resize(cols);
  }
  net.bayesian = in.get() == 1;
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  std::vector<double> buffer;
  for (auto& layer : net.layers) {
    buffer.resize(static_cast<std::size_t>(layer.W.size()));
    in.read(reinterpret_cast<char*>(buffer.data()),
            static_cast<std::streamsize>(buffer.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    std::size_t idx = 0;
    for (Eigen::Index r = 0; r < layer.W.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.W.cols(); ++c) layer.W(r, c) = buffer[idx++];
    for (Eigen::Index c = 0; c < layer.b.size(); ++c) layer.b(c) = read_f64(in);
  }
  return net;
}

const Network& ModelFile::net(const std::string& name) const {
  for (const auto& [n, network] : nets)
    if (n == name) return network;
  throw std::runtime_error("checkpoint: missing network '" + name + "'");
}

const std::string& ModelFile::meta_value(const std::string& key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return v;
  throw std::runtime_error("checkpoint: missing metadata '" + key + "'");
}

void save_model_file(const std::filesystem::path& path, const ModelFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof(kMagic) - 1);
  write_u32(out, static_cast<std::uint32_t>(file.meta.size()));
  for (const auto& [k, v] : file.meta) {
    write_string(out, k);
    write_string(out, v);
  }
  write_u32(out, static_cast<std::uint32_t>(file.nets.size()));
  for (const auto& [name, net] : file.nets) {
    write_string(out, name);
    save_network(out, net);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

ModelFile load_model_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[sizeof(kMagic) - 1];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  ModelFile file;
  const std::uint32_t meta_count = read_u32(in);
  if (meta_count > 1024) throw std::runtime_error("checkpoint: implausible metadata count");
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    std::string k = read_string(in);
    std::string v = read_string(in);
    file.meta.emplace_back(std::move(k), std::move(v));
  }
  const std::uint32_t net_count = read_u32(in);
  if (net_count > 64) throw std::runtime_error("checkpoint: implausible network count");
  for (std::uint32_t i = 0; i < net_count; ++i) {
    std::string name = read_string(in);
    file.nets.emplace_back(std::move(name), load_network(in));
  }
  return file;
}

}  // namespace mplab::nn
