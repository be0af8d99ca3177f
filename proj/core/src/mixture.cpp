#include "mplab/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mplab/rng.hpp"

#include <json.hpp>

namespace mplab::mix {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

std::array<double, 4> to_vec4(const geom::BBox& b) { return {b.x, b.y, b.w, b.h}; }

geom::BBox from_vec4(const std::array<double, 4>& v) { return {v[0], v[1], v[2], v[3]}; }

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_component_density(const GaussianMixture& m, int k, const std::array<double, 4>& x) {
  const auto mu = to_vec4(m.means[k]);
  double acc = 0.0;
  for (int d = 0; d < 4; ++d) {
    const double s = m.sigmas[k][d];
    const double z = (x[d] - mu[d]) / s;
    acc += -0.5 * kLog2Pi - std::log(s) - 0.5 * z * z;
  }
  return acc;
}

// log(sum_k w_k exp(log_p_k)) and the posterior responsibilities.
double log_mixture_density(const GaussianMixture& m, const std::array<double, 4>& x,
                           std::vector<double>* resp) {
  const int k = m.k();
  std::vector<double> terms(k);
  double top = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i) {
    terms[i] = std::log(m.weights[i]) + log_component_density(m, i, x);
    top = std::max(top, terms[i]);
  }
  double sum = 0.0;
  for (int i = 0; i < k; ++i) sum += std::exp(terms[i] - top);
  const double log_density = top + std::log(sum);
  if (resp) {
    resp->resize(k);
    for (int i = 0; i < k; ++i) (*resp)[i] = std::exp(terms[i] - log_density);
  }
  return log_density;
}

}  // namespace

void validate(const GaussianMixture& m) {
  const std::size_t k = m.weights.size();
  if (k == 0) throw std::invalid_argument("mixture: no components");
  if (m.means.size() != k || m.sigmas.size() != k)
    throw std::invalid_argument("mixture: component lists disagree in length");
  double sum = 0.0;
  for (double w : m.weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("mixture: negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw std::invalid_argument("mixture: weights sum to " + std::to_string(sum));
  for (const auto& s : m.sigmas)
    for (double v : s)
      if (!(v >= kSigmaFloor))
        throw std::invalid_argument("mixture: sigma below floor");
}

double nll(const GaussianMixture& m, const geom::BBox& x) {
  return -log_mixture_density(m, to_vec4(x), nullptr);
}

double density(const GaussianMixture& m, const geom::BBox& x) {
  return std::exp(log_mixture_density(m, to_vec4(x), nullptr));
}

double marginal_density_xy(const GaussianMixture& m, double x, double y) {
  double acc = 0.0;
  for (int i = 0; i < m.k(); ++i) {
    const double zx = (x - m.means[i].x) / m.sigmas[i][0];
    const double zy = (y - m.means[i].y) / m.sigmas[i][1];
    const double lp = -kLog2Pi - std::log(m.sigmas[i][0]) - std::log(m.sigmas[i][1]) -
                      0.5 * (zx * zx + zy * zy);
    acc += m.weights[i] * std::exp(lp);
  }
  return acc;
}

GaussianMixture head_to_mixture(std::span<const double> raw, int k) {
  if (k <= 0) throw std::invalid_argument("head_to_mixture: k must be positive");
  if (raw.size() != static_cast<std::size_t>(9 * k))
    throw std::invalid_argument("head_to_mixture: expected 9*k raw values");
  GaussianMixture m;
  m.weights.resize(k);
  m.means.resize(k);
  m.sigmas.resize(k);
  double top = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i) top = std::max(top, raw[9 * i]);
  double z = 0.0;
  for (int i = 0; i < k; ++i) z += std::exp(raw[9 * i] - top);
  for (int i = 0; i < k; ++i) {
    m.weights[i] = std::exp(raw[9 * i] - top) / z;
    m.means[i] = {raw[9 * i + 1], raw[9 * i + 2], raw[9 * i + 3], raw[9 * i + 4]};
    for (int d = 0; d < 4; ++d) m.sigmas[i][d] = softplus(raw[9 * i + 5 + d]) + kSigmaFloor;
  }
  return m;
}

double nll_grad_raw(std::span<const double> raw, int k, const geom::BBox& x,
                    std::span<double> grad) {
  if (grad.size() != raw.size())
    throw std::invalid_argument("nll_grad_raw: grad size mismatch");
  const GaussianMixture m = head_to_mixture(raw, k);
  std::vector<double> resp;
  const double log_density = log_mixture_density(m, to_vec4(x), &resp);
  const auto xv = to_vec4(x);
  for (int i = 0; i < k; ++i) {
    grad[9 * i] = m.weights[i] - resp[i];
    const auto mu = to_vec4(m.means[i]);
    for (int d = 0; d < 4; ++d) {
      const double s = m.sigmas[i][d];
      const double diff = xv[d] - mu[d];
      grad[9 * i + 1 + d] = -resp[i] * diff / (s * s);
      const double dnll_dsigma = -resp[i] * (diff * diff / (s * s * s) - 1.0 / s);
      grad[9 * i + 5 + d] = dnll_dsigma * sigmoid(raw[9 * i + 5 + d]);
    }
  }
  return -log_density;
}

std::vector<std::pair<geom::BBox, double>> modes(const GaussianMixture& m) {
  std::vector<std::pair<geom::BBox, double>> out;
  out.reserve(static_cast<std::size_t>(m.k()));
  for (int i = 0; i < m.k(); ++i) out.emplace_back(m.means[i], m.weights[i]);
  return out;
}

std::vector<geom::BBox> sample(const GaussianMixture& m, int n, std::uint64_t seed) {
  validate(m);
  if (n < 0) throw std::invalid_argument("sample: negative count");
  rng::SplitMix64 gen(seed);
  std::vector<geom::BBox> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const int c = gen.categorical(m.weights);
    std::array<double, 4> v;
    const auto mu = to_vec4(m.means[c]);
    for (int d = 0; d < 4; ++d) v[d] = gen.normal(mu[d], m.sigmas[c][d]);
    out.push_back(from_vec4(v));
  }
  return out;
}

GaussianMixture em_fit(const std::vector<geom::BBox>& samples, int k,
                       std::uint64_t seed, int max_iters,
                       std::vector<double>* trace) {
  const int n = static_cast<int>(samples.size());
  if (k <= 0) throw std::invalid_argument("em_fit: k must be positive");
  if (n < k) throw std::invalid_argument("em_fit: fewer samples than components");
  for (const auto& b : samples)
    if (!geom::is_valid(b)) throw std::invalid_argument("em_fit: invalid sample box");

  std::vector<std::array<double, 4>> data(n);
  for (int i = 0; i < n; ++i) data[i] = to_vec4(samples[i]);

  std::array<double, 4> global_mean{};
  for (const auto& v : data)
    for (int d = 0; d < 4; ++d) global_mean[d] += v[d] / n;
  std::array<double, 4> global_sigma{};
  for (const auto& v : data)
    for (int d = 0; d < 4; ++d) {
      const double diff = v[d] - global_mean[d];
      global_sigma[d] += diff * diff / n;
    }
  for (int d = 0; d < 4; ++d)
    global_sigma[d] = std::max(std::sqrt(global_sigma[d]), kSigmaFloor);

  // Farthest-point seeding: one random anchor, then greedy max-min distance.
  rng::SplitMix64 gen(seed);
  std::vector<int> centers;
  centers.push_back(gen.uniform_int(0, n - 1));
  std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(centers.size()) < k) {
    const auto& last = data[centers.back()];
    for (int i = 0; i < n; ++i) {
      double d2 = 0.0;
      for (int d = 0; d < 4; ++d) {
        const double diff = data[i][d] - last[d];
        d2 += diff * diff;
      }
      min_dist[i] = std::min(min_dist[i], d2);
    }
    int best = 0;
    for (int i = 1; i < n; ++i)
      if (min_dist[i] > min_dist[best]) best = i;
    centers.push_back(best);
  }

  GaussianMixture m;
  m.weights.assign(k, 1.0 / k);
  m.means.resize(k);
  m.sigmas.resize(k);
  for (int i = 0; i < k; ++i) {
    m.means[i] = samples[centers[i]];
    m.sigmas[i] = global_sigma;
  }

  std::vector<std::vector<double>> resp(n);
  double prev = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iters; ++iter) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) total += -log_mixture_density(m, data[i], &resp[i]);
    const double current = total / n;
    if (trace) trace->push_back(current);
    if (prev - current < 1e-8) break;
    prev = current;

    for (int c = 0; c < k; ++c) {
      double mass = 0.0;
      for (int i = 0; i < n; ++i) mass += resp[i][c];
      if (mass < 1e-12) {
        m.weights[c] = 1e-12;
        continue;
      }
      std::array<double, 4> mu{};
      for (int i = 0; i < n; ++i)
        for (int d = 0; d < 4; ++d) mu[d] += resp[i][c] * data[i][d] / mass;
      std::array<double, 4> var{};
      for (int i = 0; i < n; ++i)
        for (int d = 0; d < 4; ++d) {
          const double diff = data[i][d] - mu[d];
          var[d] += resp[i][c] * diff * diff / mass;
        }
      m.weights[c] = mass / n;
      m.means[c] = from_vec4(mu);
      for (int d = 0; d < 4; ++d)
        m.sigmas[c][d] = std::max(std::sqrt(var[d]), kSigmaFloor);
    }
    double wsum = 0.0;
    for (double w : m.weights) wsum += w;
    for (double& w : m.weights) w /= wsum;
  }
  return m;
}

double mean_nll(const GaussianMixture& m, const std::vector<geom::BBox>& samples) {
  if (samples.empty()) throw std::invalid_argument("mean_nll: no samples");
  double acc = 0.0;
  for (const auto& b : samples) acc += nll(m, b);
  return acc / static_cast<double>(samples.size());
}

std::string to_json(const GaussianMixture& m) {
  nlohmann::json j;
  j["k"] = m.k();
  j["pi"] = m.weights;
  auto& mu = j["mu"] = nlohmann::json::array();
  for (const auto& b : m.means) mu.push_back({b.x, b.y, b.w, b.h});
  auto& sigma = j["sigma"] = nlohmann::json::array();
  for (const auto& s : m.sigmas) sigma.push_back({s[0], s[1], s[2], s[3]});
  return j.dump();
}

GaussianMixture from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  GaussianMixture m;
  m.weights = j.at("pi").get<std::vector<double>>();
  if (j.at("k").get<int>() != m.k())
    throw std::invalid_argument("mixture json: k disagrees with pi length");
  for (const auto& e : j.at("mu"))
    m.means.push_back({e.at(0).get<double>(), e.at(1).get<double>(),
                       e.at(2).get<double>(), e.at(3).get<double>()});
  for (const auto& e : j.at("sigma"))
    m.sigmas.push_back({e.at(0).get<double>(), e.at(1).get<double>(),
                        e.at(2).get<double>(), e.at(3).get<double>()});
  validate(m);
  return m;
}

}  // namespace mplab::mix
