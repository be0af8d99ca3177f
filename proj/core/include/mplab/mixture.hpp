#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mplab/geometry.hpp"

namespace mplab::mix {

inline constexpr double kSigmaFloor = 1e-3;

// Diagonal Gaussian mixture over box 4-vectors (x, y, w, h).
struct GaussianMixture {
  std::vector<double> weights;
  std::vector<geom::BBox> means;
  std::vector<std::array<double, 4>> sigmas;

  int k() const { return static_cast<int>(weights.size()); }
};

// Throws std::invalid_argument when weights do not sum to ~1, any sigma is
// below the floor, or the component lists disagree in length.
void validate(const GaussianMixture& m);

// Negative log likelihood of one box under the mixture, computed with
// log-sum-exp over components.
double nll(const GaussianMixture& m, const geom::BBox& x);

double density(const GaussianMixture& m, const geom::BBox& x);

// Marginal density over the (x, y) center dimensions.
double marginal_density_xy(const GaussianMixture& m, double x, double y);

// Maps a raw network head of 9*k values, laid out per component as
// [weight logit, mu x4, sigma pre-activation x4], to a mixture:
// weights = softmax(logits), mu passed through, sigma = softplus + floor.
GaussianMixture head_to_mixture(std::span<const double> raw, int k);

// nll(head_to_mixture(raw, k), x) together with its gradient with respect
// to raw. grad must have 9*k entries; it is overwritten.
double nll_grad_raw(std::span<const double> raw, int k, const geom::BBox& x,
                    std::span<double> grad);

// Component means paired with weights, in component index order.
std::vector<std::pair<geom::BBox, double>> modes(const GaussianMixture& m);

std::vector<geom::BBox> sample(const GaussianMixture& m, int n, std::uint64_t seed);

// Expectation-maximization fit with the sigma floor applied in every
// M step. Deterministic for a fixed seed. Requires samples.size() >= k.
// When trace is given it receives the mean nll evaluated at the start of
// each iteration.
GaussianMixture em_fit(const std::vector<geom::BBox>& samples, int k,
                       std::uint64_t seed, int max_iters = 100,
                       std::vector<double>* trace = nullptr);

// Mean nll of the samples under the mixture.
double mean_nll(const GaussianMixture& m, const std::vector<geom::BBox>& samples);

std::string to_json(const GaussianMixture& m);
GaussianMixture from_json(const std::string& text);

}  // namespace mplab::mix
