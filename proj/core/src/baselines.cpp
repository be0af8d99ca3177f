#include "mplab/baselines.hpp"

#include <stdexcept>
#include <string>

#include "mplab/ewta.hpp"
#include "mplab/rng.hpp"
#include "mplab/tensor.hpp"

namespace mplab::baselines {

namespace {

using Mat8 = Eigen::Matrix<double, 8, 8>;
using Vec8 = Eigen::Matrix<double, 8, 1>;
using Vec4 = Eigen::Matrix<double, 4, 1>;

Mat8 transition() {
  Mat8 f = Mat8::Identity();
  for (int i = 0; i < 4; ++i) f(i, i + 4) = 1.0;
  return f;
}

Vec4 box_vec(const geom::BBox& b) { return Vec4(b.x, b.y, b.w, b.h); }

}  // namespace

KalmanState kalman_init(const geom::BBox& obs) {
  KalmanState s;
  s.state.head<4>() = box_vec(obs);
  s.covariance = kInitialVariance * Mat8::Identity();
  return s;
}

KalmanState kalman_update(const KalmanState& state, const geom::BBox& obs) {
  const Mat8 f = transition();
  const Mat8 q = kProcessNoise * Mat8::Identity();
  Vec8 x = f * state.state;
  Mat8 p = f * state.covariance * f.transpose() + q;

  Eigen::Matrix<double, 4, 8> h = Eigen::Matrix<double, 4, 8>::Zero();
  h.block<4, 4>(0, 0).setIdentity();
  const Eigen::Matrix4d r = kObservationNoise * Eigen::Matrix4d::Identity();

  const Vec4 innovation = box_vec(obs) - h * x;
  const Eigen::Matrix4d s = h * p * h.transpose() + r;
  const Eigen::Matrix<double, 8, 4> k = p * h.transpose() * s.inverse();

  KalmanState out;
  out.state = x + k * innovation;
  const Mat8 ikh = Mat8::Identity() - k * h;
  out.covariance = ikh * p * ikh.transpose() + k * r * k.transpose();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  return out;
}

geom::BBox kalman_predict(const KalmanState& state, int dt) {
  if (dt < 0) throw std::invalid_argument("kalman_predict: negative horizon");
  Vec8 x = state.state;
  x.head<4>() += dt * x.tail<4>();
  return {x(0), x(1), x(2), x(3)};
}

geom::BBox kalman_track_predict(const std::vector<geom::BBox>& track, int dt) {
  if (track.empty())
    throw std::invalid_argument("kalman_track_predict: empty track");
  KalmanState s = kalman_init(track.front());
  for (std::size_t i = 1; i < track.size(); ++i) s = kalman_update(s, track[i]);
  return kalman_predict(s, dt);
}

geom::BBox linear_extrapolate(const std::vector<geom::BBox>& track, int dt) {
  if (track.empty())
    throw std::invalid_argument("linear_extrapolate: empty track");
  const int n = static_cast<int>(track.size());
  const geom::BBox& last = track.back();
  if (n == 1) return last;

  // Least squares slope of each component against the frame index.
  double mean_t = (n - 1) / 2.0;
  double denom = 0.0;
  for (int i = 0; i < n; ++i) denom += (i - mean_t) * (i - mean_t);
  auto slope = [&](auto pick) {
    double mean_v = 0.0;
    for (const auto& b : track) mean_v += pick(b);
    mean_v /= n;
    double num = 0.0;
    for (int i = 0; i < n; ++i)
      num += (i - mean_t) * (pick(track[static_cast<std::size_t>(i)]) - mean_v);
    return num / denom;
  };
  const double vx = slope([](const geom::BBox& b) { return b.x; });
  const double vy = slope([](const geom::BBox& b) { return b.y; });
  const double vw = slope([](const geom::BBox& b) { return b.w; });
  const double vh = slope([](const geom::BBox& b) { return b.h; });
  return {last.x + vx * dt, last.y + vy * dt, last.w + vw * dt, last.h + vh * dt};
}

std::vector<geom::BBox> bayesian_samples(const nn::Network& net,
                                         const std::vector<double>& input,
                                         int frame_w, int frame_h, int n,
                                         std::uint64_t seed) {
  if (!net.bayesian)
    throw std::invalid_argument(
        "bayesian_predict: network was not trained with the bayesian flag");
  if (net.output_size() != 4)
    throw std::invalid_argument("bayesian_predict: network emits " +
                                std::to_string(net.output_size()) +
                                " values, want 4");
  Tensor in;
  in.shape = {static_cast<int>(input.size())};
  in.values = input;
  std::vector<geom::BBox> samples;
  samples.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Tensor out = nn::forward(net, in, nn::Mode::kEval,
                                   rng::mix(seed, static_cast<std::uint64_t>(i)));
    const ewta::HypothesisSet hs =
        ewta::head_to_hypotheses(out.values, 1, frame_w, frame_h);
    samples.push_back(hs.boxes.front());
  }
  return samples;
}

mix::GaussianMixture bayesian_predict(const nn::Network& net,
                                      const std::vector<double>& input,
                                      int frame_w, int frame_h, int n,
                                      std::uint64_t seed) {
  const std::vector<geom::BBox> samples =
      bayesian_samples(net, input, frame_w, frame_h, n, seed);
  return mix::em_fit(samples, 4, rng::mix(seed, 0xefull));
}

}  // namespace mplab::baselines
