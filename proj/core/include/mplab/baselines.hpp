#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "mplab/geometry.hpp"
#include "mplab/mixture.hpp"
#include "mplab/tinynet.hpp"

namespace mplab::baselines {

// Constant-velocity tracker over the four box components. State order:
// cx, cy, w, h, then their per-step velocities.
struct KalmanState {
  Eigen::Matrix<double, 8, 1> state = Eigen::Matrix<double, 8, 1>::Zero();
  Eigen::Matrix<double, 8, 8> covariance = Eigen::Matrix<double, 8, 8>::Zero();
};

// Filter tuning; exposed so tests can pin the values.
inline constexpr double kProcessNoise = 1e-2;
inline constexpr double kObservationNoise = 1e-1;
inline constexpr double kInitialVariance = 10.0;

// State centered on the first observation with zero velocity and an
// uncommitted diagonal covariance.
KalmanState kalman_init(const geom::BBox& obs);

// One predict-then-correct cycle for a unit time step. The correction
// uses the Joseph form so the covariance stays symmetric PSD.
KalmanState kalman_update(const KalmanState& state, const geom::BBox& obs);

// Propagates dt steps without corrections and returns the box part.
geom::BBox kalman_predict(const KalmanState& state, int dt);

// Runs the filter over a track (oldest first) and predicts dt steps past
// the last observation.
geom::BBox kalman_track_predict(const std::vector<geom::BBox>& track, int dt);

// Per-component least-squares velocity over the track, extrapolated dt
// steps past the last observation.
geom::BBox linear_extrapolate(const std::vector<geom::BBox>& track, int dt);

// Monte-Carlo alternative to hypothesis sampling: n forward passes with
// dropout left on at inference, each mapped to a box through the frame
// transform, then a 4-component mixture fit over the samples. The
// network must carry the bayesian flag.
mix::GaussianMixture bayesian_predict(const nn::Network& net,
                                      const std::vector<double>& input,
                                      int frame_w, int frame_h, int n,
                                      std::uint64_t seed);

// The raw samples behind bayesian_predict, exposed for tests.
std::vector<geom::BBox> bayesian_samples(const nn::Network& net,
                                         const std::vector<double>& input,
                                         int frame_w, int frame_h, int n,
                                         std::uint64_t seed);

}  // namespace mplab::baselines
