#pragma once

#include <array>
#include <span>
#include <vector>

#include "mplab/geometry.hpp"

namespace mplab::ewta {

struct HypothesisSet {
  std::vector<geom::BBox> boxes;

  int n() const { return static_cast<int>(boxes.size()); }
};

// Winner counts per training stage, e.g. {20, 10, 5, 2, 1}. Each stage
// runs for steps_per_stage optimizer steps; steps past the end stay in
// the final stage.
struct Schedule {
  std::vector<int> stages;
  int steps_per_stage = 0;
};

// Repeated integer halving from n down to 1.
Schedule make_halving_schedule(int n, int steps_per_stage);

// Throws std::invalid_argument unless stages are strictly decreasing,
// start at n, end at 1, and steps_per_stage is positive.
void validate(const Schedule& s, int n);

int stage_for_step(const Schedule& s, long long step);

long long total_steps(const Schedule& s);

struct EwtaResult {
  double loss = 0.0;
  std::vector<int> winners;  // ascending hypothesis indices, size k
};

// Mean 4-d L2 distance between the ground truth and its k closest
// hypotheses. Distance ties resolve toward the lower index.
EwtaResult ewta_loss(const HypothesisSet& hyps, const geom::BBox& gt, int k);

// Adds d loss / d hypothesis into grad (one 4-vector per hypothesis,
// layout x, y, w, h). Non-winners receive nothing; a winner at exactly
// zero distance receives nothing.
double ewta_loss_grad(const HypothesisSet& hyps, const geom::BBox& gt, int k,
                      std::span<std::array<double, 4>> grad);

// Mean of ewta_loss over several ground-truth boxes.
double multi_target_loss(const HypothesisSet& hyps,
                         const std::vector<geom::BBox>& gts, int k);

double multi_target_loss_grad(const HypothesisSet& hyps,
                              const std::vector<geom::BBox>& gts, int k,
                              std::span<std::array<double, 4>> grad);

// Maps a raw head of 4*n values (per hypothesis: x, y, w, h offsets) to
// boxes in a frame_w x frame_h frame. Centers are affine around the frame
// center; extents go through softplus so they stay positive.
HypothesisSet head_to_hypotheses(std::span<const double> raw, int n,
                                 double frame_w, double frame_h);

// Chain rule through head_to_hypotheses: converts per-box gradients into
// gradients on the raw head values. grad_raw is overwritten.
void head_grad_to_raw(std::span<const double> raw, int n, double frame_w,
                      double frame_h,
                      std::span<const std::array<double, 4>> grad_boxes,
                      std::span<double> grad_raw);

// Normalizes box parameters to roughly unit scale for use as network
// inputs: centers relative to the frame center, extents relative to an
// eighth of the frame.
void append_normalized_boxes(std::span<const geom::BBox> boxes, double frame_w,
                             double frame_h, std::vector<double>& out);

}  // namespace mplab::ewta
