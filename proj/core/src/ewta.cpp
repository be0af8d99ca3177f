#include "mplab/ewta.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mplab::ewta {

namespace {

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

double box_distance(const geom::BBox& a, const geom::BBox& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dw = a.w - b.w;
  const double dh = a.h - b.h;
  return std::sqrt(dx * dx + dy * dy + dw * dw + dh * dh);
}

std::vector<int> rank_by_distance(const HypothesisSet& hyps, const geom::BBox& gt) {
  std::vector<double> dist(hyps.boxes.size());
  for (std::size_t i = 0; i < hyps.boxes.size(); ++i)
    dist[i] = box_distance(hyps.boxes[i], gt);
  std::vector<int> order(hyps.boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return dist[a] < dist[b]; });
  return order;
}

void check_k(const HypothesisSet& hyps, int k) {
  if (k < 1 || k > hyps.n())
    throw std::invalid_argument("ewta: k=" + std::to_string(k) +
                                " outside [1, " + std::to_string(hyps.n()) + "]");
}

}  // namespace

Schedule make_halving_schedule(int n, int steps_per_stage) {
  if (n < 1) throw std::invalid_argument("schedule: n must be at least 1");
  Schedule s;
  s.steps_per_stage = steps_per_stage;
  for (int k = n; k > 1; k /= 2) s.stages.push_back(k);
  s.stages.push_back(1);
  validate(s, n);
  return s;
}

void validate(const Schedule& s, int n) {
  if (s.steps_per_stage <= 0)
    throw std::invalid_argument("schedule: steps_per_stage must be positive");
  if (s.stages.empty()) throw std::invalid_argument("schedule: empty");
  if (s.stages.front() != n)
    throw std::invalid_argument("schedule: must start at the hypothesis count");
  if (s.stages.back() != 1) throw std::invalid_argument("schedule: must end at 1");
  for (std::size_t i = 1; i < s.stages.size(); ++i)
    if (s.stages[i] >= s.stages[i - 1])
      throw std::invalid_argument("schedule: stages must strictly decrease");
  for (int k : s.stages)
    if (k < 1) throw std::invalid_argument("schedule: stage below 1");
}

int stage_for_step(const Schedule& s, long long step) {
  if (step < 0) throw std::invalid_argument("stage_for_step: negative step");
  const long long idx = std::min<long long>(step / s.steps_per_stage,
                                            static_cast<long long>(s.stages.size()) - 1);
  return s.stages[static_cast<std::size_t>(idx)];
}

long long total_steps(const Schedule& s) {
  return static_cast<long long>(s.stages.size()) * s.steps_per_stage;
}

EwtaResult ewta_loss(const HypothesisSet& hyps, const geom::BBox& gt, int k) {
  check_k(hyps, k);
  const auto order = rank_by_distance(hyps, gt);
  EwtaResult res;
  res.winners.assign(order.begin(), order.begin() + k);
  std::sort(res.winners.begin(), res.winners.end());
  for (int idx : res.winners) res.loss += box_distance(hyps.boxes[idx], gt);
  res.loss /= k;
  return res;
}

double ewta_loss_grad(const HypothesisSet& hyps, const geom::BBox& gt, int k,
                      std::span<std::array<double, 4>> grad) {
  check_k(hyps, k);
  if (grad.size() != hyps.boxes.size())
    throw std::invalid_argument("ewta_loss_grad: grad size mismatch");
  const EwtaResult res = ewta_loss(hyps, gt, k);
  for (int idx : res.winners) {
    const auto& h = hyps.boxes[static_cast<std::size_t>(idx)];
    const double dist = box_distance(h, gt);
    if (dist == 0.0) continue;
    const double inv = 1.0 / (k * dist);
    grad[idx][0] += (h.x - gt.x) * inv;
    grad[idx][1] += (h.y - gt.y) * inv;
    grad[idx][2] += (h.w - gt.w) * inv;
    grad[idx][3] += (h.h - gt.h) * inv;
  }
  return res.loss;
}

double multi_target_loss(const HypothesisSet& hyps,
                         const std::vector<geom::BBox>& gts, int k) {
  if (gts.empty()) throw std::invalid_argument("multi_target_loss: no targets");
  double acc = 0.0;
  for (const auto& gt : gts) acc += ewta_loss(hyps, gt, k).loss;
  return acc / static_cast<double>(gts.size());
}

double multi_target_loss_grad(const HypothesisSet& hyps,
                              const std::vector<geom::BBox>& gts, int k,
                              std::span<std::array<double, 4>> grad) {
  if (gts.empty()) throw std::invalid_argument("multi_target_loss_grad: no targets");
  if (grad.size() != hyps.boxes.size())
    throw std::invalid_argument("multi_target_loss_grad: grad size mismatch");
  std::vector<std::array<double, 4>> local(hyps.boxes.size());
  double acc = 0.0;
  const double inv = 1.0 / static_cast<double>(gts.size());
  for (const auto& gt : gts) {
    for (auto& g : local) g = {0.0, 0.0, 0.0, 0.0};
    acc += ewta_loss_grad(hyps, gt, k, local);
    for (std::size_t i = 0; i < grad.size(); ++i)
      for (int d = 0; d < 4; ++d) grad[i][d] += local[i][d] * inv;
  }
  return acc * inv;
}

HypothesisSet head_to_hypotheses(std::span<const double> raw, int n,
                                 double frame_w, double frame_h) {
  if (n <= 0) throw std::invalid_argument("head_to_hypotheses: n must be positive");
  if (raw.size() != static_cast<std::size_t>(4 * n))
    throw std::invalid_argument("head_to_hypotheses: expected 4*n raw values");
  HypothesisSet out;
  out.boxes.resize(n);
  for (int i = 0; i < n; ++i) {
    out.boxes[i].x = frame_w / 2 + frame_w / 4 * raw[4 * i + 0];
    out.boxes[i].y = frame_h / 2 + frame_h / 4 * raw[4 * i + 1];
    out.boxes[i].w = frame_w / 8 * softplus(raw[4 * i + 2]);
    out.boxes[i].h = frame_h / 8 * softplus(raw[4 * i + 3]);
  }
  return out;
}

void head_grad_to_raw(std::span<const double> raw, int n, double frame_w,
                      double frame_h,
                      std::span<const std::array<double, 4>> grad_boxes,
                      std::span<double> grad_raw) {
  if (grad_boxes.size() != static_cast<std::size_t>(n) ||
      grad_raw.size() != static_cast<std::size_t>(4 * n) ||
      raw.size() != static_cast<std::size_t>(4 * n))
    throw std::invalid_argument("head_grad_to_raw: size mismatch");
  for (int i = 0; i < n; ++i) {
    grad_raw[4 * i + 0] = grad_boxes[i][0] * frame_w / 4;
    grad_raw[4 * i + 1] = grad_boxes[i][1] * frame_h / 4;
    grad_raw[4 * i + 2] = grad_boxes[i][2] * frame_w / 8 * sigmoid(raw[4 * i + 2]);
    grad_raw[4 * i + 3] = grad_boxes[i][3] * frame_h / 8 * sigmoid(raw[4 * i + 3]);
  }
}

void append_normalized_boxes(std::span<const geom::BBox> boxes, double frame_w,
                             double frame_h, std::vector<double>& out) {
  for (const auto& b : boxes) {
    out.push_back((b.x - frame_w / 2) / (frame_w / 4));
    out.push_back((b.y - frame_h / 2) / (frame_h / 4));
    out.push_back((b.w - frame_w / 16) / (frame_w / 8));
    out.push_back((b.h - frame_h / 16) / (frame_h / 8));
  }
}

}  // namespace mplab::ewta
