#include "mplab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <span>
#include <stdexcept>
#include <utility>

#include "mplab/baselines.hpp"
#include "mplab/rng.hpp"

namespace mplab::pipeline {

namespace {

constexpr int kLogEvery = 50;

int grid_cells(int view_w, int view_h) {
  return (view_w / world::kDownsampleFactor) * (view_h / world::kDownsampleFactor);
}

void append_row(std::vector<double>& out, const std::vector<double>& row) {
  out.insert(out.end(), row.begin(), row.end());
}

Tensor batch_tensor(std::vector<double> values, int batch, int width) {
  Tensor t;
  t.shape = {batch, width};
  t.values = std::move(values);
  return t;
}

// Shared driver for every head trained under the shrinking-winner
// scheme. fill_input appends one row, targets yields the ground-truth
// boxes of a row.
struct EwtaJob {
  int input_size = 0;
  int sample_count = 0;
  std::function<void(int, std::vector<double>&)> fill_input;
  std::function<const std::vector<geom::BBox>&(int)> targets;
};

nn::Network train_ewta_head(const std::vector<nn::LayerSpec>& specs,
                            const EwtaJob& job, const ewta::Schedule& sched,
                            int n_hyp, double fw, double fh, bool bayesian,
                            const cfg::RunConfig& c, std::uint64_t seed,
                            const char* name, TrainLog* log) {
  if (job.sample_count <= 0)
    throw std::invalid_argument(std::string(name) + ": empty dataset");
  nn::Network net = nn::init_network(specs, rng::mix(seed, 0x101));
  net.bayesian = bayesian;
  nn::AdamState adam;
  nn::AdamConfig acfg;
  acfg.lr = c.train_lr;

  const long long steps = ewta::total_steps(sched);
  const int batch = std::min(c.train_batch, job.sample_count);
  const int out_size = 4 * n_hyp;
  std::vector<std::array<double, 4>> box_grad(static_cast<std::size_t>(n_hyp));
  std::vector<double> raw_grad(static_cast<std::size_t>(out_size));
  std::vector<int> idx(static_cast<std::size_t>(batch));

  for (long long step = 0; step < steps; ++step) {
    const int k = ewta::stage_for_step(sched, step);
    rng::SplitMix64 pick(rng::mix(seed, 0xba7c4, static_cast<std::uint64_t>(step)));
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(batch) * job.input_size);
    for (int i = 0; i < batch; ++i) {
      idx[static_cast<std::size_t>(i)] = pick.uniform_int(0, job.sample_count - 1);
      job.fill_input(idx[static_cast<std::size_t>(i)], values);
    }
    nn::Tape tape;
    const Tensor out =
        nn::forward(net, batch_tensor(std::move(values), batch, job.input_size),
                    nn::Mode::kTrain,
                    rng::mix(seed, 0xd20, static_cast<std::uint64_t>(step)), &tape);

    Tensor dout;
    dout.shape = out.shape;
    dout.values.assign(out.values.size(), 0.0);
    double loss = 0.0;
    for (int r = 0; r < batch; ++r) {
      const std::span<const double> raw(
          out.values.data() + static_cast<std::size_t>(r) * out_size,
          static_cast<std::size_t>(out_size));
      const ewta::HypothesisSet hyps = ewta::head_to_hypotheses(raw, n_hyp, fw, fh);
      std::fill(box_grad.begin(), box_grad.end(), std::array<double, 4>{});
      loss += ewta::multi_target_loss_grad(
          hyps, job.targets(idx[static_cast<std::size_t>(r)]), k, box_grad);
      ewta::head_grad_to_raw(raw, n_hyp, fw, fh, box_grad, raw_grad);
      for (int j = 0; j < out_size; ++j)
        dout.values[static_cast<std::size_t>(r) * out_size + j] =
            raw_grad[static_cast<std::size_t>(j)] / batch;
    }
    loss /= batch;
    if (!std::isfinite(loss))
      throw std::runtime_error(std::string(name) + ": loss diverged at step " +
                               std::to_string(step) + " (stage k=" +
                               std::to_string(k) + ")");
    const nn::Gradients grads = nn::backward(net, tape, dout);
    nn::adam_step(net, grads, adam, acfg);
    if (log && (step % kLogEvery == 0 || step + 1 == steps))
      log->entries.push_back({step, k, loss});
  }
  return net;
}

// Fitting heads regress mixture parameters over frozen hypothesis rows
// under the mixture's own likelihood.
nn::Network train_fitting_head(const std::vector<nn::LayerSpec>& specs,
                               const std::vector<std::vector<double>>& inputs,
                               const std::vector<geom::BBox>& gts, int k,
                               const cfg::RunConfig& c, std::uint64_t seed,
                               const char* name, TrainLog* log) {
  if (inputs.empty())
    throw std::invalid_argument(std::string(name) + ": empty fitting dataset");
  nn::Network net = nn::init_network(specs, rng::mix(seed, 0x202));

  // Seed the output biases so every component starts near the frame
  // center with a wide scale; components born at raw zero sit far from
  // the data and never collect responsibility.
  const auto inv_softplus = [](double s) { return std::log(std::exp(s) - 1.0); };
  const double cx = c.world.view_w / 2.0;
  const double cy = c.world.view_h / 2.0;
  rng::SplitMix64 jitter(rng::mix(seed, 0x515));
  Eigen::RowVectorXd& bias = net.layers.back().b;
  for (int i = 0; i < k; ++i) {
    bias(9 * i + 1) = cx + jitter.uniform(-cx / 4.0, cx / 4.0);
    bias(9 * i + 2) = cy + jitter.uniform(-cy / 4.0, cy / 4.0);
    bias(9 * i + 3) = 2.0;
    bias(9 * i + 4) = 2.0;
    bias(9 * i + 5) = inv_softplus(c.world.view_w / 8.0);
    bias(9 * i + 6) = inv_softplus(c.world.view_h / 8.0);
    bias(9 * i + 7) = inv_softplus(2.0);
    bias(9 * i + 8) = inv_softplus(2.0);
  }

  nn::AdamState adam;
  nn::AdamConfig acfg;
  acfg.lr = c.train_lr;

  const int n = static_cast<int>(inputs.size());
  const int batch = std::min(c.train_batch, n);
  const int in_size = static_cast<int>(inputs.front().size());
  const int out_size = 9 * k;
  std::vector<double> raw_grad(static_cast<std::size_t>(out_size));
  std::vector<int> idx(static_cast<std::size_t>(batch));

  for (long long step = 0; step < c.train_fit_steps; ++step) {
    rng::SplitMix64 pick(rng::mix(seed, 0xf17, static_cast<std::uint64_t>(step)));
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(batch) * in_size);
    for (int i = 0; i < batch; ++i) {
      idx[static_cast<std::size_t>(i)] = pick.uniform_int(0, n - 1);
      append_row(values, inputs[static_cast<std::size_t>(
                             idx[static_cast<std::size_t>(i)])]);
    }
    nn::Tape tape;
    const Tensor out =
        nn::forward(net, batch_tensor(std::move(values), batch, in_size),
                    nn::Mode::kTrain,
                    rng::mix(seed, 0xf33d, static_cast<std::uint64_t>(step)), &tape);

    Tensor dout;
    dout.shape = out.shape;
    dout.values.assign(out.values.size(), 0.0);
    double loss = 0.0;
    for (int r = 0; r < batch; ++r) {
      const std::span<const double> raw(
          out.values.data() + static_cast<std::size_t>(r) * out_size,
          static_cast<std::size_t>(out_size));
      loss += mix::nll_grad_raw(raw, k,
                                gts[static_cast<std::size_t>(
                                    idx[static_cast<std::size_t>(r)])],
                                raw_grad);
      for (int j = 0; j < out_size; ++j)
        dout.values[static_cast<std::size_t>(r) * out_size + j] =
            raw_grad[static_cast<std::size_t>(j)] / batch;
    }
    loss /= batch;
    if (!std::isfinite(loss))
      throw std::runtime_error(std::string(name) + ": loss diverged at step " +
                               std::to_string(step));
    const nn::Gradients grads = nn::backward(net, tape, dout);
    nn::adam_step(net, grads, adam, acfg);
    if (log && (step % kLogEvery == 0 || step + 1 == c.train_fit_steps))
      log->entries.push_back({step, k, loss});
  }
  return net;
}

Tensor single_row(const std::vector<double>& values) {
  Tensor t;
  t.shape = {static_cast<int>(values.size())};
  t.values = values;
  return t;
}

ewta::HypothesisSet eval_hypotheses(const nn::Network& net,
                                    const std::vector<double>& input, int n_hyp,
                                    double fw, double fh) {
  const Tensor out = nn::forward(net, single_row(input), nn::Mode::kEval, 0);
  return ewta::head_to_hypotheses(out.values, n_hyp, fw, fh);
}

std::vector<double> normalized_boxes(const ewta::HypothesisSet& hyps, double fw,
                                     double fh) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(hyps.n()) * 4);
  ewta::append_normalized_boxes(hyps.boxes, fw, fh, out);
  return out;
}

std::vector<int> unique_horizons(const cfg::RunConfig& c) {
  std::vector<int> horizons = {c.fln_horizon};
  if (c.epn_horizon != c.fln_horizon) horizons.push_back(c.epn_horizon);
  std::sort(horizons.begin(), horizons.end());
  return horizons;
}

std::string meta_lookup(const nn::ModelFile& f, const std::string& key) {
  return f.meta_value(key);
}

int meta_int(const nn::ModelFile& f, const std::string& key) {
  return static_cast<int>(std::stoll(meta_lookup(f, key)));
}

void require_kind(const nn::ModelFile& f, const std::string& want) {
  const std::string kind = f.meta_value("kind");
  if (kind != want)
    throw std::runtime_error("checkpoint holds a '" + kind + "' model, want '" +
                             want + "'");
}

}  // namespace

std::string TrainLog::to_text() const {
  std::string out;
  char buf[96];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof(buf), "step=%lld k=%d loss=%.17g\n", e.step,
                  e.stage_k, e.loss);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "skipped_samples=%lld\n", skipped);
  out += buf;
  return out;
}

world::AgentClass parse_class(const std::string& name) {
  if (name == "ped") return world::AgentClass::kPedestrian;
  if (name == "veh") return world::AgentClass::kVehicle;
  throw std::invalid_argument("unknown agent class '" + name +
                              "' (want ped or veh)");
}

std::vector<nn::LayerSpec> mlp_specs(int in, int out, const cfg::RunConfig& c) {
  std::vector<nn::LayerSpec> specs;
  int prev = in;
  for (int i = 0; i < c.train_layers; ++i) {
    specs.push_back({prev, c.train_hidden, true, c.train_dropout});
    prev = c.train_hidden;
  }
  specs.push_back({prev, out, false, 0.0});
  return specs;
}

int rpn_input_size(const cfg::RunConfig& c) {
  return world::kStaticLabelCount * grid_cells(c.world.view_w, c.world.view_h);
}

int rtn_input_size(const cfg::RunConfig& c) {
  return 4 * cfg::hypothesis_count(c) + 4 + rpn_input_size(c);
}

int fln_input_size(const cfg::RunConfig& c) {
  return world::render_input_size(c.world, c.fln_observe, true) +
         (c.fln_use_prior ? 4 * cfg::hypothesis_count(c) : 0);
}

int epn_input_size(const cfg::RunConfig& c) {
  return world::render_input_size(c.world, 1, false) + 4 * cfg::hypothesis_count(c);
}

std::vector<GridSample> build_rpn_dataset(const std::vector<world::Episode>& eps,
                                          const std::string& cls) {
  const world::AgentClass want = parse_class(cls);
  std::vector<GridSample> out;
  for (const auto& ep : eps) {
    for (int t = 0; t < ep.length(); ++t) {
      GridSample sample;
      for (const auto& a : ep.frames[static_cast<std::size_t>(t)].agents) {
        if (a.cls != want) continue;
        if (ep.visibility(a.id, t) < ep.cfg.visibility_threshold) continue;
        sample.gts.push_back(ep.image_box(a.id, t));
      }
      if (sample.gts.empty()) continue;
      world::append_static_encoding(ep.frames[static_cast<std::size_t>(t)].statics,
                                    sample.input);
      out.push_back(std::move(sample));
    }
  }
  return out;
}

RpnModel train_rpn(const std::vector<GridSample>& dataset,
                   const cfg::RunConfig& c, std::uint64_t seed, TrainLog* log) {
  if (dataset.empty()) throw std::invalid_argument("train_rpn: empty dataset");
  const int n = cfg::hypothesis_count(c);
  const ewta::Schedule sched{cfg::ewta_stage_list(c), c.ewta_steps_per_stage};

  EwtaJob job;
  job.input_size = rpn_input_size(c);
  job.sample_count = static_cast<int>(dataset.size());
  job.fill_input = [&dataset](int i, std::vector<double>& out) {
    append_row(out, dataset[static_cast<std::size_t>(i)].input);
  };
  job.targets = [&dataset](int i) -> const std::vector<geom::BBox>& {
    return dataset[static_cast<std::size_t>(i)].gts;
  };

  RpnModel m;
  m.cls = c.rpn_class;
  m.hypotheses = n;
  m.view_w = c.world.view_w;
  m.view_h = c.world.view_h;
  m.net = train_ewta_head(mlp_specs(job.input_size, 4 * n, c), job, sched, n,
                          c.world.view_w, c.world.view_h, false, c, seed,
                          "train_rpn", log);
  return m;
}

ewta::HypothesisSet rpn_boxes(const RpnModel& m, const world::SemanticGrid& statics) {
  std::vector<double> input;
  world::append_static_encoding(statics, input);
  return eval_hypotheses(m.net, input, m.hypotheses, m.view_w, m.view_h);
}

ewta::HypothesisSet rtn_targets(const RpnModel& m, const world::Episode& ep,
                                int t, int dt) {
  if (t < 0 || dt < 0 || t + dt >= ep.length())
    throw std::invalid_argument("rtn_targets: window exceeds episode");
  return rpn_boxes(m, ep.frames[static_cast<std::size_t>(t + dt)].statics);
}

RtnModel train_rtn(const RpnModel& rpn, const std::vector<world::Episode>& eps,
                   const cfg::RunConfig& c, std::uint64_t seed, TrainLog* log) {
  if (eps.empty()) throw std::invalid_argument("train_rtn: no episodes");
  const int n = rpn.hypotheses;
  const double fw = rpn.view_w, fh = rpn.view_h;

  // Rows: transfer the frame-t prior to t + dt for every window the
  // predictors will request.
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<geom::BBox>> targets;
  for (const auto& ep : eps) {
    std::vector<ewta::HypothesisSet> per_frame(
        static_cast<std::size_t>(ep.length()));
    std::vector<bool> have(static_cast<std::size_t>(ep.length()), false);
    auto boxes_at = [&](int t) -> const ewta::HypothesisSet& {
      if (!have[static_cast<std::size_t>(t)]) {
        per_frame[static_cast<std::size_t>(t)] =
            rpn_boxes(rpn, ep.frames[static_cast<std::size_t>(t)].statics);
        have[static_cast<std::size_t>(t)] = true;
      }
      return per_frame[static_cast<std::size_t>(t)];
    };
    for (int dt : unique_horizons(c)) {
      for (int t = 0; t + dt < ep.length(); ++t) {
        std::vector<double> row = normalized_boxes(boxes_at(t), fw, fh);
        const geom::Egomotion e = world::composed_ego(ep, t, dt);
        row.push_back(e.tx);
        row.push_back(e.ty);
        row.push_back(e.theta);
        row.push_back(e.scale);
        world::append_static_encoding(ep.frames[static_cast<std::size_t>(t)].statics,
                                      row);
        inputs.push_back(std::move(row));
        targets.push_back(boxes_at(t + dt).boxes);
      }
    }
  }
  if (inputs.empty()) throw std::invalid_argument("train_rtn: no training rows");

  const int in_size = static_cast<int>(inputs.front().size());
  nn::Network net = nn::init_network(mlp_specs(in_size, 4 * n, c),
                                     rng::mix(seed, 0x101));
  nn::AdamState adam;
  nn::AdamConfig acfg;
  acfg.lr = c.train_lr;

  const long long steps =
      ewta::total_steps(ewta::Schedule{cfg::ewta_stage_list(c), c.ewta_steps_per_stage});
  const int batch = std::min(c.train_batch, static_cast<int>(inputs.size()));
  const int out_size = 4 * n;
  std::vector<std::array<double, 4>> box_grad(static_cast<std::size_t>(n));
  std::vector<double> raw_grad(static_cast<std::size_t>(out_size));
  std::vector<int> idx(static_cast<std::size_t>(batch));

  for (long long step = 0; step < steps; ++step) {
    rng::SplitMix64 pick(rng::mix(seed, 0xba7c4, static_cast<std::uint64_t>(step)));
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(batch) * in_size);
    for (int i = 0; i < batch; ++i) {
      idx[static_cast<std::size_t>(i)] =
          pick.uniform_int(0, static_cast<int>(inputs.size()) - 1);
      append_row(values, inputs[static_cast<std::size_t>(
                             idx[static_cast<std::size_t>(i)])]);
    }
    nn::Tape tape;
    const Tensor out =
        nn::forward(net, batch_tensor(std::move(values), batch, in_size),
                    nn::Mode::kTrain,
                    rng::mix(seed, 0xd20, static_cast<std::uint64_t>(step)), &tape);

    Tensor dout;
    dout.shape = out.shape;
    dout.values.assign(out.values.size(), 0.0);
    double loss = 0.0;
    for (int r = 0; r < batch; ++r) {
      const std::span<const double> raw(
          out.values.data() + static_cast<std::size_t>(r) * out_size,
          static_cast<std::size_t>(out_size));
      const ewta::HypothesisSet hyps = ewta::head_to_hypotheses(raw, n, fw, fh);
      const std::vector<geom::BBox>& gts =
          targets[static_cast<std::size_t>(idx[static_cast<std::size_t>(r)])];
      for (int i = 0; i < n; ++i) {
        const geom::BBox& p = hyps.boxes[static_cast<std::size_t>(i)];
        const geom::BBox& g = gts[static_cast<std::size_t>(i)];
        const double d[4] = {p.x - g.x, p.y - g.y, p.w - g.w, p.h - g.h};
        for (int comp = 0; comp < 4; ++comp) {
          loss += std::abs(d[comp]);
          box_grad[static_cast<std::size_t>(i)][static_cast<std::size_t>(comp)] =
              d[comp] > 0.0 ? 1.0 : (d[comp] < 0.0 ? -1.0 : 0.0);
        }
      }
      ewta::head_grad_to_raw(raw, n, fw, fh, box_grad, raw_grad);
      for (int j = 0; j < out_size; ++j)
        dout.values[static_cast<std::size_t>(r) * out_size + j] =
            raw_grad[static_cast<std::size_t>(j)] / (batch * out_size);
    }
    loss /= batch * out_size;
    if (!std::isfinite(loss))
      throw std::runtime_error("train_rtn: loss diverged at step " +
                               std::to_string(step));
    const nn::Gradients grads = nn::backward(net, tape, dout);
    nn::adam_step(net, grads, adam, acfg);
    if (log && (step % kLogEvery == 0 || step + 1 == steps))
      log->entries.push_back({step, 0, loss});
  }

  RtnModel m;
  m.net = std::move(net);
  m.rpn = rpn;
  return m;
}

ewta::HypothesisSet transferred_prior(const RtnModel& m, const world::Episode& ep,
                                      int t, int dt) {
  const double fw = m.rpn.view_w, fh = m.rpn.view_h;
  const ewta::HypothesisSet current =
      rpn_boxes(m.rpn, ep.frames[static_cast<std::size_t>(t)].statics);
  std::vector<double> row = normalized_boxes(current, fw, fh);
  const geom::Egomotion e = world::composed_ego(ep, t, dt);
  row.push_back(e.tx);
  row.push_back(e.ty);
  row.push_back(e.theta);
  row.push_back(e.scale);
  world::append_static_encoding(ep.frames[static_cast<std::size_t>(t)].statics, row);
  return eval_hypotheses(m.net, row, m.rpn.hypotheses, fw, fh);
}

namespace {

struct WindowSpec {
  int ep = 0;
  int agent = 0;  // -1 for frame-level rows
  int t = 0;
};

// Normalized prior rows cached per (episode, t); every agent sharing the
// frame reuses the transfer.
class PriorCache {
 public:
  PriorCache(const RtnModel& m, const std::vector<world::Episode>& eps, int dt)
      : m_(m), eps_(eps), dt_(dt) {}

  const std::vector<double>& at(int ep, int t) {
    const auto key = std::make_pair(ep, t);
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      const ewta::HypothesisSet prior =
          transferred_prior(m_, eps_[static_cast<std::size_t>(ep)], t, dt_);
      it = cache_
               .emplace(key, normalized_boxes(prior, m_.rpn.view_w, m_.rpn.view_h))
               .first;
    }
    return it->second;
  }

 private:
  const RtnModel& m_;
  const std::vector<world::Episode>& eps_;
  int dt_;
  std::map<std::pair<int, int>, std::vector<double>> cache_;
};

}  // namespace

FlnModel train_fln(const RtnModel& rtn, const std::vector<world::Episode>& eps,
                   const cfg::RunConfig& c, std::uint64_t seed, TrainLog* log) {
  if (eps.empty()) throw std::invalid_argument("train_fln: no episodes");
  const world::AgentClass want = parse_class(c.rpn_class);
  const int observe = c.fln_observe;
  const int horizon = c.fln_horizon;

  TrainLog local_log;
  TrainLog& tl = log ? *log : local_log;

  std::vector<WindowSpec> specs;
  std::vector<std::vector<geom::BBox>> targets;
  for (int e = 0; e < static_cast<int>(eps.size()); ++e) {
    const world::Episode& ep = eps[static_cast<std::size_t>(e)];
    for (const auto& a : ep.frames.front().agents) {
      if (a.cls != want) continue;
      for (int t = observe - 1; t + horizon < ep.length(); ++t) {
        bool visible = true;
        for (int f = t - observe + 1; f <= t && visible; ++f)
          visible = ep.visibility(a.id, f) >= ep.cfg.visibility_threshold;
        if (!visible) {
          ++tl.skipped;
          continue;
        }
        specs.push_back({e, a.id, t});
        targets.push_back({ep.image_box(a.id, t + horizon)});
      }
    }
  }
  if (specs.empty())
    throw std::runtime_error(
        "train_fln: no visible observation windows; raise gen.episodes or "
        "world.visibility_threshold tolerance");

  PriorCache priors(rtn, eps, horizon);
  const bool use_prior = c.fln_use_prior;

  EwtaJob job;
  job.input_size = fln_input_size(c);
  job.sample_count = static_cast<int>(specs.size());
  job.fill_input = [&](int i, std::vector<double>& out) {
    const WindowSpec& s = specs[static_cast<std::size_t>(i)];
    const Tensor row = world::render_inputs(eps[static_cast<std::size_t>(s.ep)],
                                            s.agent, s.t, observe, horizon);
    append_row(out, row.values);
    if (use_prior) append_row(out, priors.at(s.ep, s.t));
  };
  job.targets = [&targets](int i) -> const std::vector<geom::BBox>& {
    return targets[static_cast<std::size_t>(i)];
  };

  FlnModel m;
  m.cls = c.rpn_class;
  m.hypotheses = cfg::hypothesis_count(c);
  m.k = c.fln_k;
  m.observe = observe;
  m.horizon = horizon;
  m.use_prior = use_prior;
  m.bayesian = c.fln_bayesian;
  m.view_w = c.world.view_w;
  m.view_h = c.world.view_h;
  if (use_prior) m.prior = rtn;

  const int n = cfg::hypothesis_count(c);
  if (m.bayesian) {
    // Single-box head; the training budget matches the staged run and
    // dropout stays active at inference to produce samples.
    ewta::Schedule sched;
    sched.stages = {1};
    sched.steps_per_stage = static_cast<int>(ewta::total_steps(
        ewta::Schedule{cfg::ewta_stage_list(c), c.ewta_steps_per_stage}));
    m.sampling = train_ewta_head(mlp_specs(job.input_size, 4, c), job, sched, 1,
                                 c.world.view_w, c.world.view_h, true, c, seed,
                                 "train_fln(bayesian)", &tl);
    return m;
  }

  const ewta::Schedule sched{cfg::ewta_stage_list(c), c.ewta_steps_per_stage};
  m.sampling = train_ewta_head(mlp_specs(job.input_size, 4 * n, c), job, sched, n,
                               c.world.view_w, c.world.view_h, false, c, seed,
                               "train_fln", &tl);

  // Second phase: mixture parameters regressed from the frozen
  // hypothesis sets.
  std::vector<std::vector<double>> fit_inputs;
  std::vector<geom::BBox> fit_gts;
  fit_inputs.reserve(specs.size());
  fit_gts.reserve(specs.size());
  std::vector<double> row;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    row.clear();
    job.fill_input(static_cast<int>(i), row);
    const ewta::HypothesisSet hyps =
        eval_hypotheses(m.sampling, row, n, c.world.view_w, c.world.view_h);
    fit_inputs.push_back(normalized_boxes(hyps, c.world.view_w, c.world.view_h));
    fit_gts.push_back(targets[i].front());
  }
  const std::vector<nn::LayerSpec> fit_specs = {
      {4 * n, c.train_fit_hidden, true, 0.2},
      {c.train_fit_hidden, c.train_fit_hidden, true, 0.0},
      {c.train_fit_hidden, 9 * c.fln_k, false, 0.0}};
  m.fitting = train_fitting_head(fit_specs, fit_inputs, fit_gts, c.fln_k, c,
                                 rng::mix(seed, 0xf17), "train_fln(fitting)", &tl);
  return m;
}

EpnModel train_epn(const RtnModel& rtn, const std::vector<world::Episode>& eps,
                   const cfg::RunConfig& c, std::uint64_t seed, TrainLog* log) {
  if (eps.empty()) throw std::invalid_argument("train_epn: no episodes");
  const world::AgentClass want = parse_class(c.epn_class);
  const int horizon = c.epn_horizon;

  std::vector<WindowSpec> specs;
  std::vector<std::vector<geom::BBox>> targets;
  for (int e = 0; e < static_cast<int>(eps.size()); ++e) {
    const world::Episode& ep = eps[static_cast<std::size_t>(e)];
    for (int t = 0; t + horizon < ep.length(); ++t) {
      std::vector<geom::BBox> events =
          world::emergence_events(ep, t, horizon, want);
      if (events.empty()) continue;
      specs.push_back({e, -1, t});
      targets.push_back(std::move(events));
    }
  }
  if (specs.empty())
    throw std::invalid_argument(
        "train_epn: no emergence events in the dataset; widen the view over "
        "time (world.ego_zoom < 1) or raise world.margin so unseen agents "
        "can enter");

  PriorCache priors(rtn, eps, horizon);

  EwtaJob job;
  job.input_size = epn_input_size(c);
  job.sample_count = static_cast<int>(specs.size());
  job.fill_input = [&](int i, std::vector<double>& out) {
    const WindowSpec& s = specs[static_cast<std::size_t>(i)];
    const Tensor row = world::render_inputs(eps[static_cast<std::size_t>(s.ep)],
                                            -1, s.t, 1, horizon);
    append_row(out, row.values);
    append_row(out, priors.at(s.ep, s.t));
  };
  job.targets = [&targets](int i) -> const std::vector<geom::BBox>& {
    return targets[static_cast<std::size_t>(i)];
  };

  const int n = cfg::hypothesis_count(c);
  const ewta::Schedule sched{cfg::ewta_stage_list(c), c.ewta_steps_per_stage};

  EpnModel m;
  m.cls = c.epn_class;
  m.hypotheses = n;
  m.k = c.epn_k;
  m.horizon = horizon;
  m.view_w = c.world.view_w;
  m.view_h = c.world.view_h;
  m.prior = rtn;
  m.sampling = train_ewta_head(mlp_specs(job.input_size, 4 * n, c), job, sched, n,
                               c.world.view_w, c.world.view_h, false, c, seed,
                               "train_epn", log);

  std::vector<std::vector<double>> fit_inputs;
  std::vector<geom::BBox> fit_gts;
  std::vector<double> row;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    row.clear();
    job.fill_input(static_cast<int>(i), row);
    const ewta::HypothesisSet hyps =
        eval_hypotheses(m.sampling, row, n, c.world.view_w, c.world.view_h);
    const std::vector<double> norm =
        normalized_boxes(hyps, c.world.view_w, c.world.view_h);
    // The fitting head sees each realized emergence as its own row.
    for (const auto& gt : targets[i]) {
      fit_inputs.push_back(norm);
      fit_gts.push_back(gt);
    }
  }
  const std::vector<nn::LayerSpec> fit_specs = {
      {4 * n, c.train_fit_hidden, true, 0.2},
      {c.train_fit_hidden, c.train_fit_hidden, true, 0.0},
      {c.train_fit_hidden, 9 * c.epn_k, false, 0.0}};
  m.fitting = train_fitting_head(fit_specs, fit_inputs, fit_gts, c.epn_k, c,
                                 rng::mix(seed, 0xf17), "train_epn(fitting)", log);
  return m;
}

std::vector<double> fln_input(const FlnModel& m, const world::Episode& ep,
                              int agent_id, int t) {
  const Tensor row = world::render_inputs(ep, agent_id, t, m.observe, m.horizon);
  std::vector<double> out = row.values;
  if (m.use_prior) {
    const ewta::HypothesisSet prior = transferred_prior(m.prior, ep, t, m.horizon);
    ewta::append_normalized_boxes(prior.boxes, m.view_w, m.view_h, out);
  }
  return out;
}

std::vector<double> epn_input(const EpnModel& m, const world::Episode& ep, int t) {
  const Tensor row = world::render_inputs(ep, -1, t, 1, m.horizon);
  std::vector<double> out = row.values;
  const ewta::HypothesisSet prior = transferred_prior(m.prior, ep, t, m.horizon);
  ewta::append_normalized_boxes(prior.boxes, m.view_w, m.view_h, out);
  return out;
}

Prediction predict(const FlnModel& m, const std::vector<double>& input,
                   std::uint64_t seed) {
  Prediction p;
  if (m.bayesian) {
    p.hyps.boxes = baselines::bayesian_samples(m.sampling, input, m.view_w,
                                               m.view_h, m.hypotheses, seed);
    p.mixture = mix::em_fit(p.hyps.boxes, m.k, rng::mix(seed, 0xefull));
    return p;
  }
  p.hyps = eval_hypotheses(m.sampling, input, m.hypotheses, m.view_w, m.view_h);
  const std::vector<double> norm = normalized_boxes(p.hyps, m.view_w, m.view_h);
  const Tensor fout = nn::forward(m.fitting, single_row(norm), nn::Mode::kEval, 0);
  p.mixture = mix::head_to_mixture(fout.values, m.k);
  return p;
}

Prediction predict(const EpnModel& m, const std::vector<double>& input) {
  Prediction p;
  p.hyps = eval_hypotheses(m.sampling, input, m.hypotheses, m.view_w, m.view_h);
  const std::vector<double> norm = normalized_boxes(p.hyps, m.view_w, m.view_h);
  const Tensor fout = nn::forward(m.fitting, single_row(norm), nn::Mode::kEval, 0);
  p.mixture = mix::head_to_mixture(fout.values, m.k);
  return p;
}

mix::GaussianMixture boxes_as_mixture(const ewta::HypothesisSet& hyps,
                                      double sigma) {
  if (hyps.boxes.empty())
    throw std::invalid_argument("boxes_as_mixture: empty hypothesis set");
  const double s = std::max(sigma, mix::kSigmaFloor);
  mix::GaussianMixture m;
  const double w = 1.0 / hyps.n();
  for (const auto& b : hyps.boxes) {
    m.weights.push_back(w);
    m.means.push_back(b);
    m.sigmas.push_back({s, s, s, s});
  }
  return m;
}

void save_rpn(const RpnModel& m, const std::filesystem::path& path) {
  nn::ModelFile f;
  f.meta = {{"kind", "rpn"},
            {"class", m.cls},
            {"hypotheses", std::to_string(m.hypotheses)},
            {"view_w", std::to_string(m.view_w)},
            {"view_h", std::to_string(m.view_h)}};
  f.nets = {{"net", m.net}};
  nn::save_model_file(path, f);
}

RpnModel load_rpn(const std::filesystem::path& path) {
  const nn::ModelFile f = nn::load_model_file(path);
  require_kind(f, "rpn");
  RpnModel m;
  m.net = f.net("net");
  m.cls = f.meta_value("class");
  m.hypotheses = meta_int(f, "hypotheses");
  m.view_w = meta_int(f, "view_w");
  m.view_h = meta_int(f, "view_h");
  return m;
}

void save_rtn(const RtnModel& m, const std::filesystem::path& path) {
  nn::ModelFile f;
  f.meta = {{"kind", "rtn"},
            {"class", m.rpn.cls},
            {"hypotheses", std::to_string(m.rpn.hypotheses)},
            {"view_w", std::to_string(m.rpn.view_w)},
            {"view_h", std::to_string(m.rpn.view_h)}};
  f.nets = {{"net", m.net}, {"rpn", m.rpn.net}};
  nn::save_model_file(path, f);
}

RtnModel load_rtn(const std::filesystem::path& path) {
  const nn::ModelFile f = nn::load_model_file(path);
  require_kind(f, "rtn");
  RtnModel m;
  m.net = f.net("net");
  m.rpn.net = f.net("rpn");
  m.rpn.cls = f.meta_value("class");
  m.rpn.hypotheses = meta_int(f, "hypotheses");
  m.rpn.view_w = meta_int(f, "view_w");
  m.rpn.view_h = meta_int(f, "view_h");
  return m;
}

namespace {

void fill_predictor_meta(nn::ModelFile& f, const std::string& kind,
                         const std::string& cls, int hypotheses, int k,
                         int horizon, int view_w, int view_h) {
  f.meta = {{"kind", kind},
            {"class", cls},
            {"hypotheses", std::to_string(hypotheses)},
            {"k", std::to_string(k)},
            {"horizon", std::to_string(horizon)},
            {"view_w", std::to_string(view_w)},
            {"view_h", std::to_string(view_h)}};
}

void load_prior_stack(const nn::ModelFile& f, RtnModel& prior,
                      const std::string& cls, int hypotheses, int view_w,
                      int view_h) {
  prior.net = f.net("rtn");
  prior.rpn.net = f.net("rpn");
  prior.rpn.cls = cls;
  prior.rpn.hypotheses = hypotheses;
  prior.rpn.view_w = view_w;
  prior.rpn.view_h = view_h;
}

}  // namespace

void save_fln(const FlnModel& m, const std::filesystem::path& path) {
  nn::ModelFile f;
  fill_predictor_meta(f, "fln", m.cls, m.hypotheses, m.k, m.horizon, m.view_w,
                      m.view_h);
  f.meta.push_back({"observe", std::to_string(m.observe)});
  f.meta.push_back({"use_prior", m.use_prior ? "1" : "0"});
  f.meta.push_back({"bayesian", m.bayesian ? "1" : "0"});
  f.nets = {{"sampling", m.sampling}};
  if (!m.bayesian) f.nets.push_back({"fitting", m.fitting});
  if (m.use_prior) {
    f.nets.push_back({"rtn", m.prior.net});
    f.nets.push_back({"rpn", m.prior.rpn.net});
  }
  nn::save_model_file(path, f);
}

FlnModel load_fln(const std::filesystem::path& path) {
  const nn::ModelFile f = nn::load_model_file(path);
  require_kind(f, "fln");
  FlnModel m;
  m.cls = f.meta_value("class");
  m.hypotheses = meta_int(f, "hypotheses");
  m.k = meta_int(f, "k");
  m.horizon = meta_int(f, "horizon");
  m.observe = meta_int(f, "observe");
  m.use_prior = f.meta_value("use_prior") == "1";
  m.bayesian = f.meta_value("bayesian") == "1";
  m.view_w = meta_int(f, "view_w");
  m.view_h = meta_int(f, "view_h");
  m.sampling = f.net("sampling");
  if (!m.bayesian) m.fitting = f.net("fitting");
  if (m.use_prior)
    load_prior_stack(f, m.prior, m.cls, m.hypotheses, m.view_w, m.view_h);
  return m;
}

void save_epn(const EpnModel& m, const std::filesystem::path& path) {
  nn::ModelFile f;
  fill_predictor_meta(f, "epn", m.cls, m.hypotheses, m.k, m.horizon, m.view_w,
                      m.view_h);
  f.nets = {{"sampling", m.sampling},
            {"fitting", m.fitting},
            {"rtn", m.prior.net},
            {"rpn", m.prior.rpn.net}};
  nn::save_model_file(path, f);
}

EpnModel load_epn(const std::filesystem::path& path) {
  const nn::ModelFile f = nn::load_model_file(path);
  require_kind(f, "epn");
  EpnModel m;
  m.cls = f.meta_value("class");
  m.hypotheses = meta_int(f, "hypotheses");
  m.k = meta_int(f, "k");
  m.horizon = meta_int(f, "horizon");
  m.view_w = meta_int(f, "view_w");
  m.view_h = meta_int(f, "view_h");
  m.sampling = f.net("sampling");
  m.fitting = f.net("fitting");
  load_prior_stack(f, m.prior, m.cls, m.hypotheses, m.view_w, m.view_h);
  return m;
}

}  // namespace mplab::pipeline
