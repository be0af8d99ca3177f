#include "mplab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "mplab/baselines.hpp"
#include "mplab/episode_io.hpp"
#include "mplab/pipeline.hpp"
#include "mplab/rng.hpp"

namespace mplab::harness {

namespace fs = std::filesystem;

namespace {

// Pedestrian and vehicle option ids as produced by the step policies.
constexpr int kPedCross = 1;
constexpr int kVehStraight = 0;
constexpr int kVehRight = 1;
constexpr int kVehLeft = 2;

void tally(const world::Episode& ep, GenStats& stats) {
  for (const auto& fr : ep.frames) {
    for (const auto& d : fr.decisions) {
      const world::AgentState& a = ep.frames.front().agents[static_cast<std::size_t>(
          d.agent)];
      if (a.cls == world::AgentClass::kPedestrian) {
        ++stats.ped_decisions;
        if (d.chosen_id == kPedCross)
          ++stats.crossings;
        else
          ++stats.continues;
      } else {
        ++stats.veh_decisions;
        if (d.chosen_id == kVehStraight)
          ++stats.straights;
        else if (d.chosen_id == kVehRight)
          ++stats.rights;
        else if (d.chosen_id == kVehLeft)
          ++stats.lefts;
      }
    }
  }
}

std::vector<world::Episode> load_split(const cfg::RunConfig& c,
                                       const std::string& data_dir, bool train) {
  std::vector<world::Episode> all = io::load_episode_dir(data_dir);
  if (static_cast<int>(all.size()) <= c.eval_episodes)
    throw std::invalid_argument(
        "dataset holds " + std::to_string(all.size()) +
        " episodes, need more than eval.episodes = " +
        std::to_string(c.eval_episodes));
  const std::size_t split = all.size() - static_cast<std::size_t>(c.eval_episodes);
  if (train)
    return {all.begin(), all.begin() + static_cast<long>(split)};
  return {all.begin() + static_cast<long>(split), all.end()};
}

fs::path ckpt_path(const std::string& ckpt_dir, const std::string& stage) {
  return fs::path(ckpt_dir) / (stage + ".ck");
}

void require_ckpt(const std::string& ckpt_dir, const std::string& stage,
                  const std::string& for_stage) {
  if (!fs::exists(ckpt_path(ckpt_dir, stage)))
    throw std::invalid_argument("cmd_train " + for_stage + ": missing " +
                                ckpt_path(ckpt_dir, stage).string() +
                                " (requires: " + stage + ")");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "'");
  os << text;
  if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::string fln_stage_name(const cfg::RunConfig& c) {
  if (c.fln_bayesian) return "fln_bayes";
  return c.fln_use_prior ? "fln" : "fln_noprior";
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

std::string GenStats::to_text() const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "episodes=%d\n"
                "ped_decisions=%lld cross=%lld continue=%lld\n"
                "veh_decisions=%lld straight=%lld right=%lld left=%lld\n",
                episodes, ped_decisions, crossings, continues, veh_decisions,
                straights, rights, lefts);
  return buf;
}

GenStats cmd_gen(const cfg::RunConfig& c, std::uint64_t seed, int workers,
                 const std::string& out_dir) {
  cfg::validate_config(c);
  fs::create_directories(out_dir);

  const int n = c.gen_episodes;
  std::vector<GenStats> per_episode(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::string error;
  std::mutex error_mu;

  auto work = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        const world::Episode ep =
            world::generate_episode(rng::mix(seed, 0x5eed, static_cast<std::uint64_t>(i)),
                                    c.world);
        io::save_episode_file(ep, (fs::path(out_dir) / io::episode_filename(i)).string());
        per_episode[static_cast<std::size_t>(i)].episodes = 1;
        tally(ep, per_episode[static_cast<std::size_t>(i)]);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!failed.exchange(true)) error = e.what();
        return;
      }
    }
  };

  const int thread_count = std::max(1, std::min(workers, n));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(thread_count));
  for (int i = 0; i < thread_count; ++i) threads.emplace_back(work);
  for (auto& t : threads) t.join();
  if (failed.load()) throw std::runtime_error("cmd_gen: " + error);

  GenStats stats;
  for (const auto& s : per_episode) {
    stats.episodes += s.episodes;
    stats.ped_decisions += s.ped_decisions;
    stats.crossings += s.crossings;
    stats.continues += s.continues;
    stats.veh_decisions += s.veh_decisions;
    stats.straights += s.straights;
    stats.rights += s.rights;
    stats.lefts += s.lefts;
  }
  return stats;
}

void cmd_train(const std::string& stage, const cfg::RunConfig& c,
               std::uint64_t seed, const std::string& data_dir,
               const std::string& ckpt_dir) {
  cfg::validate_config(c);
  fs::create_directories(ckpt_dir);
  const std::vector<world::Episode> train_eps = load_split(c, data_dir, true);
  pipeline::TrainLog log;

  if (stage == "rpn") {
    const auto dataset = pipeline::build_rpn_dataset(train_eps, c.rpn_class);
    const pipeline::RpnModel m =
        pipeline::train_rpn(dataset, c, rng::mix(seed, 0x99a), &log);
    pipeline::save_rpn(m, ckpt_path(ckpt_dir, "rpn"));
    write_text(ckpt_path(ckpt_dir, "rpn").replace_extension(".log"), log.to_text());
    return;
  }
  if (stage == "rtn") {
    require_ckpt(ckpt_dir, "rpn", stage);
    const pipeline::RpnModel rpn = pipeline::load_rpn(ckpt_path(ckpt_dir, "rpn"));
    const pipeline::RtnModel m =
        pipeline::train_rtn(rpn, train_eps, c, rng::mix(seed, 0x99b), &log);
    pipeline::save_rtn(m, ckpt_path(ckpt_dir, "rtn"));
    write_text(ckpt_path(ckpt_dir, "rtn").replace_extension(".log"), log.to_text());
    return;
  }
  if (stage == "fln") {
    require_ckpt(ckpt_dir, "rtn", stage);
    const pipeline::RtnModel rtn = pipeline::load_rtn(ckpt_path(ckpt_dir, "rtn"));
    const pipeline::FlnModel m =
        pipeline::train_fln(rtn, train_eps, c, rng::mix(seed, 0x99c), &log);
    const std::string name = fln_stage_name(c);
    pipeline::save_fln(m, ckpt_path(ckpt_dir, name));
    write_text(ckpt_path(ckpt_dir, name).replace_extension(".log"), log.to_text());
    return;
  }
  if (stage == "epn") {
    require_ckpt(ckpt_dir, "rtn", stage);
    const pipeline::RtnModel rtn = pipeline::load_rtn(ckpt_path(ckpt_dir, "rtn"));
    const pipeline::EpnModel m =
        pipeline::train_epn(rtn, train_eps, c, rng::mix(seed, 0x99d), &log);
    pipeline::save_epn(m, ckpt_path(ckpt_dir, "epn"));
    write_text(ckpt_path(ckpt_dir, "epn").replace_extension(".log"), log.to_text());
    return;
  }
  throw std::invalid_argument("cmd_train: unknown stage '" + stage +
                              "' (want rpn, rtn, fln or epn)");
}

namespace {

struct LoadedMethods {
  bool fln = false, fln_noprior = false, fln_bayes = false;
  pipeline::FlnModel fln_model, noprior_model, bayes_model;
};

// Resolves eval.methods against the checkpoints present on disk. "auto"
// selects kalman, linear and every fln variant found.
LoadedMethods resolve_methods(const cfg::RunConfig& c, const std::string& ckpt_dir,
                              std::vector<std::string>& method_names) {
  LoadedMethods out;
  std::vector<std::string> requested = split_csv(c.eval_methods);
  const bool automatic =
      std::find(requested.begin(), requested.end(), "auto") != requested.end();
  auto wants = [&](const std::string& m) {
    return automatic ||
           std::find(requested.begin(), requested.end(), m) != requested.end();
  };
  for (const auto& m : requested)
    if (m != "auto" && m != "kalman" && m != "linear" && m != "fln" &&
        m != "fln_noprior" && m != "fln_bayes")
      throw std::invalid_argument("eval.methods: unknown method '" + m + "'");

  if (wants("kalman")) method_names.push_back("kalman");
  if (wants("linear")) method_names.push_back("linear");

  auto try_load = [&](const std::string& name, bool& flag,
                      pipeline::FlnModel& model) {
    const fs::path p = ckpt_path(ckpt_dir, name);
    if (automatic && !fs::exists(p)) return;
    if (!automatic && !wants(name)) return;
    if (!fs::exists(p))
      throw std::invalid_argument("cmd_eval: method '" + name +
                                  "' needs missing checkpoint " + p.string());
    model = pipeline::load_fln(p);
    flag = true;
    method_names.push_back(name);
  };
  try_load("fln", out.fln, out.fln_model);
  try_load("fln_noprior", out.fln_noprior, out.noprior_model);
  try_load("fln_bayes", out.fln_bayes, out.bayes_model);
  return out;
}

}  // namespace

std::vector<eval::ReportRow> cmd_eval(const cfg::RunConfig& c, std::uint64_t seed,
                                      const std::string& data_dir,
                                      const std::string& ckpt_dir,
                                      const std::string& report_path) {
  cfg::validate_config(c);
  const std::vector<world::Episode> eval_eps = load_split(c, data_dir, false);

  std::vector<std::string> methods;
  LoadedMethods loaded = resolve_methods(c, ckpt_dir, methods);
  if (methods.empty())
    throw std::invalid_argument("cmd_eval: eval.methods selected nothing");

  const int observe = c.fln_observe;
  const int horizon = c.fln_horizon;
  std::vector<eval::EvalRecord> records;
  int scenario = 0;
  for (const auto& ep : eval_eps) {
    for (const auto& a : ep.frames.front().agents) {
      if (a.cls != pipeline::parse_class(c.rpn_class)) continue;
      for (int t = observe - 1; t + horizon < ep.length(); ++t) {
        bool visible = true;
        for (int f = t - observe + 1; f <= t && visible; ++f)
          visible = ep.visibility(a.id, f) >= ep.cfg.visibility_threshold;
        if (!visible) continue;

        const geom::BBox gt = ep.image_box(a.id, t + horizon);
        std::vector<geom::BBox> track;
        for (int f = t - observe + 1; f <= t; ++f)
          track.push_back(ep.image_box(a.id, f));

        const geom::BBox kalman_box = baselines::kalman_track_predict(track, horizon);
        const double kalman_fde = geom::center_distance(
            geom::clamp_to_frame(kalman_box, c.world.view_w, c.world.view_h), gt);

        auto push = [&](const std::string& method, auto prediction) {
          eval::EvalRecord r;
          r.scenario = scenario;
          r.method = method;
          r.gt = gt;
          r.prediction = std::move(prediction);
          r.kalman_fde = kalman_fde;
          records.push_back(std::move(r));
        };

        for (const auto& method : methods) {
          if (method == "kalman") {
            push("kalman", kalman_box);
          } else if (method == "linear") {
            push("linear", baselines::linear_extrapolate(track, horizon));
          } else if (method == "fln") {
            push("fln", pipeline::predict(loaded.fln_model,
                                          pipeline::fln_input(loaded.fln_model, ep,
                                                              a.id, t))
                            .mixture);
          } else if (method == "fln_noprior") {
            push("fln_noprior",
                 pipeline::predict(loaded.noprior_model,
                                   pipeline::fln_input(loaded.noprior_model, ep,
                                                       a.id, t))
                     .mixture);
          } else if (method == "fln_bayes") {
            push("fln_bayes",
                 pipeline::predict(
                     loaded.bayes_model,
                     pipeline::fln_input(loaded.bayes_model, ep, a.id, t),
                     rng::mix(seed, 0xbead, static_cast<std::uint64_t>(scenario)))
                     .mixture);
          }
        }
        ++scenario;
      }
    }
  }
  if (records.empty())
    throw std::runtime_error("cmd_eval: no scoreable scenarios in the eval split");

  const std::vector<eval::ReportRow> rows =
      eval::evaluate(records, c.world.view_w, c.world.view_h);
  eval::write_report(rows, report_path);

  // Per-scenario records for inspection, next to the report.
  std::string text = "scenario,method,fde,iou,nll\n";
  char buf[128];
  for (const auto& r : records) {
    const geom::BBox chosen = geom::clamp_to_frame(eval::oracle_select(r),
                                                   c.world.view_w, c.world.view_h);
    const double fde = geom::center_distance(chosen, r.gt);
    const double iou_v = geom::iou(chosen, r.gt);
    std::snprintf(buf, sizeof(buf), "%d,%s,%.6f,%.6f", r.scenario,
                  r.method.c_str(), fde, iou_v);
    text += buf;
    if (const auto* m = std::get_if<mix::GaussianMixture>(&r.prediction)) {
      std::snprintf(buf, sizeof(buf), ",%.6f", mix::nll(*m, r.gt));
      text += buf;
    } else {
      text += ',';
    }
    text += '\n';
  }
  write_text(fs::path(report_path).parent_path() / "records.csv", text);
  return rows;
}

void cmd_render(const std::string& ckpt_path_str, const std::string& episode_path,
                int agent_id, int t, bool boxes, std::uint64_t seed,
                const std::string& out_path) {
  const world::Episode ep = io::load_episode_file(episode_path);
  const nn::ModelFile probe = nn::load_model_file(ckpt_path_str);
  const std::string kind = probe.meta_value("kind");

  pipeline::Prediction pred;
  int w = 0, h = 0;
  if (kind == "fln") {
    const pipeline::FlnModel m = pipeline::load_fln(ckpt_path_str);
    pred = pipeline::predict(m, pipeline::fln_input(m, ep, agent_id, t), seed);
    w = m.view_w;
    h = m.view_h;
  } else if (kind == "epn") {
    const pipeline::EpnModel m = pipeline::load_epn(ckpt_path_str);
    pred = pipeline::predict(m, pipeline::epn_input(m, ep, t));
    w = m.view_w;
    h = m.view_h;
  } else {
    throw std::invalid_argument("cmd_render: checkpoint kind '" + kind +
                                "' has no mixture output (want fln or epn)");
  }

  std::vector<double> density(static_cast<std::size_t>(w) * h);
  double peak = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double d = mix::marginal_density_xy(pred.mixture, x + 0.5, y + 0.5);
      density[static_cast<std::size_t>(y) * w + x] = d;
      peak = std::max(peak, d);
    }
  if (peak <= 0.0)
    throw std::runtime_error("cmd_render: mixture density vanished on the frame");

  std::vector<int> gray(density.size());
  for (std::size_t i = 0; i < density.size(); ++i)
    gray[i] = static_cast<int>(std::llround(density[i] / peak * 255.0));

  if (boxes) {
    for (const auto& b : pred.hyps.boxes) {
      const geom::BBox cb = geom::clamp_to_frame(b, w, h);
      const int x0 = std::clamp(static_cast<int>(std::floor(cb.x - cb.w / 2)), 0, w - 1);
      const int x1 = std::clamp(static_cast<int>(std::floor(cb.x + cb.w / 2)), 0, w - 1);
      const int y0 = std::clamp(static_cast<int>(std::floor(cb.y - cb.h / 2)), 0, h - 1);
      const int y1 = std::clamp(static_cast<int>(std::floor(cb.y + cb.h / 2)), 0, h - 1);
      for (int x = x0; x <= x1; ++x) {
        gray[static_cast<std::size_t>(y0) * w + x] = 255;
        gray[static_cast<std::size_t>(y1) * w + x] = 255;
      }
      for (int y = y0; y <= y1; ++y) {
        gray[static_cast<std::size_t>(y) * w + x0] = 255;
        gray[static_cast<std::size_t>(y) * w + x1] = 255;
      }
    }
  }

  std::string text = "P2\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (x) text += ' ';
      text += std::to_string(gray[static_cast<std::size_t>(y) * w + x]);
    }
    text += '\n';
  }
  write_text(out_path, text);
}

std::vector<eval::ReportRow> cmd_bench(const cfg::RunConfig& c, std::uint64_t seed,
                                       int workers, const std::string& out_dir) {
  cfg::validate_config(c);
  fs::create_directories(out_dir);
  const std::string data_dir = (fs::path(out_dir) / "episodes").string();
  const std::string ckpt_dir = (fs::path(out_dir) / "ckpts").string();

  const GenStats stats = cmd_gen(c, seed, workers, data_dir);
  write_text(fs::path(out_dir) / "gen_stats.txt", stats.to_text());
  cmd_train("rpn", c, seed, data_dir, ckpt_dir);
  cmd_train("rtn", c, seed, data_dir, ckpt_dir);

  // Each fln variant named in eval.methods gets its own training run on
  // the shared prior chain; "auto" falls back to the configured flags.
  const std::vector<std::string> requested = split_csv(c.eval_methods);
  auto listed = [&](const std::string& m) {
    return std::find(requested.begin(), requested.end(), m) != requested.end();
  };
  auto train_variant = [&](bool use_prior, bool bayesian) {
    cfg::RunConfig v = c;
    v.fln_use_prior = use_prior;
    v.fln_bayesian = bayesian;
    cmd_train("fln", v, seed, data_dir, ckpt_dir);
  };
  bool trained = false;
  if (listed("fln")) {
    train_variant(true, false);
    trained = true;
  }
  if (listed("fln_noprior")) {
    train_variant(false, false);
    trained = true;
  }
  if (listed("fln_bayes")) {
    train_variant(c.fln_use_prior, true);
    trained = true;
  }
  if (!trained) cmd_train("fln", c, seed, data_dir, ckpt_dir);

  cmd_train("epn", c, seed, data_dir, ckpt_dir);
  return cmd_eval(c, seed, data_dir, ckpt_dir,
                  (fs::path(out_dir) / "report.csv").string());
}

}  // namespace mplab::harness
