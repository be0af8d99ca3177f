#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>

#include "mplab/config.hpp"
#include "mplab/evaluation.hpp"
#include "mplab/harness.hpp"

namespace {

mplab::cfg::RunConfig load(const std::string& config_path) {
  if (config_path.empty()) return {};
  return mplab::cfg::load_config(config_path);
}

void print_rows(const std::vector<mplab::eval::ReportRow>& rows) {
  std::fputs(mplab::eval::report_csv(rows).c_str(), stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"world-model prediction pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 1;
  int workers = 1;
  app.add_option("--config", config_path, "config file (key = value lines)");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--workers", workers, "worker threads for generation");

  auto* gen = app.add_subcommand("gen", "generate an episode dataset");
  std::string gen_out = "episodes";
  gen->add_option("--out", gen_out, "output directory");

  auto* train = app.add_subcommand("train", "train one pipeline stage");
  std::string train_stage;
  std::string train_data = "episodes";
  std::string train_ckpts = "ckpts";
  train->add_option("stage", train_stage, "rpn | rtn | fln | epn")->required();
  train->add_option("--data", train_data, "episode directory");
  train->add_option("--ckpts", train_ckpts, "checkpoint directory");

  auto* eval_cmd = app.add_subcommand("eval", "score the held-out episodes");
  std::string eval_data = "episodes";
  std::string eval_ckpts = "ckpts";
  std::string eval_report = "report.csv";
  eval_cmd->add_option("--data", eval_data, "episode directory");
  eval_cmd->add_option("--ckpts", eval_ckpts, "checkpoint directory");
  eval_cmd->add_option("--report", eval_report, "report file to write");

  auto* render = app.add_subcommand("render", "render a predicted density map");
  std::string render_ckpt;
  std::string render_episode;
  int render_agent = -1;
  int render_t = 0;
  bool render_boxes = false;
  std::string render_out = "density.pgm";
  render->add_option("--ckpt", render_ckpt, "fln or epn checkpoint")->required();
  render->add_option("--episode", render_episode, "episode file")->required();
  render->add_option("--agent", render_agent, "agent id (fln checkpoints)");
  render->add_option("--t", render_t, "frame index to condition on");
  render->add_flag("--boxes", render_boxes, "outline the hypothesis boxes");
  render->add_option("--out", render_out, "output graymap (ASCII P2)");

  auto* bench = app.add_subcommand("bench", "full gen/train/eval chain");
  std::string bench_out = "bench";
  bench->add_option("--out", bench_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto stats = mplab::harness::cmd_gen(load(config_path), seed, workers,
                                                 gen_out);
      std::fputs(stats.to_text().c_str(), stdout);
    } else if (train->parsed()) {
      mplab::harness::cmd_train(train_stage, load(config_path), seed, train_data,
                                train_ckpts);
      std::printf("trained %s\n", train_stage.c_str());
    } else if (eval_cmd->parsed()) {
      print_rows(mplab::harness::cmd_eval(load(config_path), seed, eval_data,
                                          eval_ckpts, eval_report));
    } else if (render->parsed()) {
      mplab::harness::cmd_render(render_ckpt, render_episode, render_agent,
                                 render_t, render_boxes, seed, render_out);
      std::printf("wrote %s\n", render_out.c_str());
    } else if (bench->parsed()) {
      print_rows(mplab::harness::cmd_bench(load(config_path), seed, workers,
                                           bench_out));
    }
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
