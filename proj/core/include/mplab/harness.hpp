#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mplab/config.hpp"
#include "mplab/evaluation.hpp"

namespace mplab::harness {

// Aggregate branch statistics over a generated dataset.
struct GenStats {
  int episodes = 0;
  long long ped_decisions = 0;
  long long crossings = 0;
  long long continues = 0;
  long long veh_decisions = 0;
  long long straights = 0;
  long long rights = 0;
  long long lefts = 0;

  std::string to_text() const;
};

// Generates gen.episodes episodes into out_dir (one .ep file each) using
// up to `workers` threads; the files do not depend on the worker count.
GenStats cmd_gen(const cfg::RunConfig& c, std::uint64_t seed, int workers,
                 const std::string& out_dir);

// Trains one stage (rpn | rtn | fln | epn) on the training slice of the
// dataset and writes <stage>.ck plus <stage>.log into ckpt_dir. The fln
// stage name follows its config variant: fln, fln_noprior or fln_bayes.
// Missing prerequisites raise an error naming the required stage.
void cmd_train(const std::string& stage, const cfg::RunConfig& c,
               std::uint64_t seed, const std::string& data_dir,
               const std::string& ckpt_dir);

// Scores the evaluation slice with every configured method and writes
// the report table plus a per-scenario records.csv next to it.
std::vector<eval::ReportRow> cmd_eval(const cfg::RunConfig& c, std::uint64_t seed,
                                      const std::string& data_dir,
                                      const std::string& ckpt_dir,
                                      const std::string& report_path);

// Renders the predicted mixture density over the frame lattice of one
// scenario to an ASCII graymap, optionally burning in the hypothesis
// boxes as max-intensity outlines.
void cmd_render(const std::string& ckpt_path, const std::string& episode_path,
                int agent_id, int t, bool boxes, std::uint64_t seed,
                const std::string& out_path);

// Full chain: gen, train rpn/rtn, one fln run per variant named in
// eval.methods (or the configured variant under "auto"), epn, eval.
// Writes episodes/, ckpts/ and report.csv under out_dir and returns the
// report rows.
std::vector<eval::ReportRow> cmd_bench(const cfg::RunConfig& c, std::uint64_t seed,
                                       int workers, const std::string& out_dir);

}  // namespace mplab::harness
