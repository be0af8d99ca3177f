#include <doctest.h>

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mplab/config.hpp"

using namespace mplab;
using cfg::RunConfig;

namespace {

bool throws_with(const std::function<void()>& fn, const std::string& needle) {
  try {
    fn();
  } catch (const std::invalid_argument& e) {
    return std::string(e.what()).find(needle) != std::string::npos;
  }
  return false;
}

}  // namespace

TEST_CASE("the default config passes validation") {
  const RunConfig c;
  CHECK_NOTHROW(cfg::validate_config(c));
  CHECK(cfg::hypothesis_count(c) == 20);
}

TEST_CASE("parsing reads dotted keys with comments and blanks") {
  const std::string text =
      "# benchmark overrides\n"
      "\n"
      "world.scenario = branching\n"
      "  gen.episodes=128  \n"
      "train.lr = 0.0005\n"
      "fln.use_prior = 0\n";
  const RunConfig c = cfg::parse_config(text);
  CHECK(c.world.scenario == "branching");
  CHECK(c.gen_episodes == 128);
  CHECK(c.train_lr == doctest::Approx(0.0005));
  CHECK_FALSE(c.fln_use_prior);
}

TEST_CASE("unknown keys are rejected by name and line") {
  CHECK(throws_with([] { cfg::parse_config("world.view_q = 3\n"); },
                    "world.view_q"));
  CHECK(throws_with([] { cfg::parse_config("\n\nnope = 1\n"); }, "line 3"));
}

TEST_CASE("unparsable values name the offending key") {
  CHECK(throws_with([] { cfg::parse_config("train.batch = soon\n"); },
                    "train.batch"));
  CHECK(throws_with([] { cfg::parse_config("train.lr = fast\n"); }, "fast"));
  CHECK(throws_with([] { cfg::parse_config("fln.use_prior = maybe\n"); },
                    "fln.use_prior"));
}

TEST_CASE("lines without an equals sign are malformed") {
  CHECK(throws_with([] { cfg::parse_config("just words\n"); }, "key = value"));
}

TEST_CASE("serialize then parse is the identity") {
  RunConfig c;
  c.world.scenario = "straight";
  c.world.p_cross = 0.75;
  c.gen_episodes = 7;
  c.ewta_stages = "8,4,2,1";
  c.fln_bayesian = true;
  c.eval_methods = "kalman,fln";
  const std::string text = cfg::serialize_config(c);
  const RunConfig back = cfg::parse_config(text);
  CHECK(cfg::serialize_config(back) == text);
  CHECK(back.world.scenario == "straight");
  CHECK(back.world.p_cross == doctest::Approx(0.75));
  CHECK(back.ewta_stages == "8,4,2,1");
  CHECK(back.fln_bayesian);
  CHECK(back.eval_methods == "kalman,fln");
}

TEST_CASE("the stage list parses and validates") {
  RunConfig c;
  CHECK(cfg::ewta_stage_list(c) == std::vector<int>{20, 10, 5, 2, 1});
  c.ewta_stages = "7,3,1";
  CHECK(cfg::ewta_stage_list(c) == std::vector<int>{7, 3, 1});
  c.ewta_stages = "1";
  CHECK(cfg::ewta_stage_list(c) == std::vector<int>{1});

  c.ewta_stages = "20,10,five,1";
  CHECK(throws_with([&] { cfg::ewta_stage_list(c); }, "non-integer"));
  c.ewta_stages = "20,10,5";
  CHECK(throws_with([&] { cfg::ewta_stage_list(c); }, "end at 1"));
  c.ewta_stages = "20,20,1";
  CHECK(throws_with([&] { cfg::ewta_stage_list(c); }, "strictly decrease"));
  c.ewta_stages = "";
  CHECK(throws_with([&] { cfg::ewta_stage_list(c); }, "at least one"));
  c.ewta_stages = "20,0,1";
  CHECK_THROWS_AS(cfg::ewta_stage_list(c), std::invalid_argument);
}

TEST_CASE("validation catches out-of-range fields") {
  RunConfig c;
  c.world.view_w = 30;
  CHECK(throws_with([&] { cfg::validate_config(c); }, "divisible"));

  c = RunConfig{};
  c.train_dropout = 1.0;
  CHECK(throws_with([&] { cfg::validate_config(c); }, "train.dropout"));

  c = RunConfig{};
  c.fln_observe = 30;
  c.fln_horizon = 20;
  CHECK(throws_with([&] { cfg::validate_config(c); }, "episode_len"));

  c = RunConfig{};
  c.eval_episodes = c.gen_episodes;
  CHECK(throws_with([&] { cfg::validate_config(c); }, "eval.episodes"));

  c = RunConfig{};
  c.fln_k = 32;
  CHECK(throws_with([&] { cfg::validate_config(c); }, "hypothesis count"));

  c = RunConfig{};
  c.rpn_class = "bike";
  CHECK(throws_with([&] { cfg::validate_config(c); }, "rpn.class"));
}

TEST_CASE("eval.methods accepts only known tokens") {
  RunConfig c;
  c.eval_methods = "kalman,linear,fln,fln_noprior,fln_bayes";
  CHECK_NOTHROW(cfg::validate_config(c));
  c.eval_methods = "auto";
  CHECK_NOTHROW(cfg::validate_config(c));
  c.eval_methods = "kalman,warp";
  CHECK(throws_with([&] { cfg::validate_config(c); }, "warp"));
}

TEST_CASE("worst-case outcome counts scale with travel distance") {
  RunConfig c;
  // Default speeds, 15-step window: two pedestrian entries (2^2) and
  // two vehicle entries (3^2).
  CHECK(cfg::worst_case_outcomes(c, 15) == 9);
  CHECK(cfg::worst_case_outcomes(c, 1) == 3);
  // Longer windows admit more entries.
  CHECK(cfg::worst_case_outcomes(c, 30) > 9);
}

TEST_CASE("the branch budget rule rejects explosive windows") {
  RunConfig c;
  c.world.episode_len = 80;
  c.fln_horizon = 40;
  // 40 steps of vehicle travel crosses five junction spacings.
  CHECK(cfg::worst_case_outcomes(c, 40) > c.world.branch_cap);
  CHECK(throws_with([&] { cfg::validate_config(c); }, "branch_cap"));
  c.world.branch_cap = 100000;
  CHECK_NOTHROW(cfg::validate_config(c));
}

TEST_CASE("load_config reports a missing file") {
  CHECK_THROWS_AS(cfg::load_config("/nonexistent/path.cfg"), std::runtime_error);
}
