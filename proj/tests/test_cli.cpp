#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "seqbed/cli.hpp"

using namespace seqbed;
using namespace seqbed::cli;
namespace fs = std::filesystem;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("seqbed_cli_test_" + name);
  fs::remove_all(dir);
  return dir;
}

RunConfig small_death(const fs::path& out) {
  RunConfig c = parse_config(
      "run:\n  env: death\n  episodes: 12\n  eval_episodes: 30\n"
      "env:\n  L: 40\n"
      "sac:\n  batch_size: 8\n  warmup_steps: 10\n  hidden_width: 8\n  replay_capacity: 500\n");
  c.output_dir = out.string();
  return c;
}

}  // namespace

TEST_CASE("empty config resolves to the location defaults") {
  const RunConfig c = parse_config("");
  const auto& loc = std::get<env::LocationConfig>(c.env);
  CHECK(loc.d_1 == 3.0);
  CHECK(loc.d_2 == 50.0);
  CHECK(loc.T == 100);
  CHECK(loc.L == 2000);
  CHECK(loc.sigma_1 == 40.0);
  CHECK(loc.b == 0.3);
  CHECK(loc.m == 1e-4);
  CHECK(loc.sigma_2 == 0.5);
  CHECK(loc.alpha == 1.0);
  CHECK(c.sac.gamma == 0.99);
  CHECK(c.eval_episodes == 500);
}

TEST_CASE("death defaults and overrides") {
  const RunConfig c = parse_config("run:\n  env: death\n");
  const auto& d = std::get<env::DeathConfig>(c.env);
  CHECK(d.mu_theta == 1.0);
  CHECK(d.sigma_theta == 1.0);
  CHECK(d.T == 4);
  CHECK(d.N == 50);
  CHECK(d.L == 2000);

  const RunConfig o = parse_config("run:\n  env: death\n  seed: 18446744073709551615\nenv:\n  N: 20\nsac:\n  alpha: 0.01\n  twin_critics: false\n");
  CHECK(std::get<env::DeathConfig>(o.env).N == 20);
  CHECK(o.sac.alpha == 0.01);
  CHECK_FALSE(o.sac.twin_critics);
  CHECK(o.seed == 18446744073709551615ULL);
}

TEST_CASE("validation errors name the key path") {
  CHECK(error_of("env:\n  sigma_1: -5\n").rfind("env.sigma_1:", 0) == 0);
  CHECK(error_of("env:\n  sigmaa_1: 5\n").rfind("env.sigmaa_1: unknown key", 0) == 0);
  CHECK(error_of("run:\n  env: death\nenv:\n  d_1: 2\n").rfind("env.d_1: unknown key", 0) == 0);
  CHECK(error_of("env:\n  T: 2.5\n").rfind("env.T: expected an integer", 0) == 0);
  CHECK(error_of("env:\n  b: abc\n").rfind("env.b: expected a number", 0) == 0);
  CHECK(error_of("sac:\n  twin_critics: maybe\n").rfind("sac.twin_critics:", 0) == 0);
  CHECK(error_of("sac:\n  tau: 0\n").rfind("sac.tau:", 0) == 0);
  CHECK(error_of("run:\n  env: mars\n").rfind("run.env:", 0) == 0);
  CHECK(error_of("run:\n  wat: 1\n").rfind("run.wat: unknown key", 0) == 0);
  CHECK(error_of("extra:\n  x: 1\n").find("extra") != std::string::npos);
  CHECK(error_of("run:\n  threads: 0\n").rfind("run.threads:", 0) == 0);
  CHECK(error_of("generalize:\n  parameter: d_1\n  values: [1]\n").rfind("generalize.parameter:", 0) == 0);
  CHECK(error_of("env:\n  origin: [1]\n").rfind("env.origin:", 0) == 0);
}

TEST_CASE("resolved config round trips") {
  const char* texts[] = {
      "",
      "run:\n  env: source\n  output_dir: \"a dir/with: colon\"\nenv:\n  sigma_1: 0.1\n  origin: [1.5, -2]\n  contrast_wind: true\n",
      "run:\n  env: death\n  seed: 77\nsac:\n  lr_actor: 0.00012345678901234\ngeneralize:\n  parameter: mu_theta\n  values: [0.5, 1.0, 1.5]\n",
      "run:\n  env: toy\nenv:\n  L: 8\n"};
  for (const char* text : texts) {
    const RunConfig c = parse_config(text);
    const std::string emitted = emit_config(c);
    CHECK(emit_config(parse_config(emitted)) == emitted);
    CHECK(config_hash(parse_config(emitted)) == config_hash(c));
  }
  const RunConfig c = parse_config(texts[2]);
  CHECK(parse_config(emit_config(c)).sac.lr_actor == c.sac.lr_actor);
}

TEST_CASE("overrides") {
  RunConfig c = parse_config("");
  apply_overrides(c, Overrides{5, std::string("elsewhere"), 3});
  CHECK(c.seed == 5);
  CHECK(c.output_dir == "elsewhere");
  CHECK(c.threads == 3);
  CHECK_THROWS_AS(apply_overrides(c, Overrides{std::nullopt, std::nullopt, 0}), ConfigError);
}

TEST_CASE("prior parameters") {
  const RunConfig c = parse_config("run:\n  env: death\n");
  CHECK(prior_parameter(c.env, "mu_theta") == 1.0);
  CHECK(std::get<env::DeathConfig>(with_prior_parameter(c.env, "mu_theta", 1.5)).mu_theta == 1.5);
  CHECK_THROWS_AS(with_prior_parameter(c.env, "T", 3.0), ConfigError);
  CHECK_THROWS_AS(with_prior_parameter(c.env, "sigma_theta", -1.0), ConfigError);
  CHECK(default_sweep(env::EnvKind::location).values == std::vector<double>{20.0, 40.0, 60.0});
  CHECK_THROWS_AS(default_sweep(env::EnvKind::toy), ConfigError);
}

TEST_CASE("train, eval and baseline artifacts") {
  const fs::path out = scratch("train");
  const RunConfig c = small_death(out);
  REQUIRE(cmd_train(c) == 0);
  CHECK(fs::exists(out / "checkpoint.sqbd"));
  CHECK(fs::exists(out / "training_log.csv"));
  const auto manifest = nlohmann::json::parse(slurp(out / "train_manifest.json"));
  CHECK(manifest["files"].size() == 2);
  CHECK(emit_config(parse_config(manifest["config"].get<std::string>())) == emit_config(c));

  REQUIRE(cmd_eval(c, out / "checkpoint.sqbd") == 0);
  const std::string first = slurp(out / "eval_summary.csv");
  CHECK(first.rfind("mean,std_err,episodes,L\n", 0) == 0);
  CHECK(first.find(",30,40\n") != std::string::npos);
  REQUIRE(cmd_eval(c, out / "checkpoint.sqbd") == 0);
  CHECK(slurp(out / "eval_summary.csv") == first);

  REQUIRE(cmd_baseline(c) == 0);
  CHECK(fs::exists(out / "baseline_trajectories.csv"));

  // Re-running training reproduces the checkpoint and the log byte for byte.
  const std::string ckpt = slurp(out / "checkpoint.sqbd");
  const std::string log = slurp(out / "training_log.csv");
  REQUIRE(cmd_train(c) == 0);
  CHECK(slurp(out / "checkpoint.sqbd") == ckpt);
  CHECK(slurp(out / "training_log.csv") == log);
}

TEST_CASE("train with zero episodes writes the initial agent and an empty log") {
  const fs::path out = scratch("zero");
  RunConfig c = small_death(out);
  c.episodes = 0;
  REQUIRE(cmd_train(c) == 0);
  const std::string log = slurp(out / "training_log.csv");
  CHECK(std::count(log.begin(), log.end(), '\n') == 1);
  CHECK(cmd_eval(c, out / "checkpoint.sqbd") == 0);
}

TEST_CASE("eval refuses incompatible checkpoints") {
  const fs::path out = scratch("refuse");
  RunConfig c = small_death(out);
  c.episodes = 0;
  REQUIRE(cmd_train(c) == 0);
  RunConfig other = c;
  std::get<env::DeathConfig>(other.env).T = 5;
  CHECK_THROWS_AS(cmd_eval(other, out / "checkpoint.sqbd"), std::runtime_error);
  RunConfig loc = parse_config("env:\n  T: 4\n");
  loc.output_dir = out.string();
  CHECK_THROWS_AS(cmd_eval(loc, out / "checkpoint.sqbd"), std::runtime_error);
}

TEST_CASE("generalize reports the self ratio exactly") {
  const fs::path out = scratch("generalize");
  RunConfig c = small_death(out);
  c.sweep = Sweep{"mu_theta", {0.5, 1.0}};
  REQUIRE(cmd_generalize(c, std::nullopt) == 0);
  std::istringstream table(slurp(out / "generalize.csv"));
  std::string header, row_a, row_b;
  std::getline(table, header);
  std::getline(table, row_a);
  std::getline(table, row_b);
  CHECK(header == "parameter,value,mean,std_err,ratio_to_original");
  CHECK(row_a.rfind("mu_theta,0.5,", 0) == 0);
  CHECK(row_b.rfind("mu_theta,1,", 0) == 0);
  CHECK(row_b.substr(row_b.size() - 6) == ",1.000");

  c.sweep = Sweep{"mu_theta", {1.5}};
  REQUIRE(cmd_generalize(c, std::nullopt) == 0);

  RunConfig toy = parse_config("run:\n  env: toy\n");
  toy.output_dir = out.string();
  CHECK_THROWS_AS(cmd_generalize(toy, std::nullopt), ConfigError);
}

TEST_CASE("oracle command") {
  const fs::path out = scratch("oracle");
  RunConfig c = parse_config("run:\n  env: toy\n  oracle_samples: 20000\n");
  c.output_dir = out.string();
  std::ostringstream report;
  CHECK(cmd_oracle(c, report) == 0);
  CHECK(report.str().find("bound: expected CID <= EIG for every L: pass") != std::string::npos);
  CHECK(slurp(out / "oracle.csv").rfind("quantity,L,exact,estimate,std_err,z\n", 0) == 0);

  RunConfig loc = parse_config("");
  loc.output_dir = out.string();
  CHECK_THROWS_AS(cmd_oracle(loc, report), ConfigError);
}

TEST_CASE("write_generalize prints ratios with three decimals") {
  std::ostringstream out;
  write_generalize(out, "sigma_1", {GeneralizeRow{20.0, {4.1, 0.1}, 1.23456}});
  CHECK(out.str() == "parameter,value,mean,std_err,ratio_to_original\nsigma_1,20,4.0999999999999996,0.10000000000000001,1.235\n");
}
