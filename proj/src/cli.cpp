#include "seqbed/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <limits>
#include <fstream>
#include <iostream>
#include <sstream>
#include <type_traits>
#include <utility>
#include <variant>

#include <yaml-cpp/yaml.h>

#include "json.hpp"
#include "seqbed/infogain.hpp"
#include "seqbed/nn.hpp"

#ifndef SEQBED_REVISION
#define SEQBED_REVISION "unknown"
#endif

namespace seqbed::cli {

namespace fs = std::filesystem;

namespace {

// --- field tables ----------------------------------------------------------

template <typename C>
using FieldPtr = std::variant<double C::*, int C::*, bool C::*, env::Point C::*>;

template <typename C>
struct Field {
  const char* name;
  FieldPtr<C> ptr;
};

const std::vector<Field<env::LocationConfig>>& fields(const env::LocationConfig&) {
  using C = env::LocationConfig;
  static const std::vector<Field<C>> f{
      {"sigma_1", &C::sigma_1}, {"alpha", &C::alpha}, {"b", &C::b},
      {"m", &C::m},             {"sigma_2", &C::sigma_2}, {"d_1", &C::d_1},
      {"d_2", &C::d_2},         {"T", &C::T},         {"L", &C::L},
      {"origin", &C::origin}};
  return f;
}

const std::vector<Field<env::SourceConfig>>& fields(const env::SourceConfig&) {
  using C = env::SourceConfig;
  static const std::vector<Field<C>> f{
      {"sigma_1", &C::sigma_1}, {"sigma_2", &C::sigma_2}, {"s", &C::s},
      {"D", &C::D},             {"sigma_3", &C::sigma_3}, {"d_1", &C::d_1},
      {"d_2", &C::d_2},         {"T", &C::T},             {"L", &C::L},
      {"origin", &C::origin},   {"contrast_wind", &C::contrast_wind}};
  return f;
}

const std::vector<Field<env::DeathConfig>>& fields(const env::DeathConfig&) {
  using C = env::DeathConfig;
  static const std::vector<Field<C>> f{{"mu_theta", &C::mu_theta},
                                       {"sigma_theta", &C::sigma_theta},
                                       {"T", &C::T},
                                       {"N", &C::N},
                                       {"L", &C::L}};
  return f;
}

const std::vector<Field<env::ToyConfig>>& fields(const env::ToyConfig&) {
  using C = env::ToyConfig;
  static const std::vector<Field<C>> f{
      {"p_low", &C::p_low}, {"p_high", &C::p_high}, {"L", &C::L}};
  return f;
}

const std::vector<Field<sac::SacConfig>>& fields(const sac::SacConfig&) {
  using C = sac::SacConfig;
  static const std::vector<Field<C>> f{
      {"gamma", &C::gamma},
      {"alpha", &C::alpha},
      {"tau", &C::tau},
      {"lr_actor", &C::lr_actor},
      {"lr_critic", &C::lr_critic},
      {"batch_size", &C::batch_size},
      {"replay_capacity", &C::replay_capacity},
      {"warmup_steps", &C::warmup_steps},
      {"updates_per_env_step", &C::updates_per_env_step},
      {"hidden_width", &C::hidden_width},
      {"hidden_layers", &C::hidden_layers},
      {"twin_critics", &C::twin_critics}};
  return f;
}

// --- scalar conversion -----------------------------------------------------

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

std::string scalar_text(const YAML::Node& node, const std::string& path) {
  if (!node.IsScalar()) fail(path, "expected a scalar value");
  return node.Scalar();
}

double as_double(const YAML::Node& node, const std::string& path) {
  const std::string text = scalar_text(node, path);
  double v = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    fail(path, "expected a number, got '" + text + "'");
  }
  return v;
}

std::int64_t as_integer(const YAML::Node& node, const std::string& path) {
  const std::string text = scalar_text(node, path);
  std::int64_t v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    fail(path, "expected an integer, got '" + text + "'");
  }
  return v;
}

std::uint64_t as_unsigned(const YAML::Node& node, const std::string& path) {
  const std::string text = scalar_text(node, path);
  std::uint64_t v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    fail(path, "expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

int as_int(const YAML::Node& node, const std::string& path) {
  const std::int64_t v = as_integer(node, path);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    fail(path, "integer out of range");
  }
  return static_cast<int>(v);
}

bool as_bool(const YAML::Node& node, const std::string& path) {
  const std::string text = scalar_text(node, path);
  if (text == "true") return true;
  if (text == "false") return false;
  fail(path, "expected true or false, got '" + text + "'");
}

env::Point as_point(const YAML::Node& node, const std::string& path) {
  if (!node.IsSequence() || node.size() != 2) fail(path, "expected a list of two numbers");
  return {as_double(node[0], path + "[0]"), as_double(node[1], path + "[1]")};
}

std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, end);
  // Keep a decimal marker so the value reads back as a real number.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string quoted(const std::string& s) { return nlohmann::json(s).dump(); }

// --- sections --------------------------------------------------------------

std::vector<std::string> keys_of(const YAML::Node& map, const std::string& path) {
  if (!map) return {};
  if (map.IsNull()) return {};
  if (!map.IsMap()) fail(path, "expected a mapping");
  std::vector<std::string> keys;
  for (const auto& kv : map) keys.push_back(kv.first.as<std::string>());
  return keys;
}

template <typename C>
void apply_fields(C& target, const YAML::Node& section, const std::string& section_name) {
  for (const std::string& key : keys_of(section, section_name)) {
    const std::string path = section_name + "." + key;
    const Field<C>* match = nullptr;
    for (const auto& f : fields(target)) {
      if (key == f.name) match = &f;
    }
    if (!match) fail(path, "unknown key");
    const YAML::Node value = section[key];
    std::visit(
        [&](auto ptr) {
          using T = std::remove_reference_t<decltype(target.*ptr)>;
          if constexpr (std::is_same_v<T, double>) target.*ptr = as_double(value, path);
          if constexpr (std::is_same_v<T, int>) target.*ptr = as_int(value, path);
          if constexpr (std::is_same_v<T, bool>) target.*ptr = as_bool(value, path);
          if constexpr (std::is_same_v<T, env::Point>) target.*ptr = as_point(value, path);
        },
        match->ptr);
  }
}

template <typename C>
void emit_fields(std::ostream& out, const C& source) {
  for (const auto& f : fields(source)) {
    out << "  " << f.name << ": ";
    std::visit(
        [&](auto ptr) {
          const auto& v = source.*ptr;
          using T = std::remove_cvref_t<decltype(v)>;
          if constexpr (std::is_same_v<T, double>) out << format_double(v);
          if constexpr (std::is_same_v<T, int>) out << v;
          if constexpr (std::is_same_v<T, bool>) out << (v ? "true" : "false");
          if constexpr (std::is_same_v<T, env::Point>) {
            out << '[' << format_double(v[0]) << ", " << format_double(v[1]) << ']';
          }
        },
        f.ptr);
    out << '\n';
  }
}

void reject_unknown(const YAML::Node& section, const std::string& name,
                    std::initializer_list<std::string_view> known) {
  for (const std::string& key : keys_of(section, name)) {
    bool ok = false;
    for (auto k : known) ok = ok || key == k;
    if (!ok) fail(name + "." + key, "unknown key");
  }
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

// --- config ----------------------------------------------------------------

RunConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (root && !root.IsNull() && !root.IsMap()) fail("config", "top level must be a mapping");
  reject_unknown(root, "config", {"run", "env", "sac", "generalize"});
  const YAML::Node run = root["run"];
  reject_unknown(run, "run",
                 {"env", "episodes", "seed", "output_dir", "eval_episodes", "oracle_samples",
                  "threads"});

  RunConfig config;
  env::EnvKind kind = env::EnvKind::location;
  if (run && run.IsMap() && run["env"]) {
    try {
      kind = env::parse_env_kind(scalar_text(run["env"], "run.env"));
    } catch (const std::invalid_argument& e) {
      fail("run.env", e.what());
    }
  }
  config.env = env::default_config(kind);
  if (run && run.IsMap()) {
    if (run["episodes"]) config.episodes = as_unsigned(run["episodes"], "run.episodes");
    if (run["seed"]) config.seed = as_unsigned(run["seed"], "run.seed");
    if (run["output_dir"]) config.output_dir = scalar_text(run["output_dir"], "run.output_dir");
    if (run["eval_episodes"]) {
      config.eval_episodes = as_unsigned(run["eval_episodes"], "run.eval_episodes");
    }
    if (run["oracle_samples"]) {
      config.oracle_samples = as_unsigned(run["oracle_samples"], "run.oracle_samples");
    }
    if (run["threads"]) config.threads = as_int(run["threads"], "run.threads");
  }
  if (config.output_dir.empty()) fail("run.output_dir", "must not be empty");
  if (config.eval_episodes < 2) fail("run.eval_episodes", "must be >= 2");
  if (config.oracle_samples < 2) fail("run.oracle_samples", "must be >= 2");
  if (config.threads < 1) fail("run.threads", "must be >= 1");

  std::visit([&](auto& c) { apply_fields(c, root["env"], "env"); }, config.env);
  try {
    env::validate(config.env);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("env.") + e.what());
  }

  apply_fields(config.sac, root["sac"], "sac");
  try {
    config.sac.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("sac.") + e.what());
  }

  const YAML::Node gen = root["generalize"];
  reject_unknown(gen, "generalize", {"parameter", "values"});
  if (gen && gen.IsMap()) {
    if (gen["parameter"]) {
      config.sweep.parameter = scalar_text(gen["parameter"], "generalize.parameter");
    }
    if (gen["values"]) {
      const YAML::Node values = gen["values"];
      if (!values.IsSequence()) fail("generalize.values", "expected a list of numbers");
      for (std::size_t i = 0; i < values.size(); ++i) {
        config.sweep.values.push_back(
            as_double(values[i], "generalize.values[" + std::to_string(i) + "]"));
      }
    }
  }
  if (!config.sweep.parameter.empty()) {
    const auto allowed = prior_parameters(kind);
    if (std::find(allowed.begin(), allowed.end(), config.sweep.parameter) == allowed.end()) {
      fail("generalize.parameter",
           "'" + config.sweep.parameter + "' is not a prior parameter of " +
               std::string(env::to_string(kind)));
    }
    if (config.sweep.values.empty()) fail("generalize.values", "must list at least one value");
  } else if (!config.sweep.values.empty()) {
    fail("generalize.parameter", "required when values are given");
  }
  return config;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string emit_config(const RunConfig& config) {
  std::ostringstream out;
  out << "run:\n";
  out << "  env: " << env::to_string(env::kind_of(config.env)) << '\n';
  out << "  episodes: " << config.episodes << '\n';
  out << "  seed: " << config.seed << '\n';
  out << "  output_dir: " << quoted(config.output_dir) << '\n';
  out << "  eval_episodes: " << config.eval_episodes << '\n';
  out << "  oracle_samples: " << config.oracle_samples << '\n';
  out << "  threads: " << config.threads << '\n';
  out << "env:\n";
  std::visit([&](const auto& c) { emit_fields(out, c); }, config.env);
  out << "sac:\n";
  emit_fields(out, config.sac);
  if (!config.sweep.parameter.empty()) {
    out << "generalize:\n";
    out << "  parameter: " << config.sweep.parameter << '\n';
    out << "  values: [";
    for (std::size_t i = 0; i < config.sweep.values.size(); ++i) {
      out << (i ? ", " : "") << format_double(config.sweep.values[i]);
    }
    out << "]\n";
  }
  return out.str();
}

std::string config_hash(const RunConfig& config) {
  std::ostringstream out;
  out << env::to_string(env::kind_of(config.env)) << '\n';
  std::visit([&](const auto& c) { emit_fields(out, c); }, config.env);
  emit_fields(out, config.sac);
  return hex64(fnv1a(out.str()));
}

std::vector<std::string> prior_parameters(env::EnvKind kind) {
  switch (kind) {
    case env::EnvKind::location:
      return {"sigma_1"};
    case env::EnvKind::source:
      return {"sigma_1", "sigma_2"};
    case env::EnvKind::death:
      return {"mu_theta", "sigma_theta"};
    case env::EnvKind::toy:
      return {};
  }
  return {};
}

Sweep default_sweep(env::EnvKind kind) {
  switch (kind) {
    case env::EnvKind::location:
      return {"sigma_1", {20.0, 40.0, 60.0}};
    case env::EnvKind::source:
      return {"sigma_1", {5.0, 10.0, 15.0}};
    case env::EnvKind::death:
      return {"mu_theta", {0.5, 1.0, 1.5}};
    case env::EnvKind::toy:
      break;
  }
  throw ConfigError("generalize.parameter: the toy environment has no sweepable prior parameter");
}

namespace {

double* prior_slot(env::EnvConfig& config, const std::string& parameter) {
  const auto allowed = prior_parameters(env::kind_of(config));
  if (std::find(allowed.begin(), allowed.end(), parameter) == allowed.end()) {
    throw ConfigError("generalize.parameter: '" + parameter +
                      "' is not a prior parameter of " +
                      std::string(env::to_string(env::kind_of(config))));
  }
  double* slot = nullptr;
  std::visit(
      [&](auto& c) {
        for (const auto& f : fields(c)) {
          if (parameter != f.name) continue;
          if (auto p = std::get_if<double std::remove_reference_t<decltype(c)>::*>(&f.ptr)) {
            slot = &(c.**p);
          }
        }
      },
      config);
  if (!slot) throw ConfigError("generalize.parameter: '" + parameter + "' is not a real field");
  return slot;
}

}  // namespace

env::EnvConfig with_prior_parameter(const env::EnvConfig& config, const std::string& parameter,
                                    double value) {
  env::EnvConfig out = config;
  *prior_slot(out, parameter) = value;
  try {
    env::validate(out);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("generalize.values: ") + e.what());
  }
  return out;
}

double prior_parameter(const env::EnvConfig& config, const std::string& parameter) {
  env::EnvConfig copy = config;
  return *prior_slot(copy, parameter);
}

void apply_overrides(RunConfig& config, const Overrides& overrides) {
  if (overrides.seed) config.seed = *overrides.seed;
  if (overrides.output_dir) {
    if (overrides.output_dir->empty()) throw ConfigError("--out: must not be empty");
    config.output_dir = *overrides.output_dir;
  }
  if (overrides.threads) {
    if (*overrides.threads < 1) throw ConfigError("--threads: must be >= 1");
    config.threads = *overrides.threads;
  }
}

// --- artifacts -------------------------------------------------------------

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(tmp.string() + ": cannot open for writing");
    out << content;
    if (!out) throw std::runtime_error(tmp.string() + ": write failed");
  }
  fs::rename(tmp, path);
}

/// Tracks the files a command produces and writes the run manifest last.
class Run {
 public:
  Run(const RunConfig& config, std::string command)
      : config_(config), command_(std::move(command)), started_(utc_now()) {
    fs::create_directories(config.output_dir);
  }

  fs::path path(const std::string& name) const { return fs::path(config_.output_dir) / name; }

  void write(const std::string& name, const std::string& content) {
    write_atomic(path(name), content);
    files_.push_back(name);
  }

  void save_checkpoint(const std::string& name, const nn::Checkpoint& checkpoint) {
    std::ostringstream out(std::ios::binary);
    nn::write_checkpoint(out, checkpoint);
    write(name, out.str());
  }

  void finish() {
    nlohmann::json manifest;
    manifest["command"] = command_;
    manifest["revision"] = SEQBED_REVISION;
    manifest["started_at"] = started_;
    manifest["finished_at"] = utc_now();
    manifest["config"] = emit_config(config_);
    manifest["config_hash"] = config_hash(config_);
    nlohmann::json files = nlohmann::json::array();
    for (const std::string& name : files_) {
      std::ifstream in(path(name), std::ios::binary);
      std::ostringstream bytes;
      bytes << in.rdbuf();
      files.push_back({{"name", name},
                       {"bytes", bytes.str().size()},
                       {"fnv1a", hex64(fnv1a(bytes.str()))}});
    }
    manifest["files"] = files;
    write_atomic(path(command_ + "_manifest.json"), manifest.dump(2) + "\n");
  }

 private:
  const RunConfig& config_;
  std::string command_;
  std::string started_;
  std::vector<std::string> files_;
};

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trajectories_csv(const env::Environment& environment,
                             const std::vector<infogain::EpisodeRecord>& episodes) {
  std::ostringstream out;
  env::write_trajectory_header(out, environment.design_dim());
  for (const auto& e : episodes) env::write_trajectory_rows(out, e.episode, e.history);
  return out.str();
}

sac::AgentParameters load_agent(const fs::path& checkpoint, const env::Environment& environment) {
  const nn::Checkpoint ck = nn::load_checkpoint(checkpoint.string());
  sac::AgentMetadata meta;
  sac::AgentParameters params = sac::from_checkpoint(ck, &meta);
  sac::check_compatible(meta, params, environment);
  return params;
}

void report(const std::string& label, const infogain::McEstimate& est, std::size_t episodes) {
  std::printf("%s: mean %.6f std_err %.6f over %zu episodes\n", label.c_str(), est.mean,
              est.std_err, episodes);
}

int evaluation_command(const RunConfig& config, const std::string& command,
                       const std::optional<fs::path>& checkpoint) {
  const auto environment = env::make_environment(config.env);
  std::optional<sac::AgentParameters> params;
  if (checkpoint) params = load_agent(*checkpoint, *environment);

  Run run(config, command);
  const sac::Evaluation result =
      params ? sac::evaluate(*params, *environment, config.eval_episodes, config.seed,
                             config.threads)
             : sac::evaluate_random(*environment, config.eval_episodes, config.seed,
                                    config.threads);
  std::ostringstream summary;
  write_summary(summary, result.reward, result.episodes.size(),
                environment->contrastive_samples());
  run.write(command + "_summary.csv", summary.str());
  run.write(command + "_trajectories.csv", trajectories_csv(*environment, result.episodes));
  run.finish();
  report(command, result.reward, result.episodes.size());
  return 0;
}

}  // namespace

void write_summary(std::ostream& out, const infogain::McEstimate& estimate,
                   std::size_t episodes, int L) {
  out << "mean,std_err,episodes,L\n";
  out << fmt17(estimate.mean) << ',' << fmt17(estimate.std_err) << ',' << episodes << ',' << L
      << '\n';
}

void write_generalize(std::ostream& out, const std::string& parameter,
                      const std::vector<GeneralizeRow>& rows) {
  out << "parameter,value,mean,std_err,ratio_to_original\n";
  char ratio[32];
  for (const auto& row : rows) {
    std::snprintf(ratio, sizeof ratio, "%.3f", row.ratio);
    out << parameter << ',' << fmt17(row.value) << ',' << fmt17(row.reward.mean) << ','
        << fmt17(row.reward.std_err) << ',' << ratio << '\n';
  }
}

// --- commands --------------------------------------------------------------

int cmd_train(const RunConfig& config) {
  const auto environment = env::make_environment(config.env);
  Run run(config, "train");
  const std::size_t every = std::max<std::uint64_t>(1, config.episodes / 20);
  const sac::TrainResult result = sac::train(
      config.env, config.sac, config.episodes, config.seed, [&](const sac::TrainingLogRow& row) {
        if ((row.episode + 1) % every == 0) {
          std::fprintf(stderr, "episode %zu/%llu reward %.4f critic %.4g actor %.4g\n",
                       row.episode + 1, static_cast<unsigned long long>(config.episodes),
                       row.terminal_reward, row.critic_loss, row.actor_loss);
        }
      });

  sac::AgentMetadata meta;
  meta.env = std::string(env::to_string(environment->kind()));
  meta.config_hash = config_hash(config);
  meta.episodes = config.episodes;
  meta.state_dim = sac::encoding_layout(*environment).dim();
  meta.action_dim = environment->design_dim();
  run.save_checkpoint("checkpoint.sqbd", sac::to_checkpoint(result.params, meta));

  std::ostringstream log;
  sac::write_training_log(log, result.log);
  run.write("training_log.csv", log.str());
  run.finish();
  std::printf("trained %llu episodes (%zu environment steps)\n",
              static_cast<unsigned long long>(config.episodes), result.env_steps);
  return 0;
}

int cmd_eval(const RunConfig& config, const fs::path& checkpoint) {
  return evaluation_command(config, "eval", checkpoint);
}

int cmd_baseline(const RunConfig& config) {
  return evaluation_command(config, "baseline", std::nullopt);
}

int cmd_generalize(const RunConfig& config, const std::optional<fs::path>& checkpoint) {
  const env::EnvKind kind = env::kind_of(config.env);
  const Sweep sweep = config.sweep.parameter.empty() ? default_sweep(kind) : config.sweep;
  const double original = prior_parameter(config.env, sweep.parameter);

  std::optional<sac::AgentParameters> params;
  if (checkpoint) params = load_agent(*checkpoint, *env::make_environment(config.env));

  auto evaluate_at = [&](double value) {
    const auto environment =
        env::make_environment(with_prior_parameter(config.env, sweep.parameter, value));
    if (params) {
      return sac::evaluate(*params, *environment, config.eval_episodes, config.seed,
                           config.threads)
          .reward;
    }
    return sac::evaluate_random(*environment, config.eval_episodes, config.seed, config.threads)
        .reward;
  };

  Run run(config, "generalize");
  std::vector<GeneralizeRow> rows;
  std::optional<infogain::McEstimate> base;
  for (double value : sweep.values) {
    rows.push_back(GeneralizeRow{value, evaluate_at(value), 0.0});
    if (value == original) base = rows.back().reward;
  }
  if (!base) base = evaluate_at(original);
  for (auto& row : rows) row.ratio = row.reward.mean / base->mean;

  std::ostringstream table;
  write_generalize(table, sweep.parameter, rows);
  run.write("generalize.csv", table.str());
  run.finish();
  std::printf("%s policy, %s sweep (original %s):\n", params ? "trained" : "random",
              sweep.parameter.c_str(), fmt17(original).c_str());
  for (const auto& row : rows) {
    std::printf("  %s = %-8g mean %.4f std_err %.4f ratio %.3f\n", sweep.parameter.c_str(),
                row.value, row.reward.mean, row.reward.std_err, row.ratio);
  }
  return 0;
}

int cmd_oracle(const RunConfig& config, std::ostream& out) {
  const auto* toy = std::get_if<env::ToyConfig>(&config.env);
  if (!toy) throw ConfigError("run.env: the oracle command requires env: toy");

  const auto environment = env::make_environment(config.env);
  const sac::RandomPolicy policy(*environment);
  const prob::RngStream root(config.seed);
  const std::size_t samples = config.oracle_samples;
  Run run(config, "oracle");

  std::ostringstream csv;
  csv << "quantity,L,exact,estimate,std_err,z\n";
  bool ok = true;
  auto row = [&](const std::string& quantity, int L, double exact,
                 const infogain::McEstimate& est) {
    const double z = est.std_err > 0.0 ? (est.mean - exact) / est.std_err : 0.0;
    csv << quantity << ',' << L << ',' << fmt17(exact) << ',' << fmt17(est.mean) << ','
        << fmt17(est.std_err) << ',' << fmt17(z) << '\n';
    const bool within = std::abs(z) <= 3.0;
    ok = ok && within;
    char line[160];
    std::snprintf(line, sizeof line, "%-14s L=%-2d exact %.6f  mc %.6f +- %.6f  %s\n",
                  quantity.c_str(), L, exact, est.mean, est.std_err,
                  within ? "within 3 se" : "OUTSIDE 3 se");
    out << line;
  };

  const double eig = infogain::toy_exact_eig(*toy);
  prob::RngStream nested_rng = root.substream(0);
  const env::Design design = env::Design{{0.0}};
  const infogain::McEstimate nested = infogain::nested_mc_eig(
      *environment, std::span<const env::Design>(&design, 1), samples, 1000, nested_rng);
  row("eig", 0, eig, nested);

  double previous = -std::numeric_limits<double>::infinity();
  bool bounded = true;
  bool monotone = true;
  for (int L : {1, 2, 4, 8}) {
    const double exact = infogain::toy_exact_expected_cid(*toy, L);
    const infogain::McEstimate est = infogain::expected_cid(
        *environment, policy, samples, L, root.substream(static_cast<std::uint64_t>(L)), 1);
    row("expected_cid", L, exact, est);
    bounded = bounded && exact <= eig;
    monotone = monotone && exact >= previous;
    previous = exact;
  }
  out << "bound: expected CID <= EIG for every L: " << (bounded ? "pass" : "FAIL") << '\n';
  out << "ordering: expected CID nondecreasing in L: " << (monotone ? "pass" : "FAIL") << '\n';
  run.write("oracle.csv", csv.str());
  run.finish();
  return ok && bounded && monotone ? 0 : 1;
}

}  // namespace seqbed::cli
