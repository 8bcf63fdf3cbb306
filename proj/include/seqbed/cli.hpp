#ifndef SEQBED_CLI_HPP_
#define SEQBED_CLI_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqbed/env.hpp"
#include "seqbed/sac.hpp"

namespace seqbed::cli {

/// Parameter sweep for the generalize command.
struct Sweep {
  std::string parameter;  // empty selects the environment's default sweep
  std::vector<double> values;
};

struct RunConfig {
  env::EnvConfig env = env::LocationConfig{};
  sac::SacConfig sac;
  std::uint64_t episodes = 1000;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::uint64_t eval_episodes = 500;
  std::uint64_t oracle_samples = 100000;
  int threads = 1;
  Sweep sweep;
};

/// Raised for unknown keys, type mismatches and invariant violations. The
/// message starts with the offending key path, e.g. `env.sigma_1: ...`.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical text of a fully resolved config; parse_config(emit_config(c))
/// reproduces c.
std::string emit_config(const RunConfig& config);

/// Stable 64-bit FNV-1a digest of the resolved environment and SAC sections,
/// as 16 hex digits.
std::string config_hash(const RunConfig& config);

/// Names of the prior parameters of an environment that may be swept.
std::vector<std::string> prior_parameters(env::EnvKind kind);
/// Sweep used when the config does not name one.
Sweep default_sweep(env::EnvKind kind);
/// Returns a copy of `config` with the named prior parameter set to `value`.
/// Throws ConfigError if the parameter is not a prior parameter of the env.
env::EnvConfig with_prior_parameter(const env::EnvConfig& config, const std::string& parameter,
                                    double value);
double prior_parameter(const env::EnvConfig& config, const std::string& parameter);

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<int> threads;
};

void apply_overrides(RunConfig& config, const Overrides& overrides);

// Commands. Each writes its artifacts under config.output_dir and returns
// the process exit status.

int cmd_train(const RunConfig& config);
int cmd_eval(const RunConfig& config, const std::filesystem::path& checkpoint);
int cmd_baseline(const RunConfig& config);
int cmd_generalize(const RunConfig& config, const std::optional<std::filesystem::path>& checkpoint);
int cmd_oracle(const RunConfig& config, std::ostream& report);

/// Writes `mean,std_err,episodes,L`.
void write_summary(std::ostream& out, const infogain::McEstimate& estimate,
                   std::size_t episodes, int L);

struct GeneralizeRow {
  double value = 0.0;
  infogain::McEstimate reward;
  double ratio = 0.0;
};

/// Writes `parameter,value,mean,std_err,ratio_to_original`; the ratio is
/// printed with three decimals.
void write_generalize(std::ostream& out, const std::string& parameter,
                      const std::vector<GeneralizeRow>& rows);

}  // namespace seqbed::cli

#endif  // SEQBED_CLI_HPP_
