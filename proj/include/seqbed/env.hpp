#ifndef SEQBED_ENV_HPP_
#define SEQBED_ENV_HPP_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "seqbed/prob.hpp"

namespace seqbed::env {

enum class EnvKind { location, source, death, toy };

std::string_view to_string(EnvKind kind);
EnvKind parse_env_kind(std::string_view name);

using Point = std::array<double, 2>;

// Constants of the three experiments. Defaults are the published settings.

struct LocationConfig {
  double sigma_1 = 40.0;  // prior std of each source coordinate
  double alpha = 1.0;
  double b = 0.3;         // base signal
  double m = 1e-4;        // max signal
  double sigma_2 = 0.5;   // observation noise
  double d_1 = 3.0;       // per-step travel limit
  double d_2 = 50.0;      // per-episode travel budget
  int T = 100;
  int L = 2000;
  Point origin{0.0, 0.0};
};

struct SourceConfig {
  double sigma_1 = 10.0;  // prior std of the source location
  double sigma_2 = 0.1;   // prior std of each wind coordinate
  double s = 30.0;        // concentration strength
  double D = 0.1;         // diffusion coefficient
  double sigma_3 = 0.5;   // observation noise
  double d_1 = 1.0;
  double d_2 = 50.0;
  int T = 100;
  int L = 2000;
  Point origin{0.0, 0.0};
  // When false the wind is an observed per-episode covariate and contrastive
  // latents share the episode's wind; when true it is resampled with theta.
  bool contrast_wind = false;
};

struct DeathConfig {
  double mu_theta = 1.0;
  double sigma_theta = 1.0;
  int T = 4;
  int N = 50;
  int L = 2000;
};

/// Two-point latent {p_low, p_high} with equal prior mass and a single
/// Bernoulli observation; the design is ignored. Used as an exact oracle.
struct ToyConfig {
  double p_low = 0.2;
  double p_high = 0.8;
  int L = 1;
};

using EnvConfig = std::variant<LocationConfig, SourceConfig, DeathConfig, ToyConfig>;

EnvKind kind_of(const EnvConfig& config);
EnvConfig default_config(EnvKind kind);
/// Throws std::invalid_argument naming the offending field.
void validate(const EnvConfig& config);

struct LocationLatent {
  std::array<Point, 3> sources{};
};

struct SourceLatent {
  Point source{};
  Point wind{};
};

struct DeathLatent {
  double rate = 1.0;
};

struct ToyLatent {
  int index = 0;  // 0 -> p_low, 1 -> p_high
};

using Latent = std::variant<LocationLatent, SourceLatent, DeathLatent, ToyLatent>;

struct Design {
  std::vector<double> coords;
};

struct Action {
  std::vector<double> delta;
};

struct Step {
  Design design;
  double observation = 0.0;
  double travel_distance = 0.0;  // cumulative, including this step
};

enum class TerminalReason { none, max_steps, budget_exhausted };

std::string_view to_string(TerminalReason reason);

/// The agent's state: every (design, observation) pair so far.
struct History {
  std::vector<Step> steps;
  Design current;  // last design, or the starting design before any step
  double travel_distance = 0.0;
  TerminalReason terminal = TerminalReason::none;

  std::size_t step_count() const { return steps.size(); }
  bool done() const { return terminal != TerminalReason::none; }
};

struct StepResult {
  double observation = 0.0;
  bool done = false;
  TerminalReason terminal_reason = TerminalReason::none;
};

/// Raised when an action violates the environment's constraint or the
/// episode has already terminated.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Common interface of the simulated experiments. Environments hold only
/// their configuration; all episode state lives in History and Latent.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual EnvKind kind() const = 0;
  virtual const EnvConfig& config() const = 0;
  virtual int design_dim() const = 0;
  virtual int horizon() const = 0;
  virtual int contrastive_samples() const = 0;
  /// True for environments whose actions are bounded displacements.
  virtual bool spatial() const { return false; }
  /// Per-step displacement bound d_1 (spatial environments).
  virtual double step_limit() const { return 0.0; }
  /// Per-episode travel budget d_2 (spatial environments).
  virtual double travel_budget() const { return 0.0; }

  virtual Latent sample_prior(prob::RngStream& rng) const = 0;
  /// Draw a contrastive latent for an episode generated under `primary`.
  virtual Latent sample_contrastive(const Latent& primary, prob::RngStream& rng) const;

  std::pair<Latent, History> reset(prob::RngStream& rng) const;

  /// Apply an action: new design is the previous design plus the increment.
  StepResult step(const Latent& latent, History& history, const Action& action,
                  prob::RngStream& rng) const;

  /// Throws ContractViolation if the action is not admissible.
  virtual void check_action(const Action& action) const = 0;

  /// Draw an observation at `design` after `travel_distance` cumulative travel.
  virtual double observe(const Latent& latent, const Design& design, double travel_distance,
                         prob::RngStream& rng) const = 0;

  virtual double log_observation_density(const Latent& latent, const Step& step) const = 0;

  /// Sum over steps of the per-observation log densities.
  double log_likelihood(const Latent& latent, const History& history) const;

 protected:
  virtual Design initial_design() const = 0;
  virtual TerminalReason termination(const History& history) const;
};

class LocationFinding final : public Environment {
 public:
  explicit LocationFinding(LocationConfig config);

  EnvKind kind() const override { return EnvKind::location; }
  const EnvConfig& config() const override { return holder_; }
  const LocationConfig& params() const { return params_; }
  int design_dim() const override { return 2; }
  int horizon() const override { return params_.T; }
  int contrastive_samples() const override { return params_.L; }
  bool spatial() const override { return true; }
  double step_limit() const override { return params_.d_1; }
  double travel_budget() const override { return params_.d_2; }

  Latent sample_prior(prob::RngStream& rng) const override;
  void check_action(const Action& action) const override;
  double observe(const Latent& latent, const Design& design, double travel_distance,
                 prob::RngStream& rng) const override;
  double log_observation_density(const Latent& latent, const Step& step) const override;

 protected:
  Design initial_design() const override;
  TerminalReason termination(const History& history) const override;

 private:
  LocationConfig params_;
  EnvConfig holder_;
};

class SourceInversion final : public Environment {
 public:
  explicit SourceInversion(SourceConfig config);

  EnvKind kind() const override { return EnvKind::source; }
  const EnvConfig& config() const override { return holder_; }
  const SourceConfig& params() const { return params_; }
  int design_dim() const override { return 2; }
  int horizon() const override { return params_.T; }
  int contrastive_samples() const override { return params_.L; }
  bool spatial() const override { return true; }
  double step_limit() const override { return params_.d_1; }
  double travel_budget() const override { return params_.d_2; }

  Latent sample_prior(prob::RngStream& rng) const override;
  Latent sample_contrastive(const Latent& primary, prob::RngStream& rng) const override;
  void check_action(const Action& action) const override;
  double observe(const Latent& latent, const Design& design, double travel_distance,
                 prob::RngStream& rng) const override;
  double log_observation_density(const Latent& latent, const Step& step) const override;

 protected:
  Design initial_design() const override;
  TerminalReason termination(const History& history) const override;

 private:
  SourceConfig params_;
  EnvConfig holder_;
};

class DeathProcess final : public Environment {
 public:
  explicit DeathProcess(DeathConfig config);

  EnvKind kind() const override { return EnvKind::death; }
  const EnvConfig& config() const override { return holder_; }
  const DeathConfig& params() const { return params_; }
  int design_dim() const override { return 1; }
  int horizon() const override { return params_.T; }
  int contrastive_samples() const override { return params_.L; }

  Latent sample_prior(prob::RngStream& rng) const override;
  void check_action(const Action& action) const override;
  double observe(const Latent& latent, const Design& design, double travel_distance,
                 prob::RngStream& rng) const override;
  double log_observation_density(const Latent& latent, const Step& step) const override;

 protected:
  Design initial_design() const override;

 private:
  DeathConfig params_;
  EnvConfig holder_;
};

class ToyBernoulli final : public Environment {
 public:
  explicit ToyBernoulli(ToyConfig config);

  EnvKind kind() const override { return EnvKind::toy; }
  const EnvConfig& config() const override { return holder_; }
  const ToyConfig& params() const { return params_; }
  int design_dim() const override { return 1; }
  int horizon() const override { return 1; }
  int contrastive_samples() const override { return params_.L; }

  Latent sample_prior(prob::RngStream& rng) const override;
  void check_action(const Action& action) const override;
  double observe(const Latent& latent, const Design& design, double travel_distance,
                 prob::RngStream& rng) const override;
  double log_observation_density(const Latent& latent, const Step& step) const override;

  double success_prob(const ToyLatent& latent) const;

 protected:
  Design initial_design() const override;

 private:
  ToyConfig params_;
  EnvConfig holder_;
};

std::unique_ptr<Environment> make_environment(const EnvConfig& config);

/// mu = b + sum_k alpha / (m + |theta_k - xi|^2)
double signal_intensity(const LocationLatent& latent, const Design& design,
                        const LocationConfig& config);

/// Wind-advected Gaussian plume evaluated at the cumulative travel distance.
double concentration(const SourceLatent& latent, const Design& design, double travel_distance,
                     const SourceConfig& config);

/// eta = 1 - exp(-xi * theta)
double infection_prob(double theta, double xi);

/// Exact joint p(theta, y) of the toy model: cell[latent index][y].
struct ToyJointTable {
  std::array<double, 2> theta{};
  std::array<std::array<double, 2>, 2> cell{};
};

ToyJointTable toy_enumerate(const ToyConfig& config);

/// Maps a history to the next design increment.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual Action act(const History& history, prob::RngStream& rng) const = 0;
};

/// Writes `episode,step,design_0[,design_1],observation,travel_distance` rows.
void write_trajectory_header(std::ostream& out, int design_dim);
void write_trajectory_rows(std::ostream& out, std::size_t episode, const History& history);

}  // namespace seqbed::env

#endif  // SEQBED_ENV_HPP_
