#include "seqbed/env.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>

namespace seqbed::env {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Rounding slack when comparing an action norm against d_1.
constexpr double kNormSlack = 1e-12;

void require(bool ok, const std::string& field, const std::string& what) {
  if (!ok) throw std::invalid_argument(field + ": " + what);
}

void require_positive(double v, const std::string& field) {
  require(std::isfinite(v) && v > 0.0, field, "must be finite and > 0");
}

void require_nonnegative(double v, const std::string& field) {
  require(std::isfinite(v) && v >= 0.0, field, "must be finite and >= 0");
}

double squared_distance(const Point& a, const Point& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  return dx * dx + dy * dy;
}

Point as_point(const Design& design) { return {design.coords.at(0), design.coords.at(1)}; }

double norm(const std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  return std::sqrt(sq);
}

void check_planar_action(const Action& action, double d_1) {
  if (action.delta.size() != 2) {
    throw ContractViolation("action must be 2-dimensional");
  }
  for (double x : action.delta) {
    if (!std::isfinite(x)) throw ContractViolation("action has non-finite component");
  }
  if (norm(action.delta) > d_1 * (1.0 + kNormSlack)) {
    throw ContractViolation("action norm " + std::to_string(norm(action.delta)) +
                            " exceeds per-step limit d_1=" + std::to_string(d_1));
  }
}

TerminalReason planar_termination(const History& history, int T, double d_2) {
  if (history.travel_distance > d_2) return TerminalReason::budget_exhausted;
  if (static_cast<int>(history.step_count()) >= T) return TerminalReason::max_steps;
  return TerminalReason::none;
}

}  // namespace

std::string_view to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::location: return "location";
    case EnvKind::source: return "source";
    case EnvKind::death: return "death";
    case EnvKind::toy: return "toy";
  }
  return "unknown";
}

EnvKind parse_env_kind(std::string_view name) {
  if (name == "location") return EnvKind::location;
  if (name == "source") return EnvKind::source;
  if (name == "death") return EnvKind::death;
  if (name == "toy") return EnvKind::toy;
  throw std::invalid_argument("unknown environment '" + std::string(name) +
                              "' (expected location, source, death or toy)");
}

std::string_view to_string(TerminalReason reason) {
  switch (reason) {
    case TerminalReason::none: return "none";
    case TerminalReason::max_steps: return "max_steps";
    case TerminalReason::budget_exhausted: return "budget_exhausted";
  }
  return "unknown";
}

EnvKind kind_of(const EnvConfig& config) { return static_cast<EnvKind>(config.index()); }

EnvConfig default_config(EnvKind kind) {
  switch (kind) {
    case EnvKind::location: return LocationConfig{};
    case EnvKind::source: return SourceConfig{};
    case EnvKind::death: return DeathConfig{};
    case EnvKind::toy: return ToyConfig{};
  }
  throw std::invalid_argument("default_config: bad kind");
}

void validate(const EnvConfig& config) {
  struct Visitor {
    void operator()(const LocationConfig& c) const {
      require_positive(c.sigma_1, "sigma_1");
      require_positive(c.alpha, "alpha");
      require(std::isfinite(c.b), "b", "must be finite");
      require_positive(c.m, "m");
      require_nonnegative(c.sigma_2, "sigma_2");
      require_positive(c.d_1, "d_1");
      require_positive(c.d_2, "d_2");
      require(c.T >= 1, "T", "must be >= 1");
      require(c.L >= 1, "L", "must be >= 1");
      require(std::isfinite(c.origin[0]) && std::isfinite(c.origin[1]), "origin", "must be finite");
    }
    void operator()(const SourceConfig& c) const {
      require_positive(c.sigma_1, "sigma_1");
      require_positive(c.sigma_2, "sigma_2");
      require_positive(c.s, "s");
      require_positive(c.D, "D");
      require_nonnegative(c.sigma_3, "sigma_3");
      require_positive(c.d_1, "d_1");
      require_positive(c.d_2, "d_2");
      require(c.T >= 1, "T", "must be >= 1");
      require(c.L >= 1, "L", "must be >= 1");
      require(std::isfinite(c.origin[0]) && std::isfinite(c.origin[1]), "origin", "must be finite");
    }
    void operator()(const DeathConfig& c) const {
      require(std::isfinite(c.mu_theta), "mu_theta", "must be finite");
      require_positive(c.sigma_theta, "sigma_theta");
      require(c.T >= 1, "T", "must be >= 1");
      require(c.N >= 0, "N", "must be >= 0");
      require(c.L >= 1, "L", "must be >= 1");
    }
    void operator()(const ToyConfig& c) const {
      require(c.p_low > 0.0 && c.p_low < 1.0, "p_low", "must lie in (0, 1)");
      require(c.p_high > 0.0 && c.p_high < 1.0, "p_high", "must lie in (0, 1)");
      require(c.L >= 1, "L", "must be >= 1");
    }
  };
  std::visit(Visitor{}, config);
}

// --- Environment -----------------------------------------------------------

Latent Environment::sample_contrastive(const Latent&, prob::RngStream& rng) const {
  return sample_prior(rng);
}

std::pair<Latent, History> Environment::reset(prob::RngStream& rng) const {
  History history;
  history.current = initial_design();
  history.steps.reserve(static_cast<std::size_t>(horizon()));
  return {sample_prior(rng), std::move(history)};
}

StepResult Environment::step(const Latent& latent, History& history, const Action& action,
                             prob::RngStream& rng) const {
  if (history.done()) throw ContractViolation("step called on a finished episode");
  check_action(action);

  Design next = history.current;
  for (std::size_t i = 0; i < next.coords.size(); ++i) next.coords[i] += action.delta[i];
  const double travel = history.travel_distance + norm(action.delta);

  const double y = observe(latent, next, travel, rng);
  history.steps.push_back(Step{next, y, travel});
  history.current = std::move(next);
  history.travel_distance = travel;
  history.terminal = termination(history);
  return StepResult{y, history.done(), history.terminal};
}

TerminalReason Environment::termination(const History& history) const {
  return static_cast<int>(history.step_count()) >= horizon() ? TerminalReason::max_steps
                                                             : TerminalReason::none;
}

double Environment::log_likelihood(const Latent& latent, const History& history) const {
  double total = 0.0;
  for (const Step& s : history.steps) total += log_observation_density(latent, s);
  return total;
}

// --- model functions -------------------------------------------------------

double signal_intensity(const LocationLatent& latent, const Design& design,
                        const LocationConfig& config) {
  const Point xi = as_point(design);
  double mu = config.b;
  for (const Point& source : latent.sources) {
    mu += config.alpha / (config.m + squared_distance(source, xi));
  }
  return mu;
}

double concentration(const SourceLatent& latent, const Design& design, double travel_distance,
                     const SourceConfig& config) {
  const Point xi = as_point(design);
  const double spread = 1.2 + 4.0 * config.D * travel_distance;
  const double drift = 10.0 * (travel_distance - 1.0);
  const Point centre{latent.source[0] + drift * latent.wind[0],
                     latent.source[1] + drift * latent.wind[1]};
  const double peak = config.s / (std::sqrt(2.0 * std::numbers::pi) * std::sqrt(spread));
  return peak * std::exp(-squared_distance(centre, xi) / (2.0 * spread));
}

double infection_prob(double theta, double xi) { return -std::expm1(-xi * theta); }

// --- location finding ------------------------------------------------------

LocationFinding::LocationFinding(LocationConfig config) : params_(config), holder_(config) {
  validate(holder_);
}

Latent LocationFinding::sample_prior(prob::RngStream& rng) const {
  LocationLatent latent;
  const prob::GaussianSpec prior{0.0, params_.sigma_1};
  for (Point& source : latent.sources) {
    source[0] = prob::sample_gaussian(prior, rng);
    source[1] = prob::sample_gaussian(prior, rng);
  }
  return latent;
}

void LocationFinding::check_action(const Action& action) const {
  check_planar_action(action, params_.d_1);
}

double LocationFinding::observe(const Latent& latent, const Design& design, double,
                                prob::RngStream& rng) const {
  const double mu = signal_intensity(std::get<LocationLatent>(latent), design, params_);
  return prob::sample_gaussian({mu, params_.sigma_2}, rng);
}

double LocationFinding::log_observation_density(const Latent& latent, const Step& step) const {
  const double mu = signal_intensity(std::get<LocationLatent>(latent), step.design, params_);
  return prob::log_density_gaussian(step.observation, {mu, params_.sigma_2});
}

Design LocationFinding::initial_design() const {
  return Design{{params_.origin[0], params_.origin[1]}};
}

TerminalReason LocationFinding::termination(const History& history) const {
  return planar_termination(history, params_.T, params_.d_2);
}

// --- source inversion ------------------------------------------------------

SourceInversion::SourceInversion(SourceConfig config) : params_(config), holder_(config) {
  validate(holder_);
}

Latent SourceInversion::sample_prior(prob::RngStream& rng) const {
  SourceLatent latent;
  const prob::GaussianSpec source_prior{0.0, params_.sigma_1};
  const prob::GaussianSpec wind_prior{0.0, params_.sigma_2};
  latent.source = {prob::sample_gaussian(source_prior, rng),
                   prob::sample_gaussian(source_prior, rng)};
  latent.wind = {prob::sample_gaussian(wind_prior, rng), prob::sample_gaussian(wind_prior, rng)};
  return latent;
}

Latent SourceInversion::sample_contrastive(const Latent& primary, prob::RngStream& rng) const {
  auto draw = std::get<SourceLatent>(sample_prior(rng));
  if (!params_.contrast_wind) draw.wind = std::get<SourceLatent>(primary).wind;
  return draw;
}

void SourceInversion::check_action(const Action& action) const {
  check_planar_action(action, params_.d_1);
}

double SourceInversion::observe(const Latent& latent, const Design& design,
                                double travel_distance, prob::RngStream& rng) const {
  const double mu =
      concentration(std::get<SourceLatent>(latent), design, travel_distance, params_);
  return prob::sample_gaussian({mu, params_.sigma_3}, rng);
}

double SourceInversion::log_observation_density(const Latent& latent, const Step& step) const {
  const double mu =
      concentration(std::get<SourceLatent>(latent), step.design, step.travel_distance, params_);
  return prob::log_density_gaussian(step.observation, {mu, params_.sigma_3});
}

Design SourceInversion::initial_design() const {
  return Design{{params_.origin[0], params_.origin[1]}};
}

TerminalReason SourceInversion::termination(const History& history) const {
  return planar_termination(history, params_.T, params_.d_2);
}

// --- death process ---------------------------------------------------------

DeathProcess::DeathProcess(DeathConfig config) : params_(config), holder_(config) {
  validate(holder_);
}

Latent DeathProcess::sample_prior(prob::RngStream& rng) const {
  const prob::TruncatedNormalSpec prior{params_.mu_theta, params_.sigma_theta, 0.0,
                                        std::numeric_limits<double>::infinity()};
  double theta = 0.0;
  // The support is closed at zero; an exact zero draw would break theta > 0.
  while (theta <= 0.0) theta = prob::sample_truncated_normal(prior, rng);
  return DeathLatent{theta};
}

void DeathProcess::check_action(const Action& action) const {
  if (action.delta.size() != 1) throw ContractViolation("action must be 1-dimensional");
  const double a = action.delta[0];
  if (!std::isfinite(a) || !(a > 0.0)) {
    throw ContractViolation("observation interval must be finite and > 0, got " +
                            std::to_string(a));
  }
}

double DeathProcess::observe(const Latent& latent, const Design& design, double,
                             prob::RngStream& rng) const {
  const double eta = infection_prob(std::get<DeathLatent>(latent).rate, design.coords.at(0));
  return prob::sample_binomial({params_.N, eta}, rng);
}

double DeathProcess::log_observation_density(const Latent& latent, const Step& step) const {
  const double theta = std::get<DeathLatent>(latent).rate;
  const double xi = step.design.coords.at(0);
  const int y = static_cast<int>(step.observation);
  const int n = params_.N;
  if (y < 0 || y > n) return kNegInf;
  // log(1 - eta) = -theta * xi exactly; avoid forming 1 - eta.
  double result = prob::log_choose(n, y) - (n - y) * theta * xi;
  if (y > 0) {
    const double eta = infection_prob(theta, xi);
    if (!(eta > 0.0)) return kNegInf;
    result += y * std::log(eta);
  }
  return result;
}

Design DeathProcess::initial_design() const { return Design{{0.0}}; }

// --- toy -------------------------------------------------------------------

ToyBernoulli::ToyBernoulli(ToyConfig config) : params_(config), holder_(config) {
  validate(holder_);
}

double ToyBernoulli::success_prob(const ToyLatent& latent) const {
  return latent.index == 0 ? params_.p_low : params_.p_high;
}

Latent ToyBernoulli::sample_prior(prob::RngStream& rng) const {
  return ToyLatent{rng.uniform01() < 0.5 ? 0 : 1};
}

void ToyBernoulli::check_action(const Action& action) const {
  if (action.delta.size() != 1 || !std::isfinite(action.delta[0])) {
    throw ContractViolation("toy action must be one finite number");
  }
}

double ToyBernoulli::observe(const Latent& latent, const Design&, double,
                             prob::RngStream& rng) const {
  return rng.uniform01() < success_prob(std::get<ToyLatent>(latent)) ? 1.0 : 0.0;
}

double ToyBernoulli::log_observation_density(const Latent& latent, const Step& step) const {
  const double p = success_prob(std::get<ToyLatent>(latent));
  if (step.observation == 1.0) return std::log(p);
  if (step.observation == 0.0) return std::log1p(-p);
  return kNegInf;
}

Design ToyBernoulli::initial_design() const { return Design{{0.0}}; }

ToyJointTable toy_enumerate(const ToyConfig& config) {
  validate(config);
  ToyJointTable table;
  table.theta = {config.p_low, config.p_high};
  for (int k = 0; k < 2; ++k) {
    table.cell[k][1] = 0.5 * table.theta[k];
    table.cell[k][0] = 0.5 * (1.0 - table.theta[k]);
  }
  return table;
}

std::unique_ptr<Environment> make_environment(const EnvConfig& config) {
  struct Visitor {
    std::unique_ptr<Environment> operator()(const LocationConfig& c) const {
      return std::make_unique<LocationFinding>(c);
    }
    std::unique_ptr<Environment> operator()(const SourceConfig& c) const {
      return std::make_unique<SourceInversion>(c);
    }
    std::unique_ptr<Environment> operator()(const DeathConfig& c) const {
      return std::make_unique<DeathProcess>(c);
    }
    std::unique_ptr<Environment> operator()(const ToyConfig& c) const {
      return std::make_unique<ToyBernoulli>(c);
    }
  };
  return std::visit(Visitor{}, config);
}

// --- trajectory CSV --------------------------------------------------------

void write_trajectory_header(std::ostream& out, int design_dim) {
  out << "episode,step";
  for (int i = 0; i < design_dim; ++i) out << ",design_" << i;
  out << ",observation,travel_distance\n";
}

void write_trajectory_rows(std::ostream& out, std::size_t episode, const History& history) {
  char buf[32];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  };
  for (std::size_t t = 0; t < history.steps.size(); ++t) {
    const Step& s = history.steps[t];
    out << episode << ',' << t;
    for (double c : s.design.coords) out << ',' << num(c);
    out << ',' << num(s.observation);
    out << ',' << num(s.travel_distance) << '\n';
  }
}

}  // namespace seqbed::env
