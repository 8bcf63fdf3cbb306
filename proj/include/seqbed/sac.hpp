#ifndef SEQBED_SAC_HPP_
#define SEQBED_SAC_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "seqbed/env.hpp"
#include "seqbed/infogain.hpp"
#include "seqbed/nn.hpp"
#include "seqbed/prob.hpp"

namespace seqbed::sac {

struct SacConfig {
  double gamma = 0.99;
  double alpha = 0.2;  // entropy temperature
  double tau = 0.005;
  double lr_actor = 3e-4;
  double lr_critic = 3e-4;
  int batch_size = 256;
  int replay_capacity = 1000000;
  int warmup_steps = 1000;
  int updates_per_env_step = 1;
  int hidden_width = 128;
  int hidden_layers = 2;
  bool twin_critics = true;

  void validate() const;
};

// --- state encoding --------------------------------------------------------

/// Fixed-size view of a History: T slots of (design, observation) in episode
/// order, zero beyond the current step, then step_count / T, then the
/// remaining travel budget fraction (spatial) or the scaled elapsed time.
struct EncodingLayout {
  int horizon = 1;
  int design_dim = 1;
  bool spatial = false;
  double budget = 0.0;        // d_2 for spatial environments
  double design_scale = 1.0;  // multiplies design coordinates and elapsed time
  double obs_scale = 1.0;     // multiplies observations
  double obs_clip = 10.0;     // scaled observations are clipped to +-obs_clip
  bool saturate = false;      // design features pass through tanh

  double design_feature(double x) const {
    return saturate ? std::tanh(x * design_scale) : x * design_scale;
  }

  int dim() const { return horizon * (design_dim + 1) + 2; }
};

EncodingLayout encoding_layout(const env::Environment& environment);

using StateEncoding = nn::Vector<float>;

/// Throws env::ContractViolation if the history is longer than the horizon.
StateEncoding encode_state(const env::History& history, const EncodingLayout& layout);
StateEncoding encode_state(const env::History& history, const env::Environment& environment);

// --- action squashing ------------------------------------------------------

/// Maps an unbounded Gaussian draw u to an admissible action. Planar
/// environments use scale * tanh(u) per coordinate with scale = d_1 / sqrt(dim),
/// which keeps the Euclidean norm below d_1; the death process uses
/// softplus(u) > 0.
struct Squash {
  enum class Kind { tanh, softplus };
  Kind kind = Kind::tanh;
  double scale = 1.0;

  double apply(double u) const;
  /// log |da/du|
  double log_jacobian(double u) const;
  /// Critic input for an action coordinate: a / scale for tanh, tanh(a) for
  /// softplus so that the critic never sees unbounded inputs.
  double feature(double a) const;
  double feature_derivative(double a) const;
};

Squash squash_for(const env::Environment& environment);

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

struct SampledAction {
  env::Action action;
  std::vector<double> raw;  // pre-squash u
  double log_prob = 0.0;
};

/// Squashed-Gaussian draw from the actor's (mean, log-std) head.
SampledAction sample_action(const nn::NetworkF& actor, const StateEncoding& state,
                            const Squash& squash, prob::RngStream& rng);

/// log pi(a|s) of the squashed action obtained from raw draw `raw`.
double squashed_log_prob(std::span<const double> mean, std::span<const double> log_std,
                         std::span<const double> raw, const Squash& squash);

/// Squashed actor mean; used for evaluation.
env::Action deterministic_action(const nn::NetworkF& actor, const StateEncoding& state,
                                 const Squash& squash);

// --- replay buffer ---------------------------------------------------------

struct Transition {
  StateEncoding state;
  std::vector<float> raw_action;
  std::vector<float> action;
  double reward = 0.0;
  StateEncoding next_state;
  bool done = false;
};

/// Fixed-capacity FIFO store of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition transition);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t inserted() const { return inserted_; }
  const Transition& operator[](std::size_t i) const { return items_[i]; }

  std::vector<std::size_t> sample_indices(std::size_t count, prob::RngStream& rng) const;

 private:
  std::size_t capacity_;
  std::uint64_t inserted_ = 0;
  std::deque<Transition> items_;
};

// --- losses ----------------------------------------------------------------

/// Column-major minibatch; column b is one transition.
template <typename Scalar>
struct Batch {
  nn::Matrix<Scalar> states;
  nn::Matrix<Scalar> actions;  // squashed actions
  std::vector<double> rewards;
  nn::Matrix<Scalar> next_states;
  std::vector<bool> done;

  std::size_t size() const { return rewards.size(); }
};

Batch<float> make_batch(const ReplayBuffer& buffer, std::span<const std::size_t> indices);

template <typename Scalar>
struct CriticPair {
  nn::Network<Scalar> first;
  nn::Network<Scalar> second;
  bool twin = true;
};

/// y = r + gamma (1 - done) (min_j Qbar_j(s', a') - alpha log pi(a'|s')),
/// a' ~ pi(.|s') using `noise` (action_dim x batch) for the draws.
template <typename Scalar>
std::vector<double> critic_targets(const Batch<Scalar>& batch, const nn::Network<Scalar>& actor,
                                   const CriticPair<Scalar>& target_critics, const Squash& squash,
                                   const SacConfig& config, const nn::Matrix<double>& noise);

template <typename Scalar>
std::vector<double> critic_targets(const Batch<Scalar>& batch, const nn::Network<Scalar>& actor,
                                   const CriticPair<Scalar>& target_critics, const Squash& squash,
                                   const SacConfig& config, prob::RngStream& rng);

template <typename Scalar>
struct CriticLoss {
  double loss = 0.0;
  nn::Gradient<Scalar> first;
  nn::Gradient<Scalar> second;
};

/// Sum over critics of mean(0.5 (Q(s, a) - y)^2).
template <typename Scalar>
CriticLoss<Scalar> critic_loss(const CriticPair<Scalar>& critics, const Batch<Scalar>& batch,
                               std::span<const double> targets, const Squash& squash);

template <typename Scalar>
struct ActorLoss {
  double loss = 0.0;
  double mean_log_prob = 0.0;
  nn::Gradient<Scalar> grad;
};

/// mean(alpha log pi(a|s) - min_j Q_j(s, a)) with a reparameterised by the
/// frozen standard-normal `noise` (action_dim x batch). Critic parameters are
/// treated as constants.
template <typename Scalar>
ActorLoss<Scalar> actor_loss(const nn::Network<Scalar>& actor, const CriticPair<Scalar>& critics,
                             const nn::Matrix<Scalar>& states, const Squash& squash,
                             double alpha, const nn::Matrix<double>& noise);

// --- agent -----------------------------------------------------------------

struct AgentParameters {
  nn::NetworkF actor;
  CriticPair<float> critics;
  CriticPair<float> target_critics;
};

AgentParameters init_agent(const env::Environment& environment, const SacConfig& config,
                           prob::RngStream& rng);

struct UpdateStats {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parameters plus optimiser state; one call to update() is one iteration of
/// critic step, actor step and target averaging.
class SacLearner {
 public:
  SacLearner(AgentParameters params, Squash squash, SacConfig config);

  UpdateStats update(const Batch<float>& batch, prob::RngStream& rng);

  const AgentParameters& parameters() const { return params_; }
  const SacConfig& config() const { return config_; }
  const Squash& squash() const { return squash_; }

 private:
  AgentParameters params_;
  Squash squash_;
  SacConfig config_;
  nn::OptimizerState<float> actor_opt_;
  nn::OptimizerState<float> critic1_opt_;
  nn::OptimizerState<float> critic2_opt_;
};

struct TrainingLogRow {
  std::size_t episode = 0;
  double terminal_reward = 0.0;
  double critic_loss = 0.0;  // mean over the episode's updates, 0 if none ran
  double actor_loss = 0.0;
  std::size_t steps = 0;
  double travel_distance = 0.0;
};

struct TrainResult {
  AgentParameters params;
  std::vector<TrainingLogRow> log;
  std::size_t env_steps = 0;
};

/// Called after every episode with the row just logged.
using EpisodeCallback = std::function<void(const TrainingLogRow&)>;

TrainResult train(const env::EnvConfig& env_config, const SacConfig& sac_config,
                  std::size_t episodes, std::uint64_t seed, const EpisodeCallback& on_episode = {});

/// Writes `episode,terminal_reward,critic_loss,actor_loss,steps,travel_distance,reward_ma100`.
void write_training_log(std::ostream& out, std::span<const TrainingLogRow> log);

// --- policies --------------------------------------------------------------

/// Planar: uniform direction, magnitude uniform in [0, d_1].
/// Death process: softplus of a standard normal draw. Toy: zero.
env::Action random_policy(const env::Environment& environment, prob::RngStream& rng);

class RandomPolicy final : public env::Policy {
 public:
  explicit RandomPolicy(const env::Environment& environment) : environment_(environment) {}
  env::Action act(const env::History& history, prob::RngStream& rng) const override;

 private:
  const env::Environment& environment_;
};

/// Deterministic squashed-mean actions.
class ActorPolicy final : public env::Policy {
 public:
  ActorPolicy(const nn::NetworkF& actor, const env::Environment& environment);
  env::Action act(const env::History& history, prob::RngStream& rng) const override;

 private:
  const nn::NetworkF& actor_;
  EncodingLayout layout_;
  Squash squash_;
};

struct Evaluation {
  infogain::McEstimate reward;
  std::vector<infogain::EpisodeRecord> episodes;
};

Evaluation evaluate(const AgentParameters& params, const env::Environment& environment,
                    std::size_t episodes, std::uint64_t seed, int threads = 1);

Evaluation evaluate_random(const env::Environment& environment, std::size_t episodes,
                           std::uint64_t seed, int threads = 1);

// --- checkpoints -----------------------------------------------------------

struct AgentMetadata {
  std::string env;
  std::string config_hash;
  std::size_t episodes = 0;
  int state_dim = 0;
  int action_dim = 0;
};

nn::Checkpoint to_checkpoint(const AgentParameters& params, const AgentMetadata& metadata);
AgentParameters from_checkpoint(const nn::Checkpoint& checkpoint, AgentMetadata* metadata = nullptr);

/// Throws std::runtime_error with a diagnostic if the checkpoint cannot drive
/// `environment` (different environment kind or network shapes).
void check_compatible(const AgentMetadata& metadata, const AgentParameters& params,
                      const env::Environment& environment);

}  // namespace seqbed::sac

#endif  // SEQBED_SAC_HPP_
