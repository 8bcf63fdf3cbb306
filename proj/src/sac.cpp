#include "seqbed/sac.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace seqbed::sac {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double clamp_log_std(double v) { return std::clamp(v, kLogStdMin, kLogStdMax); }

bool log_std_active(double v) { return v > kLogStdMin && v < kLogStdMax; }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// d/du log|da/du|
double log_jacobian_derivative(const Squash& squash, double u) {
  return squash.kind == Squash::Kind::tanh ? -2.0 * std::tanh(u) : sigmoid(-u);
}

// da/du
double squash_derivative(const Squash& squash, double u) {
  if (squash.kind == Squash::Kind::tanh) {
    const double t = std::tanh(u);
    return squash.scale * (1.0 - t * t);
  }
  return sigmoid(u);
}

template <typename Scalar>
nn::Matrix<Scalar> stack_rows(const nn::Matrix<Scalar>& top, const nn::Matrix<Scalar>& bottom) {
  nn::Matrix<Scalar> out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

nn::Matrix<double> standard_normal_matrix(Eigen::Index rows, Eigen::Index cols,
                                          prob::RngStream& rng) {
  nn::Matrix<double> m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.standard_normal();
  }
  return m;
}

// Squashed draws for every column of an actor output block.
template <typename Scalar>
struct PolicyDraw {
  nn::Matrix<Scalar> features;  // critic inputs of the squashed actions
  std::vector<double> log_prob;
};

template <typename Scalar>
PolicyDraw<Scalar> draw_policy(const nn::Matrix<Scalar>& head, const Squash& squash,
                               const nn::Matrix<double>& noise) {
  const Eigen::Index dim = head.rows() / 2;
  const Eigen::Index batch = head.cols();
  if (noise.rows() != dim || noise.cols() != batch) {
    throw std::invalid_argument("policy noise has the wrong shape");
  }
  PolicyDraw<Scalar> draw{nn::Matrix<Scalar>(dim, batch), std::vector<double>(batch, 0.0)};
  for (Eigen::Index b = 0; b < batch; ++b) {
    double lp = 0.0;
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double mean = static_cast<double>(head(i, b));
      const double log_std = clamp_log_std(static_cast<double>(head(dim + i, b)));
      const double eps = noise(i, b);
      const double u = mean + std::exp(log_std) * eps;
      draw.features(i, b) = static_cast<Scalar>(squash.feature(squash.apply(u)));
      lp += -0.5 * eps * eps - log_std - kHalfLog2Pi - squash.log_jacobian(u);
    }
    draw.log_prob[static_cast<std::size_t>(b)] = lp;
  }
  return draw;
}

}  // namespace

void SacConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& what) {
    throw std::invalid_argument(key + ": " + what);
  };
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma", "must lie in [0, 1]");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) fail("alpha", "must be finite and >= 0");
  if (!(tau > 0.0 && tau <= 1.0)) fail("tau", "must lie in (0, 1]");
  if (!(lr_actor > 0.0)) fail("lr_actor", "must be > 0");
  if (!(lr_critic > 0.0)) fail("lr_critic", "must be > 0");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (replay_capacity < 1) fail("replay_capacity", "must be >= 1");
  if (batch_size > replay_capacity) fail("batch_size", "must not exceed replay_capacity");
  if (warmup_steps < 0) fail("warmup_steps", "must be >= 0");
  if (updates_per_env_step < 1) fail("updates_per_env_step", "must be >= 1");
  if (hidden_width < 1) fail("hidden_width", "must be >= 1");
  if (hidden_layers < 0) fail("hidden_layers", "must be >= 0");
}

// --- encoding --------------------------------------------------------------

EncodingLayout encoding_layout(const env::Environment& environment) {
  EncodingLayout layout;
  layout.horizon = environment.horizon();
  layout.design_dim = environment.design_dim();
  layout.spatial = environment.spatial();
  layout.budget = environment.travel_budget();
  switch (environment.kind()) {
    case env::EnvKind::location:
      layout.design_scale = 1.0 / environment.travel_budget();
      layout.obs_scale = 1.0;
      break;
    case env::EnvKind::source:
      layout.design_scale = 1.0 / environment.travel_budget();
      layout.obs_scale = 0.2;
      break;
    case env::EnvKind::death: {
      const int n = std::get<env::DeathConfig>(environment.config()).N;
      layout.design_scale = 0.25;
      layout.saturate = true;
      layout.obs_scale = n > 0 ? 1.0 / n : 1.0;
      break;
    }
    case env::EnvKind::toy:
      break;
  }
  return layout;
}

StateEncoding encode_state(const env::History& history, const EncodingLayout& layout) {
  if (static_cast<int>(history.step_count()) > layout.horizon) {
    throw env::ContractViolation("encode_state: history longer than the horizon");
  }
  StateEncoding out = StateEncoding::Zero(layout.dim());
  const int slot = layout.design_dim + 1;
  for (std::size_t t = 0; t < history.steps.size(); ++t) {
    const env::Step& step = history.steps[t];
    const int base = static_cast<int>(t) * slot;
    for (int i = 0; i < layout.design_dim; ++i) {
      out(base + i) = static_cast<float>(
          layout.design_feature(step.design.coords[static_cast<std::size_t>(i)]));
    }
    const double obs = std::clamp(step.observation * layout.obs_scale, -layout.obs_clip,
                                  layout.obs_clip);
    out(base + layout.design_dim) = static_cast<float>(obs);
  }
  const int tail = layout.horizon * slot;
  out(tail) = static_cast<float>(static_cast<double>(history.step_count()) / layout.horizon);
  if (layout.spatial) {
    out(tail + 1) = static_cast<float>((layout.budget - history.travel_distance) / layout.budget);
  } else {
    const double elapsed = history.current.coords.empty() ? 0.0 : history.current.coords[0];
    out(tail + 1) = static_cast<float>(layout.design_feature(elapsed));
  }
  return out;
}

StateEncoding encode_state(const env::History& history, const env::Environment& environment) {
  return encode_state(history, encoding_layout(environment));
}

// --- squashing -------------------------------------------------------------

double Squash::apply(double u) const {
  if (kind == Kind::tanh) return scale * std::tanh(u);
  // Keep the interval strictly positive even for extreme draws.
  return prob::softplus(std::max(u, -100.0));
}

double Squash::log_jacobian(double u) const {
  if (kind == Kind::tanh) {
    // log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u))
    return std::log(scale) + 2.0 * (std::numbers::ln2 - u - prob::softplus(-2.0 * u));
  }
  return -prob::softplus(-u);  // log sigmoid(u)
}

double Squash::feature(double a) const {
  return kind == Kind::tanh ? a / scale : std::tanh(a);
}

double Squash::feature_derivative(double a) const {
  if (kind == Kind::tanh) return 1.0 / scale;
  const double t = std::tanh(a);
  return 1.0 - t * t;
}

Squash squash_for(const env::Environment& environment) {
  if (environment.spatial()) {
    return Squash{Squash::Kind::tanh,
                  environment.step_limit() / std::sqrt(static_cast<double>(environment.design_dim()))};
  }
  if (environment.kind() == env::EnvKind::death) return Squash{Squash::Kind::softplus, 1.0};
  return Squash{Squash::Kind::tanh, 1.0};
}

double squashed_log_prob(std::span<const double> mean, std::span<const double> log_std,
                         std::span<const double> raw, const Squash& squash) {
  double lp = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double ls = clamp_log_std(log_std[i]);
    const double z = (raw[i] - mean[i]) / std::exp(ls);
    lp += -0.5 * z * z - ls - kHalfLog2Pi - squash.log_jacobian(raw[i]);
  }
  return lp;
}

SampledAction sample_action(const nn::NetworkF& actor, const StateEncoding& state,
                            const Squash& squash, prob::RngStream& rng) {
  const nn::Vector<float> head = nn::forward(actor, state);
  const std::size_t dim = static_cast<std::size_t>(head.size() / 2);
  std::vector<double> mean(dim), log_std(dim);
  SampledAction out;
  out.raw.resize(dim);
  out.action.delta.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    mean[i] = head(static_cast<Eigen::Index>(i));
    log_std[i] = head(static_cast<Eigen::Index>(dim + i));
    out.raw[i] = mean[i] + std::exp(clamp_log_std(log_std[i])) * rng.standard_normal();
    out.action.delta[i] = squash.apply(out.raw[i]);
  }
  out.log_prob = squashed_log_prob(mean, log_std, out.raw, squash);
  return out;
}

env::Action deterministic_action(const nn::NetworkF& actor, const StateEncoding& state,
                                 const Squash& squash) {
  const nn::Vector<float> head = nn::forward(actor, state);
  const Eigen::Index dim = head.size() / 2;
  env::Action action;
  for (Eigen::Index i = 0; i < dim; ++i) action.delta.push_back(squash.apply(head(i)));
  return action;
}

// --- replay buffer ---------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be >= 1");
}

void ReplayBuffer::push(Transition transition) {
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(std::move(transition));
  ++inserted_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t count,
                                                      prob::RngStream& rng) const {
  if (items_.empty()) throw std::logic_error("ReplayBuffer: sampling from an empty buffer");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<std::size_t> out(count);
  for (auto& i : out) i = pick(rng.engine());
  return out;
}

Batch<float> make_batch(const ReplayBuffer& buffer, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("make_batch: empty batch");
  const Transition& first = buffer[indices[0]];
  const auto n = static_cast<Eigen::Index>(indices.size());
  Batch<float> batch;
  batch.states.resize(first.state.size(), n);
  batch.next_states.resize(first.next_state.size(), n);
  batch.actions.resize(static_cast<Eigen::Index>(first.action.size()), n);
  batch.rewards.resize(indices.size());
  batch.done.resize(indices.size());
  for (Eigen::Index b = 0; b < n; ++b) {
    const Transition& t = buffer[indices[static_cast<std::size_t>(b)]];
    batch.states.col(b) = t.state;
    batch.next_states.col(b) = t.next_state;
    for (std::size_t i = 0; i < t.action.size(); ++i) {
      batch.actions(static_cast<Eigen::Index>(i), b) = t.action[i];
    }
    batch.rewards[static_cast<std::size_t>(b)] = t.reward;
    batch.done[static_cast<std::size_t>(b)] = t.done;
  }
  return batch;
}

// --- losses ----------------------------------------------------------------

template <typename Scalar>
std::vector<double> critic_targets(const Batch<Scalar>& batch, const nn::Network<Scalar>& actor,
                                   const CriticPair<Scalar>& target_critics, const Squash& squash,
                                   const SacConfig& config, const nn::Matrix<double>& noise) {
  if (batch.size() == 0) throw std::invalid_argument("critic_targets: empty batch");
  const nn::Matrix<Scalar> head = nn::forward(actor, batch.next_states);
  const PolicyDraw<Scalar> next = draw_policy(head, squash, noise);
  const nn::Matrix<Scalar> input = stack_rows(batch.next_states, next.features);
  const nn::Matrix<Scalar> q1 = nn::forward(target_critics.first, input);
  const nn::Matrix<Scalar> q2 =
      target_critics.twin ? nn::forward(target_critics.second, input) : q1;

  std::vector<double> targets(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto col = static_cast<Eigen::Index>(b);
    if (batch.done[b]) {
      targets[b] = batch.rewards[b];
      continue;
    }
    const double q = std::min(static_cast<double>(q1(0, col)), static_cast<double>(q2(0, col)));
    targets[b] = batch.rewards[b] + config.gamma * (q - config.alpha * next.log_prob[b]);
  }
  return targets;
}

template <typename Scalar>
std::vector<double> critic_targets(const Batch<Scalar>& batch, const nn::Network<Scalar>& actor,
                                   const CriticPair<Scalar>& target_critics, const Squash& squash,
                                   const SacConfig& config, prob::RngStream& rng) {
  const auto noise = standard_normal_matrix(actor.output_dim() / 2,
                                            static_cast<Eigen::Index>(batch.size()), rng);
  return critic_targets(batch, actor, target_critics, squash, config, noise);
}

template <typename Scalar>
CriticLoss<Scalar> critic_loss(const CriticPair<Scalar>& critics, const Batch<Scalar>& batch,
                               std::span<const double> targets, const Squash& squash) {
  if (targets.size() != batch.size() || batch.size() == 0) {
    throw std::invalid_argument("critic_loss: targets do not match the batch");
  }
  const nn::Matrix<Scalar> features = batch.actions.unaryExpr(
      [&](Scalar a) { return static_cast<Scalar>(squash.feature(static_cast<double>(a))); });
  const nn::Matrix<Scalar> input = stack_rows(batch.states, features);
  const double n = static_cast<double>(batch.size());

  CriticLoss<Scalar> result;
  auto one = [&](const nn::Network<Scalar>& critic, nn::Gradient<Scalar>& grad) {
    nn::ForwardTrace<Scalar> trace;
    const nn::Matrix<Scalar> q = nn::forward(critic, input, &trace);
    nn::Matrix<Scalar> dq(1, q.cols());
    double loss = 0.0;
    for (Eigen::Index b = 0; b < q.cols(); ++b) {
      const double r = static_cast<double>(q(0, b)) - targets[static_cast<std::size_t>(b)];
      loss += 0.5 * r * r;
      dq(0, b) = static_cast<Scalar>(r / n);
    }
    grad = nn::backward(critic, trace, dq).grad;
    return loss / n;
  };
  result.loss = one(critics.first, result.first);
  if (critics.twin) {
    result.loss += one(critics.second, result.second);
  } else {
    result.second.d = critics.second.params.zeros_like();
  }
  return result;
}

template <typename Scalar>
ActorLoss<Scalar> actor_loss(const nn::Network<Scalar>& actor, const CriticPair<Scalar>& critics,
                             const nn::Matrix<Scalar>& states, const Squash& squash, double alpha,
                             const nn::Matrix<double>& noise) {
  nn::ForwardTrace<Scalar> actor_trace;
  const nn::Matrix<Scalar> head = nn::forward(actor, states, &actor_trace);
  const Eigen::Index dim = head.rows() / 2;
  const Eigen::Index batch = head.cols();
  const PolicyDraw<Scalar> draw = draw_policy(head, squash, noise);
  const nn::Matrix<Scalar> input = stack_rows(states, draw.features);

  nn::ForwardTrace<Scalar> t1, t2;
  const nn::Matrix<Scalar> q1 = nn::forward(critics.first, input, &t1);
  nn::Matrix<Scalar> q2 = q1;
  if (critics.twin) q2 = nn::forward(critics.second, input, &t2);

  const double n = static_cast<double>(batch);
  ActorLoss<Scalar> result;
  nn::Matrix<Scalar> pick1 = nn::Matrix<Scalar>::Zero(1, batch);
  nn::Matrix<Scalar> pick2 = nn::Matrix<Scalar>::Zero(1, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const bool first = !critics.twin || q1(0, b) <= q2(0, b);
    const double q = static_cast<double>(first ? q1(0, b) : q2(0, b));
    (first ? pick1 : pick2)(0, b) = Scalar(1);
    const double lp = draw.log_prob[static_cast<std::size_t>(b)];
    result.loss += (alpha * lp - q) / n;
    result.mean_log_prob += lp / n;
  }

  // dQ/d(feature) from whichever critic attained the minimum.
  const Eigen::Index state_dim = states.rows();
  nn::Matrix<Scalar> dq_dfeature =
      nn::backward(critics.first, t1, pick1, false).input_grad.bottomRows(dim);
  if (critics.twin) {
    dq_dfeature += nn::backward(critics.second, t2, pick2, false).input_grad.bottomRows(dim);
  }
  (void)state_dim;

  nn::Matrix<Scalar> head_grad(2 * dim, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double mean = static_cast<double>(head(i, b));
      const double raw_log_std = static_cast<double>(head(dim + i, b));
      const double std = std::exp(clamp_log_std(raw_log_std));
      const double eps = noise(i, b);
      const double u = mean + std * eps;
      const double d_u = (-alpha * log_jacobian_derivative(squash, u) -
                          static_cast<double>(dq_dfeature(i, b)) *
                              squash.feature_derivative(squash.apply(u)) *
                              squash_derivative(squash, u)) /
                         n;
      head_grad(i, b) = static_cast<Scalar>(d_u);
      const double d_log_std = log_std_active(raw_log_std) ? d_u * std * eps - alpha / n : 0.0;
      head_grad(dim + i, b) = static_cast<Scalar>(d_log_std);
    }
  }
  result.grad = nn::backward(actor, actor_trace, head_grad).grad;
  return result;
}

#define SEQBED_SAC_INSTANTIATE(T)                                                             \
  template std::vector<double> critic_targets<T>(const Batch<T>&, const nn::Network<T>&,      \
                                                 const CriticPair<T>&, const Squash&,         \
                                                 const SacConfig&, const nn::Matrix<double>&); \
  template std::vector<double> critic_targets<T>(const Batch<T>&, const nn::Network<T>&,      \
                                                 const CriticPair<T>&, const Squash&,         \
                                                 const SacConfig&, prob::RngStream&);         \
  template CriticLoss<T> critic_loss<T>(const CriticPair<T>&, const Batch<T>&,                \
                                        std::span<const double>, const Squash&);              \
  template ActorLoss<T> actor_loss<T>(const nn::Network<T>&, const CriticPair<T>&,            \
                                      const nn::Matrix<T>&, const Squash&, double,            \
                                      const nn::Matrix<double>&);

SEQBED_SAC_INSTANTIATE(float)
SEQBED_SAC_INSTANTIATE(double)

#undef SEQBED_SAC_INSTANTIATE

// --- agent -----------------------------------------------------------------

AgentParameters init_agent(const env::Environment& environment, const SacConfig& config,
                           prob::RngStream& rng) {
  config.validate();
  const int state_dim = encoding_layout(environment).dim();
  const int action_dim = environment.design_dim();
  auto sizes = [&](int in, int out) {
    std::vector<int> s{in};
    for (int i = 0; i < config.hidden_layers; ++i) s.push_back(config.hidden_width);
    s.push_back(out);
    return s;
  };
  std::vector<nn::Activation> acts(static_cast<std::size_t>(config.hidden_layers),
                                   nn::Activation::relu);
  acts.push_back(nn::Activation::identity);

  AgentParameters p;
  p.actor = nn::make_network<float>(sizes(state_dim, 2 * action_dim), acts, rng, 0.01);
  p.critics.first = nn::make_network<float>(sizes(state_dim + action_dim, 1), acts, rng);
  p.critics.second = nn::make_network<float>(sizes(state_dim + action_dim, 1), acts, rng);
  p.critics.twin = config.twin_critics;
  p.target_critics = p.critics;
  return p;
}

SacLearner::SacLearner(AgentParameters params, Squash squash, SacConfig config)
    : params_(std::move(params)),
      squash_(squash),
      config_(config),
      actor_opt_(nn::OptimizerState<float>::zeros_like(params_.actor.params)),
      critic1_opt_(nn::OptimizerState<float>::zeros_like(params_.critics.first.params)),
      critic2_opt_(nn::OptimizerState<float>::zeros_like(params_.critics.second.params)) {
  config_.validate();
}

UpdateStats SacLearner::update(const Batch<float>& batch, prob::RngStream& rng) {
  UpdateStats stats;
  const std::vector<double> targets =
      critic_targets(batch, params_.actor, params_.target_critics, squash_, config_, rng);
  const CriticLoss<float> cl = critic_loss(params_.critics, batch, targets, squash_);
  stats.critic_loss = cl.loss;

  std::tie(params_.critics.first.params, critic1_opt_) =
      nn::adam_step(params_.critics.first.params, cl.first, critic1_opt_, config_.lr_critic);
  if (params_.critics.twin) {
    std::tie(params_.critics.second.params, critic2_opt_) =
        nn::adam_step(params_.critics.second.params, cl.second, critic2_opt_, config_.lr_critic);
  }

  const auto noise = standard_normal_matrix(params_.actor.output_dim() / 2,
                                            static_cast<Eigen::Index>(batch.size()), rng);
  const ActorLoss<float> al =
      actor_loss(params_.actor, params_.critics, batch.states, squash_, config_.alpha, noise);
  stats.actor_loss = al.loss;
  std::tie(params_.actor.params, actor_opt_) =
      nn::adam_step(params_.actor.params, al.grad, actor_opt_, config_.lr_actor);

  params_.target_critics.first.params = nn::polyak_update(
      params_.target_critics.first.params, params_.critics.first.params, config_.tau);
  if (params_.critics.twin) {
    params_.target_critics.second.params = nn::polyak_update(
        params_.target_critics.second.params, params_.critics.second.params, config_.tau);
  }

  if (!std::isfinite(stats.critic_loss) || !std::isfinite(stats.actor_loss) ||
      !params_.actor.params.all_finite() || !params_.critics.first.params.all_finite()) {
    throw TrainingDiverged("SAC update produced non-finite losses or parameters");
  }
  return stats;
}

namespace {

void assert_episode_invariants(const env::Environment& environment, const env::History& history) {
  if (environment.spatial() &&
      history.travel_distance > environment.travel_budget() + environment.step_limit() * (1.0 + 1e-12)) {
    throw std::logic_error("travel distance exceeded d_2 + d_1");
  }
  if (environment.kind() == env::EnvKind::death && history.steps.size() >= 2) {
    const auto& steps = history.steps;
    if (!(steps.back().design.coords[0] > steps[steps.size() - 2].design.coords[0])) {
      throw std::logic_error("death-process designs are not strictly increasing");
    }
  }
}

}  // namespace

TrainResult train(const env::EnvConfig& env_config, const SacConfig& sac_config,
                  std::size_t episodes, std::uint64_t seed, const EpisodeCallback& on_episode) {
  sac_config.validate();
  const auto environment = env::make_environment(env_config);
  const EncodingLayout layout = encoding_layout(*environment);
  const Squash squash = squash_for(*environment);
  const prob::RngStream root(seed);

  prob::RngStream init_rng = root.substream(0);
  prob::RngStream update_rng = root.substream(1);
  SacLearner learner(init_agent(*environment, sac_config, init_rng), squash, sac_config);
  ReplayBuffer buffer(static_cast<std::size_t>(sac_config.replay_capacity));

  TrainResult result;
  for (std::size_t ep = 0; ep < episodes; ++ep) {
    prob::RngStream rng = root.substream(2 + ep);
    auto [latent, history] = environment->reset(rng);
    StateEncoding state = encode_state(history, layout);
    TrainingLogRow row;
    row.episode = ep;
    std::size_t updates = 0;

    while (!history.done()) {
      const SampledAction sampled =
          sample_action(learner.parameters().actor, state, squash, rng);
      environment->step(latent, history, sampled.action, rng);
      assert_episode_invariants(*environment, history);

      Transition t;
      t.state = std::move(state);
      t.next_state = encode_state(history, layout);
      t.raw_action.assign(sampled.raw.begin(), sampled.raw.end());
      t.action.assign(sampled.action.delta.begin(), sampled.action.delta.end());
      t.done = history.done();
      if (t.done) {
        const auto draw = infogain::draw_contrastives(*environment, latent,
                                                      environment->contrastive_samples(), rng);
        t.reward = infogain::cid(*environment, draw, history).nats;
        row.terminal_reward = t.reward;
      }
      state = t.next_state;
      buffer.push(std::move(t));
      ++result.env_steps;

      if (result.env_steps > static_cast<std::size_t>(sac_config.warmup_steps) &&
          buffer.size() >= static_cast<std::size_t>(sac_config.batch_size)) {
        for (int k = 0; k < sac_config.updates_per_env_step; ++k) {
          const auto idx =
              buffer.sample_indices(static_cast<std::size_t>(sac_config.batch_size), update_rng);
          const UpdateStats s = learner.update(make_batch(buffer, idx), update_rng);
          row.critic_loss += s.critic_loss;
          row.actor_loss += s.actor_loss;
          ++updates;
        }
      }
    }
    if (updates > 0) {
      row.critic_loss /= static_cast<double>(updates);
      row.actor_loss /= static_cast<double>(updates);
    }
    row.steps = history.step_count();
    row.travel_distance = history.travel_distance;
    result.log.push_back(row);
    if (on_episode) on_episode(row);
  }
  result.params = learner.parameters();
  return result;
}

void write_training_log(std::ostream& out, std::span<const TrainingLogRow> log) {
  out << "episode,terminal_reward,critic_loss,actor_loss,steps,travel_distance,reward_ma100\n";
  char buf[256];
  double window = 0.0;
  for (std::size_t i = 0; i < log.size(); ++i) {
    window += log[i].terminal_reward;
    if (i >= 100) window -= log[i - 100].terminal_reward;
    const double ma = window / static_cast<double>(std::min<std::size_t>(i + 1, 100));
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%zu,%.17g,%.17g\n", log[i].episode,
                  log[i].terminal_reward, log[i].critic_loss, log[i].actor_loss, log[i].steps,
                  log[i].travel_distance, ma);
    out << buf;
  }
}

// --- policies --------------------------------------------------------------

env::Action random_policy(const env::Environment& environment, prob::RngStream& rng) {
  if (environment.spatial()) {
    const double angle = 2.0 * std::numbers::pi * rng.uniform01();
    const double length = environment.step_limit() * rng.uniform01();
    return env::Action{{length * std::cos(angle), length * std::sin(angle)}};
  }
  if (environment.kind() == env::EnvKind::death) {
    return env::Action{{prob::softplus(rng.standard_normal())}};
  }
  return env::Action{{0.0}};
}

env::Action RandomPolicy::act(const env::History&, prob::RngStream& rng) const {
  return random_policy(environment_, rng);
}

ActorPolicy::ActorPolicy(const nn::NetworkF& actor, const env::Environment& environment)
    : actor_(actor), layout_(encoding_layout(environment)), squash_(squash_for(environment)) {}

env::Action ActorPolicy::act(const env::History& history, prob::RngStream&) const {
  return deterministic_action(actor_, encode_state(history, layout_), squash_);
}

Evaluation evaluate(const AgentParameters& params, const env::Environment& environment,
                    std::size_t episodes, std::uint64_t seed, int threads) {
  const ActorPolicy policy(params.actor, environment);
  Evaluation out;
  out.episodes = infogain::run_episodes(environment, policy, episodes,
                                        environment.contrastive_samples(), prob::RngStream(seed),
                                        threads);
  out.reward = infogain::summarize(out.episodes);
  return out;
}

Evaluation evaluate_random(const env::Environment& environment, std::size_t episodes,
                           std::uint64_t seed, int threads) {
  const RandomPolicy policy(environment);
  Evaluation out;
  out.episodes = infogain::run_episodes(environment, policy, episodes,
                                        environment.contrastive_samples(), prob::RngStream(seed),
                                        threads);
  out.reward = infogain::summarize(out.episodes);
  return out;
}

// --- checkpoints -----------------------------------------------------------

nn::Checkpoint to_checkpoint(const AgentParameters& params, const AgentMetadata& metadata) {
  nlohmann::json meta;
  meta["env"] = metadata.env;
  meta["config_hash"] = metadata.config_hash;
  meta["episodes"] = metadata.episodes;
  meta["state_dim"] = metadata.state_dim;
  meta["action_dim"] = metadata.action_dim;
  meta["twin_critics"] = params.critics.twin;
  nn::Checkpoint ck;
  ck.metadata_json = meta.dump();
  ck.networks = {{"actor", params.actor},
                 {"critic1", params.critics.first},
                 {"critic2", params.critics.second},
                 {"target_critic1", params.target_critics.first},
                 {"target_critic2", params.target_critics.second}};
  return ck;
}

AgentParameters from_checkpoint(const nn::Checkpoint& checkpoint, AgentMetadata* metadata) {
  const auto meta = nlohmann::json::parse(checkpoint.metadata_json);
  AgentParameters p;
  p.actor = checkpoint.find("actor");
  p.critics.first = checkpoint.find("critic1");
  p.critics.second = checkpoint.find("critic2");
  p.target_critics.first = checkpoint.find("target_critic1");
  p.target_critics.second = checkpoint.find("target_critic2");
  p.critics.twin = p.target_critics.twin = meta.value("twin_critics", true);
  if (metadata) {
    metadata->env = meta.value("env", "");
    metadata->config_hash = meta.value("config_hash", "");
    metadata->episodes = meta.value("episodes", std::size_t{0});
    metadata->state_dim = meta.value("state_dim", 0);
    metadata->action_dim = meta.value("action_dim", 0);
  }
  return p;
}

void check_compatible(const AgentMetadata& metadata, const AgentParameters& params,
                      const env::Environment& environment) {
  const std::string env_name(env::to_string(environment.kind()));
  if (metadata.env != env_name) {
    throw std::runtime_error("checkpoint was trained on '" + metadata.env +
                             "' but the config selects '" + env_name + "'");
  }
  const int state_dim = encoding_layout(environment).dim();
  const int action_dim = environment.design_dim();
  if (params.actor.input_dim() != state_dim || params.actor.output_dim() != 2 * action_dim) {
    throw std::runtime_error("checkpoint actor expects state dim " +
                             std::to_string(params.actor.input_dim()) + ", environment encodes " +
                             std::to_string(state_dim) + " (check T)");
  }
  if (params.critics.first.input_dim() != state_dim + action_dim) {
    throw std::runtime_error("checkpoint critic input dimension does not match the environment");
  }
}

}  // namespace seqbed::sac
