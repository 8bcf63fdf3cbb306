#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "seqbed/cli.hpp"
#include "seqbed/sac.hpp"

using namespace seqbed;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

infogain::McEstimate random_baseline(const env::EnvConfig& config, std::size_t episodes,
                                     std::uint64_t seed) {
  const auto environment = env::make_environment(config);
  return sac::evaluate_random(*environment, episodes, seed).reward;
}

// --- 1: random baselines at full scale ---------------------------------------

Outcome random_baselines() {
  struct Row {
    const char* name;
    env::EnvConfig config;
    double target;
    double tolerance;
  };
  const Row rows[] = {{"location", env::LocationConfig{}, 3.278, 0.5},
                      {"source", env::SourceConfig{}, 3.586, 0.5},
                      {"death", env::DeathConfig{}, 1.630, 0.15}};
  Outcome out{true, ""};
  for (const Row& row : rows) {
    const auto est = random_baseline(row.config, 500, 101);
    const bool ok = std::abs(est.mean - row.target) <= row.tolerance;
    out.pass = out.pass && ok;
    out.detail += fmt("%s %.3f+-%.3f (target %.3f+-%.2f %s); ", row.name, est.mean, est.std_err,
                      row.target, row.tolerance, ok ? "ok" : "off");
  }
  return out;
}

// --- 2: generalization ordering ------------------------------------------------

Outcome generalization_ordering() {
  Outcome out{true, "location sigma_1 {20,40,60}:"};
  const double sigmas[] = {20.0, 40.0, 60.0};
  const double paper[] = {4.797, 4.164, 3.499};
  double previous = INFINITY;
  for (int i = 0; i < 3; ++i) {
    env::LocationConfig c;
    c.sigma_1 = sigmas[i];
    const double mean = random_baseline(c, 500, 202).mean;
    const bool near = std::abs(mean - paper[i]) <= 0.5;
    out.pass = out.pass && near && mean < previous;
    out.detail += fmt(" %.3f (paper %.3f)", mean, paper[i]);
    previous = mean;
  }
  out.detail += "; death mu_theta {0.5,1.0,1.5}:";
  double last = -INFINITY;
  for (double mu : {0.5, 1.0, 1.5}) {
    env::DeathConfig c;
    c.mu_theta = mu;
    const double mean = random_baseline(c, 500, 203).mean;
    out.pass = out.pass && mean > last;
    out.detail += fmt(" %.3f", mean);
    last = mean;
  }
  return out;
}

// --- 3: bound suite ------------------------------------------------------------

Outcome bound_suite() {
  const std::size_t episodes = 10000;
  Outcome out{true, ""};
  const env::EnvConfig configs[] = {env::LocationConfig{}, env::SourceConfig{},
                                    env::DeathConfig{}, env::ToyConfig{0.2, 0.8, 8}};
  for (const auto& config : configs) {
    const auto environment = env::make_environment(config);
    const int L = environment->contrastive_samples();
    const sac::RandomPolicy policy(*environment);
    const prob::RngStream root(303);
    const double bound = infogain::cid_upper_bound(L);
    std::size_t above = 0, nonfinite = 0;
    double worst_shift = 0.0, worst_mismatch = 0.0, largest = -INFINITY;
    std::vector<double> ll(static_cast<std::size_t>(L) + 1), shifted(ll.size());
    for (std::size_t ep = 0; ep < episodes; ++ep) {
      prob::RngStream rng = root.substream(ep);
      auto [latent, history] = environment->reset(rng);
      const auto draw = infogain::draw_contrastives(*environment, latent, L, rng);
      history = infogain::rollout(*environment, policy, draw.primary, std::move(history), rng);
      ll[0] = environment->log_likelihood(draw.primary, history);
      for (int l = 0; l < L; ++l) {
        ll[static_cast<std::size_t>(l) + 1] =
            environment->log_likelihood(draw.contrastives[static_cast<std::size_t>(l)], history);
      }
      const double value = infogain::cid(*environment, draw, history).nats;
      if (!std::isfinite(value)) ++nonfinite;
      if (value > bound + 1e-12) ++above;
      largest = std::max(largest, value);
      worst_mismatch =
          std::max(worst_mismatch, std::abs(value - infogain::cid_from_log_likelihoods(ll).nats));
      for (double shift : {-750.0, 37.5, 900.0}) {
        for (std::size_t i = 0; i < ll.size(); ++i) shifted[i] = ll[i] + shift;
        worst_shift = std::max(
            worst_shift, std::abs(infogain::cid_from_log_likelihoods(shifted).nats - value));
      }
    }
    const bool ok = above == 0 && nonfinite == 0 && worst_shift <= 1e-9 && worst_mismatch <= 1e-9;
    out.pass = out.pass && ok;
    out.detail += fmt("%s: max %.4f <= %.4f, above %zu, nonfinite %zu, shift err %.1e; ",
                      std::string(env::to_string(environment->kind())).c_str(), largest, bound,
                      above, nonfinite, worst_shift);
  }
  return out;
}

// --- 4: toy oracle -------------------------------------------------------------

Outcome toy_oracle() {
  Outcome out{true, ""};
  const double oracle_eig = std::log(2.0) - oracle::binary_entropy(0.2);
  const env::ToyConfig base{0.2, 0.8, 1};
  const double eig = infogain::toy_exact_eig(base);
  out.pass = std::abs(eig - 0.1927) < 5e-5 && std::abs(eig - oracle_eig) < 1e-12;
  out.detail += fmt("EIG %.6f; ", eig);
  double previous = -INFINITY;
  for (int L : {1, 2, 4, 8}) {
    env::ToyConfig c = base;
    c.L = L;
    const double exact = infogain::toy_exact_expected_cid(c, L);
    const double brute = oracle::toy_expected_bound_bruteforce(0.2, 0.8, L);
    const env::ToyBernoulli environment(c);
    const sac::RandomPolicy policy(environment);
    const auto mc = infogain::expected_cid(environment, policy, 100000, L, prob::RngStream(404, L));
    const double z = (mc.mean - exact) / mc.std_err;
    const bool ok = std::abs(exact - brute) < 1e-12 && exact <= eig && exact >= previous &&
                    std::abs(z) <= 3.0;
    out.pass = out.pass && ok;
    out.detail += fmt("L=%d exact %.6f mc %.6f z %.2f; ", L, exact, mc.mean, z);
    previous = exact;
  }
  const env::ToyBernoulli environment(base);
  prob::RngStream rng(405);
  const std::vector<env::Design> designs{env::Design{{0.0}}};
  const auto nested = infogain::nested_mc_eig(environment, designs, 100000, 1000, rng);
  const double z = (nested.mean - eig) / nested.std_err;
  out.pass = out.pass && std::abs(z) <= 3.0;
  out.detail += fmt("nested %.6f z %.2f", nested.mean, z);
  return out;
}

// --- 5: gradients --------------------------------------------------------------

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

template <typename Loss>
double worst_fd_error(nn::NetworkD& net, const nn::Gradient<double>& grad, Loss loss) {
  const double h = 1e-5;
  double worst = 0.0;
  auto probe = [&](double& param, double analytic) {
    const double keep = param;
    param = keep + h;
    const double up = loss();
    param = keep - h;
    const double down = loss();
    param = keep;
    worst = std::max(worst, relative_error((up - down) / (2 * h), analytic));
  };
  for (std::size_t l = 0; l < net.params.layers(); ++l) {
    for (Eigen::Index i = 0; i < net.params.weights[l].size(); ++i) {
      probe(net.params.weights[l](i), grad.d.weights[l](i));
    }
    for (Eigen::Index i = 0; i < net.params.biases[l].size(); ++i) {
      probe(net.params.biases[l](i), grad.d.biases[l](i));
    }
  }
  return worst;
}

nn::Matrix<double> gaussian_matrix(Eigen::Index rows, Eigen::Index cols, prob::RngStream& rng) {
  nn::Matrix<double> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.standard_normal();
  return m;
}

Outcome gradients() {
  prob::RngStream rng(505);
  const nn::Activation all[] = {nn::Activation::relu, nn::Activation::tanh,
                                nn::Activation::softplus, nn::Activation::identity};
  double worst_net = 0.0;
  for (int trial = 0; trial < 32; ++trial) {
    const nn::Activation hidden = all[trial % 4];
    const nn::Activation output = all[(trial / 4) % 4];
    const int in = 2 + trial % 3, width = 3 + trial % 4, outd = 1 + trial % 2;
    nn::NetworkD net = nn::make_network<double>({in, width, width, outd}, {hidden, hidden, output}, rng);
    for (auto& b : net.params.biases) b = gaussian_matrix(b.size(), 1, rng) * 0.3;
    const nn::Matrix<double> x = gaussian_matrix(in, 5, rng);
    const nn::Matrix<double> w = gaussian_matrix(outd, 5, rng);
    nn::ForwardTrace<double> trace;
    nn::forward(net, x, &trace);
    const auto grad = nn::backward(net, trace, w).grad;
    worst_net = std::max(worst_net, worst_fd_error(net, grad, [&] {
                           return (nn::forward(net, x).array() * w.array()).sum();
                         }));
  }

  double worst_critic = 0.0, worst_actor = 0.0;
  const sac::Squash squashes[] = {{sac::Squash::Kind::tanh, 3.0 / std::sqrt(2.0)},
                                  {sac::Squash::Kind::softplus, 1.0}};
  for (const auto& squash : squashes) {
    for (bool twin : {true, false}) {
      const int S = 4, D = 2, B = 6;
      const std::vector<nn::Activation> acts{nn::Activation::relu, nn::Activation::identity};
      nn::NetworkD actor = nn::make_network<double>({S, 8, 2 * D}, acts, rng);
      sac::CriticPair<double> critics{nn::make_network<double>({S + D, 8, 1}, acts, rng),
                                      nn::make_network<double>({S + D, 8, 1}, acts, rng), twin};
      sac::Batch<double> batch;
      batch.states = gaussian_matrix(S, B, rng);
      batch.next_states = gaussian_matrix(S, B, rng);
      batch.actions.resize(D, B);
      for (Eigen::Index i = 0; i < batch.actions.size(); ++i) {
        batch.actions(i) = squash.apply(rng.standard_normal());
      }
      for (int b = 0; b < B; ++b) {
        batch.rewards.push_back(rng.standard_normal());
        batch.done.push_back(b % 2 == 0);
      }
      const std::vector<double> targets(batch.rewards);
      const auto closs = sac::critic_loss(critics, batch, targets, squash);
      worst_critic = std::max(worst_critic, worst_fd_error(critics.first, closs.first, [&] {
                                return sac::critic_loss(critics, batch, targets, squash).loss;
                              }));
      if (twin) {
        worst_critic = std::max(worst_critic, worst_fd_error(critics.second, closs.second, [&] {
                                  return sac::critic_loss(critics, batch, targets, squash).loss;
                                }));
      }
      const nn::Matrix<double> noise = gaussian_matrix(D, B, rng);
      const auto aloss = sac::actor_loss(actor, critics, batch.states, squash, 0.2, noise);
      worst_actor = std::max(worst_actor, worst_fd_error(actor, aloss.grad, [&] {
                               return sac::actor_loss(actor, critics, batch.states, squash, 0.2,
                                                      noise).loss;
                             }));
    }
  }
  return {worst_net < 1e-4 && worst_critic < 1e-4 && worst_actor < 1e-3,
          fmt("networks %.1e (<1e-4), critic loss %.1e (<1e-4), actor loss %.1e (<1e-3)",
              worst_net, worst_critic, worst_actor)};
}

// --- 6: tabular chain ------------------------------------------------------------

Outcome tabular_chain() {
  const double gamma = 0.5;
  const auto q_star = oracle::chain_q_star(gamma);
  const std::size_t dataset_size = 3000;
  sac::SacConfig config;
  config.gamma = gamma;
  config.alpha = 1e-4;
  config.tau = 0.01;
  config.lr_actor = 1e-3;
  config.lr_critic = 1e-3;
  config.batch_size = 128;
  config.replay_capacity = static_cast<int>(dataset_size);
  config.hidden_width = 64;

  prob::RngStream rng(606);
  const std::vector<nn::Activation> acts{nn::Activation::relu, nn::Activation::relu,
                                         nn::Activation::identity};
  sac::AgentParameters params;
  params.actor = nn::make_network<float>({3, 64, 64, 2}, acts, rng, 0.01);
  params.critics = {nn::make_network<float>({4, 64, 64, 1}, acts, rng),
                    nn::make_network<float>({4, 64, 64, 1}, acts, rng), true};
  params.target_critics = params.critics;
  const sac::Squash squash{sac::Squash::Kind::tanh, 1.0};
  sac::SacLearner learner(params, squash, config);

  auto one_hot = [](int s) {
    nn::Vector<float> v = nn::Vector<float>::Zero(3);
    v(s) = 1.0f;
    return v;
  };
  struct Sample {
    int s;
    float a;
    double r;
    int next;
  };
  std::vector<Sample> data;
  for (std::size_t i = 0; i < dataset_size; ++i) {
    const int s = static_cast<int>(i % 3);
    const float a = static_cast<float>(2.0 * rng.uniform01() - 1.0);
    const bool right = a > 0.0f;
    data.push_back({s, a, right && s == 2 ? 1.0 : 0.0, right ? std::min(s + 1, 2) : std::max(s - 1, 0)});
  }
  const int B = config.batch_size;
  for (int it = 0; it < 20000; ++it) {
    sac::Batch<float> batch;
    batch.states.resize(3, B);
    batch.next_states.resize(3, B);
    batch.actions.resize(1, B);
    for (int b = 0; b < B; ++b) {
      const Sample& x = data[static_cast<std::size_t>(rng.uniform01() * dataset_size) % dataset_size];
      batch.states.col(b) = one_hot(x.s);
      batch.next_states.col(b) = one_hot(x.next);
      batch.actions(0, b) = x.a;
      batch.rewards.push_back(x.r);
      batch.done.push_back(false);
    }
    learner.update(batch, rng);
  }

  const auto& critics = learner.parameters().critics;
  double worst = 0.0;
  std::string table;
  for (int s = 0; s < 3; ++s) {
    for (int right = 0; right < 2; ++right) {
      nn::Vector<float> input(4);
      input.head(3) = one_hot(s);
      input(3) = static_cast<float>(squash.feature(right ? 0.75 : -0.75));
      for (const auto* net : {&critics.first, &critics.second}) {
        const double q = nn::forward(*net, input)(0);
        worst = std::max(worst, std::abs(q - q_star[s][right]));
      }
      table += fmt(" Q(%d,%s)=%.3f/%.3f", s, right ? "R" : "L",
                   static_cast<double>(nn::forward(critics.first, input)(0)), q_star[s][right]);
    }
  }
  return {worst <= 0.05, fmt("max |Q - Q*| %.4f (<=0.05);%s", worst, table.c_str())};
}

// --- 7: learning improvement -----------------------------------------------------

Outcome learning(const env::EnvConfig& env_config, const sac::SacConfig& sac_config,
                 std::size_t episodes, double reference, double margin, const char* label) {
  const auto start = std::chrono::steady_clock::now();
  const auto result = sac::train(env_config, sac_config, episodes, 707);
  const auto environment = env::make_environment(env_config);
  const auto trained = sac::evaluate(result.params, *environment, 500, 708).reward;
  const auto random = sac::evaluate_random(*environment, 500, 708).reward;
  const double minutes =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() / 60.0;
  const double baseline = std::isnan(reference) ? random.mean : reference;
  return {trained.mean >= baseline + margin && minutes <= 60.0,
          fmt("%s: trained %.3f+-%.3f after %zu episodes, random %.3f+-%.3f, required >= %.3f, "
              "%.1f min",
              label, trained.mean, trained.std_err, episodes, random.mean, random.std_err,
              baseline + margin, minutes)};
}

Outcome learning_location() {
  env::LocationConfig c;
  c.T = 30;
  c.d_2 = 20.0;
  c.L = 200;
  return learning(c, sac::SacConfig{}, 3000, NAN, 0.5, "reduced location");
}

Outcome learning_death() {
  sac::SacConfig s;
  s.alpha = 0.01;
  return learning(env::DeathConfig{}, s, 3000, 1.630, 0.2, "death");
}

// --- 8: constraint enforcement ----------------------------------------------------

Outcome constraints() {
  env::LocationConfig loc;
  loc.T = 30;
  loc.L = 50;
  env::SourceConfig src;
  src.T = 30;
  src.L = 50;
  env::DeathConfig death;
  death.L = 50;
  sac::SacConfig s;
  s.batch_size = 32;
  s.warmup_steps = 200;
  s.hidden_width = 32;
  std::size_t checked = 0, violations = 0, rejected = 0;
  for (const env::EnvConfig& config : {env::EnvConfig(loc), env::EnvConfig(src), env::EnvConfig(death)}) {
    const auto environment = env::make_environment(config);
    const auto result = sac::train(config, s, 60, 808);  // asserts in-loop
    const auto layout = sac::encoding_layout(*environment);
    const auto squash = sac::squash_for(*environment);
    for (const auto& records : {sac::evaluate(result.params, *environment, 200, 809).episodes,
                                sac::evaluate_random(*environment, 200, 809).episodes}) {
      for (const auto& record : records) {
        std::vector<double> previous = {0.0, 0.0};
        double last_time = -INFINITY;
        for (const auto& step : record.history.steps) {
          ++checked;
          if (environment->spatial()) {
            const double len = std::hypot(step.design.coords[0] - previous[0],
                                          step.design.coords[1] - previous[1]);
            if (len > environment->step_limit() + 1e-9) ++violations;
            if (step.travel_distance > environment->travel_budget() + environment->step_limit()) {
              ++violations;
            }
            previous = step.design.coords;
          } else {
            if (!(step.design.coords[0] > last_time)) ++violations;
            last_time = step.design.coords[0];
          }
        }
      }
    }
    prob::RngStream rng(810);
    const env::History empty;
    for (int i = 0; i < 20000; ++i) {
      const auto sampled = sac::sample_action(result.params.actor, sac::encode_state(empty, layout),
                                              squash, rng);
      try {
        environment->check_action(sampled.action);
      } catch (const env::ContractViolation&) {
        ++violations;
      }
    }
    env::Action bad;
    bad.delta = environment->spatial() ? std::vector<double>{environment->step_limit() + 1e-6, 0.0}
                                       : std::vector<double>{0.0};
    try {
      environment->check_action(bad);
    } catch (const env::ContractViolation&) {
      ++rejected;
    }
  }
  return {violations == 0 && rejected == 3,
          fmt("%zu designs checked, %zu violations, %zu/3 inadmissible actions rejected", checked,
              violations, rejected)};
}

// --- 9: determinism -----------------------------------------------------------------

std::map<std::string, std::string> artifacts(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.find("_manifest.json") != std::string::npos) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    out[name] = s.str();
  }
  return out;
}

std::map<std::string, std::string> run_all(const fs::path& dir) {
  fs::remove_all(dir);
  cli::RunConfig death = cli::parse_config(
      "run:\n  env: death\n  episodes: 40\n  eval_episodes: 100\n  threads: 1\n"
      "env:\n  L: 200\n"
      "sac:\n  batch_size: 16\n  warmup_steps: 40\n  hidden_width: 16\n  replay_capacity: 2000\n"
      "generalize:\n  parameter: mu_theta\n  values: [0.5, 1.0]\n");
  death.output_dir = dir.string();
  cli::cmd_train(death);
  cli::cmd_eval(death, dir / "checkpoint.sqbd");
  cli::cmd_baseline(death);
  cli::cmd_generalize(death, dir / "checkpoint.sqbd");
  cli::RunConfig toy = cli::parse_config("run:\n  env: toy\n  oracle_samples: 5000\n  threads: 1\n");
  toy.output_dir = dir.string();
  std::ostringstream sink;
  cli::cmd_oracle(toy, sink);
  return artifacts(dir);
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "seqbed_acceptance_determinism";
  const auto first = run_all(root / "a");
  const auto second = run_all(root / "b");
  std::size_t identical = 0;
  std::string differing;
  for (const auto& [name, bytes] : first) {
    const auto it = second.find(name);
    if (it != second.end() && it->second == bytes) {
      ++identical;
    } else {
      differing += " " + name;
    }
  }
  fs::remove_all(root);
  return {identical == first.size() && first.size() == second.size() && first.size() >= 7,
          fmt("%zu/%zu artifacts byte-identical%s%s", identical, first.size(),
              differing.empty() ? "" : "; differing:", differing.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1", random_baselines},   {"2", generalization_ordering},
      {"3", bound_suite},        {"4", toy_oracle},
      {"5", gradients},          {"6", tabular_chain},
      {"7a", learning_location}, {"7b", learning_death},
      {"8", constraints},        {"9", determinism}};
  std::vector<std::string> wanted(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [id, run] : criteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), id) == wanted.end()) continue;
    Outcome outcome;
    try {
      outcome = run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    if (!outcome.pass) ++failures;
    std::cout << (outcome.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << outcome.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
