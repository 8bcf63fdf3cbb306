#include "seqbed/infogain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

namespace seqbed::infogain {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double design_distance(const env::Design& a, const env::Design& b) {
  double sq = 0.0;
  for (std::size_t i = 0; i < a.coords.size(); ++i) {
    const double d = a.coords[i] - b.coords[i];
    sq += d * d;
  }
  return std::sqrt(sq);
}

}  // namespace

LatentDraw draw_contrastives(const env::Environment& environment, env::Latent primary, int L,
                             prob::RngStream& rng) {
  if (L < 1) throw std::invalid_argument("draw_contrastives: L must be >= 1");
  LatentDraw draw{std::move(primary), {}};
  draw.contrastives.reserve(static_cast<std::size_t>(L));
  for (int l = 0; l < L; ++l) {
    draw.contrastives.push_back(environment.sample_contrastive(draw.primary, rng));
  }
  return draw;
}

CidValue cid_from_log_likelihoods(std::span<const double> log_likelihoods) {
  if (log_likelihoods.size() < 2) {
    throw std::invalid_argument("cid: need the primary and at least one contrastive");
  }
  const double primary = log_likelihoods.front();
  if (primary == kNegInf || std::isnan(primary)) {
    throw ImpossibleHistoryError("cid: history has zero likelihood under its own latent");
  }
  const double n = static_cast<double>(log_likelihoods.size());
  return CidValue{primary - prob::logsumexp(log_likelihoods) + std::log(n)};
}

CidValue cid(const env::Environment& environment, const LatentDraw& draw,
             const env::History& history) {
  if (history.steps.empty()) throw std::invalid_argument("cid: empty history");
  std::vector<double> ll;
  ll.reserve(draw.contrastives.size() + 1);
  ll.push_back(environment.log_likelihood(draw.primary, history));
  for (const env::Latent& latent : draw.contrastives) {
    ll.push_back(environment.log_likelihood(latent, history));
  }
  return cid_from_log_likelihoods(ll);
}

double cid_upper_bound(int L) {
  if (L < 1) throw std::invalid_argument("cid_upper_bound: L must be >= 1");
  return std::log(static_cast<double>(L) + 1.0);
}

env::History rollout(const env::Environment& environment, const env::Policy& policy,
                     const env::Latent& latent, env::History history, prob::RngStream& rng) {
  while (!history.done()) {
    const env::Action action = policy.act(history, rng);
    environment.step(latent, history, action, rng);
  }
  return history;
}

std::vector<EpisodeRecord> run_episodes(const env::Environment& environment,
                                        const env::Policy& policy, std::size_t episodes, int L,
                                        const prob::RngStream& rng, int threads) {
  std::vector<EpisodeRecord> records(episodes);
  auto run_one = [&](std::size_t i) {
    prob::RngStream stream = rng.substream(i);
    auto [latent, history] = environment.reset(stream);
    history = rollout(environment, policy, latent, std::move(history), stream);
    const LatentDraw draw = draw_contrastives(environment, latent, L, stream);
    records[i] = EpisodeRecord{i, std::move(history), 0.0};
    records[i].reward = cid(environment, draw, records[i].history).nats;
  };

  const std::size_t workers =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, std::max<std::size_t>(episodes, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < episodes; ++i) run_one(i);
    return records;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < episodes; i += workers) run_one(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return records;
}

McEstimate summarize(std::span<const EpisodeRecord> records) {
  McEstimate est;
  if (records.empty()) return est;
  const double n = static_cast<double>(records.size());
  double sum = 0.0;
  for (const auto& r : records) sum += r.reward;
  est.mean = sum / n;
  if (records.size() > 1) {
    double sq = 0.0;
    for (const auto& r : records) sq += (r.reward - est.mean) * (r.reward - est.mean);
    est.std_err = std::sqrt(sq / (n - 1.0) / n);
  }
  return est;
}

McEstimate expected_cid(const env::Environment& environment, const env::Policy& policy,
                        std::size_t episodes, int L, const prob::RngStream& rng, int threads) {
  if (episodes < 2) throw std::invalid_argument("expected_cid: need at least 2 episodes");
  const auto records = run_episodes(environment, policy, episodes, L, rng, threads);
  return summarize(records);
}

McEstimate nested_mc_eig(const env::Environment& environment,
                         std::span<const env::Design> designs, std::size_t outer,
                         std::size_t inner, prob::RngStream& rng) {
  if (outer < 1 || inner < 1) throw std::invalid_argument("nested_mc_eig: outer, inner >= 1");
  if (designs.empty()) return {};

  std::vector<double> terms(outer);
  std::vector<double> inner_ll(inner);
  for (std::size_t i = 0; i < outer; ++i) {
    auto [latent, history] = environment.reset(rng);
    for (const env::Design& design : designs) {
      const double travel = history.travel_distance + design_distance(design, history.current);
      const double y = environment.observe(latent, design, travel, rng);
      history.steps.push_back(env::Step{design, y, travel});
      history.current = design;
      history.travel_distance = travel;
    }
    for (std::size_t j = 0; j < inner; ++j) {
      const env::Latent other = environment.sample_contrastive(latent, rng);
      inner_ll[j] = environment.log_likelihood(other, history);
    }
    terms[i] = environment.log_likelihood(latent, history) -
               (prob::logsumexp(inner_ll) - std::log(static_cast<double>(inner)));
  }

  McEstimate est;
  const double n = static_cast<double>(outer);
  for (double t : terms) est.mean += t;
  est.mean /= n;
  if (outer > 1) {
    double sq = 0.0;
    for (double t : terms) sq += (t - est.mean) * (t - est.mean);
    est.std_err = std::sqrt(sq / (n - 1.0) / n);
  }
  return est;
}

double toy_exact_eig(const env::ToyConfig& config) {
  const env::ToyJointTable table = env::toy_enumerate(config);
  double eig = 0.0;
  for (int y = 0; y < 2; ++y) {
    const double marginal = table.cell[0][y] + table.cell[1][y];
    for (int k = 0; k < 2; ++k) {
      const double joint = table.cell[k][y];
      if (joint > 0.0) eig += joint * std::log(joint / (0.5 * marginal));
    }
  }
  return eig;
}

double toy_exact_expected_cid(const env::ToyConfig& config, int L) {
  if (L < 1) throw std::invalid_argument("toy_exact_expected_cid: L must be >= 1");
  const env::ToyJointTable table = env::toy_enumerate(config);
  // likelihood[k][y] = p(y | theta_k)
  double likelihood[2][2];
  for (int k = 0; k < 2; ++k) {
    likelihood[k][1] = table.theta[k];
    likelihood[k][0] = 1.0 - table.theta[k];
  }
  // Only the number of contrastives equal to theta_high matters.
  double total = 0.0;
  for (int high = 0; high <= L; ++high) {
    const double weight = std::exp(prob::log_choose(L, high) - L * std::log(2.0));
    for (int k0 = 0; k0 < 2; ++k0) {
      for (int y = 0; y < 2; ++y) {
        const double p0 = likelihood[k0][y];
        const double denom =
            (p0 + high * likelihood[1][y] + (L - high) * likelihood[0][y]) / (L + 1.0);
        total += weight * table.cell[k0][y] * std::log(p0 / denom);
      }
    }
  }
  return total;
}

}  // namespace seqbed::infogain
