#ifndef SEQBED_INFOGAIN_HPP_
#define SEQBED_INFOGAIN_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "seqbed/env.hpp"
#include "seqbed/prob.hpp"

namespace seqbed::infogain {

/// The generating latent theta_0 and L contrastive draws theta_1..theta_L.
struct LatentDraw {
  env::Latent primary;
  std::vector<env::Latent> contrastives;
};

/// Sequential contrastive information bound in nats.
struct CidValue {
  double nats = 0.0;
};

class ImpossibleHistoryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Draw L contrastive latents for an episode generated under `primary`.
LatentDraw draw_contrastives(const env::Environment& environment, env::Latent primary, int L,
                             prob::RngStream& rng);

/// I_L from precomputed log-likelihoods: the first entry belongs to theta_0.
/// Throws ImpossibleHistoryError if that entry is -inf.
CidValue cid_from_log_likelihoods(std::span<const double> log_likelihoods);

/// I_L = l_0 - logsumexp(l_0..l_L) + log(L + 1), all in log space.
CidValue cid(const env::Environment& environment, const LatentDraw& draw,
             const env::History& history);

/// log(L + 1), the largest value I_L can take.
double cid_upper_bound(int L);

/// One finished evaluation episode.
struct EpisodeRecord {
  std::size_t episode = 0;
  env::History history;
  double reward = 0.0;  // terminal I_L
};

struct McEstimate {
  double mean = 0.0;
  double std_err = 0.0;
};

/// Roll `policy` to termination from a fresh reset using `rng`.
env::History rollout(const env::Environment& environment, const env::Policy& policy,
                     const env::Latent& latent, env::History history, prob::RngStream& rng);

/// Episode `index` uses rng.substream(index), so results do not depend on the
/// thread count. Records come back ordered by episode index.
std::vector<EpisodeRecord> run_episodes(const env::Environment& environment,
                                        const env::Policy& policy, std::size_t episodes, int L,
                                        const prob::RngStream& rng, int threads = 1);

McEstimate summarize(std::span<const EpisodeRecord> records);

/// Monte Carlo estimate of the expected bound over the policy's episodes.
McEstimate expected_cid(const env::Environment& environment, const env::Policy& policy,
                        std::size_t episodes, int L, const prob::RngStream& rng,
                        int threads = 1);

/// Plain nested Monte Carlo estimate of the EIG of a fixed design sequence;
/// fresh inner samples per outer sample. The standard error covers the outer
/// average only.
McEstimate nested_mc_eig(const env::Environment& environment,
                         std::span<const env::Design> designs, std::size_t outer,
                         std::size_t inner, prob::RngStream& rng);

// Exact quantities for the toy model, obtained by enumeration.

/// Mutual information between theta and y in nats.
double toy_exact_eig(const env::ToyConfig& config);

/// Exact expected bound for L contrastive samples.
double toy_exact_expected_cid(const env::ToyConfig& config, int L);

}  // namespace seqbed::infogain

#endif  // SEQBED_INFOGAIN_HPP_
