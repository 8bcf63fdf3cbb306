#ifndef SEQBED_PROB_HPP_
#define SEQBED_PROB_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>

namespace seqbed::prob {

/// Seeded random stream. A stream is identified by (seed, stream_id); the
/// engine state is derived from both through a splitmix64 mix, so distinct
/// stream ids give decorrelated sequences and identical ids give identical
/// sequences on every run.
class RngStream {
 public:
  using Engine = std::mt19937_64;

  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  /// Child stream keyed by (this stream's identity, index). Does not advance
  /// this stream, so substreams can be handed out in any order.
  RngStream substream(std::uint64_t index) const;

  Engine& engine() { return engine_; }

  double uniform01();
  double standard_normal();

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  Engine engine_;
};

/// splitmix64 finaliser; exposed for stable hashing of stream identities.
std::uint64_t mix64(std::uint64_t x);

struct GaussianSpec {
  double mean = 0.0;
  double std = 1.0;

  void validate() const;
};

struct TruncatedNormalSpec {
  double mean = 0.0;
  double std = 1.0;
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();

  void validate() const;
};

struct BinomialSpec {
  int trials = 0;
  double success_prob = 0.0;

  void validate() const;
};

/// Thrown when truncated-normal rejection sampling gives up.
class RejectionLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kMaxRejections = 10000;

/// A zero std is accepted and yields the mean (degenerate distribution).
double sample_gaussian(const GaussianSpec& spec, RngStream& rng);

double sample_truncated_normal(const TruncatedNormalSpec& spec, RngStream& rng,
                               int max_attempts = kMaxRejections);

int sample_binomial(const BinomialSpec& spec, RngStream& rng);

/// log N(y; mean, std^2). For std == 0 this is the point-mass limit: 0 at the
/// mean, -inf elsewhere.
double log_density_gaussian(double y, const GaussianSpec& spec);

/// log of the binomial pmf with 0*log(0) = 0; -inf for impossible outcomes.
double log_pmf_binomial(int y, const BinomialSpec& spec);

/// log of Binomial(N, y).
double log_choose(int n, int k);

/// Numerically stable log(sum(exp(values))). Empty input or all -inf gives -inf.
double logsumexp(std::span<const double> values);

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace seqbed::prob

#endif  // SEQBED_PROB_HPP_
