#include "seqbed/prob.hpp"

#include <algorithm>
#include <string>

namespace seqbed::prob {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

std::seed_seq make_seed_seq(std::uint64_t seed, std::uint64_t stream_id) {
  const std::uint64_t a = mix64(seed);
  const std::uint64_t b = mix64(a ^ mix64(stream_id + 0x632be59bd9b4e019ULL));
  return std::seed_seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                       static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
}

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id) {
  auto seq = make_seed_seq(seed, stream_id);
  return std::mt19937_64(seq);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

RngStream RngStream::substream(std::uint64_t index) const {
  return RngStream(seed_, mix64(stream_id_ * 0x9e3779b97f4a7c15ULL + index + 1));
}

double RngStream::uniform01() {
  return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
}

double RngStream::standard_normal() {
  return std::normal_distribution<double>(0.0, 1.0)(engine_);
}

void GaussianSpec::validate() const {
  if (!(std > 0.0) || !std::isfinite(std) || !std::isfinite(mean)) {
    throw std::invalid_argument("GaussianSpec: std must be finite and > 0, got " +
                                std::to_string(std));
  }
}

void TruncatedNormalSpec::validate() const {
  if (!(std > 0.0) || !std::isfinite(std)) {
    throw std::invalid_argument("TruncatedNormalSpec: std must be > 0");
  }
  if (!(lower < upper)) {
    throw std::invalid_argument("TruncatedNormalSpec: lower must be < upper");
  }
}

void BinomialSpec::validate() const {
  if (trials < 0) throw std::invalid_argument("BinomialSpec: trials must be >= 0");
  if (!(success_prob >= 0.0 && success_prob <= 1.0)) {
    throw std::invalid_argument("BinomialSpec: success_prob must lie in [0, 1]");
  }
}

double sample_gaussian(const GaussianSpec& spec, RngStream& rng) {
  if (spec.std < 0.0) throw std::invalid_argument("sample_gaussian: negative std");
  const double z = rng.standard_normal();
  if (spec.std == 0.0) return spec.mean;
  return spec.mean + spec.std * z;
}

double sample_truncated_normal(const TruncatedNormalSpec& spec, RngStream& rng,
                               int max_attempts) {
  spec.validate();
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    const double x = spec.mean + spec.std * rng.standard_normal();
    if (x >= spec.lower && x <= spec.upper) return x;
  }
  throw RejectionLimitError("sample_truncated_normal: no draw accepted after " +
                            std::to_string(max_attempts) + " attempts");
}

int sample_binomial(const BinomialSpec& spec, RngStream& rng) {
  spec.validate();
  if (spec.trials == 0 || spec.success_prob == 0.0) return 0;
  if (spec.success_prob == 1.0) return spec.trials;
  return std::binomial_distribution<int>(spec.trials, spec.success_prob)(rng.engine());
}

double log_density_gaussian(double y, const GaussianSpec& spec) {
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  if (spec.std == 0.0) {
    return y == spec.mean ? 0.0 : -std::numeric_limits<double>::infinity();
  }
  const double z = (y - spec.mean) / spec.std;
  return -0.5 * z * z - std::log(spec.std) - kHalfLog2Pi;
}

double log_choose(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

double log_pmf_binomial(int y, const BinomialSpec& spec) {
  if (y < 0 || y > spec.trials) {
    throw std::out_of_range("log_pmf_binomial: outcome outside [0, N]");
  }
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  const double p = spec.success_prob;
  const int failures = spec.trials - y;
  double result = log_choose(spec.trials, y);
  if (y > 0) {
    if (p == 0.0) return kNegInf;
    result += y * std::log(p);
  }
  if (failures > 0) {
    if (p == 1.0) return kNegInf;
    result += failures * std::log1p(-p);
  }
  return result;
}

double logsumexp(std::span<const double> values) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  if (values.empty()) return kNegInf;
  const double peak = *std::max_element(values.begin(), values.end());
  if (peak == kNegInf) return kNegInf;
  if (std::isinf(peak)) return peak;
  double total = 0.0;
  for (double v : values) total += std::exp(v - peak);
  return peak + std::log(total);
}

}  // namespace seqbed::prob
