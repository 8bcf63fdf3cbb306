#ifndef SEQBED_TESTS_ORACLES_HPP_
#define SEQBED_TESTS_ORACLES_HPP_

// Reference computations used as independent oracles by the test suites.
// Nothing here calls into the library under test.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

namespace oracle {

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Mean of N(mu, sigma^2) truncated to [lower, +inf).
inline double truncated_normal_mean(double mu, double sigma, double lower) {
  const double alpha = (lower - mu) / sigma;
  return mu + sigma * normal_pdf(alpha) / (1.0 - normal_cdf(alpha));
}

/// Composite trapezoid rule with n intervals.
inline double trapezoid(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double sum = 0.5 * (f(a) + f(b));
  for (int i = 1; i < n; ++i) sum += f(a + i * h);
  return sum * h;
}

/// Exact binomial coefficient as a decimal string using schoolbook
/// arithmetic on base-10^9 limbs.
inline std::string binomial_decimal(int n, int k) {
  std::vector<std::uint64_t> limbs{1};
  auto mul = [&](std::uint64_t m) {
    std::uint64_t carry = 0;
    for (auto& l : limbs) {
      const std::uint64_t v = l * m + carry;
      l = v % 1000000000ULL;
      carry = v / 1000000000ULL;
    }
    while (carry) {
      limbs.push_back(carry % 1000000000ULL);
      carry /= 1000000000ULL;
    }
  };
  auto div = [&](std::uint64_t d) {
    std::uint64_t rem = 0;
    for (std::size_t i = limbs.size(); i-- > 0;) {
      const std::uint64_t v = limbs[i] + rem * 1000000000ULL;
      limbs[i] = v / d;
      rem = v % d;
    }
    while (limbs.size() > 1 && limbs.back() == 0) limbs.pop_back();
  };
  for (int i = 1; i <= k; ++i) {
    mul(static_cast<std::uint64_t>(n - k + i));
    div(static_cast<std::uint64_t>(i));
  }
  std::string out = std::to_string(limbs.back());
  for (std::size_t i = limbs.size() - 1; i-- > 0;) {
    std::string part = std::to_string(limbs[i]);
    out += std::string(9 - part.size(), '0') + part;
  }
  return out;
}

/// log of a positive decimal integer given as a string.
inline double log_decimal(const std::string& digits) {
  const std::size_t lead = std::min<std::size_t>(digits.size(), 17);
  const double mantissa = std::stod(digits.substr(0, lead));
  return std::log(mantissa) + static_cast<double>(digits.size() - lead) * std::log(10.0);
}

/// Binary entropy in nats.
inline double binary_entropy(double p) { return -p * std::log(p) - (1 - p) * std::log(1 - p); }

/// Expected contrastive bound of the two-point Bernoulli model by brute
/// force over every (theta_0, y, theta_1..theta_L) combination.
inline double toy_expected_bound_bruteforce(double p_low, double p_high, int L) {
  const std::array<double, 2> theta{p_low, p_high};
  double total = 0.0;
  for (int k0 = 0; k0 < 2; ++k0) {
    for (int y = 0; y < 2; ++y) {
      auto lik = [&](int k) { return y ? theta[k] : 1.0 - theta[k]; };
      const double joint = 0.5 * lik(k0);
      for (std::uint32_t mask = 0; mask < (1u << L); ++mask) {
        double denom = lik(k0);
        for (int l = 0; l < L; ++l) denom += lik((mask >> l) & 1u);
        const double weight = std::ldexp(1.0, -L);
        total += joint * weight * std::log(lik(k0) / (denom / (L + 1)));
      }
    }
  }
  return total;
}

/// Optimal Q of the deterministic 3-state chain: action 1 moves right
/// (staying at the right end), action 0 moves left (staying at the left
/// end); reward 1 for moving right from the right end.
inline std::array<std::array<double, 2>, 3> chain_q_star(double gamma) {
  std::array<std::array<double, 2>, 3> q{};
  for (int it = 0; it < 2000; ++it) {
    auto v = [&](int s) { return std::max(q[s][0], q[s][1]); };
    std::array<std::array<double, 2>, 3> next{};
    for (int s = 0; s < 3; ++s) {
      const int left = std::max(s - 1, 0);
      const int right = std::min(s + 1, 2);
      next[s][0] = gamma * v(left);
      next[s][1] = (s == 2 ? 1.0 : 0.0) + gamma * v(right);
    }
    q = next;
  }
  return q;
}

}  // namespace oracle

#endif  // SEQBED_TESTS_ORACLES_HPP_
