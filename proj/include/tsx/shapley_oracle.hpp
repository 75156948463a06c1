#pragma once

// Brute-force Shapley values by enumerating every coalition. Exponential in
// the number of players; used as an independent reference for the explainers.

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace tsx::oracle {

/// Exact Shapley values of an arbitrary set function over p <= 20 players.
/// `value(mask)` receives a bitmask of the coalition.
inline std::vector<double> shapley_by_enumeration(const std::function<double(std::uint32_t)>& value, std::size_t p) {
  if (p > 20) throw std::invalid_argument("shapley_by_enumeration: too many players");
  const std::uint32_t full = 1u << p;
  std::vector<double> v(full);
  for (std::uint32_t m = 0; m < full; ++m) v[m] = value(m);
  std::vector<double> fact(p + 1, 1.0);
  for (std::size_t i = 1; i <= p; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);
  std::vector<double> phi(p, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    const std::uint32_t bit = 1u << i;
    for (std::uint32_t m = 0; m < full; ++m) {
      if (m & bit) continue;
      const auto s = static_cast<std::size_t>(__builtin_popcount(m));
      phi[i] += fact[s] * fact[p - s - 1] / fact[p] * (v[m | bit] - v[m]);
    }
  }
  return phi;
}

/// Interventional game v(S) = f(x on S, b elsewhere) for a single background row.
inline std::vector<double> interventional_shapley(const std::function<double(std::span<const double>)>& f,
                                                  std::span<const double> x, std::span<const double> b) {
  const std::size_t p = x.size();
  std::vector<double> z(p);
  return shapley_by_enumeration(
      [&](std::uint32_t mask) {
        for (std::size_t j = 0; j < p; ++j) z[j] = (mask >> j) & 1u ? x[j] : b[j];
        return f(z);
      },
      p);
}

}  // namespace tsx::oracle
