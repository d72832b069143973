#include "sae/rng.hpp"

#include <cmath>

#include "sae/errors.hpp"

namespace sae {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t master, std::uint64_t replicate, std::uint64_t stage) {
  std::uint64_t k = mix64(master + kGolden);
  k = mix64(k ^ (replicate + 0xd1b54a32d192ed03ULL));
  base_ = mix64(k ^ (stage + 0x8cb92ba72f3d8dd7ULL));
}

std::uint64_t RngStream::next_u64() {
  ++counter_;
  return mix64(base_ + counter_ * kGolden);
}

double RngStream::uniform() {
  // 53-bit mantissa offset by half an ulp keeps the value strictly inside
  // (0,1), so log(u) and u^(1/a) are always finite.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  for (;;) {
    const double u = 2.0 * uniform() - 1.0;
    const double v = 2.0 * uniform() - 1.0;
    const double s = u * u + v * v;
    if (s >= 1.0 || s == 0.0) continue;
    return u * std::sqrt(-2.0 * std::log(s) / s);
  }
}

double RngStream::gamma(double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0))
    throw DomainError("gamma sampler: shape and rate must be positive");
  if (shape < 1.0) {
    // Boost trick: X ~ Gamma(a+1), X * U^(1/a) ~ Gamma(a).
    const double g = gamma(shape + 1.0, rate);
    return g * std::pow(uniform(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v / rate;            // squeeze
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v / rate;
  }
}

std::int64_t RngStream::poisson(double mean) {
  if (!(mean >= 0.0) || !std::isfinite(mean))
    throw DomainError("poisson sampler: mean must be finite and nonnegative");
  if (mean == 0.0) return 0;
  if (mean < 10.0) {
    // multiplicative inversion
    const double limit = std::exp(-mean);
    double prod = 1.0;
    std::int64_t k = -1;
    do {
      ++k;
      prod *= uniform();
    } while (prod > limit);
    return k;
  }
  // Hormann (1993) PTRS transformed rejection.
  const double b = 0.931 + 2.53 * std::sqrt(mean);
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  const double log_mean = std::log(mean);
  for (;;) {
    const double u = uniform() - 0.5;
    const double v = uniform();
    const double us = 0.5 - std::abs(u);
    const double kf = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= v_r) return static_cast<std::int64_t>(kf);
    if (kf < 0.0 || (us < 0.013 && v > us)) continue;
    const double k = kf;
    if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
        k * log_mean - mean - std::lgamma(k + 1.0))
      return static_cast<std::int64_t>(kf);
  }
}

std::int64_t RngStream::binomial(std::int64_t m, double p) {
  if (m < 0) throw DomainError("binomial sampler: m must be nonnegative");
  if (!(p >= 0.0) || !(p <= 1.0))
    throw DomainError("binomial sampler: p must lie in [0,1]");
  if (m == 0 || p == 0.0) return 0;
  if (p == 1.0) return m;
  if (p > 0.5) return m - binomial(m, 1.0 - p);

  // Exact beta splitting keeps the start probability of the inversion walk
  // away from underflow for large m.
  std::int64_t count = 0;
  while (static_cast<double>(m) * -std::log1p(-p) > 500.0 || m > 4096) {
    const std::int64_t i = m / 2 + 1;
    const double g1 = gamma(static_cast<double>(i), 1.0);
    const double g2 = gamma(static_cast<double>(m - i + 1), 1.0);
    const double y = g1 / (g1 + g2);  // Beta(i, m+1-i)
    if (p < y) {
      m = i - 1;
      p = p / y;
    } else {
      count += i;
      m = m - i;
      p = (p - y) / (1.0 - y);
    }
    if (p <= 0.0) return count;
    if (p >= 1.0) return count + m;
  }

  // CDF inversion with the pmf recurrence.
  const double s = p / (1.0 - p);
  double f = std::exp(static_cast<double>(m) * std::log1p(-p));
  double u = uniform();
  std::int64_t k = 0;
  while (u > f && k < m) {
    u -= f;
    ++k;
    f *= s * static_cast<double>(m - k + 1) / static_cast<double>(k);
  }
  return k + count;
}

}  // namespace sae
