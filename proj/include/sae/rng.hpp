#pragma once

#include <cstdint>

namespace sae {

// Counter-based random stream.  A stream is keyed by (master seed,
// replicate, stage); the n-th output is a pure function of (key, n), so a
// replicate draws the same numbers no matter which thread runs it or in
// what order replicates execute.  The generator is the SplitMix64 output
// function applied to key-derived state plus a golden-ratio stride.
class RngStream {
 public:
  explicit RngStream(std::uint64_t master, std::uint64_t replicate = 0,
                     std::uint64_t stage = 0);

  std::uint64_t next_u64();
  // Uniform on the open interval (0,1).
  double uniform();
  // Standard normal via the Marsaglia polar method.
  double normal();
  // Gamma(shape, rate), shape > 0, rate > 0: Marsaglia-Tsang squeeze-accept,
  // boosted from shape+1 when shape < 1.
  double gamma(double shape, double rate);
  // Poisson(mean), mean >= 0: inversion for small means, Hormann's PTRS
  // transformed rejection otherwise.
  std::int64_t poisson(double mean);
  // Binomial(m, p): CDF inversion for small m, exact beta splitting for
  // large m.
  std::int64_t binomial(std::int64_t m, double p);

  std::uint64_t position() const { return counter_; }

 private:
  std::uint64_t base_;
  std::uint64_t counter_ = 0;
};

}  // namespace sae
