#pragma once

#include <cstdint>
#include <vector>

namespace sae {

// log Gamma(x) for x > 0.  Throws DomainError otherwise.
double log_gamma(double x);

// psi(x) and psi'(x) for x > 0.
double digamma(double x);
double trigamma(double x);

// log(1 + exp(s)) without overflow.
double log1p_exp(double s);

// log(sum exp(v_i)) with the usual max shift; -inf for an empty vector.
double log_sum_exp(const std::vector<double>& v);

// The three partial sums over j = 1..y-1 that appear in the negative
// binomial log-likelihood, score and observed information
// (all zero when y <= 1):
//
//   sum log(1 + alpha j)
//   sum j / (1 + alpha j)
//   sum [j / (1 + alpha j)]^2
//
// Small y is summed directly; large y uses the exact identities
//   sum log(1 + alpha j)    = (y-1) log alpha + lgam(1/alpha + y) - lgam(1/alpha + 1)
//   sum 1/(1 + alpha j)     = [psi(1/alpha + y) - psi(1/alpha + 1)] / alpha
//   sum 1/(1 + alpha j)^2   = [psi'(1/alpha + 1) - psi'(1/alpha + y)] / alpha^2
// so survey-scale counts cost O(1) instead of O(y).
double nb_sum_log(std::int64_t y, double alpha);
double nb_sum_score(std::int64_t y, double alpha);
double nb_sum_info(std::int64_t y, double alpha);

}  // namespace sae
