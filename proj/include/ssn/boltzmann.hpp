#pragma once

// Exact Boltzmann reference: enumeration, conditionals, DKL, single-site
// Gibbs sampling.  Probability tables use little-endian state indexing,
// index = sum_i z_i * 2^i, fixed across all modules.

#include <cstdint>
#include <functional>
#include <vector>

#include "ssn/common.hpp"

namespace ssn {

// p*(z) = exp(1/2 z^T W z + z^T b) / Z over z in {0,1}^N.
struct BoltzmannTarget {
  Matrix w;  // N x N, symmetric, zero diagonal
  Vector b;  // N

  int size() const { return static_cast<int>(b.size()); }
  void validate() const;
};

// b_i, w_ij ~ 2[Beta(1/2,1/2) - 1/2], i < j, symmetrized.
BoltzmannTarget beta_target(int n, std::uint64_t seed);

// Length 2^k, non-negative, sums to 1.
using ProbabilityTable = Vector;

// Per-unit constraint: -1 = free, 0/1 = fixed.  Doubles as Gibbs clamps
// and as conditioning evidence.
using Evidence = std::vector<int>;

void validate_table(const ProbabilityTable& p);
int table_order(const ProbabilityTable& p);  // k for size 2^k, else throws

// Exact table over all 2^N states via log-sum-exp.  N <= 25.
ProbabilityTable enumerate(const BoltzmannTarget& target);

// Renormalized slice over the free units (ascending unit order -> ascending
// output bit).  Throws on zero-probability evidence.
ProbabilityTable conditional(const ProbabilityTable& table, const Evidence& evidence);

// sum_s p(s) ln(p(s)/p_star(s)) with 0 ln 0 = 0; +infinity where p > 0 meets
// p_star = 0.
double dkl(const ProbabilityTable& p, const ProbabilityTable& p_star);

// Sequential-scan single-site Gibbs.  Returns the state after each sweep
// (sweeps x N).  Clamped units keep their value throughout.  on_update, if
// set, fires after every accepted single-site update with (unit, state).
StateMatrix gibbs_sample(const BoltzmannTarget& target, std::int64_t sweeps,
                         std::uint64_t seed, const Evidence& clamps = {},
                         const std::function<void(int, const std::uint8_t*)>& on_update = {});

// Histogram of chain rows as a probability table (columns <= 25).
ProbabilityTable empirical_table(const StateMatrix& chain);

// Marginal P(z_bit = 1) under the table.
double table_mean(const ProbabilityTable& p, int bit);

// CSV persistence: header "state,probability", one row per state index.
void save_table(const std::string& path, const ProbabilityTable& p);
ProbabilityTable load_table(const std::string& path);

double sigmoid(double x);

}  // namespace ssn
