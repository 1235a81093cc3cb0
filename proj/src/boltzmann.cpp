#include "ssn/boltzmann.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "ssn/rng.hpp"

namespace ssn {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void BoltzmannTarget::validate() const {
  check(b.size() >= 1, "target: empty");
  check(w.rows() == b.size() && w.cols() == b.size(), "target: W/b shape mismatch");
  check(b.allFinite() && w.allFinite(), "target: non-finite parameter");
  check(w.diagonal().cwiseAbs().maxCoeff() == 0.0, "target: nonzero diagonal");
  check((w - w.transpose()).cwiseAbs().maxCoeff() < 1e-12, "target: W not symmetric");
}

BoltzmannTarget beta_target(int n, std::uint64_t seed) {
  check(n >= 1, "beta_target: n < 1");
  Rng rng(seed);
  BoltzmannTarget t;
  t.b = Vector(n);
  t.w = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) t.b[i] = 2.0 * (rng.beta_half_half() - 0.5);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double v = 2.0 * (rng.beta_half_half() - 0.5);
      t.w(i, j) = v;
      t.w(j, i) = v;
    }
  return t;
}

int table_order(const ProbabilityTable& p) {
  const auto n = static_cast<std::uint64_t>(p.size());
  check(n >= 2 && std::has_single_bit(n), "table: size not a power of two");
  return std::countr_zero(n);
}

void validate_table(const ProbabilityTable& p) {
  table_order(p);
  check(p.allFinite() && p.minCoeff() >= 0.0, "table: negative or non-finite entry");
  check(std::abs(p.sum() - 1.0) < 1e-12, "table: does not sum to 1");
}

ProbabilityTable enumerate(const BoltzmannTarget& target) {
  target.validate();
  const int n = target.size();
  if (n > 25)
    throw ConfigError("enumerate: N > 25 is intractable; use gibbs_sample instead");
  const std::size_t m = std::size_t{1} << n;

  // Gray-code walk; field_j = b_j + sum_i w_ji z_i is maintained so each
  // flip updates the log-weight in O(N).
  Vector logw(static_cast<Eigen::Index>(m));
  Vector field = target.b;
  double lw = 0.0;
  std::uint32_t gray = 0;
  logw[0] = 0.0;
  for (std::size_t k = 1; k < m; ++k) {
    const auto g = static_cast<std::uint32_t>(k ^ (k >> 1));
    const int j = std::countr_zero(g ^ gray);
    if ((g >> j) & 1u) {  // 0 -> 1
      lw += field[j];
      field += target.w.col(j);
    } else {  // 1 -> 0
      field -= target.w.col(j);
      lw -= field[j];
    }
    gray = g;
    logw[g] = lw;
  }

  const double mx = logw.maxCoeff();
  ProbabilityTable p = (logw.array() - mx).exp();
  p /= p.sum();
  return p;
}

ProbabilityTable conditional(const ProbabilityTable& table, const Evidence& evidence) {
  const int n = table_order(table);
  check(static_cast<int>(evidence.size()) == n, "conditional: evidence length mismatch");
  std::vector<int> free_bits;
  for (int i = 0; i < n; ++i) {
    check(evidence[i] >= -1 && evidence[i] <= 1, "conditional: evidence entries must be -1/0/1");
    if (evidence[i] < 0) free_bits.push_back(i);
  }
  check(!free_bits.empty(), "conditional: no free units");

  ProbabilityTable out = Vector::Zero(Eigen::Index{1} << free_bits.size());
  for (std::size_t s = 0; s < static_cast<std::size_t>(table.size()); ++s) {
    bool match = true;
    for (int i = 0; i < n && match; ++i)
      if (evidence[i] >= 0 && static_cast<int>((s >> i) & 1u) != evidence[i]) match = false;
    if (!match) continue;
    std::size_t r = 0;
    for (std::size_t f = 0; f < free_bits.size(); ++f) r |= ((s >> free_bits[f]) & 1u) << f;
    out[static_cast<Eigen::Index>(r)] += table[static_cast<Eigen::Index>(s)];
  }
  const double mass = out.sum();
  check(mass > 0.0, "conditional: zero-probability evidence");
  out /= mass;
  return out;
}

double dkl(const ProbabilityTable& p, const ProbabilityTable& p_star) {
  check(p.size() == p_star.size(), "dkl: dimension mismatch");
  double acc = 0.0;
  for (Eigen::Index s = 0; s < p.size(); ++s) {
    if (p[s] <= 0.0) continue;
    if (p_star[s] <= 0.0) return std::numeric_limits<double>::infinity();
    acc += p[s] * std::log(p[s] / p_star[s]);
  }
  return acc;
}

StateMatrix gibbs_sample(const BoltzmannTarget& target, std::int64_t sweeps,
                         std::uint64_t seed, const Evidence& clamps,
                         const std::function<void(int, const std::uint8_t*)>& on_update) {
  target.validate();
  check(sweeps >= 1, "gibbs_sample: sweeps < 1");
  const int n = target.size();
  check(clamps.empty() || static_cast<int>(clamps.size()) == n,
        "gibbs_sample: clamp length mismatch");

  Rng rng(seed);
  std::vector<std::uint8_t> z(n);
  Vector zd(n);
  for (int i = 0; i < n; ++i) {
    const int c = clamps.empty() ? -1 : clamps[i];
    z[i] = c >= 0 ? static_cast<std::uint8_t>(c) : static_cast<std::uint8_t>(rng.uniform() < 0.5);
    zd[i] = z[i];
  }

  StateMatrix chain(sweeps, n);
  for (std::int64_t t = 0; t < sweeps; ++t) {
    for (int i = 0; i < n; ++i) {
      if (!clamps.empty() && clamps[i] >= 0) continue;
      const double f = target.b[i] + target.w.row(i).dot(zd);
      const std::uint8_t nz = rng.uniform() < sigmoid(f) ? 1 : 0;
      z[i] = nz;
      zd[i] = nz;
      if (on_update) on_update(i, z.data());
    }
    for (int i = 0; i < n; ++i) chain(t, i) = z[i];
  }
  return chain;
}

ProbabilityTable empirical_table(const StateMatrix& chain) {
  const int n = static_cast<int>(chain.cols());
  check(n >= 1 && n <= 25, "empirical_table: need 1..25 columns");
  check(chain.rows() >= 1, "empirical_table: empty chain");
  ProbabilityTable p = Vector::Zero(Eigen::Index{1} << n);
  for (Eigen::Index r = 0; r < chain.rows(); ++r) {
    std::size_t s = 0;
    for (int i = 0; i < n; ++i) {
      check(chain(r, i) <= 1, "empirical_table: non-binary state");
      s |= static_cast<std::size_t>(chain(r, i)) << i;
    }
    p[static_cast<Eigen::Index>(s)] += 1.0;
  }
  p /= static_cast<double>(chain.rows());
  return p;
}

double table_mean(const ProbabilityTable& p, int bit) {
  const int n = table_order(p);
  check(bit >= 0 && bit < n, "table_mean: bit out of range");
  double acc = 0.0;
  for (Eigen::Index s = 0; s < p.size(); ++s)
    if ((static_cast<std::size_t>(s) >> bit) & 1u) acc += p[s];
  return acc;
}

void save_table(const std::string& path, const ProbabilityTable& p) {
  table_order(p);
  std::ofstream out(path);
  if (!out) throw IoError("save_table: cannot open " + path);
  out << "state,probability\n";
  char buf[64];
  for (Eigen::Index s = 0; s < p.size(); ++s) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g\n", static_cast<long long>(s), p[s]);
    out << buf;
  }
  if (!out) throw IoError("save_table: write failed for " + path);
}

ProbabilityTable load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_table: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("state,probability", 0) != 0)
    throw IoError("load_table: bad header in " + path);
  std::vector<double> vals;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    long long idx = 0;
    char comma = 0;
    double v = 0.0;
    if (!(ls >> idx >> comma >> v) || comma != ',' ||
        idx != static_cast<long long>(vals.size()))
      throw IoError("load_table: malformed row in " + path);
    vals.push_back(v);
  }
  ProbabilityTable p = Eigen::Map<Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  validate_table(p);
  return p;
}

}  // namespace ssn
