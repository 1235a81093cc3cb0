#include "ssn/substrate.hpp"

#include <cmath>

#include "ssn/rng.hpp"

namespace ssn {

namespace {

int round_half_away(double x) {
  return static_cast<int>(x >= 0.0 ? std::floor(x + 0.5) : std::ceil(x - 0.5));
}

}  // namespace

std::pair<int, int> discretize_weight(double shadow) {
  const int r = round_half_away(shadow);
  if (r > 0) return {std::min(r, kWeightMax), 0};
  if (r < 0) return {0, std::min(-r, kWeightMax)};
  return {0, 0};
}

bool weight_clips(double shadow) { return std::abs(round_half_away(shadow)) > kWeightMax; }

NeuronParams jitter_params(const NeuronParams& target, double sigma, std::uint64_t seed,
                           int neuron_id) {
  if (sigma == 0.0) return target;
  // One attempt = a fresh factor per parameter; invalid sets are re-drawn
  // wholesale so the accepted distribution stays exchangeable across fields.
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(neuron_id), attempt));
    NeuronParams p = target;
    auto scale = [&](double v) { return v * (1.0 + sigma * rng.normal()); };
    p.v_reset = scale(p.v_reset);
    p.v_thresh = scale(p.v_thresh);
    p.e_leak = scale(p.e_leak);
    p.e_inh = scale(p.e_inh);
    p.e_exc = scale(p.e_exc);
    p.tau_ref = scale(p.tau_ref);
    p.tau_mem = scale(p.tau_mem);
    p.c_mem = scale(p.c_mem);
    p.tau_syn_exc = scale(p.tau_syn_exc);
    p.tau_syn_inh = scale(p.tau_syn_inh);
    const bool valid = p.tau_ref > 0 && p.tau_mem > 0 && p.tau_syn_exc > 0 &&
                       p.tau_syn_inh > 0 && p.c_mem > 0 && p.e_inh < p.v_thresh &&
                       p.v_thresh < p.e_exc;
    if (valid) return p;
    check(attempt < 64, "parameter jitter failed to produce a valid set");
  }
}

NetworkDef materialize(const NetworkDef& base, const VariabilityModel& vm,
                       std::uint64_t trial_seed) {
  NetworkDef out;
  out.synapses = base.synapses;
  out.neurons.reserve(base.neurons.size());
  for (int i = 0; i < base.size(); ++i) {
    NeuronParams p = jitter_params(base.neurons[i], vm.sigma_fixed, vm.substrate_seed, i);
    p = jitter_params(p, vm.sigma_trial, trial_seed, i);
    out.neurons.push_back(p);
  }
  return out;
}

ActivationFit fit_logistic(const std::vector<double>& wb, const std::vector<double>& rate) {
  ActivationFit fit;
  const int n = static_cast<int>(wb.size());
  if (n < 4 || rate.size() != wb.size()) return fit;

  double ymax = 0.0, ymin = rate[0];
  for (double y : rate) {
    ymax = std::max(ymax, y);
    ymin = std::min(ymin, y);
  }
  if (ymax <= 0.0 || ymax - ymin < 1e-9 * (std::abs(ymax) + 1.0)) return fit;

  // initial guess: plateau = max, midpoint = where the curve crosses half
  double nu0 = ymax;
  double wb0 = wb[0];
  for (int i = 0; i < n; ++i) {
    if (rate[i] >= 0.5 * ymax) {
      wb0 = wb[i];
      break;
    }
  }
  double s = std::max(1e-3, (wb.back() - wb.front()) / 10.0);

  auto sse_of = [&](double a, double m, double sl) {
    double sse = 0.0;
    for (int i = 0; i < n; ++i) {
      const double g = 1.0 / (1.0 + std::exp(-(wb[i] - m) / sl));
      const double r = rate[i] - a * g;
      sse += r * r;
    }
    return sse;
  };

  double sse = sse_of(nu0, wb0, s);
  for (int iter = 0; iter < 200; ++iter) {
    Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
    Eigen::Vector3d jtr = Eigen::Vector3d::Zero();
    for (int i = 0; i < n; ++i) {
      const double a = (wb[i] - wb0) / s;
      const double g = 1.0 / (1.0 + std::exp(-a));
      const double dg = g * (1.0 - g);
      // d f/d wb0 = -nu0 g'/s ; d f/d s = -nu0 g' a/s
      Eigen::Vector3d j(g, -nu0 * dg / s, -nu0 * dg * a / s);
      const double r = rate[i] - nu0 * g;
      jtj += j * j.transpose();
      jtr += j * r;
    }
    // Levenberg damping keeps the step sane when the Jacobian degenerates.
    double lambda = 1e-10 * jtj.trace();
    Eigen::Vector3d delta;
    bool improved = false;
    for (int attempt = 0; attempt < 20; ++attempt) {
      delta = (jtj + lambda * Eigen::Matrix3d::Identity()).ldlt().solve(jtr);
      const double a2 = nu0 + delta[0];
      const double m2 = wb0 + delta[1];
      const double s2 = s + delta[2];
      if (s2 > 1e-6 && a2 > 0.0) {
        const double trial = sse_of(a2, m2, s2);
        if (trial <= sse) {
          nu0 = a2;
          wb0 = m2;
          s = s2;
          sse = trial;
          improved = true;
          break;
        }
      }
      lambda = std::max(lambda * 10.0, 1e-8 * jtj.trace());
    }
    if (!improved) break;
    if (delta.cwiseAbs().maxCoeff() < 1e-10 * (1.0 + std::abs(nu0))) break;
  }

  fit.nu0 = nu0;
  fit.wb0 = wb0;
  fit.s = s;
  fit.rmse = std::sqrt(sse / n);
  // a fit that never left the initial plateau guess or explains nothing is not usable
  fit.ok = nu0 > 0.0 && s > 1e-6 && std::isfinite(fit.rmse);
  return fit;
}

TranslatedParams translate(const Matrix& w, const Vector& b, const ActivationFit& fit) {
  const Eigen::Index n = b.size();
  check(w.rows() == n && w.cols() == n, "weight matrix shape mismatch");
  check(fit.ok, "translate requires a successful fit");

  TranslatedParams out;
  out.bias_hw = Vector(n);
  out.weight_hw = Matrix::Zero(n, n);
  int clipped = 0, total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    out.bias_hw[i] = fit.wb0 + fit.s * b[i];
    ++total;
    if (weight_clips(out.bias_hw[i])) ++clipped;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      out.weight_hw(i, j) = fit.s * w(i, j);
      out.weight_hw(j, i) = out.weight_hw(i, j);
      ++total;
      if (weight_clips(out.weight_hw(i, j))) ++clipped;
    }
  }
  out.clip_fraction = total > 0 ? static_cast<double>(clipped) / total : 0.0;
  return out;
}

ActivationFit mean_fit(const std::vector<ActivationFit>& fits) {
  ActivationFit m;
  int n = 0;
  for (const auto& f : fits) {
    if (!f.ok) continue;
    m.nu0 += f.nu0;
    m.wb0 += f.wb0;
    m.s += f.s;
    m.rmse += f.rmse;
    ++n;
  }
  check(n > 0, "no usable activation fits");
  m.nu0 /= n;
  m.wb0 /= n;
  m.s /= n;
  m.rmse /= n;
  m.ok = true;
  return m;
}

}  // namespace ssn
