#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ssn/common.hpp"
#include "ssn/network.hpp"

namespace ssn {

// Conductance per weight LSB, per projection-row class. Synapse-driver
// strength is an analog per-row setting on the substrate, so different kinds
// of rows run at different scales; one global scale cannot give both a hard
// clamp (strong rows) and a stationary random network (weak rows). Defaults
// were fixed by measurement against the acceptance targets.
struct RowGains {
  double sampling = 4.0;  // bias and coupling rows, nS/LSB
  double noise = 4.0;     // host Poisson background rows
  double tap = 8.0;       // RN -> sampling unit rows
  double rn = 0.5;        // RN-internal inhibition rows
  double clamp = 10.0;    // host clamp multapse rows

  void validate() const {
    check(sampling > 0 && noise > 0 && tap > 0 && rn > 0 && clamp > 0,
          "row gains must be positive");
  }
};

// Deterministic round-half-away-from-zero onto the 4-bit weight grid.
// A signed value is realized on exactly one of the two channels:
// positive -> excitatory row, negative -> inhibitory row, both clipped at 15.
std::pair<int, int> discretize_weight(double shadow);

// Returns |rounded| > kWeightMax before clipping, i.e. whether the shadow
// value fell outside the representable range.
bool weight_clips(double shadow);

// Fixed-pattern (fabrication) and trial-to-trial (analog storage) parameter
// spread. Every analog neuron parameter gets an independent multiplicative
// factor 1 + sigma*N(0,1); draws violating basic validity (negative time
// constants, reversal potentials on the wrong side of threshold) are
// resampled. Draws depend only on (seed, neuron_id), never on call order.
struct VariabilityModel {
  double sigma_fixed = 0.05;
  double sigma_trial = 0.02;
  std::uint64_t substrate_seed = 1;
};

NeuronParams jitter_params(const NeuronParams& target, double sigma, std::uint64_t seed,
                           int neuron_id);

// Applies fixed-pattern jitter (keyed by substrate_seed) and then trial
// jitter (keyed by trial_seed) to every neuron of `base`.
NetworkDef materialize(const NetworkDef& base, const VariabilityModel& vm,
                       std::uint64_t trial_seed);

// Logistic fit of a measured activation curve
//   rate(w_b) = nu0 / (1 + exp(-(w_b - wb0) / s))
struct ActivationFit {
  double nu0 = 0.0;   // plateau rate, Hz
  double wb0 = 0.0;   // mid-point, hardware bias units
  double s = 0.0;     // slope, hardware units per unit of the abstract bias
  double rmse = 0.0;  // Hz
  bool ok = false;
};

// Damped Gauss-Newton on the three parameters. Requires at least 4 points
// and a non-constant curve; otherwise returns ok == false.
ActivationFit fit_logistic(const std::vector<double>& wb, const std::vector<double>& rate);

// Abstract Boltzmann parameters -> hardware-scale shadow parameters via the
// population-average activation fit: b -> wb0 + s*b, W_ij -> s*W_ij.
struct TranslatedParams {
  Vector bias_hw;
  Matrix weight_hw;
  double clip_fraction = 0.0;  // fraction of entries outside the 4-bit range
};

TranslatedParams translate(const Matrix& w, const Vector& b, const ActivationFit& fit);

// Population average over the usable per-neuron fits.
ActivationFit mean_fit(const std::vector<ActivationFit>& fits);

}  // namespace ssn
