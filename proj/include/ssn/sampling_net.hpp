#pragma once

// Sampling networks: LIF sampling units with a shared regular-firing bias
// neuron, sign-paired couplings (one excitatory + one inhibitory synapse per
// direction, at most one nonzero after discretization), optional RBM layer
// structure, noise backend wiring, clamping, and state readout.
//
// Unit order is the flat RV order used everywhere: visibles, hiddens,
// labels.  Neuron ids: sampling neurons 0..N-1, then the bias neuron, then
// any RN neurons.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ssn/boltzmann.hpp"
#include "ssn/common.hpp"
#include "ssn/engine.hpp"
#include "ssn/network.hpp"
#include "ssn/noise.hpp"
#include "ssn/substrate.hpp"

namespace ssn {

struct SamplingUnit {
  int neuron = -1;      // sampling neuron id (== unit index)
  int bias_exc = -1;    // synapse pair realizing the signed bias weight
  int bias_inh = -1;
};

struct LayerStructure {
  int n_visible = 0;
  int n_hidden = 0;
  int n_label = 0;
  int total() const { return n_visible + n_hidden + n_label; }
};

struct BuildConfig {
  RowGains gains{};
  VariabilityModel vm{};
  NoiseBackend noise{};
  std::uint64_t seed = 1;  // wiring seed (RN topology, taps)
  double delay = 1.0;      // ms, all sampling-side synapses
};

struct SamplingNetwork {
  NetworkDef net;  // base definition; variability is applied per run
  std::vector<SamplingUnit> units;
  struct Coupling {
    int i = 0, j = 0;  // unit indices, i < j
    int ij_exc = -1, ij_inh = -1;  // i -> j synapse pair
    int ji_exc = -1, ji_inh = -1;  // j -> i synapse pair
  };
  std::vector<Coupling> couplings;
  std::optional<LayerStructure> layers;
  NoiseBackend noise;
  RowGains gains;
  VariabilityModel vm;
  std::uint64_t seed = 1;
  int bias_neuron = -1;
  std::vector<int> rn_ids;

  // Signed shadow parameters in hardware-weight units; the synapse table
  // holds their discretized nS realization.
  Matrix shadow_w;
  Vector shadow_b;
  bool top_down_enabled = true;

  int n_units() const { return static_cast<int>(units.size()); }
  int layer_of(int unit) const;  // 0/1/2 = visible/hidden/label, -1 if flat
};

// Flat network: all-to-all couplings, parameters zero until set_parameters.
SamplingNetwork build_network(int n_units, const BuildConfig& cfg);
// RBM topology: visible-hidden and hidden-label couplings only.
SamplingNetwork build_network(const LayerStructure& layers, const BuildConfig& cfg);
// Flat network carrying translate(target)'s discretized parameters.
SamplingNetwork build_network(const BoltzmannTarget& target, const ActivationFit& fit,
                              const BuildConfig& cfg);

// Installs shadow parameters (symmetric, zero diagonal) and rewrites the
// synapse conductances via discretize.  Nonzero entries outside the coupling
// topology (e.g. within a layer) are a configuration error.
void set_parameters(SamplingNetwork& sn, const Matrix& w_hw, const Vector& b_hw);

// Wake-phase switch: disables/enables the hidden->visible and hidden->label
// synapse directions (shadow parameters are untouched).
void set_top_down(SamplingNetwork& sn, bool enabled);

// Host-injected clamp: `multiplicity` regular spike trains per unit, evenly
// staggered within the period, excitatory for z=1 and inhibitory for z=0.
struct ClampStimulus {
  std::vector<int> on_units;   // clamp to 1
  std::vector<int> off_units;  // clamp to 0
  double t_on = 0.0;           // ms
  double t_off = -1.0;         // ms; < 0 means until the end of the run
  double rate = 100.0;         // Hz per train
  int multiplicity = 5;
  int weight = kWeightMax;     // hardware units per train

  void validate(int n_units) const;
};

// Evidence (-1 free, 0/1 clamped) -> full-duration stimulus set; empty
// evidence yields no stimuli.
std::vector<ClampStimulus> clamp_conditional(const SamplingNetwork& sn,
                                             const Evidence& evidence);

struct RunConfig {
  double sample_period = 1.0;  // ms
  double dt = 0.1;             // ms
  std::uint64_t seed = 1;      // trial seed: jitter, noise, initial membranes
  bool record_spikes = false;
};

struct RunResult {
  StateMatrix states;         // samples x units, z from the refractory flag
  std::vector<double> times;  // ms, one per sample row
  std::vector<Spike> spikes;  // raw trains when record_spikes is set
};

// One emulation run: materializes substrate variability for this trial,
// wires noise and clamps, integrates, samples z every sample_period.
// extra_events are merged into the external drive (host-side inputs).
RunResult run(const SamplingNetwork& sn, double duration_ms,
              const std::vector<ClampStimulus>& clamps = {}, const RunConfig& rc = {},
              std::vector<ExternalEvent> extra_events = {});

// Normalized histogram over the chosen units (<= 25 of them).
ProbabilityTable empirical_distribution(const StateMatrix& states,
                                        const std::vector<int>& subset);

// CSV export: header "time_ms,state_hex"; states packed as hex of
// sum_i z_i 2^i, fixed width ceil(n/4) digits.
void save_state_series(const std::string& path, const StateMatrix& states,
                       const std::vector<double>& times);

// Bias-sweep calibration: n_units uncoupled units, integer w_b from wb_min
// to wb_max, one run per point, per-unit logistic fits plus the
// population-average fit used by translate.
struct CalibrationConfig {
  int n_units = 5;
  int wb_min = -15;
  int wb_max = 15;
  double duration = 1e4;  // ms per sweep point
  BuildConfig build{};
  RunConfig run{};
};

struct CalibrationResult {
  std::vector<double> wb;          // sweep points
  Matrix rates;                    // points x units, Hz
  std::vector<ActivationFit> fits; // per unit
  ActivationFit mean;              // population average
};

CalibrationResult measure_activation(const CalibrationConfig& cfg);

}  // namespace ssn
