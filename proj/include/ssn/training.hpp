#pragma once

// Hardware-in-the-loop wake-sleep training.  Gradients use moments of the
// sampled state; parameters live as signed shadow doubles that are
// discretized into the 4-bit synapse table after every update.

#include <cstdint>
#include <string>
#include <vector>

#include "ssn/boltzmann.hpp"
#include "ssn/dataset.hpp"
#include "ssn/rbm.hpp"
#include "ssn/sampling_net.hpp"

namespace ssn {

struct Statistics {
  Vector mean;     // <z_i>
  Matrix second;   // <z_i z_j>, symmetric, diagonal equals mean
  long n_samples = 0;

  void validate() const;
};

// Moment estimates from a sampled state series (rows = samples).
Statistics statistics_from_states(const StateMatrix& states);

// Exact target moments by enumeration.
Statistics wake_statistics_analytic(const BoltzmannTarget& target);

// Data-mode wake phase: visibles and the one-hot label are clamped per
// pattern, hiddens sampled; moments averaged over the whole minibatch.
// Requires a hierarchical network with top-down synapses already disabled.
Statistics wake_statistics_clamped(const SamplingNetwork& sn, const StateMatrix& images,
                                   const std::vector<int>& labels, double duration_per_pattern,
                                   const RunConfig& rc, double burn_in = 0.0);

// Free-running moments; passing clamps is a precondition violation.  When
// raw_states is non-null the full sampled series is copied out for reuse;
// the moments themselves skip the first burn_in milliseconds.
Statistics sleep_statistics(const SamplingNetwork& sn, double duration, const RunConfig& rc,
                            const std::vector<ClampStimulus>& clamps = {},
                            StateMatrix* raw_states = nullptr, double burn_in = 0.0);

struct ShadowParams {
  Matrix w;      // symmetric, zero diagonal, hardware-weight units
  Vector b;
  Matrix vel_w;  // momentum accumulators
  Vector vel_b;

  int n() const { return static_cast<int>(b.size()); }
  void validate() const;
};

// U(-15,15) initial shadow parameters: biases drawn first, then couplings
// in i<j order.
ShadowParams init_shadow(int n, std::uint64_t seed);

// Current network parameters with zeroed momentum.
ShadowParams shadow_from_network(const SamplingNetwork& sn);

// One momentum step: vel = m*vel + eta*(wake - sleep), applied once per
// unordered pair; diagonal stays zero.
void update_shadow(ShadowParams& sp, const Statistics& wake, const Statistics& sleep, double eta,
                   double momentum);

struct TrainConfig {
  int iterations = 500;
  double eta = 1.0;            // 0.5 for RN-noise targets, 0.4 for data
  double momentum = 0.6;
  double sleep_duration = 1e4;  // ms per iteration
  double wake_duration = 200.0; // ms per clamped pattern (data mode)
  int minibatch_per_class = 7;
  double val_duration = 200.0;  // ms per validation image (data mode)
  double burn_in = 20.0;        // ms discarded at the start of each run
  double early_stop_metric = 0.0;  // stop once metric <= this (0 = off)
  int checkpoint_every = 0;        // iterations; 0 = off
  std::string checkpoint_prefix;   // path prefix for sidecar/record files
  std::uint64_t seed = 1;
  RunConfig run;  // sample period / dt template; per-run seeds are derived
};

struct TrainResult {
  ShadowParams best;    // iterate minimizing the metric (pre-update params)
  ShadowParams final_params;
  int best_iteration = -1;     // -1 when no iterations ran
  double best_metric = 0.0;
  bool diverged = false;
  std::vector<double> metric_trace;  // one per iteration, pre-update
  std::vector<double> grad_trace;    // mean |applied update|, one per update
  std::vector<double> clip_trace;    // fraction of shadow entries beyond +/-15
};

// Target mode: analytic wake moments, sleep-run DKL against the enumerated
// target as the per-iteration metric (the sleep run doubles as validation).
TrainResult train(SamplingNetwork& sn, const BoltzmannTarget& target, const TrainConfig& cfg);

// Data mode: clamped wake moments, classification error on val_set as the
// metric.  The network must carry the matching layer structure.
TrainResult train(SamplingNetwork& sn, const LabeledData& train_set, const LabeledData& val_set,
                  const TrainConfig& cfg);

// Mean label-unit activity with the image clamped on the visibles.
Vector label_rates(const SamplingNetwork& sn, const std::vector<std::uint8_t>& image,
                   double duration, const RunConfig& rc, double burn_in = 0.0);

// Rate argmax; ties resolve to the lowest label index.
int classify_network(const SamplingNetwork& sn, const std::vector<std::uint8_t>& image,
                     double duration, const RunConfig& rc, double burn_in = 0.0);

// Error fraction over a labeled set; per-image seeds derive from rc.seed.
double classification_error(const SamplingNetwork& sn, const LabeledData& data, double duration,
                            const RunConfig& rc, double burn_in = 0.0,
                            std::vector<int>* predictions = nullptr);

// Shadow sidecar: magic "SSNSHW01", u32 n, then W, b, vel_W, vel_b as
// little-endian doubles (W row-major).
void save_shadow(const std::string& path, const ShadowParams& sp);
ShadowParams load_shadow(const std::string& path);

// Shadow blocks reinterpreted as an RBM container (checkpoint record).
Rbm shadow_to_rbm(const ShadowParams& sp, const LayerStructure& layers);

// Training trace CSV: header "iteration,metric,mean_abs_update,clip_fraction".
void save_trace(const std::string& path, const TrainResult& result);

}  // namespace ssn
