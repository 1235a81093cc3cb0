#pragma once

#include <cstdint>
#include <vector>

#include "ssn/common.hpp"
#include "ssn/engine.hpp"
#include "ssn/network.hpp"
#include "ssn/substrate.hpp"

namespace ssn {

// Off-substrate Poisson background: one excitatory and one inhibitory
// train per target unit, independent across units and channels.
struct PoissonSpec {
  double rate = 300.0;  // Hz, per train
  int weight = 10;      // hardware units [0,15]
};

// On-substrate decorrelation network: sparse random inhibition among the
// noise neurons, a fixed number of taps onto each sampling unit.
struct RandomNetworkSpec {
  int n_neurons = 200;
  int k_rn = 20;       // inhibitory partners per noise neuron
  int k_noise = 15;    // noise neurons tapped by each sampling unit
  int w_rn = 10;       // hardware units [0,15], RN-internal inhibition
  int w_noise = 10;    // hardware units [0,15], RN -> sampling unit taps
  double delay = 1.0;  // ms
};

enum class NoiseKind { Poisson, RandomNetwork };

struct NoiseBackend {
  NoiseKind kind = NoiseKind::Poisson;
  PoissonSpec poisson;
  RandomNetworkSpec rn;
};

// Poisson event trains on [t_start, t_stop) for the given posts. The stream
// for a (unit, channel) pair depends only on (seed, unit index, channel), so
// adding units does not reshuffle existing trains.
std::vector<ExternalEvent> poisson_events(const PoissonSpec& spec, const RowGains& gains,
                                          const std::vector<int>& targets, double t_start,
                                          double t_stop, double dt, std::uint64_t seed);

// Adds the RN neurons and their recurrent inhibition to `net`; returns the
// new neuron ids. Partner draws are distinct and exclude self.
std::vector<int> build_random_network(NetworkDef& net, const RandomNetworkSpec& spec,
                                      const RowGains& gains, std::uint64_t seed);

// Wires k_noise distinct taps from the RN onto each sampling unit,
// ceil(k/2) onto the excitatory channel and floor(k/2) onto the inhibitory.
void attach_noise_taps(NetworkDef& net, const std::vector<int>& rn_ids,
                       const RandomNetworkSpec& spec, const RowGains& gains,
                       const std::vector<int>& sampling_ids, std::uint64_t seed);

// Sets every membrane to an independent uniform draw in [v_reset, v_thresh)
// so symmetric populations do not start in lockstep.
void randomize_membranes(Engine& eng, const NetworkDef& net, std::uint64_t seed);

struct RnRateReport {
  double mean_rate_hz = 0.0;  // population mean over the RN neurons
  double cv = 0.0;            // CV of the 10 ms binned population rate
  int silent = 0;             // RN neurons that never spiked
};

// Standalone sanity run: the RN plus a handful of tapped sampling units,
// substrate variability applied. Throws NumericsError if the RN is silent.
RnRateReport rn_rate_check(const RandomNetworkSpec& spec, const RowGains& gains,
                           double duration_ms, const VariabilityModel& vm, std::uint64_t seed,
                           const EngineConfig& engine_cfg = {});

}  // namespace ssn
