#include "ssn/noise.hpp"

#include <algorithm>
#include <cmath>

#include "ssn/neuron.hpp"
#include "ssn/rng.hpp"

namespace ssn {

namespace {

// k distinct values from {0..n-1} \ {exclude}, order of first draw kept.
std::vector<int> draw_distinct(Rng& rng, int n, int k, int exclude) {
  check(k <= n - (exclude >= 0 && exclude < n ? 1 : 0), "not enough partners to draw from");
  std::vector<int> picked;
  picked.reserve(k);
  while (static_cast<int>(picked.size()) < k) {
    const int c = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
    if (c == exclude) continue;
    if (std::find(picked.begin(), picked.end(), c) != picked.end()) continue;
    picked.push_back(c);
  }
  return picked;
}

}  // namespace

std::vector<ExternalEvent> poisson_events(const PoissonSpec& spec, const RowGains& gains,
                                          const std::vector<int>& targets, double t_start,
                                          double t_stop, double dt, std::uint64_t seed) {
  check(spec.rate > 0 && spec.weight >= 0 && spec.weight <= kWeightMax, "bad Poisson spec");
  gains.validate();
  const auto w_ns = static_cast<float>(spec.weight * gains.noise);
  check(t_stop >= t_start, "bad Poisson window");
  std::vector<ExternalEvent> events;
  const auto expected =
      static_cast<std::size_t>(2.2 * spec.rate * 1e-3 * (t_stop - t_start) * targets.size());
  events.reserve(expected);
  for (std::size_t k = 0; k < targets.size(); ++k) {
    for (int ch = 0; ch < 2; ++ch) {
      Rng rng(derive_seed(seed, k, static_cast<std::uint64_t>(ch)));
      double t = t_start;
      while (true) {
        t += rng.exponential(spec.rate * 1e-3);  // rate per ms
        if (t >= t_stop) break;
        events.push_back({static_cast<std::int64_t>(std::llround(t / dt)), targets[k],
                          ch == 0 ? Channel::Excitatory : Channel::Inhibitory, w_ns});
      }
    }
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const ExternalEvent& a, const ExternalEvent& b) { return a.step < b.step; });
  return events;
}

std::vector<int> build_random_network(NetworkDef& net, const RandomNetworkSpec& spec,
                                      const RowGains& gains, std::uint64_t seed) {
  check(spec.n_neurons > spec.k_rn, "k_rn must be below the RN size");
  check(spec.w_rn >= 0 && spec.w_rn <= kWeightMax, "w_rn outside the 4-bit range");
  check(spec.w_noise >= 0 && spec.w_noise <= kWeightMax, "w_noise outside the 4-bit range");
  std::vector<int> ids;
  ids.reserve(spec.n_neurons);
  for (int i = 0; i < spec.n_neurons; ++i) ids.push_back(net.add_neuron(rn_neuron_params()));
  for (int i = 0; i < spec.n_neurons; ++i) {
    Rng rng(derive_seed(seed, 0x524e /* RN */, static_cast<std::uint64_t>(i)));
    for (int pre : draw_distinct(rng, spec.n_neurons, spec.k_rn, i))
      net.add_synapse(ids[pre], ids[i], Channel::Inhibitory, spec.w_rn * gains.rn, spec.delay);
  }
  return ids;
}

void attach_noise_taps(NetworkDef& net, const std::vector<int>& rn_ids,
                       const RandomNetworkSpec& spec, const RowGains& gains,
                       const std::vector<int>& sampling_ids, std::uint64_t seed) {
  check(spec.k_noise <= static_cast<int>(rn_ids.size()), "k_noise exceeds RN size");
  const int n_exc = (spec.k_noise + 1) / 2;
  for (std::size_t u = 0; u < sampling_ids.size(); ++u) {
    Rng rng(derive_seed(seed, 0x544150 /* TAP */, u));
    const auto partners = draw_distinct(rng, static_cast<int>(rn_ids.size()), spec.k_noise, -1);
    for (int k = 0; k < spec.k_noise; ++k) {
      net.add_synapse(rn_ids[partners[k]], sampling_ids[u],
                      k < n_exc ? Channel::Excitatory : Channel::Inhibitory,
                      spec.w_noise * gains.tap, spec.delay);
    }
  }
}

void randomize_membranes(Engine& eng, const NetworkDef& net, std::uint64_t seed) {
  check(eng.size() == net.size(), "engine/network size mismatch");
  Rng rng(derive_seed(seed, 0x564d /* VM */));
  for (int i = 0; i < net.size(); ++i)
    eng.membrane()[i] = rng.uniform(net.neurons[i].v_reset, net.neurons[i].v_thresh);
}

RnRateReport rn_rate_check(const RandomNetworkSpec& spec, const RowGains& gains,
                           double duration_ms, const VariabilityModel& vm, std::uint64_t seed,
                           const EngineConfig& engine_cfg) {
  // the RN fragment plus the sampling units it would feed, bias-free
  NetworkDef base;
  std::vector<int> sampling_ids;
  for (int i = 0; i < 5; ++i) sampling_ids.push_back(base.add_neuron(sampling_neuron_params()));
  const auto rn_ids = build_random_network(base, spec, gains, derive_seed(seed, 1));
  attach_noise_taps(base, rn_ids, spec, gains, sampling_ids, derive_seed(seed, 2));

  const NetworkDef net = materialize(base, vm, derive_seed(seed, 3));
  EngineConfig cfg = engine_cfg;
  cfg.record_spikes = false;  // bin totals come from the count deltas
  Engine eng(net, cfg);
  randomize_membranes(eng, net, derive_seed(seed, 4));

  const double dt = cfg.dt;
  const auto bin_steps = static_cast<std::int64_t>(std::llround(10.0 / dt));
  const auto n_bins =
      static_cast<std::size_t>(std::llround(duration_ms / dt) / bin_steps);
  check(n_bins >= 2, "duration too short for a rate check");

  auto rn_total = [&] {
    std::int64_t t = 0;
    for (int id : rn_ids) t += eng.spike_counts()[id];
    return t;
  };
  std::vector<std::int64_t> bins(n_bins, 0);
  std::int64_t prev = 0;
  for (std::size_t b = 0; b < n_bins; ++b) {
    eng.run(bin_steps);
    const std::int64_t cum = rn_total();
    bins[b] = cum - prev;
    prev = cum;
  }
  RnRateReport rep;
  const std::int64_t total = prev;
  for (int id : rn_ids)
    if (eng.spike_counts()[id] == 0) ++rep.silent;
  double mean = 0.0;
  for (std::size_t b = 0; b < n_bins; ++b) mean += static_cast<double>(bins[b]);
  mean /= static_cast<double>(n_bins);
  double var = 0.0;
  for (std::size_t b = 0; b < n_bins; ++b) {
    const double d = static_cast<double>(bins[b]) - mean;
    var += d * d;
  }
  var /= static_cast<double>(n_bins - 1);
  if (total == 0) throw NumericsError("random network is silent");
  const double measured_ms = static_cast<double>(n_bins * bin_steps) * dt;
  rep.mean_rate_hz = static_cast<double>(total) / spec.n_neurons / (measured_ms * 1e-3);
  rep.cv = std::sqrt(var) / mean;
  return rep;
}

}  // namespace ssn
