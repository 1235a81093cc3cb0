#include "ssn/sampling_net.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ssn/rng.hpp"

namespace ssn {

int SamplingNetwork::layer_of(int unit) const {
  check(unit >= 0 && unit < n_units(), "layer_of: unit out of range");
  if (!layers) return -1;
  if (unit < layers->n_visible) return 0;
  if (unit < layers->n_visible + layers->n_hidden) return 1;
  return 2;
}

namespace {

// Rewrites every bias/coupling synapse from the shadow parameters; the
// wake-phase top-down cut is applied here so toggling it is a pure rewrite.
void apply_weights(SamplingNetwork& sn) {
  const double g = sn.gains.sampling;
  for (int i = 0; i < sn.n_units(); ++i) {
    const auto [e, h] = discretize_weight(sn.shadow_b[i]);
    sn.net.synapses[sn.units[i].bias_exc].weight = e * g;
    sn.net.synapses[sn.units[i].bias_inh].weight = h * g;
  }
  for (const auto& c : sn.couplings) {
    const auto [e, h] = discretize_weight(sn.shadow_w(c.i, c.j));
    bool cut_ij = false, cut_ji = false;  // the hidden-side source direction
    if (!sn.top_down_enabled && sn.layers) {
      const int li = sn.layer_of(c.i), lj = sn.layer_of(c.j);
      if (li == 0 && lj == 1) cut_ji = true;  // hidden -> visible
      if (li == 1 && lj == 2) cut_ij = true;  // hidden -> label
    }
    sn.net.synapses[c.ij_exc].weight = cut_ij ? 0.0 : e * g;
    sn.net.synapses[c.ij_inh].weight = cut_ij ? 0.0 : h * g;
    sn.net.synapses[c.ji_exc].weight = cut_ji ? 0.0 : e * g;
    sn.net.synapses[c.ji_inh].weight = cut_ji ? 0.0 : h * g;
  }
}

SamplingNetwork build_topology(int n_units, const std::vector<std::pair<int, int>>& pairs,
                               std::optional<LayerStructure> layers, const BuildConfig& cfg) {
  check(n_units >= 1, "build_network: need at least one unit");
  cfg.gains.validate();
  check(cfg.delay > 0.0, "build_network: delay must be positive");

  SamplingNetwork sn;
  sn.noise = cfg.noise;
  sn.gains = cfg.gains;
  sn.vm = cfg.vm;
  sn.seed = cfg.seed;
  sn.layers = layers;

  for (int i = 0; i < n_units; ++i) sn.net.add_neuron(sampling_neuron_params());
  sn.bias_neuron = sn.net.add_neuron(bias_neuron_params());
  sn.units.resize(n_units);
  for (int i = 0; i < n_units; ++i) {
    sn.units[i].neuron = i;
    sn.units[i].bias_exc =
        sn.net.add_synapse(sn.bias_neuron, i, Channel::Excitatory, 0.0, cfg.delay);
    sn.units[i].bias_inh =
        sn.net.add_synapse(sn.bias_neuron, i, Channel::Inhibitory, 0.0, cfg.delay);
  }
  sn.couplings.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    SamplingNetwork::Coupling c;
    c.i = i;
    c.j = j;
    c.ij_exc = sn.net.add_synapse(i, j, Channel::Excitatory, 0.0, cfg.delay);
    c.ij_inh = sn.net.add_synapse(i, j, Channel::Inhibitory, 0.0, cfg.delay);
    c.ji_exc = sn.net.add_synapse(j, i, Channel::Excitatory, 0.0, cfg.delay);
    c.ji_inh = sn.net.add_synapse(j, i, Channel::Inhibitory, 0.0, cfg.delay);
    sn.couplings.push_back(c);
  }

  if (cfg.noise.kind == NoiseKind::RandomNetwork) {
    sn.rn_ids = build_random_network(sn.net, cfg.noise.rn, cfg.gains, derive_seed(cfg.seed, 10));
    std::vector<int> sampling_ids(n_units);
    std::iota(sampling_ids.begin(), sampling_ids.end(), 0);
    attach_noise_taps(sn.net, sn.rn_ids, cfg.noise.rn, cfg.gains, sampling_ids,
                      derive_seed(cfg.seed, 11));
  }

  sn.shadow_w = Matrix::Zero(n_units, n_units);
  sn.shadow_b = Vector::Zero(n_units);
  apply_weights(sn);
  return sn;
}

}  // namespace

SamplingNetwork build_network(int n_units, const BuildConfig& cfg) {
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n_units; ++i)
    for (int j = i + 1; j < n_units; ++j) pairs.emplace_back(i, j);
  return build_topology(n_units, pairs, std::nullopt, cfg);
}

SamplingNetwork build_network(const LayerStructure& layers, const BuildConfig& cfg) {
  check(layers.n_visible >= 1 && layers.n_hidden >= 1 && layers.n_label >= 0,
        "build_network: bad layer sizes");
  std::vector<std::pair<int, int>> pairs;
  const int nv = layers.n_visible, nh = layers.n_hidden, nl = layers.n_label;
  for (int v = 0; v < nv; ++v)
    for (int h = 0; h < nh; ++h) pairs.emplace_back(v, nv + h);
  for (int h = 0; h < nh; ++h)
    for (int l = 0; l < nl; ++l) pairs.emplace_back(nv + h, nv + nh + l);
  return build_topology(layers.total(), pairs, layers, cfg);
}

SamplingNetwork build_network(const BoltzmannTarget& target, const ActivationFit& fit,
                              const BuildConfig& cfg) {
  target.validate();
  SamplingNetwork sn = build_network(target.size(), cfg);
  const TranslatedParams tp = translate(target.w, target.b, fit);
  set_parameters(sn, tp.weight_hw, tp.bias_hw);
  return sn;
}

void set_parameters(SamplingNetwork& sn, const Matrix& w_hw, const Vector& b_hw) {
  const int n = sn.n_units();
  check(w_hw.rows() == n && w_hw.cols() == n && b_hw.size() == n,
        "set_parameters: shape mismatch");
  check(w_hw.allFinite() && b_hw.allFinite(), "set_parameters: non-finite parameter");
  check((w_hw - w_hw.transpose()).cwiseAbs().maxCoeff() <= 1e-12,
        "set_parameters: W must be symmetric");
  check(w_hw.diagonal().cwiseAbs().maxCoeff() == 0.0, "set_parameters: nonzero diagonal");
  if (sn.layers) {
    auto coupled = [&](int i, int j) {
      const int li = sn.layer_of(i), lj = sn.layer_of(j);
      return (li == 0 && lj == 1) || (li == 1 && lj == 2);
    };
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        check(coupled(i, j) || w_hw(i, j) == 0.0,
              "set_parameters: coupling outside the layer topology requested");
  }
  sn.shadow_w = w_hw;
  sn.shadow_b = b_hw;
  apply_weights(sn);
}

void set_top_down(SamplingNetwork& sn, bool enabled) {
  check(sn.layers.has_value() || enabled, "set_top_down: flat network has no layers");
  sn.top_down_enabled = enabled;
  apply_weights(sn);
}

void ClampStimulus::validate(int n_units) const {
  check(multiplicity >= 1, "clamp: multiplicity must be >= 1");
  check(rate > 0.0, "clamp: rate must be positive");
  check(weight >= 0 && weight <= kWeightMax, "clamp: weight outside 0..15");
  check(t_on >= 0.0, "clamp: negative onset");
  check(t_off < 0.0 || t_off > t_on, "clamp: offset before onset");
  for (const int u : on_units) check(u >= 0 && u < n_units, "clamp: unit out of range");
  for (const int u : off_units) check(u >= 0 && u < n_units, "clamp: unit out of range");
  for (const int u : on_units)
    check(std::find(off_units.begin(), off_units.end(), u) == off_units.end(),
          "clamp: unit in both on and off sets");
}

std::vector<ClampStimulus> clamp_conditional(const SamplingNetwork& sn,
                                             const Evidence& evidence) {
  check(evidence.empty() || static_cast<int>(evidence.size()) == sn.n_units(),
        "clamp_conditional: evidence length mismatch");
  ClampStimulus c;
  for (int i = 0; i < static_cast<int>(evidence.size()); ++i) {
    check(evidence[i] >= -1 && evidence[i] <= 1, "clamp_conditional: entries must be -1/0/1");
    if (evidence[i] == 1) c.on_units.push_back(i);
    if (evidence[i] == 0) c.off_units.push_back(i);
  }
  if (c.on_units.empty() && c.off_units.empty()) return {};
  return {c};
}

namespace {

void append_clamp_events(const ClampStimulus& c, const SamplingNetwork& sn, double duration,
                         double dt, std::vector<ExternalEvent>& out) {
  c.validate(sn.n_units());
  const double t_end = c.t_off < 0.0 ? duration : std::min(c.t_off, duration);
  const double period = 1000.0 / c.rate;
  const double stagger = period / c.multiplicity;
  const auto w = static_cast<float>(c.weight * sn.gains.clamp);
  auto emit = [&](int unit, Channel ch) {
    for (int m = 0; m < c.multiplicity; ++m)
      for (int k = 0;; ++k) {
        const double t = c.t_on + m * stagger + k * period;
        if (t >= t_end) break;
        out.push_back({std::llround(t / dt), unit, ch, w});
      }
  };
  for (const int u : c.on_units) emit(u, Channel::Excitatory);
  for (const int u : c.off_units) emit(u, Channel::Inhibitory);
}

}  // namespace

RunResult run(const SamplingNetwork& sn, double duration_ms,
              const std::vector<ClampStimulus>& clamps, const RunConfig& rc,
              std::vector<ExternalEvent> extra_events) {
  check(duration_ms > 0.0, "run: duration must be positive");
  check(rc.dt > 0.0, "run: dt must be positive");
  const auto steps = std::llround(duration_ms / rc.dt);
  const auto stride = std::llround(rc.sample_period / rc.dt);
  check(stride >= 1 && std::abs(stride * rc.dt - rc.sample_period) < 1e-9,
        "run: sample_period must be a positive multiple of dt");

  const NetworkDef inst = materialize(sn.net, sn.vm, derive_seed(rc.seed, 1));
  Engine eng(inst, EngineConfig{rc.dt, rc.record_spikes});
  randomize_membranes(eng, inst, derive_seed(rc.seed, 2));

  std::vector<ExternalEvent> events;
  if (sn.noise.kind == NoiseKind::Poisson) {
    std::vector<int> targets(sn.n_units());
    std::iota(targets.begin(), targets.end(), 0);
    events = poisson_events(sn.noise.poisson, sn.gains, targets, 0.0, duration_ms, rc.dt,
                            derive_seed(rc.seed, 3));
  }
  for (const ClampStimulus& c : clamps) append_clamp_events(c, sn, duration_ms, rc.dt, events);
  events.insert(events.end(), extra_events.begin(), extra_events.end());
  std::stable_sort(events.begin(), events.end(),
                   [](const ExternalEvent& a, const ExternalEvent& b) { return a.step < b.step; });
  eng.add_external_events(std::move(events));

  RunResult out;
  out.states.resize(steps / stride, sn.n_units());
  out.times.reserve(static_cast<std::size_t>(steps / stride));
  Eigen::Index row = 0;
  eng.run_sampled(steps, stride, [&](const Engine& e) {
    for (int i = 0; i < sn.n_units(); ++i)
      out.states(row, i) = e.is_refractory(sn.units[i].neuron) ? 1 : 0;
    out.times.push_back(e.time_ms());
    ++row;
  });
  if (rc.record_spikes) out.spikes = eng.spikes();
  return out;
}

ProbabilityTable empirical_distribution(const StateMatrix& states,
                                        const std::vector<int>& subset) {
  check(!subset.empty(), "empirical_distribution: empty subset");
  StateMatrix sub(states.rows(), static_cast<Eigen::Index>(subset.size()));
  for (std::size_t k = 0; k < subset.size(); ++k) {
    check(subset[k] >= 0 && subset[k] < states.cols(),
          "empirical_distribution: unit out of range");
    sub.col(static_cast<Eigen::Index>(k)) = states.col(subset[k]);
  }
  return empirical_table(sub);
}

void save_state_series(const std::string& path, const StateMatrix& states,
                       const std::vector<double>& times) {
  check(static_cast<Eigen::Index>(times.size()) == states.rows(),
        "save_state_series: row/time count mismatch");
  std::ofstream out(path);
  if (!out) throw IoError("save_state_series: cannot open " + path);
  out << "time_ms,state_hex\n";
  const int n = static_cast<int>(states.cols());
  const int width = (n + 3) / 4;
  std::string hex(static_cast<std::size_t>(width), '0');
  char tbuf[32];
  for (Eigen::Index r = 0; r < states.rows(); ++r) {
    for (int d = 0; d < width; ++d) {
      int nib = 0;
      for (int b = 0; b < 4; ++b) {
        const int bit = 4 * (width - 1 - d) + b;
        if (bit < n && states(r, bit)) nib |= 1 << b;
      }
      hex[static_cast<std::size_t>(d)] = "0123456789abcdef"[nib];
    }
    std::snprintf(tbuf, sizeof tbuf, "%.3f", times[static_cast<std::size_t>(r)]);
    out << tbuf << ',' << hex << '\n';
  }
  if (!out) throw IoError("save_state_series: write failed for " + path);
}

CalibrationResult measure_activation(const CalibrationConfig& cfg) {
  check(cfg.n_units >= 1, "measure_activation: need units");
  check(cfg.wb_max > cfg.wb_min, "measure_activation: empty sweep");
  check(cfg.wb_min >= -kWeightMax && cfg.wb_max <= kWeightMax,
        "measure_activation: sweep outside hardware range");
  check(cfg.duration > 0.0, "measure_activation: duration must be positive");

  SamplingNetwork sn = build_network(cfg.n_units, cfg.build);
  const int points = cfg.wb_max - cfg.wb_min + 1;
  CalibrationResult res;
  res.rates.resize(points, cfg.n_units);
  res.wb.reserve(static_cast<std::size_t>(points));

  for (int p = 0; p < points; ++p) {
    const double wb = cfg.wb_min + p;
    res.wb.push_back(wb);
    set_parameters(sn, Matrix::Zero(cfg.n_units, cfg.n_units),
                   Vector::Constant(cfg.n_units, wb));
    RunConfig rc = cfg.run;
    rc.seed = derive_seed(cfg.run.seed, static_cast<std::uint64_t>(p));
    rc.record_spikes = true;
    const RunResult rr = run(sn, cfg.duration, {}, rc);
    ArrayInt counts = ArrayInt::Zero(cfg.n_units);
    for (const Spike& s : rr.spikes)
      if (s.neuron < cfg.n_units) ++counts[s.neuron];
    res.rates.row(p) = counts.cast<double>().transpose() * (1000.0 / cfg.duration);
  }

  for (int i = 0; i < cfg.n_units; ++i) {
    std::vector<double> rate(res.rates.col(i).data(), res.rates.col(i).data() + points);
    const ActivationFit fit = fit_logistic(res.wb, rate);
    if (!fit.ok) {
      std::ostringstream msg;
      msg << "measure_activation: logistic fit failed for unit " << i << "; raw (w_b, Hz):";
      for (int p = 0; p < points; ++p) msg << " (" << res.wb[p] << ", " << rate[p] << ")";
      throw NumericsError(msg.str());
    }
    res.fits.push_back(fit);
  }
  res.mean = mean_fit(res.fits);
  return res;
}

}  // namespace ssn
