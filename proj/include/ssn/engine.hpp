#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "ssn/common.hpp"
#include "ssn/network.hpp"

namespace ssn {

struct EngineConfig {
  double dt = 0.1;  // ms; the hardware-equivalent update grid
  bool record_spikes = true;
};

// Clock-driven conductance-based LIF integrator.
//
// Update order within one step [t, t+dt):
//   1. apply synaptic arrivals and external events scheduled at t
//   2. exponential-Euler membrane update with conductances frozen over the step
//      (refractory neurons stay clamped at v_reset instead)
//   3. exponential decay of the synaptic conductances
//   4. threshold test (u > v_thresh, strict); a crossing emits a spike
//      timestamped t+dt and starts the refractory period
//
// All bookkeeping is in integer steps, so reruns with the same seeds are
// bit-identical regardless of platform timer behaviour.
class Engine {
 public:
  // Synapse weights and event weights are conductances in nS; the
  // substrate layer scales integer hardware weights before they get here.
  Engine(const NetworkDef& net, const EngineConfig& cfg) : cfg_(cfg) {
    check(cfg.dt > 0, "dt must be positive");
    const int n = net.size();
    check(n > 0, "network has no neurons");
    n_ = n;

    gl_ns_ = Array(n);
    gl_el_ = Array(n);
    neg_dt_inv_c_ = Array(n);
    e_exc_ = Array(n);
    e_inh_ = Array(n);
    v_reset_ = Array(n);
    v_thresh_ = Array(n);
    dec_e_ = Array(n);
    dec_i_ = Array(n);
    ref_steps_ = ArrayInt(n);
    for (int i = 0; i < n; ++i) {
      const NeuronParams& p = net.neurons[i];
      p.validate();
      gl_ns_[i] = 1000.0 * p.c_mem / p.tau_mem;  // nF/ms == uS, hence the 1000
      gl_el_[i] = gl_ns_[i] * p.e_leak;
      neg_dt_inv_c_[i] = -cfg.dt / (1000.0 * p.c_mem);
      e_exc_[i] = p.e_exc;
      e_inh_[i] = p.e_inh;
      v_reset_[i] = p.v_reset;
      v_thresh_[i] = p.v_thresh;
      dec_e_[i] = std::exp(-cfg.dt / p.tau_syn_exc);
      dec_i_[i] = std::exp(-cfg.dt / p.tau_syn_inh);
      ref_steps_[i] = static_cast<int>(std::llround(p.tau_ref / cfg.dt));
      check(ref_steps_[i] >= 1, "tau_ref must be at least one dt");
    }

    // Adjacency in CSR form, synapse order preserved within each source.
    std::vector<int> count(n + 1, 0);
    std::int64_t max_delay = 1;
    for (const SynapseSpec& s : net.synapses) ++count[s.pre + 1];
    offsets_.assign(n + 1, 0);
    for (int i = 0; i < n; ++i) offsets_[i + 1] = offsets_[i] + count[i + 1];
    arrivals_.resize(net.synapses.size());
    std::vector<int> cursor(offsets_.begin(), offsets_.end() - 1);
    for (const SynapseSpec& s : net.synapses) {
      const std::int64_t d = std::max<std::int64_t>(1, std::llround(s.delay / cfg.dt));
      max_delay = std::max(max_delay, d);
      arrivals_[cursor[s.pre]++] = {s.post, static_cast<float>(s.weight),
                                    static_cast<std::int32_t>(d), s.channel};
    }
    ring_.resize(static_cast<std::size_t>(max_delay) + 2);

    u_ = Array(n);
    u_ = v_reset_;  // start from reset; callers can overwrite
    ge_ = Array::Zero(n);
    gi_ = Array::Zero(n);
    gtot_ = Array(n);
    uinf_ = Array(n);
    dec_m_ = Array(n);
    refrac_ = ArrayInt::Zero(n);
    free_mask_.resize(n);
    spike_counts_ = ArrayInt::Zero(n);
  }

  // Events must already be sorted by step within the batch; batches are
  // merged stably so equal-step application order is reproducible.
  void add_external_events(std::vector<ExternalEvent> events) {
    for (std::size_t i = 1; i < events.size(); ++i)
      check(events[i - 1].step <= events[i].step, "external events not sorted");
    if (!events.empty())
      check(events.front().step >= step_, "external event scheduled in the past");
    if (external_.empty()) {
      external_ = std::move(events);
    } else {
      std::vector<ExternalEvent> merged;
      merged.reserve(external_.size() + events.size());
      std::merge(external_.begin() + static_cast<std::ptrdiff_t>(ext_pos_), external_.end(),
                 events.begin(), events.end(), std::back_inserter(merged),
                 [](const ExternalEvent& a, const ExternalEvent& b) { return a.step < b.step; });
      external_ = std::move(merged);
      ext_pos_ = 0;
    }
  }

  void step() {
    // 1. deliveries scheduled for this step
    auto& slot = ring_[static_cast<std::size_t>(step_ % static_cast<std::int64_t>(ring_.size()))];
    for (const PendingArrival& a : slot) {
      (a.channel == Channel::Excitatory ? ge_ : gi_)[a.post] += a.weight;
    }
    slot.clear();
    while (ext_pos_ < external_.size() && external_[ext_pos_].step == step_) {
      const ExternalEvent& e = external_[ext_pos_++];
      (e.channel == Channel::Excitatory ? ge_ : gi_)[e.post] += e.weight;
    }

    // 2. membrane update, conductances frozen across the step
    gtot_ = gl_ns_ + ge_ + gi_;
    uinf_ = (gl_el_ + ge_ * e_exc_ + gi_ * e_inh_) / gtot_;
    dec_m_ = (gtot_ * neg_dt_inv_c_).exp();
    free_mask_ = refrac_ == 0;
    u_ = free_mask_.select(uinf_ + (u_ - uinf_) * dec_m_, v_reset_);
    refrac_ = free_mask_.select(refrac_, refrac_ - 1);

    // 3. synaptic decay
    ge_ *= dec_e_;
    gi_ *= dec_i_;

    // 4. threshold; spikes are stamped at the end of the step
    const std::int64_t t_spike = step_ + 1;
    for (int i = 0; i < n_; ++i) {
      if (!free_mask_[i] || u_[i] <= v_thresh_[i]) continue;
      u_[i] = v_reset_[i];
      refrac_[i] = ref_steps_[i];
      ++spike_counts_[i];
      if (cfg_.record_spikes) spikes_.push_back({t_spike, i});
      for (int a = offsets_[i]; a < offsets_[i + 1]; ++a) {
        const PendingArrival& arr = arrivals_[a];
        const std::int64_t due = t_spike + arr.delay_steps;
        ring_[static_cast<std::size_t>(due % static_cast<std::int64_t>(ring_.size()))]
            .push_back(arr);
      }
    }
    ++step_;
  }

  void run(std::int64_t n_steps) {
    for (std::int64_t k = 0; k < n_steps; ++k) step();
  }

  // Runs n_steps, invoking on_sample(*this) after every `stride` steps
  // (at t = stride*dt, 2*stride*dt, ...).
  template <typename F>
  void run_sampled(std::int64_t n_steps, std::int64_t stride, F&& on_sample) {
    check(stride >= 1, "sample stride must be >= 1");
    for (std::int64_t k = 0; k < n_steps; ++k) {
      step();
      if (step_ % stride == 0) on_sample(*this);
    }
  }

  // z_i = 1 iff neuron i is refractory, the spike-based state variable.
  template <typename Derived>
  void refractory_state(Eigen::ArrayBase<Derived>& out) const {
    out = (refrac_ > 0).template cast<typename Derived::Scalar>();
  }

  bool is_refractory(int i) const { return refrac_[i] > 0; }

  std::int64_t current_step() const { return step_; }
  double time_ms() const { return static_cast<double>(step_) * cfg_.dt; }
  double dt() const { return cfg_.dt; }

  const Array& membrane() const { return u_; }
  Array& membrane() { return u_; }
  const Array& conductance_exc() const { return ge_; }
  const Array& conductance_inh() const { return gi_; }
  const std::vector<Spike>& spikes() const { return spikes_; }
  void clear_spikes() { spikes_.clear(); }
  const ArrayInt& spike_counts() const { return spike_counts_; }
  int size() const { return n_; }

 private:
  struct PendingArrival {
    std::int32_t post;
    float weight;
    std::int32_t delay_steps;
    Channel channel;
  };

  EngineConfig cfg_;
  int n_ = 0;

  // per-neuron constants
  Array gl_ns_, gl_el_, neg_dt_inv_c_, e_exc_, e_inh_, v_reset_, v_thresh_, dec_e_, dec_i_;
  ArrayInt ref_steps_;

  // adjacency
  std::vector<int> offsets_;
  std::vector<PendingArrival> arrivals_;

  // state
  std::int64_t step_ = 0;
  Array u_, ge_, gi_;
  Array gtot_, uinf_, dec_m_;  // scratch
  ArrayInt refrac_;
  Eigen::Array<bool, Eigen::Dynamic, 1> free_mask_;
  std::vector<std::vector<PendingArrival>> ring_;
  std::vector<ExternalEvent> external_;
  std::size_t ext_pos_ = 0;
  std::vector<Spike> spikes_;
  ArrayInt spike_counts_;
};

// Reconstructs the binary state vector at time t from a spike list:
// z_i(t) = 1 iff neuron i spiked in (t - tau_ref_i, t].
inline Eigen::Array<std::uint8_t, Eigen::Dynamic, 1> refractory_states(
    const std::vector<Spike>& spikes, const std::vector<int>& neuron_ids,
    const std::vector<double>& tau_ref, double t, double dt) {
  check(neuron_ids.size() == tau_ref.size(), "neuron_ids/tau_ref size mismatch");
  Eigen::Array<std::uint8_t, Eigen::Dynamic, 1> z(neuron_ids.size());
  z.setZero();
  for (std::size_t k = 0; k < neuron_ids.size(); ++k) {
    const double lo = t - tau_ref[k];
    for (const Spike& s : spikes) {
      if (s.neuron != neuron_ids[k]) continue;
      const double ts = static_cast<double>(s.step) * dt;
      if (ts <= t && ts > lo) {
        z[static_cast<Eigen::Index>(k)] = 1;
        break;
      }
    }
  }
  return z;
}

}  // namespace ssn
