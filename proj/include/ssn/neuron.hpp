#pragma once

#include "ssn/common.hpp"

namespace ssn {

// Conductance-based LIF parameters, mirroring the analog circuit's knobs.
struct NeuronParams {
  double v_reset = -35.0;   // mV
  double v_thresh = -20.0;  // mV
  double e_leak = -20.0;    // mV
  double e_inh = -100.0;    // mV
  double e_exc = 60.0;      // mV
  double tau_ref = 4.0;     // ms
  double tau_mem = 7.0;     // ms (leak time constant, C/g_l)
  double c_mem = 0.2;       // nF
  double tau_syn_exc = 8.0; // ms
  double tau_syn_inh = 8.0; // ms

  void validate() const {
    check(tau_ref > 0 && tau_mem > 0 && tau_syn_exc > 0 && tau_syn_inh > 0,
          "neuron time constants must be positive");
    check(c_mem > 0, "membrane capacitance must be positive");
    check(e_inh < v_thresh && v_thresh < e_exc,
          "reversal potentials must straddle the threshold");
  }
};

// The three roles a circuit neuron plays on the substrate. The parameter
// sets are the target values; fixed-pattern and trial variability get
// applied on top by the substrate model.
inline NeuronParams sampling_neuron_params() {
  NeuronParams p;
  p.v_reset = -35.0;
  p.v_thresh = -20.0;
  p.e_leak = -20.0;
  p.e_inh = -100.0;
  p.e_exc = 60.0;
  p.tau_ref = 4.0;
  p.tau_mem = 7.0;
  p.c_mem = 0.2;
  p.tau_syn_exc = 8.0;
  p.tau_syn_inh = 8.0;
  return p;
}

// Bias neurons fire tonically: the leak reversal sits far above threshold.
inline NeuronParams bias_neuron_params() {
  NeuronParams p;
  p.v_reset = -30.0;
  p.v_thresh = -20.0;
  p.e_leak = 60.0;
  p.e_inh = -100.0;
  p.e_exc = 60.0;
  p.tau_ref = 1.5;
  p.tau_mem = 7.0;
  p.c_mem = 0.2;
  p.tau_syn_exc = 5.0;
  p.tau_syn_inh = 5.0;
  return p;
}

// Random-network neurons: also suprathreshold at rest, mutually inhibiting.
inline NeuronParams rn_neuron_params() {
  NeuronParams p;
  p.v_reset = -60.0;
  p.v_thresh = -20.0;
  p.e_leak = -10.0;
  p.e_inh = -100.0;
  p.e_exc = 60.0;
  p.tau_ref = 4.0;
  p.tau_mem = 7.0;
  p.c_mem = 0.2;
  p.tau_syn_exc = 8.0;
  p.tau_syn_inh = 8.0;
  return p;
}

}  // namespace ssn
