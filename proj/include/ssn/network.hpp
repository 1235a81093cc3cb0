#pragma once

#include <cstdint>
#include <vector>

#include "ssn/common.hpp"
#include "ssn/neuron.hpp"

namespace ssn {

enum class Channel : std::uint8_t { Excitatory = 0, Inhibitory = 1 };

// One hardware synapse. The stored weight is the delivered conductance kick
// in nS (integer 0..15 weight times the projection's row gain, applied at
// build time); the sign is carried by the channel. Multapses are repeated
// entries with the same (pre, post, channel).
struct SynapseSpec {
  std::int32_t pre = 0;
  std::int32_t post = 0;
  Channel channel = Channel::Excitatory;
  double weight = 0.0;  // nS, >= 0
  double delay = 1.0;   // ms, > 0
};

constexpr int kWeightMax = 15;

struct NetworkDef {
  std::vector<NeuronParams> neurons;
  std::vector<SynapseSpec> synapses;

  int add_neuron(const NeuronParams& p) {
    p.validate();
    neurons.push_back(p);
    return static_cast<int>(neurons.size()) - 1;
  }

  // Returns the synapse index so callers can rewrite the weight later
  // (the in-the-loop trainer reprograms weights between runs).
  int add_synapse(int pre, int post, Channel ch, double weight, double delay = 1.0) {
    const int n = static_cast<int>(neurons.size());
    check(pre >= 0 && pre < n, "synapse pre index out of range");
    check(post >= 0 && post < n, "synapse post index out of range");
    check(weight >= 0.0, "synapse weight must be non-negative (sign = channel)");
    check(delay > 0.0, "synapse delay must be positive");
    synapses.push_back({pre, post, ch, weight, delay});
    return static_cast<int>(synapses.size()) - 1;
  }

  int size() const { return static_cast<int>(neurons.size()); }
};

// A spike event emitted by the engine. Times are exact multiples of dt.
struct Spike {
  std::int64_t step;  // time = step * dt
  std::int32_t neuron;
};

// An externally scheduled conductance kick (noise input, clamping drive).
// Applied at the start of the given step, i.e. at time step*dt.
struct ExternalEvent {
  std::int64_t step;
  std::int32_t post;
  Channel channel;
  float weight;
};

}  // namespace ssn
