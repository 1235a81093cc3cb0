#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ssn/engine.hpp"
#include "ssn/neuron.hpp"
#include "ssn/network.hpp"
#include "ssn/rng.hpp"

using namespace ssn;

namespace {

std::vector<double> isi_list(const std::vector<Spike>& spikes, int neuron, double dt) {
  std::vector<double> out;
  double last = -1.0;
  for (const Spike& s : spikes) {
    if (s.neuron != neuron) continue;
    const double t = static_cast<double>(s.step) * dt;
    if (last >= 0.0) out.push_back(t - last);
    last = t;
  }
  return out;
}

}  // namespace

TEST_CASE("membrane sits at the leak fixed point without input") {
  NetworkDef net;
  net.add_neuron(sampling_neuron_params());
  Engine eng(net, {});
  eng.membrane()[0] = -20.0;  // == e_leak == v_thresh
  eng.run(1000);
  CHECK(eng.membrane()[0] == doctest::Approx(-20.0).epsilon(1e-12));
  // threshold is strict, so u == v_thresh never fires
  CHECK(eng.spikes().empty());
}

TEST_CASE("free membrane decay matches the analytic exponential") {
  NetworkDef net;
  net.add_neuron(sampling_neuron_params());
  Engine eng(net, {});
  eng.membrane()[0] = -35.0;
  eng.run(50);  // 5 ms
  const double expect = -20.0 + (-35.0 + 20.0) * std::exp(-5.0 / 7.0);
  // exponential Euler is exact for constant conductance, so this is tight
  CHECK(eng.membrane()[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("bias neuron fires tonically with the analytic ISI") {
  NetworkDef net;
  net.add_neuron(bias_neuron_params());
  Engine eng(net, {});
  eng.membrane()[0] = -30.0;
  eng.run(500);  // 50 ms
  const auto isis = isi_list(eng.spikes(), 0, 0.1);
  REQUIRE(isis.size() >= 10);
  // charge time from reset: tau_m * ln((e_leak - v_reset)/(e_leak - v_thresh))
  const double analytic = 1.5 + 7.0 * std::log(90.0 / 80.0);
  for (double isi : isis) {
    CHECK(isi == doctest::Approx(isis.front()).epsilon(1e-12));  // perfectly periodic
    CHECK(std::abs(isi - analytic) <= 0.1 + 1e-12);              // within one dt
  }
  // first spike: first step end where u > -20, i.e. charge time rounded up
  CHECK(eng.spikes().front().step == 9);
}

TEST_CASE("ISI quantization error shrinks when dt is halved") {
  auto isi_at = [](double dt) {
    NetworkDef net;
    net.add_neuron(bias_neuron_params());
    EngineConfig cfg;
    cfg.dt = dt;
    Engine eng(net, cfg);
    eng.membrane()[0] = -30.0;
    eng.run(static_cast<std::int64_t>(50.0 / dt));
    auto isis = isi_list(eng.spikes(), 0, dt);
    REQUIRE(!isis.empty());
    return isis.front();
  };
  const double analytic = 1.5 + 7.0 * std::log(90.0 / 80.0);
  const double coarse = isi_at(0.1);
  const double fine = isi_at(0.05);
  CHECK(std::abs(coarse - fine) <= 0.1 + 1e-12);
  CHECK(std::abs(fine - analytic) <= 0.05 + 1e-12);
}

TEST_CASE("spike delivery lands after exactly the synaptic delay") {
  NetworkDef net;
  net.add_neuron(sampling_neuron_params());
  net.add_neuron(sampling_neuron_params());
  net.add_synapse(0, 1, Channel::Excitatory, 5.0, 1.0);
  Engine eng(net, {});
  eng.membrane()[0] = 1000.0;  // force a spike on the first step
  eng.step();
  REQUIRE(eng.spikes().size() == 1);
  CHECK(eng.spikes()[0].step == 1);  // stamped at the end of the step
  CHECK(eng.spikes()[0].neuron == 0);

  // arrival due at t = 0.1 + 1.0 = 1.1, i.e. applied at the start of step 11
  eng.run(10);  // through step 10
  CHECK(eng.conductance_exc()[1] == 0.0);
  const double u_before = eng.membrane()[1];
  eng.step();  // step 11
  CHECK(eng.conductance_exc()[1] ==
        doctest::Approx(5.0 * std::exp(-0.1 / 8.0)).epsilon(1e-12));
  CHECK(eng.membrane()[1] > u_before);  // excitatory kick pulled it up
}

TEST_CASE("two simultaneous arrivals equal one arrival with the summed weight") {
  auto trace = [](std::vector<ExternalEvent> events) {
    NetworkDef net;
    net.add_neuron(sampling_neuron_params());
    Engine eng(net, {});
    eng.add_external_events(std::move(events));
    std::vector<double> us;
    for (int k = 0; k < 100; ++k) {
      eng.step();
      us.push_back(eng.membrane()[0]);
    }
    return us;
  };
  const auto a = trace({{10, 0, Channel::Excitatory, 3.0f}, {10, 0, Channel::Excitatory, 6.0f}});
  const auto b = trace({{10, 0, Channel::Excitatory, 9.0f}});
  CHECK(a == b);  // bit-identical
}

TEST_CASE("refractory clamp holds for exactly tau_ref/dt steps") {
  NetworkDef net;
  net.add_neuron(bias_neuron_params());  // tau_ref = 1.5 ms -> 15 steps
  Engine eng(net, {});
  eng.membrane()[0] = -30.0;
  // run to the first spike
  while (eng.spikes().empty()) eng.step();
  int clamped = 0;
  while (true) {
    eng.step();
    if (eng.membrane()[0] == -30.0) {
      ++clamped;
    } else {
      break;
    }
  }
  CHECK(clamped == 15);
  CHECK(eng.membrane()[0] > -30.0);  // charging resumed right after release
  // the state variable z (= refractory flag) must have fallen at release
  CHECK(!eng.is_refractory(0));
}

TEST_CASE("refractory_states reconstructs z from the spike list") {
  // frozen example: spike at t = 10.0, tau_ref = 4 -> z = 1 on [10, 14)
  std::vector<Spike> spikes = {{100, 7}};
  std::vector<int> ids = {7, 3};
  std::vector<double> tau = {4.0, 4.0};
  CHECK(refractory_states(spikes, ids, tau, 9.9, 0.1)(0) == 0);
  CHECK(refractory_states(spikes, ids, tau, 10.0, 0.1)(0) == 1);
  CHECK(refractory_states(spikes, ids, tau, 13.9, 0.1)(0) == 1);
  CHECK(refractory_states(spikes, ids, tau, 14.0, 0.1)(0) == 0);
  // neuron 3 never spiked
  CHECK(refractory_states(spikes, ids, tau, 12.0, 0.1)(1) == 0);
}

TEST_CASE("live refractory flag matches the spike-list reconstruction") {
  NetworkDef net;
  net.add_neuron(bias_neuron_params());
  Engine eng(net, {});
  eng.membrane()[0] = -30.0;
  std::vector<int> ids = {0};
  std::vector<double> tau = {1.5};
  for (int k = 0; k < 300; ++k) {
    eng.step();
    const auto z = refractory_states(eng.spikes(), ids, tau, eng.time_ms(), 0.1);
    CHECK(static_cast<int>(z(0)) == (eng.is_refractory(0) ? 1 : 0));
  }
}

TEST_CASE("membrane stays between the reversal potentials under bombardment") {
  NetworkDef net;
  for (int i = 0; i < 4; ++i) net.add_neuron(sampling_neuron_params());
  Engine eng(net, {});
  Rng rng(42);
  std::vector<ExternalEvent> events;
  for (int s = 0; s < 2000; ++s) {
    for (int i = 0; i < 4; ++i) {
      if (rng.uniform() < 0.1)
        events.push_back({s, i, rng.uniform() < 0.5 ? Channel::Excitatory : Channel::Inhibitory,
                          static_cast<float>(1 + rng.uniform_int(15))});
    }
  }
  eng.add_external_events(std::move(events));
  for (int s = 0; s < 2000; ++s) {
    eng.step();
    for (int i = 0; i < 4; ++i) {
      CHECK(eng.membrane()[i] >= -100.0);
      CHECK(eng.membrane()[i] <= 60.0);
    }
  }
  CHECK(!eng.spikes().empty());
}

TEST_CASE("identical seeds give bit-identical runs") {
  auto run_once = [] {
    NetworkDef net;
    for (int i = 0; i < 8; ++i) net.add_neuron(sampling_neuron_params());
    for (int i = 0; i < 8; ++i)
      net.add_synapse(i, (i + 1) % 8, i % 2 ? Channel::Inhibitory : Channel::Excitatory, 6.0);
    Engine eng(net, {});
    Rng rng(7);
    std::vector<ExternalEvent> events;
    for (int s = 0; s < 5000; ++s)
      for (int i = 0; i < 8; ++i)
        if (rng.uniform() < 0.08)
          events.push_back({s, i, Channel::Excitatory, static_cast<float>(1 + rng.uniform_int(10))});
    eng.add_external_events(std::move(events));
    eng.run(5000);
    return std::make_pair(eng.spikes(), std::vector<double>(eng.membrane().data(),
                                                            eng.membrane().data() + 8));
  };
  const auto a = run_once();
  const auto b = run_once();
  REQUIRE(a.first.size() == b.first.size());
  for (std::size_t i = 0; i < a.first.size(); ++i) {
    CHECK(a.first[i].step == b.first[i].step);
    CHECK(a.first[i].neuron == b.first[i].neuron);
  }
  CHECK(a.second == b.second);
}

TEST_CASE("event batches merge by step regardless of add order") {
  NetworkDef net;
  net.add_neuron(sampling_neuron_params());
  Engine eng(net, {});
  eng.add_external_events({{50, 0, Channel::Excitatory, 2.0f}});
  eng.add_external_events({{10, 0, Channel::Excitatory, 2.0f}});
  eng.run(11);
  CHECK(eng.conductance_exc()[0] > 0.0);  // the step-10 event was not skipped
}

TEST_CASE("parameter validation rejects broken configurations") {
  NeuronParams p = sampling_neuron_params();
  p.tau_mem = 0.0;
  NetworkDef net;
  CHECK_THROWS_AS(net.add_neuron(p), ConfigError);

  NeuronParams q = sampling_neuron_params();
  q.e_inh = 0.0;  // above threshold
  CHECK_THROWS_AS(net.add_neuron(q), ConfigError);

  net.add_neuron(sampling_neuron_params());
  CHECK_THROWS_AS(net.add_synapse(0, 0, Channel::Excitatory, -1.0), ConfigError);
  CHECK_THROWS_AS(net.add_synapse(0, 1, Channel::Excitatory, 1.0), ConfigError);
  CHECK_THROWS_AS(net.add_synapse(0, 0, Channel::Excitatory, 1.0, 0.0), ConfigError);

  NeuronParams r = sampling_neuron_params();
  r.tau_ref = 0.01;  // shorter than dt
  NetworkDef net2;
  net2.add_neuron(r);
  CHECK_THROWS_AS(Engine(net2, {}), ConfigError);
}

TEST_CASE("run_sampled visits the expected sampling times") {
  NetworkDef net;
  net.add_neuron(sampling_neuron_params());
  Engine eng(net, {});
  std::vector<double> times;
  eng.run_sampled(100, 10, [&](const Engine& e) { times.push_back(e.time_ms()); });
  REQUIRE(times.size() == 10);
  CHECK(times.front() == doctest::Approx(1.0));
  CHECK(times.back() == doctest::Approx(10.0));
}
