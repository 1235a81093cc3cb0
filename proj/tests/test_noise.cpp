#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "ssn/neuron.hpp"
#include "ssn/noise.hpp"
#include "ssn/rng.hpp"

using namespace ssn;

TEST_CASE("poisson event count matches the rate") {
  PoissonSpec spec;  // 300 Hz per channel
  const auto events = poisson_events(spec, {}, {0}, 0.0, 100000.0, 0.1, 11);
  // two channels, 100 s: expect 60000 +- 5 sigma
  const double expect = 2 * 300.0 * 100.0;
  const double sigma = std::sqrt(expect);
  CHECK(std::abs(static_cast<double>(events.size()) - expect) < 5 * sigma);
  for (const auto& e : events) {
    CHECK(e.step >= 0);
    CHECK(e.step < 1000000);
    CHECK(e.weight == 40.0f);  // 10 LSB on a 4 nS/LSB noise row
    CHECK(e.post == 0);
  }
  CHECK(std::is_sorted(events.begin(), events.end(),
                       [](const ExternalEvent& a, const ExternalEvent& b) {
                         return a.step < b.step;
                       }));
}

TEST_CASE("exponential intervals pass a KS test") {
  Rng rng(123);
  const double rate = 0.3;  // per ms
  std::vector<double> xs(20000);
  for (double& x : xs) x = rng.exponential(rate);
  std::sort(xs.begin(), xs.end());
  double d = 0.0;
  const auto n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = 1.0 - std::exp(-rate * xs[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i + 1) / n));
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
  }
  CHECK(d < 1.63 / std::sqrt(n));  // 1% critical value
}

TEST_CASE("event timestamps only carry quantization error") {
  // the dt-rounded event ISIs may deviate from exponential by at most the
  // grid resolution; check the KS statistic stays near the critical value
  PoissonSpec spec;
  const auto events = poisson_events(spec, {}, {4}, 0.0, 50000.0, 0.1, 99);
  std::vector<double> isis;
  std::int64_t last = -1;
  for (const auto& e : events) {
    if (e.channel != Channel::Excitatory) continue;
    if (last >= 0) isis.push_back(0.1 * static_cast<double>(e.step - last));
    last = e.step;
  }
  REQUIRE(isis.size() > 5000);
  std::sort(isis.begin(), isis.end());
  const double rate = 0.3;
  double d = 0.0;
  const auto n = static_cast<double>(isis.size());
  for (std::size_t i = 0; i < isis.size(); ++i) {
    const double f = 1.0 - std::exp(-rate * isis[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i + 1) / n));
  }
  CHECK(d < 1.63 / std::sqrt(n) + rate * 0.1);  // critical value + grid bias
}

TEST_CASE("poisson streams are deterministic and independent per unit") {
  PoissonSpec spec;
  const auto a = poisson_events(spec, {}, {0, 1}, 0.0, 1000.0, 0.1, 5);
  const auto b = poisson_events(spec, {}, {0, 1}, 0.0, 1000.0, 0.1, 5);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].step == b[i].step);
    CHECK(a[i].post == b[i].post);
  }
  // unit 0's train must not depend on how many units were requested
  const auto solo = poisson_events(spec, {}, {0}, 0.0, 1000.0, 0.1, 5);
  std::vector<std::int64_t> from_pair, from_solo;
  for (const auto& e : a)
    if (e.post == 0 && e.channel == Channel::Excitatory) from_pair.push_back(e.step);
  for (const auto& e : solo)
    if (e.channel == Channel::Excitatory) from_solo.push_back(e.step);
  CHECK(from_pair == from_solo);
  // and the two units' trains must differ
  std::vector<std::int64_t> u1;
  for (const auto& e : a)
    if (e.post == 1 && e.channel == Channel::Excitatory) u1.push_back(e.step);
  CHECK(from_pair != u1);
}

TEST_CASE("random network wiring has the advertised degrees") {
  NetworkDef net;
  RandomNetworkSpec spec;
  const auto rn = build_random_network(net, spec, {}, 21);
  REQUIRE(static_cast<int>(rn.size()) == 200);

  std::vector<std::set<int>> pre_of(net.size());
  for (const auto& s : net.synapses) {
    CHECK(s.channel == Channel::Inhibitory);
    CHECK(s.weight == 10.0 * 0.5);  // 10 LSB on the 0.5 nS/LSB RN rows
    CHECK(s.pre != s.post);               // no self-inhibition
    CHECK(!pre_of[s.post].count(s.pre));  // partners are distinct
    pre_of[s.post].insert(s.pre);
  }
  for (int id : rn) CHECK(pre_of[id].size() == 20);
}

TEST_CASE("noise taps split channels ceil/floor and stay within the RN") {
  NetworkDef net;
  std::vector<int> units;
  for (int i = 0; i < 5; ++i) units.push_back(net.add_neuron(sampling_neuron_params()));
  RandomNetworkSpec spec;
  const auto rn = build_random_network(net, spec, {}, 3);
  const std::size_t rn_synapses = net.synapses.size();
  attach_noise_taps(net, rn, spec, {}, units, 4);

  std::vector<std::set<int>> partners(5);
  std::vector<int> exc(5, 0), inh(5, 0);
  for (std::size_t k = rn_synapses; k < net.synapses.size(); ++k) {
    const auto& s = net.synapses[k];
    const int u = s.post;
    REQUIRE(u < 5);
    CHECK(s.pre >= rn.front());
    CHECK(s.pre <= rn.back());
    CHECK(s.weight == 10.0 * 8.0);  // 10 LSB on the 8 nS/LSB tap rows
    CHECK(!partners[u].count(s.pre));
    partners[u].insert(s.pre);
    (s.channel == Channel::Excitatory ? exc : inh)[u]++;
  }
  double overlap_sum = 0.0;
  int pairs = 0;
  for (int u = 0; u < 5; ++u) {
    CHECK(partners[u].size() == 15);
    CHECK(exc[u] == 8);  // ceil(15/2)
    CHECK(inh[u] == 7);  // floor(15/2)
    for (int v = u + 1; v < 5; ++v) {
      std::vector<int> inter;
      std::set_intersection(partners[u].begin(), partners[u].end(), partners[v].begin(),
                            partners[v].end(), std::back_inserter(inter));
      overlap_sum += static_cast<double>(inter.size());
      ++pairs;
    }
  }
  // expected shared partners ~ 15^2/200 ~ 1.1; a large value means the
  // draws are not independent across units
  CHECK(overlap_sum / pairs < 4.0);
}

TEST_CASE("isolated RN neuron fires at the analytic suprathreshold ISI") {
  NetworkDef net;
  net.add_neuron(rn_neuron_params());
  Engine eng(net, {});
  eng.membrane()[0] = -60.0;
  eng.run(2000);  // 200 ms
  const auto& spikes = eng.spikes();
  REQUIRE(spikes.size() >= 10);
  const double isi =
      0.1 * static_cast<double>(spikes[5].step - spikes[4].step);
  // tau_ref + tau_m * ln((E_l - V_reset)/(E_l - V_thresh)) = 4 + 7 ln 5
  const double analytic = 4.0 + 7.0 * std::log(5.0);
  CHECK(std::abs(isi - analytic) <= 0.1 + 1e-12);
}

TEST_CASE("inhibition slows the network below the isolated rate") {
  // small all-to-all RN at maximal weight
  RandomNetworkSpec spec;
  spec.n_neurons = 40;
  spec.k_rn = 39;
  spec.w_rn = 15;
  VariabilityModel vm;
  const auto rep = rn_rate_check(spec, {}, 3000.0, vm, 23);
  const double isolated = 1000.0 / (4.0 + 7.0 * std::log(5.0));  // ~65 Hz
  CHECK(rep.mean_rate_hz < isolated);
  CHECK(rep.mean_rate_hz > 0.0);
}

TEST_CASE("published RN spec settles into a stationary irregular regime") {
  RandomNetworkSpec spec;
  VariabilityModel vm;
  const auto rep = rn_rate_check(spec, {}, 10000.0, vm, 17);
  CHECK(rep.mean_rate_hz > 2.0);
  CHECK(rep.mean_rate_hz < 120.0);
  CHECK(rep.cv < 0.2);  // population rate is stationary over 10 ms bins
  CHECK(rep.silent == 0);
}

TEST_CASE("membrane randomization is deterministic and in range") {
  NetworkDef net;
  for (int i = 0; i < 20; ++i) net.add_neuron(sampling_neuron_params());
  Engine a(net, {}), b(net, {});
  randomize_membranes(a, net, 9);
  randomize_membranes(b, net, 9);
  for (int i = 0; i < 20; ++i) {
    CHECK(a.membrane()[i] == b.membrane()[i]);
    CHECK(a.membrane()[i] >= -35.0);
    CHECK(a.membrane()[i] < -20.0);
  }
  Engine c(net, {});
  randomize_membranes(c, net, 10);
  bool any_diff = false;
  for (int i = 0; i < 20; ++i) any_diff = any_diff || c.membrane()[i] != a.membrane()[i];
  CHECK(any_diff);
}
