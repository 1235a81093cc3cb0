#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ssn/neuron.hpp"
#include "ssn/rng.hpp"
#include "ssn/substrate.hpp"

using namespace ssn;

TEST_CASE("discretization follows round-half-away-from-zero with clipping") {
  CHECK(discretize_weight(0.0) == std::pair<int, int>{0, 0});
  CHECK(discretize_weight(7.4) == std::pair<int, int>{7, 0});
  CHECK(discretize_weight(-7.6) == std::pair<int, int>{0, 8});
  CHECK(discretize_weight(22.3) == std::pair<int, int>{15, 0});
  CHECK(discretize_weight(-22.3) == std::pair<int, int>{0, 15});
  CHECK(discretize_weight(7.5) == std::pair<int, int>{8, 0});
  CHECK(discretize_weight(-7.5) == std::pair<int, int>{0, 8});
  CHECK(discretize_weight(0.49) == std::pair<int, int>{0, 0});
  CHECK(discretize_weight(-0.5) == std::pair<int, int>{0, 1});

  CHECK(!weight_clips(15.4));   // rounds to 15, still representable
  CHECK(!weight_clips(15.49));  // boundary of the rounding cell
  CHECK(weight_clips(15.5));
  CHECK(weight_clips(-16.0));
  CHECK(!weight_clips(14.9));
}

TEST_CASE("discretization is idempotent and sign-exclusive") {
  Rng rng(3);
  for (int k = 0; k < 2000; ++k) {
    const double w = rng.uniform(-40.0, 40.0);
    const auto [e, i] = discretize_weight(w);
    CHECK(e >= 0);
    CHECK(e <= 15);
    CHECK(i >= 0);
    CHECK(i <= 15);
    CHECK((e == 0 || i == 0));  // at most one channel populated
    const double as_real = static_cast<double>(e) - static_cast<double>(i);
    CHECK(discretize_weight(as_real) == std::pair<int, int>{e, i});
  }
}

TEST_CASE("parameter jitter is deterministic per (seed, id) and always valid") {
  const NeuronParams base = sampling_neuron_params();
  const NeuronParams a = jitter_params(base, 0.05, 42, 7);
  const NeuronParams b = jitter_params(base, 0.05, 42, 7);
  CHECK(a.tau_mem == b.tau_mem);
  CHECK(a.e_leak == b.e_leak);
  const NeuronParams c = jitter_params(base, 0.05, 42, 8);
  CHECK(a.tau_mem != c.tau_mem);

  // sigma = 0 is the identity
  const NeuronParams d = jitter_params(base, 0.0, 42, 7);
  CHECK(d.tau_mem == base.tau_mem);
  CHECK(d.v_thresh == base.v_thresh);

  // extreme sigma still yields valid parameter sets via resampling
  for (int id = 0; id < 500; ++id) {
    const NeuronParams p = jitter_params(base, 0.5, 99, id);
    CHECK_NOTHROW(p.validate());
  }
}

TEST_CASE("fixed-pattern spread across neurons has the configured scale") {
  const NeuronParams base = sampling_neuron_params();
  std::vector<double> tau_syn;
  for (int id = 0; id < 100; ++id) tau_syn.push_back(jitter_params(base, 0.05, 5, id).tau_syn_exc);
  double mean = 0.0;
  for (double t : tau_syn) mean += t;
  mean /= static_cast<double>(tau_syn.size());
  double var = 0.0;
  for (double t : tau_syn) var += (t - mean) * (t - mean);
  var /= static_cast<double>(tau_syn.size() - 1);
  const double rel = std::sqrt(var) / base.tau_syn_exc;
  CHECK(rel > 0.03);
  CHECK(rel < 0.07);
}

TEST_CASE("materialize applies fixed-pattern and trial jitter independently") {
  NetworkDef base;
  for (int i = 0; i < 10; ++i) base.add_neuron(sampling_neuron_params());
  base.add_synapse(0, 1, Channel::Excitatory, 3.0);

  VariabilityModel vm;  // 0.05 / 0.02
  const NetworkDef a = materialize(base, vm, 100);
  const NetworkDef b = materialize(base, vm, 100);
  CHECK(a.neurons[3].tau_mem == b.neurons[3].tau_mem);  // same trial -> same params
  CHECK(a.synapses.size() == 1);                        // wiring untouched

  const NetworkDef c = materialize(base, vm, 101);
  CHECK(a.neurons[3].tau_mem != c.neurons[3].tau_mem);  // trial redraw

  // with sigma_trial = 0 the trial seed is irrelevant
  VariabilityModel fixed_only;
  fixed_only.sigma_trial = 0.0;
  const NetworkDef d = materialize(base, fixed_only, 1);
  const NetworkDef e = materialize(base, fixed_only, 2);
  CHECK(d.neurons[3].tau_mem == e.neurons[3].tau_mem);
  // and it differs from the target by the fixed-pattern component only
  CHECK(d.neurons[3].tau_mem != sampling_neuron_params().tau_mem);
}

TEST_CASE("logistic fit recovers exact synthetic parameters") {
  const double nu0 = 238.0, wb0 = 1.3, s = 3.1;
  std::vector<double> x, y;
  for (int w = -15; w <= 15; ++w) {
    x.push_back(w);
    y.push_back(nu0 / (1.0 + std::exp(-(w - wb0) / s)));
  }
  const ActivationFit fit = fit_logistic(x, y);
  REQUIRE(fit.ok);
  CHECK(fit.nu0 == doctest::Approx(nu0).epsilon(1e-6));
  CHECK(fit.wb0 == doctest::Approx(wb0).epsilon(1e-6));
  CHECK(fit.s == doctest::Approx(s).epsilon(1e-6));
  CHECK(fit.rmse < 1e-6);
}

TEST_CASE("logistic fit tolerates measurement noise") {
  const double nu0 = 240.0, wb0 = -0.7, s = 3.5;
  Rng rng(8);
  std::vector<double> x, y;
  for (int w = -15; w <= 15; ++w) {
    x.push_back(w);
    y.push_back(std::max(0.0, nu0 / (1.0 + std::exp(-(w - wb0) / s)) + rng.normal(0.0, 2.0)));
  }
  const ActivationFit fit = fit_logistic(x, y);
  REQUIRE(fit.ok);
  CHECK(fit.nu0 == doctest::Approx(nu0).epsilon(0.05));
  CHECK(std::abs(fit.wb0 - wb0) < 0.5);
  CHECK(fit.s == doctest::Approx(s).epsilon(0.15));
  CHECK(fit.rmse / fit.nu0 < 0.05);
}

TEST_CASE("degenerate activation data is rejected") {
  CHECK(!fit_logistic({0, 1, 2}, {1, 2, 3}).ok);             // too few points
  CHECK(!fit_logistic({0, 1, 2, 3}, {0, 0, 0, 0}).ok);       // silent
  CHECK(!fit_logistic({0, 1, 2, 3}, {50, 50, 50, 50}).ok);   // constant
}

TEST_CASE("translation maps biases and couplings linearly") {
  ActivationFit fit;
  fit.nu0 = 240.0;
  fit.wb0 = 1.5;
  fit.s = 4.0;
  fit.ok = true;

  Matrix w = Matrix::Zero(3, 3);
  w(0, 1) = w(1, 0) = 0.5;
  w(1, 2) = w(2, 1) = -1.0;
  Vector b(3);
  b << 0.0, 1.0, -2.0;

  const TranslatedParams t = translate(w, b, fit);
  CHECK(t.bias_hw[0] == doctest::Approx(1.5));   // b=0 -> midpoint
  CHECK(t.bias_hw[1] == doctest::Approx(5.5));   // wb0 + s*1
  CHECK(t.bias_hw[2] == doctest::Approx(-6.5));  // wb0 - s*2
  CHECK(t.weight_hw(0, 1) == doctest::Approx(2.0));
  CHECK(t.weight_hw(1, 2) == doctest::Approx(-4.0));
  CHECK(t.weight_hw(1, 0) == t.weight_hw(0, 1));  // symmetric
  CHECK(t.clip_fraction == 0.0);

  // out-of-range magnitudes are reported, not silently dropped
  Vector big(3);
  big << 5.0, 0.0, 0.0;  // 1.5 + 20 -> clips
  const TranslatedParams t2 = translate(w, big, fit);
  CHECK(t2.clip_fraction > 0.0);
}

TEST_CASE("population-average fit skips failed entries") {
  ActivationFit a, b, bad;
  a.nu0 = 200;
  a.wb0 = 1.0;
  a.s = 3.0;
  a.ok = true;
  b.nu0 = 240;
  b.wb0 = 2.0;
  b.s = 5.0;
  b.ok = true;
  bad.ok = false;
  const ActivationFit m = mean_fit({a, bad, b});
  CHECK(m.nu0 == doctest::Approx(220.0));
  CHECK(m.wb0 == doctest::Approx(1.5));
  CHECK(m.s == doctest::Approx(4.0));
  CHECK_THROWS_AS(mean_fit({bad}), ConfigError);
}
