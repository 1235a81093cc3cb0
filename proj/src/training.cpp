#include "ssn/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "ssn/rng.hpp"
#include "ssn/substrate.hpp"

namespace ssn {

namespace {

void io_check(bool cond, const std::string& msg) {
  if (!cond) throw IoError(msg);
}

// Total <z> / <zz^T> accumulator over possibly several runs.
struct MomentAccumulator {
  Vector sum;
  Matrix sum2;
  long n = 0;

  explicit MomentAccumulator(int units)
      : sum(Vector::Zero(units)), sum2(Matrix::Zero(units, units)) {}

  void add(const StateMatrix& states, Eigen::Index first_row) {
    constexpr Eigen::Index kBlock = 8192;
    for (Eigen::Index r = first_row; r < states.rows(); r += kBlock) {
      const Eigen::Index rows = std::min(kBlock, states.rows() - r);
      const Matrix blk = states.middleRows(r, rows).cast<double>();
      sum += blk.colwise().sum().transpose();
      sum2.selfadjointView<Eigen::Lower>().rankUpdate(blk.transpose());
      n += rows;
    }
  }

  Statistics finish() const {
    check(n > 0, "statistics: no samples");
    Statistics st;
    st.mean = sum / static_cast<double>(n);
    st.second = Matrix(sum2.selfadjointView<Eigen::Lower>()) / static_cast<double>(n);
    st.n_samples = n;
    return st;
  }
};

Eigen::Index burn_in_rows(double burn_in, const RunConfig& rc) {
  check(burn_in >= 0.0, "burn_in must be non-negative");
  return static_cast<Eigen::Index>(std::floor(burn_in / rc.sample_period + 1e-9));
}

double mean_abs_applied(const ShadowParams& sp) {
  const int n = sp.n();
  double acc = sp.vel_b.cwiseAbs().sum();
  long cnt = n;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j, ++cnt) acc += std::abs(sp.vel_w(i, j));
  return acc / static_cast<double>(cnt);
}

double clip_fraction(const ShadowParams& sp) {
  const int n = sp.n();
  long clipped = 0, cnt = 0;
  for (int i = 0; i < n; ++i, ++cnt) clipped += weight_clips(sp.b[i]) ? 1 : 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j, ++cnt) clipped += weight_clips(sp.w(i, j)) ? 1 : 0;
  return static_cast<double>(clipped) / static_cast<double>(cnt);
}

void maybe_checkpoint(const TrainConfig& cfg, int iteration, const ShadowParams& sp,
                      const SamplingNetwork& sn) {
  if (cfg.checkpoint_every <= 0 || (iteration + 1) % cfg.checkpoint_every != 0) return;
  check(!cfg.checkpoint_prefix.empty(), "train: checkpoint_every set without a prefix");
  const std::string stem = cfg.checkpoint_prefix + "_it" + std::to_string(iteration + 1);
  save_shadow(stem + ".shw", sp);
  if (sn.layers) save_rbm(stem + ".rbm", shadow_to_rbm(sp, *sn.layers));
}

// Shared per-iteration bookkeeping: trace, best-iterate, divergence guard,
// early stop, momentum update + discretized re-emission.
struct TrainLoop {
  const TrainConfig& cfg;
  SamplingNetwork& sn;
  TrainResult res;
  ShadowParams sp;
  Matrix mask;  // 1 where a coupling exists; gradients elsewhere are dropped

  TrainLoop(const TrainConfig& c, SamplingNetwork& net) : cfg(c), sn(net), sp(shadow_from_network(net)) {
    check(cfg.iterations >= 0, "train: negative iteration count");
    check(cfg.eta > 0 && cfg.momentum >= 0 && cfg.momentum < 1, "train: bad eta/momentum");
    check(cfg.sleep_duration > 0, "train: sleep_duration must be positive");
    mask = Matrix::Zero(sn.n_units(), sn.n_units());
    for (const auto& cp : sn.couplings) mask(cp.i, cp.j) = mask(cp.j, cp.i) = 1.0;
    res.best = sp;
    res.best_metric = std::numeric_limits<double>::infinity();
  }

  // Returns false when the loop should stop before updating parameters.
  bool record(int it, double metric) {
    res.metric_trace.push_back(metric);
    if (metric < res.best_metric) {
      res.best_metric = metric;
      res.best = sp;
      res.best_iteration = it;
    }
    if (metric > 10.0 * res.metric_trace.front() && it > 0) {
      res.diverged = true;
      return false;
    }
    return !(cfg.early_stop_metric > 0.0 && metric <= cfg.early_stop_metric);
  }

  void step(const Statistics& wake, const Statistics& sleep, int it) {
    update_shadow(sp, wake, sleep, cfg.eta, cfg.momentum);
    sp.vel_w = sp.vel_w.cwiseProduct(mask);
    sp.w = sp.w.cwiseProduct(mask);
    res.grad_trace.push_back(mean_abs_applied(sp));
    res.clip_trace.push_back(clip_fraction(sp));
    set_parameters(sn, sp.w, sp.b);
    maybe_checkpoint(cfg, it, sp, sn);
  }

  TrainResult finish() {
    res.final_params = sp;
    return std::move(res);
  }
};

// Restores the top-down switch even when a run throws.
struct TopDownGuard {
  SamplingNetwork& sn;
  bool saved;
  TopDownGuard(SamplingNetwork& net, bool enabled) : sn(net), saved(net.top_down_enabled) {
    set_top_down(sn, enabled);
  }
  ~TopDownGuard() { set_top_down(sn, saved); }
};

Evidence image_evidence(const SamplingNetwork& sn, const std::vector<std::uint8_t>& image,
                        int label) {
  check(sn.layers.has_value(), "network has no layer structure");
  const LayerStructure& ls = *sn.layers;
  check(static_cast<int>(image.size()) == ls.n_visible, "image size != visible layer");
  Evidence ev(static_cast<std::size_t>(sn.n_units()), -1);
  for (int p = 0; p < ls.n_visible; ++p) {
    check(image[static_cast<std::size_t>(p)] <= 1, "image is not binary");
    ev[static_cast<std::size_t>(p)] = image[static_cast<std::size_t>(p)];
  }
  if (label >= 0) {
    check(label < ls.n_label, "label out of range");
    for (int k = 0; k < ls.n_label; ++k)
      ev[static_cast<std::size_t>(ls.n_visible + ls.n_hidden + k)] = (k == label) ? 1 : 0;
  }
  return ev;
}

}  // namespace

void Statistics::validate() const {
  const Eigen::Index n = mean.size();
  check(n > 0 && second.rows() == n && second.cols() == n, "statistics: shape mismatch");
  check(n_samples > 0, "statistics: no samples");
  check(mean.minCoeff() >= 0.0 && mean.maxCoeff() <= 1.0, "statistics: mean outside [0,1]");
  check((second - second.transpose()).cwiseAbs().maxCoeff() < 1e-12,
        "statistics: second moment not symmetric");
  check((second.diagonal() - mean).cwiseAbs().maxCoeff() < 1e-12,
        "statistics: diagonal != mean");
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      check(second(i, j) >= -1e-12 &&
                second(i, j) <= std::min(mean[i], mean[j]) + 1e-12,
            "statistics: second moment outside probability bounds");
}

Statistics statistics_from_states(const StateMatrix& states) {
  check(states.rows() > 0 && states.cols() > 0, "statistics: empty state series");
  MomentAccumulator acc(static_cast<int>(states.cols()));
  acc.add(states, 0);
  return acc.finish();
}

Statistics wake_statistics_analytic(const BoltzmannTarget& target) {
  const ProbabilityTable p = enumerate(target);
  const int n = static_cast<int>(target.size());
  Statistics st;
  st.mean = Vector::Zero(n);
  st.second = Matrix::Zero(n, n);
  for (std::size_t s = 0; s < static_cast<std::size_t>(p.size()); ++s) {
    const double ps = p[static_cast<Eigen::Index>(s)];
    if (ps == 0.0) continue;
    for (int i = 0; i < n; ++i) {
      if (!((s >> i) & 1u)) continue;
      st.mean[i] += ps;
      for (int j = 0; j < n; ++j)
        if ((s >> j) & 1u) st.second(i, j) += ps;
    }
  }
  st.n_samples = 1;  // exact moments; the count is nominal
  return st;
}

Statistics wake_statistics_clamped(const SamplingNetwork& sn, const StateMatrix& images,
                                   const std::vector<int>& labels, double duration_per_pattern,
                                   const RunConfig& rc, double burn_in) {
  check(duration_per_pattern > 0, "wake_statistics_clamped: zero duration");
  check(!sn.top_down_enabled, "wake_statistics_clamped: top-down synapses must be disabled");
  check(images.rows() > 0, "wake_statistics_clamped: empty minibatch");
  check(static_cast<Eigen::Index>(labels.size()) == images.rows(),
        "wake_statistics_clamped: image/label count mismatch");
  const Eigen::Index skip = burn_in_rows(burn_in, rc);
  MomentAccumulator acc(sn.n_units());
  std::vector<std::uint8_t> img(static_cast<std::size_t>(images.cols()));
  for (Eigen::Index r = 0; r < images.rows(); ++r) {
    for (Eigen::Index p = 0; p < images.cols(); ++p)
      img[static_cast<std::size_t>(p)] = images(r, p);
    const auto clamps = clamp_conditional(sn, image_evidence(sn, img, labels[static_cast<std::size_t>(r)]));
    RunConfig rc_r = rc;
    rc_r.seed = derive_seed(rc.seed, static_cast<std::uint64_t>(r));
    const RunResult rr = run(sn, duration_per_pattern, clamps, rc_r);
    check(rr.states.rows() > skip, "wake_statistics_clamped: burn-in consumed the whole run");
    acc.add(rr.states, skip);
  }
  return acc.finish();
}

Statistics sleep_statistics(const SamplingNetwork& sn, double duration, const RunConfig& rc,
                            const std::vector<ClampStimulus>& clamps, StateMatrix* raw_states,
                            double burn_in) {
  check(clamps.empty(), "sleep_statistics: clamps active during the sleep phase");
  const RunResult rr = run(sn, duration, {}, rc);
  const Eigen::Index skip = burn_in_rows(burn_in, rc);
  check(rr.states.rows() > skip, "sleep_statistics: burn-in consumed the whole run");
  if (raw_states) *raw_states = rr.states;
  MomentAccumulator acc(sn.n_units());
  acc.add(rr.states, skip);
  return acc.finish();
}

void ShadowParams::validate() const {
  const Eigen::Index m = b.size();
  check(m > 0, "shadow: empty");
  check(w.rows() == m && w.cols() == m && vel_w.rows() == m && vel_w.cols() == m &&
            vel_b.size() == m,
        "shadow: shape mismatch");
  check(w.allFinite() && b.allFinite() && vel_w.allFinite() && vel_b.allFinite(),
        "shadow: non-finite entry");
  check((w - w.transpose()).cwiseAbs().maxCoeff() == 0.0, "shadow: W not symmetric");
  check(w.diagonal().cwiseAbs().maxCoeff() == 0.0, "shadow: nonzero diagonal");
}

ShadowParams init_shadow(int n, std::uint64_t seed) {
  check(n > 0, "init_shadow: n < 1");
  Rng rng(seed);
  ShadowParams sp;
  sp.b = Vector::Zero(n);
  sp.w = Matrix::Zero(n, n);
  sp.vel_b = Vector::Zero(n);
  sp.vel_w = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) sp.b[i] = rng.uniform(-15.0, 15.0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) sp.w(i, j) = sp.w(j, i) = rng.uniform(-15.0, 15.0);
  return sp;
}

ShadowParams shadow_from_network(const SamplingNetwork& sn) {
  ShadowParams sp;
  sp.w = sn.shadow_w;
  sp.b = sn.shadow_b;
  sp.vel_w = Matrix::Zero(sp.w.rows(), sp.w.cols());
  sp.vel_b = Vector::Zero(sp.b.size());
  sp.validate();
  return sp;
}

void update_shadow(ShadowParams& sp, const Statistics& wake, const Statistics& sleep, double eta,
                   double momentum) {
  sp.validate();
  wake.validate();
  sleep.validate();
  const Eigen::Index n = sp.b.size();
  check(wake.mean.size() == n && sleep.mean.size() == n, "update: dimension mismatch");
  sp.vel_b = momentum * sp.vel_b + eta * (wake.mean - sleep.mean);
  sp.vel_w = momentum * sp.vel_w + eta * (wake.second - sleep.second);
  sp.vel_w.diagonal().setZero();
  // Symmetrize exactly: accumulate the identical update once per pair.
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) sp.vel_w(j, i) = sp.vel_w(i, j);
  sp.b += sp.vel_b;
  sp.w += sp.vel_w;
}

TrainResult train(SamplingNetwork& sn, const BoltzmannTarget& target, const TrainConfig& cfg) {
  target.validate();
  check(static_cast<int>(target.size()) == sn.n_units(), "train: target size != network size");
  check(!sn.layers.has_value(), "train: target mode expects a flat network");
  const ProbabilityTable p_star = enumerate(target);
  const Statistics wake = wake_statistics_analytic(target);
  std::vector<int> all_units(static_cast<std::size_t>(sn.n_units()));
  std::iota(all_units.begin(), all_units.end(), 0);

  TrainLoop loop(cfg, sn);
  const Eigen::Index skip = burn_in_rows(cfg.burn_in, cfg.run);
  for (int it = 0; it < cfg.iterations; ++it) {
    RunConfig rc = cfg.run;
    rc.seed = derive_seed(cfg.seed, 1000, static_cast<std::uint64_t>(it));
    StateMatrix states;
    const Statistics sleep =
        sleep_statistics(sn, cfg.sleep_duration, rc, {}, &states, cfg.burn_in);
    const StateMatrix kept = states.bottomRows(states.rows() - skip);
    const double metric = dkl(empirical_distribution(kept, all_units), p_star);
    if (!loop.record(it, metric)) break;
    loop.step(wake, sleep, it);
  }
  return loop.finish();
}

TrainResult train(SamplingNetwork& sn, const LabeledData& train_set, const LabeledData& val_set,
                  const TrainConfig& cfg) {
  train_set.validate();
  val_set.validate();
  check(sn.layers.has_value(), "train: data mode expects a hierarchical network");
  const LayerStructure& ls = *sn.layers;
  check(train_set.n_pixels() == ls.n_visible, "train: image size != visible layer");
  check(train_set.n_classes() == ls.n_label, "train: class count != label layer");
  check(val_set.n_pixels() == ls.n_visible && val_set.n_classes() == ls.n_label,
        "train: validation set shape mismatch");
  check(cfg.minibatch_per_class > 0, "train: minibatch_per_class < 1");
  check(cfg.wake_duration > 0 && cfg.val_duration > 0, "train: zero phase duration");

  std::vector<std::vector<Eigen::Index>> by_class(static_cast<std::size_t>(ls.n_label));
  for (Eigen::Index i = 0; i < train_set.images.rows(); ++i)
    by_class[static_cast<std::size_t>(train_set.labels[static_cast<std::size_t>(i)])].push_back(i);

  TrainLoop loop(cfg, sn);
  Rng batch_rng(derive_seed(cfg.seed, 2000));
  for (int it = 0; it < cfg.iterations; ++it) {
    // Minibatch: per class, distinct rows via a partial shuffle (uniform
    // with replacement only when the pool is smaller than the batch).
    StateMatrix batch(static_cast<Eigen::Index>(by_class.size()) * cfg.minibatch_per_class,
                      train_set.images.cols());
    std::vector<int> labels;
    Eigen::Index row = 0;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      std::vector<Eigen::Index> pool = by_class[c];
      for (int k = 0; k < cfg.minibatch_per_class; ++k, ++row) {
        Eigen::Index src;
        if (static_cast<std::size_t>(k) < pool.size()) {
          const std::size_t pick =
              static_cast<std::size_t>(k) + static_cast<std::size_t>(batch_rng.uniform_int(
                                                pool.size() - static_cast<std::size_t>(k)));
          std::swap(pool[static_cast<std::size_t>(k)], pool[pick]);
          src = pool[static_cast<std::size_t>(k)];
        } else {
          src = pool[static_cast<std::size_t>(batch_rng.uniform_int(pool.size()))];
        }
        batch.row(row) = train_set.images.row(src);
        labels.push_back(static_cast<int>(c));
      }
    }

    RunConfig rc_w = cfg.run;
    rc_w.seed = derive_seed(cfg.seed, 3000, static_cast<std::uint64_t>(it));
    Statistics wake;
    {
      TopDownGuard guard(sn, false);
      wake = wake_statistics_clamped(sn, batch, labels, cfg.wake_duration, rc_w, cfg.burn_in);
    }

    RunConfig rc_s = cfg.run;
    rc_s.seed = derive_seed(cfg.seed, 4000, static_cast<std::uint64_t>(it));
    const Statistics sleep =
        sleep_statistics(sn, cfg.sleep_duration, rc_s, {}, nullptr, cfg.burn_in);

    RunConfig rc_v = cfg.run;
    rc_v.seed = derive_seed(cfg.seed, 5000);  // fixed across iterations
    const double metric = classification_error(sn, val_set, cfg.val_duration, rc_v, cfg.burn_in);
    if (!loop.record(it, metric)) break;
    loop.step(wake, sleep, it);
  }
  return loop.finish();
}

Vector label_rates(const SamplingNetwork& sn, const std::vector<std::uint8_t>& image,
                   double duration, const RunConfig& rc, double burn_in) {
  check(sn.layers.has_value(), "label_rates: network has no layer structure");
  const LayerStructure& ls = *sn.layers;
  const auto clamps = clamp_conditional(sn, image_evidence(sn, image, -1));
  const RunResult rr = run(sn, duration, clamps, rc);
  const Eigen::Index skip = burn_in_rows(burn_in, rc);
  check(rr.states.rows() > skip, "label_rates: burn-in consumed the run");
  Vector rates(ls.n_label);
  const Eigen::Index rows = rr.states.rows() - skip;
  for (int k = 0; k < ls.n_label; ++k)
    rates[k] = rr.states.col(ls.n_visible + ls.n_hidden + k)
                   .bottomRows(rows)
                   .cast<double>()
                   .sum() /
               static_cast<double>(rows);
  return rates;
}

int classify_network(const SamplingNetwork& sn, const std::vector<std::uint8_t>& image,
                     double duration, const RunConfig& rc, double burn_in) {
  const Vector rates = label_rates(sn, image, duration, rc, burn_in);
  int best = 0;
  for (int k = 1; k < rates.size(); ++k)
    if (rates[k] > rates[best]) best = k;
  return best;
}

double classification_error(const SamplingNetwork& sn, const LabeledData& data, double duration,
                            const RunConfig& rc, double burn_in, std::vector<int>* predictions) {
  data.validate();
  check(data.images.rows() > 0, "classification_error: empty set");
  if (predictions) predictions->clear();
  long wrong = 0;
  std::vector<std::uint8_t> img(static_cast<std::size_t>(data.images.cols()));
  for (Eigen::Index i = 0; i < data.images.rows(); ++i) {
    for (Eigen::Index p = 0; p < data.images.cols(); ++p)
      img[static_cast<std::size_t>(p)] = data.images(i, p);
    RunConfig rc_i = rc;
    rc_i.seed = derive_seed(rc.seed, 7000, static_cast<std::uint64_t>(i));
    const int predicted = classify_network(sn, img, duration, rc_i, burn_in);
    if (predicted != data.labels[static_cast<std::size_t>(i)]) ++wrong;
    if (predictions) predictions->push_back(predicted);
  }
  return static_cast<double>(wrong) / static_cast<double>(data.images.rows());
}

void save_shadow(const std::string& path, const ShadowParams& sp) {
  sp.validate();
  static_assert(std::endian::native == std::endian::little);
  std::ofstream os(path, std::ios::binary);
  io_check(os.good(), "save_shadow: cannot open " + path);
  os.write("SSNSHW01", 8);
  const std::uint32_t n = static_cast<std::uint32_t>(sp.n());
  os.write(reinterpret_cast<const char*>(&n), 4);
  auto put_matrix = [&os](const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double v = m(i, j);
        os.write(reinterpret_cast<const char*>(&v), 8);
      }
  };
  auto put_vector = [&os](const Vector& v) {
    os.write(reinterpret_cast<const char*>(v.data()), 8 * v.size());
  };
  put_matrix(sp.w);
  put_vector(sp.b);
  put_matrix(sp.vel_w);
  put_vector(sp.vel_b);
  io_check(os.good(), "save_shadow: write failed for " + path);
}

ShadowParams load_shadow(const std::string& path) {
  const std::vector<std::uint8_t> b = read_file_bytes(path);
  io_check(b.size() >= 12, "load_shadow: file too short");
  io_check(std::memcmp(b.data(), "SSNSHW01", 8) == 0, "load_shadow: bad magic");
  std::uint32_t n;
  std::memcpy(&n, b.data() + 8, 4);
  io_check(n > 0, "load_shadow: empty record");
  const std::size_t expect = 12 + 8 * (2 * std::size_t(n) * n + 2 * std::size_t(n));
  io_check(b.size() == expect, "load_shadow: expected " + std::to_string(expect) +
                                   " bytes, got " + std::to_string(b.size()));
  ShadowParams sp;
  sp.w.resize(n, n);
  sp.b.resize(n);
  sp.vel_w.resize(n, n);
  sp.vel_b.resize(n);
  std::size_t off = 12;
  auto get_matrix = [&b, &off](Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j, off += 8)
        std::memcpy(&m(i, j), b.data() + off, 8);
  };
  auto get_vector = [&b, &off](Vector& v) {
    std::memcpy(v.data(), b.data() + off, 8 * static_cast<std::size_t>(v.size()));
    off += 8 * static_cast<std::size_t>(v.size());
  };
  get_matrix(sp.w);
  get_vector(sp.b);
  get_matrix(sp.vel_w);
  get_vector(sp.vel_b);
  sp.validate();
  return sp;
}

Rbm shadow_to_rbm(const ShadowParams& sp, const LayerStructure& layers) {
  sp.validate();
  check(layers.total() == sp.n(), "shadow_to_rbm: layer structure size mismatch");
  Rbm rbm;
  const int nv = layers.n_visible, nh = layers.n_hidden, nl = layers.n_label;
  rbm.w_vh = sp.w.block(0, nv, nv, nh);
  rbm.w_lh = sp.w.block(nv + nh, nv, nl, nh);
  rbm.b_v = sp.b.segment(0, nv);
  rbm.b_h = sp.b.segment(nv, nh);
  rbm.b_l = sp.b.segment(nv + nh, nl);
  rbm.validate();
  return rbm;
}

void save_trace(const std::string& path, const TrainResult& result) {
  std::ofstream os(path);
  io_check(os.good(), "save_trace: cannot open " + path);
  os << "iteration,metric,mean_abs_update,clip_fraction\n";
  char buf[128];
  for (std::size_t i = 0; i < result.metric_trace.size(); ++i) {
    const double g = i < result.grad_trace.size() ? result.grad_trace[i] : 0.0;
    const double c = i < result.clip_trace.size() ? result.clip_trace[i] : 0.0;
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", i, result.metric_trace[i], g, c);
    os << buf;
  }
  io_check(os.good(), "save_trace: write failed for " + path);
}

}  // namespace ssn
