#include "ssn/rbm.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

#include "ssn/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "RBM record IO assumes a little-endian host");

namespace ssn {

namespace {

Matrix sigmoid_mat(Matrix x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

Vector sigmoid_vec(Vector x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

void sample_bernoulli(Matrix& probs, Rng& rng) {
  for (Eigen::Index j = 0; j < probs.cols(); ++j)
    for (Eigen::Index i = 0; i < probs.rows(); ++i)
      probs(i, j) = rng.uniform() < probs(i, j) ? 1.0 : 0.0;
}

}  // namespace

void Rbm::validate() const {
  check(n_visible() >= 1 && n_hidden() >= 1 && n_label() >= 1, "rbm: empty layer");
  check(w_vh.rows() == n_visible() && w_vh.cols() == n_hidden(), "rbm: w_vh shape");
  check(w_lh.rows() == n_label() && w_lh.cols() == n_hidden(), "rbm: w_lh shape");
  check(w_vh.allFinite() && w_lh.allFinite() && b_v.allFinite() && b_h.allFinite() &&
            b_l.allFinite(),
        "rbm: non-finite parameter");
}

Rbm init_rbm(int n_visible, int n_hidden, int n_label, std::uint64_t seed) {
  check(n_visible >= 1 && n_hidden >= 1 && n_label >= 1, "init_rbm: empty layer");
  Rng rng(seed);
  Rbm r;
  r.w_vh = Matrix(n_visible, n_hidden);
  r.w_lh = Matrix(n_label, n_hidden);
  for (Eigen::Index i = 0; i < r.w_vh.rows(); ++i)
    for (Eigen::Index j = 0; j < r.w_vh.cols(); ++j) r.w_vh(i, j) = 0.01 * rng.normal();
  for (Eigen::Index i = 0; i < r.w_lh.rows(); ++i)
    for (Eigen::Index j = 0; j < r.w_lh.cols(); ++j) r.w_lh(i, j) = 0.01 * rng.normal();
  r.b_v = Vector::Zero(n_visible);
  r.b_h = Vector::Zero(n_hidden);
  r.b_l = Vector::Zero(n_label);
  return r;
}

BoltzmannTarget rbm_to_target(const Rbm& rbm) {
  rbm.validate();
  const int nv = rbm.n_visible(), nh = rbm.n_hidden(), nl = rbm.n_label();
  BoltzmannTarget t;
  t.w = Matrix::Zero(rbm.size(), rbm.size());
  t.w.block(0, nv, nv, nh) = rbm.w_vh;
  t.w.block(nv, 0, nh, nv) = rbm.w_vh.transpose();
  t.w.block(nv + nh, nv, nl, nh) = rbm.w_lh;
  t.w.block(nv, nv + nh, nh, nl) = rbm.w_lh.transpose();
  t.b = Vector(rbm.size());
  t.b << rbm.b_v, rbm.b_h, rbm.b_l;
  return t;
}

Rbm pretrain_rbm(const StateMatrix& images, const std::vector<int>& labels,
                 int n_hidden, int n_label, const CdConfig& cfg) {
  const auto n_samples = images.rows();
  const int nv = static_cast<int>(images.cols());
  check(n_samples >= 1 && nv >= 1, "pretrain_rbm: empty dataset");
  check(static_cast<Eigen::Index>(labels.size()) == n_samples, "pretrain_rbm: label count");
  check(images.maxCoeff() <= 1, "pretrain_rbm: data must be binarized to 0/1");
  check(cfg.epochs >= 0 && cfg.eta > 0.0 && cfg.momentum >= 0.0 && cfg.momentum < 1.0 &&
            cfg.minibatch_per_class >= 1,
        "pretrain_rbm: bad hyperparameters");

  std::vector<std::vector<int>> by_class(n_label);
  for (Eigen::Index i = 0; i < n_samples; ++i) {
    check(labels[i] >= 0 && labels[i] < n_label, "pretrain_rbm: label out of range");
    by_class[labels[i]].push_back(static_cast<int>(i));
  }
  std::size_t max_class = 0;
  for (const auto& c : by_class) {
    check(!c.empty(), "pretrain_rbm: class with no examples");
    max_class = std::max(max_class, c.size());
  }

  Rbm r = init_rbm(nv, n_hidden, n_label, derive_seed(cfg.seed, 0));
  Rng rng(derive_seed(cfg.seed, 1));

  const int batch = cfg.minibatch_per_class * n_label;
  const auto steps_per_epoch = static_cast<std::size_t>(
      (max_class + cfg.minibatch_per_class - 1) / cfg.minibatch_per_class);
  Matrix vel_vh = Matrix::Zero(nv, n_hidden), vel_lh = Matrix::Zero(n_label, n_hidden);
  Vector vel_bv = Vector::Zero(nv), vel_bh = Vector::Zero(n_hidden),
         vel_bl = Vector::Zero(n_label);
  Matrix v0(batch, nv), l0(batch, n_label);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (auto& c : by_class)
      for (std::size_t i = c.size(); i > 1; --i)
        std::swap(c[i - 1], c[rng.uniform_int(i)]);

    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      l0.setZero();
      int row = 0;
      for (int c = 0; c < n_label; ++c)
        for (int k = 0; k < cfg.minibatch_per_class; ++k, ++row) {
          const auto& pool = by_class[c];
          const int idx = pool[(step * cfg.minibatch_per_class + k) % pool.size()];
          v0.row(row) = images.row(idx).cast<double>();
          l0(row, c) = 1.0;
        }

      Matrix ph0 = sigmoid_mat((v0 * r.w_vh + l0 * r.w_lh).rowwise() + r.b_h.transpose());
      Matrix h0 = ph0;
      sample_bernoulli(h0, rng);
      Matrix pv1 = sigmoid_mat((h0 * r.w_vh.transpose()).rowwise() + r.b_v.transpose());
      Matrix pl1 = sigmoid_mat((h0 * r.w_lh.transpose()).rowwise() + r.b_l.transpose());
      Matrix ph1 = sigmoid_mat((pv1 * r.w_vh + pl1 * r.w_lh).rowwise() + r.b_h.transpose());

      const double inv_b = 1.0 / batch;
      vel_vh = cfg.momentum * vel_vh + cfg.eta * inv_b * (v0.transpose() * ph0 - pv1.transpose() * ph1);
      vel_lh = cfg.momentum * vel_lh + cfg.eta * inv_b * (l0.transpose() * ph0 - pl1.transpose() * ph1);
      vel_bv = cfg.momentum * vel_bv + cfg.eta * inv_b * (v0 - pv1).colwise().sum().transpose();
      vel_bh = cfg.momentum * vel_bh + cfg.eta * inv_b * (ph0 - ph1).colwise().sum().transpose();
      vel_bl = cfg.momentum * vel_bl + cfg.eta * inv_b * (l0 - pl1).colwise().sum().transpose();
      r.w_vh += vel_vh;
      r.w_lh += vel_lh;
      r.b_v += vel_bv;
      r.b_h += vel_bh;
      r.b_l += vel_bl;
    }
  }
  return r;
}

StateMatrix gibbs_sample(const Rbm& rbm, std::int64_t sweeps, std::uint64_t seed,
                         const Evidence& clamps) {
  rbm.validate();
  check(sweeps >= 1, "gibbs_sample: sweeps < 1");
  const int nv = rbm.n_visible(), nh = rbm.n_hidden(), nl = rbm.n_label();
  const int n = rbm.size();
  check(clamps.empty() || static_cast<int>(clamps.size()) == n,
        "gibbs_sample: clamp length mismatch");
  auto clamp_of = [&](int i) { return clamps.empty() ? -1 : clamps[i]; };

  Rng rng(seed);
  Vector v(nv), h(nh), l(nl);
  for (int i = 0; i < nv; ++i)
    v[i] = clamp_of(i) >= 0 ? clamp_of(i) : (rng.uniform() < 0.5);
  for (int i = 0; i < nh; ++i)
    h[i] = clamp_of(nv + i) >= 0 ? clamp_of(nv + i) : (rng.uniform() < 0.5);
  for (int i = 0; i < nl; ++i)
    l[i] = clamp_of(nv + nh + i) >= 0 ? clamp_of(nv + nh + i) : (rng.uniform() < 0.5);

  StateMatrix chain(sweeps, n);
  for (std::int64_t t = 0; t < sweeps; ++t) {
    Vector ph = sigmoid_vec(rbm.w_vh.transpose() * v + rbm.w_lh.transpose() * l + rbm.b_h);
    for (int i = 0; i < nh; ++i)
      if (clamp_of(nv + i) < 0) h[i] = rng.uniform() < ph[i] ? 1.0 : 0.0;
    Vector pv = sigmoid_vec(rbm.w_vh * h + rbm.b_v);
    for (int i = 0; i < nv; ++i)
      if (clamp_of(i) < 0) v[i] = rng.uniform() < pv[i] ? 1.0 : 0.0;
    Vector pl = sigmoid_vec(rbm.w_lh * h + rbm.b_l);
    for (int i = 0; i < nl; ++i)
      if (clamp_of(nv + nh + i) < 0) l[i] = rng.uniform() < pl[i] ? 1.0 : 0.0;

    for (int i = 0; i < nv; ++i) chain(t, i) = static_cast<std::uint8_t>(v[i]);
    for (int i = 0; i < nh; ++i) chain(t, nv + i) = static_cast<std::uint8_t>(h[i]);
    for (int i = 0; i < nl; ++i) chain(t, nv + nh + i) = static_cast<std::uint8_t>(l[i]);
  }
  return chain;
}

Vector classify_scores(const Rbm& rbm, const Eigen::Ref<const Vector>& image,
                       std::int64_t sweeps, std::uint64_t seed) {
  check(image.size() == rbm.n_visible(), "classify: image size mismatch");
  check(sweeps >= 2, "classify: sweeps < 2");
  Evidence clamps(rbm.size(), -1);
  for (int i = 0; i < rbm.n_visible(); ++i) {
    const double x = image[i];
    check(x == 0.0 || x == 1.0, "classify: image must be binary");
    clamps[i] = static_cast<int>(x);
  }
  const StateMatrix chain = gibbs_sample(rbm, sweeps, seed, clamps);
  const std::int64_t burn = sweeps / 5;
  Vector scores = Vector::Zero(rbm.n_label());
  for (std::int64_t t = burn; t < sweeps; ++t)
    for (int k = 0; k < rbm.n_label(); ++k)
      scores[k] += chain(t, rbm.n_visible() + rbm.n_hidden() + k);
  scores /= static_cast<double>(sweeps - burn);
  return scores;
}

int classify_rbm(const Rbm& rbm, const Eigen::Ref<const Vector>& image,
                 std::int64_t sweeps, std::uint64_t seed) {
  const Vector scores = classify_scores(rbm, image, sweeps, seed);
  int best = 0;
  for (int k = 1; k < rbm.n_label(); ++k)
    if (scores[k] > scores[best]) best = k;
  return best;
}

std::pair<Vector, Vector> rbm_reconstruction(const Rbm& rbm,
                                             const Eigen::Ref<const Vector>& image,
                                             const Eigen::Ref<const Vector>& label) {
  rbm.validate();
  check(image.size() == rbm.n_visible() && label.size() == rbm.n_label(),
        "reconstruction: size mismatch");
  const Vector ph =
      sigmoid_vec(rbm.w_vh.transpose() * image + rbm.w_lh.transpose() * label + rbm.b_h);
  return {sigmoid_vec(rbm.w_vh * ph + rbm.b_v), sigmoid_vec(rbm.w_lh * ph + rbm.b_l)};
}

namespace {

constexpr char kRbmMagic[8] = {'S', 'S', 'N', 'R', 'B', 'M', '0', '1'};

void write_doubles(std::ofstream& out, const double* p, std::size_t n) {
  out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_doubles(std::ifstream& in, double* p, std::size_t n) {
  in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}

}  // namespace

void save_rbm(const std::string& path, const Rbm& rbm) {
  rbm.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_rbm: cannot open " + path);
  out.write(kRbmMagic, sizeof kRbmMagic);
  const std::uint32_t dims[3] = {static_cast<std::uint32_t>(rbm.n_visible()),
                                 static_cast<std::uint32_t>(rbm.n_hidden()),
                                 static_cast<std::uint32_t>(rbm.n_label())};
  out.write(reinterpret_cast<const char*>(dims), sizeof dims);
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor wvh = rbm.w_vh, wlh = rbm.w_lh;
  write_doubles(out, wvh.data(), static_cast<std::size_t>(wvh.size()));
  write_doubles(out, wlh.data(), static_cast<std::size_t>(wlh.size()));
  write_doubles(out, rbm.b_v.data(), static_cast<std::size_t>(rbm.b_v.size()));
  write_doubles(out, rbm.b_h.data(), static_cast<std::size_t>(rbm.b_h.size()));
  write_doubles(out, rbm.b_l.data(), static_cast<std::size_t>(rbm.b_l.size()));
  if (!out) throw IoError("save_rbm: write failed for " + path);
}

Rbm load_rbm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_rbm: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kRbmMagic, sizeof magic) != 0)
    throw IoError("load_rbm: bad magic in " + path);
  std::uint32_t dims[3];
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  if (!in || dims[0] < 1 || dims[1] < 1 || dims[2] < 1 || dims[0] > 1000000 ||
      dims[1] > 1000000 || dims[2] > 1000000)
    throw IoError("load_rbm: bad dimensions in " + path);
  Rbm r;
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor wvh(dims[0], dims[1]), wlh(dims[2], dims[1]);
  r.b_v = Vector(dims[0]);
  r.b_h = Vector(dims[1]);
  r.b_l = Vector(dims[2]);
  read_doubles(in, wvh.data(), static_cast<std::size_t>(wvh.size()));
  read_doubles(in, wlh.data(), static_cast<std::size_t>(wlh.size()));
  read_doubles(in, r.b_v.data(), static_cast<std::size_t>(r.b_v.size()));
  read_doubles(in, r.b_h.data(), static_cast<std::size_t>(r.b_h.size()));
  read_doubles(in, r.b_l.data(), static_cast<std::size_t>(r.b_l.size()));
  if (!in) throw IoError("load_rbm: truncated record in " + path);
  char extra;
  if (in.read(&extra, 1)) throw IoError("load_rbm: trailing bytes in " + path);
  r.w_vh = wvh;
  r.w_lh = wlh;
  r.validate();
  return r;
}

}  // namespace ssn
