#pragma once

// Classification RBM (visible+label <-> hidden): CD-1 pre-training with
// momentum, layer-wise block Gibbs, rate-argmax classification, and a flat
// binary record format.  Flat unit order everywhere: visibles, hiddens,
// labels.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ssn/boltzmann.hpp"
#include "ssn/common.hpp"

namespace ssn {

struct Rbm {
  Matrix w_vh;  // N_v x N_h
  Matrix w_lh;  // N_l x N_h
  Vector b_v, b_h, b_l;

  int n_visible() const { return static_cast<int>(b_v.size()); }
  int n_hidden() const { return static_cast<int>(b_h.size()); }
  int n_label() const { return static_cast<int>(b_l.size()); }
  int size() const { return n_visible() + n_hidden() + n_label(); }
  void validate() const;
};

// Weights 0.01 * N(0,1), biases 0.
Rbm init_rbm(int n_visible, int n_hidden, int n_label, std::uint64_t seed);

// Embed as a flat Boltzmann machine in [visible | hidden | label] order.
BoltzmannTarget rbm_to_target(const Rbm& rbm);

struct CdConfig {
  int epochs = 50;
  double eta = 0.05;
  double momentum = 0.6;
  int minibatch_per_class = 7;
  std::uint64_t seed = 1;
};

// CD-1 on binarized images with one-hot labels.  Minibatches are stratified
// (minibatch_per_class rows per class, wrapping when a class is short); an
// epoch covers the largest class once.  epochs = 0 returns the
// initialization.
Rbm pretrain_rbm(const StateMatrix& images, const std::vector<int>& labels,
                 int n_hidden, int n_label, const CdConfig& cfg);

// Layer-wise block Gibbs: h | v,l then v,l | h.  Clamps index the flat
// order; returns the flat state after each sweep (sweeps x size).
StateMatrix gibbs_sample(const Rbm& rbm, std::int64_t sweeps, std::uint64_t seed,
                         const Evidence& clamps = {});

// Mean label activity with the image clamped (first fifth of sweeps
// discarded as burn-in), and its argmax (ties -> lowest index).
Vector classify_scores(const Rbm& rbm, const Eigen::Ref<const Vector>& image,
                       std::int64_t sweeps, std::uint64_t seed);
int classify_rbm(const Rbm& rbm, const Eigen::Ref<const Vector>& image,
                 std::int64_t sweeps, std::uint64_t seed);

// One deterministic up-down pass; returns (visible, label) probabilities.
std::pair<Vector, Vector> rbm_reconstruction(const Rbm& rbm,
                                             const Eigen::Ref<const Vector>& image,
                                             const Eigen::Ref<const Vector>& label);

// Record: magic "SSNRBM01", u32 N_v/N_h/N_l, then row-major w_vh, row-major
// w_lh, b_v, b_h, b_l as little-endian float64.
void save_rbm(const std::string& path, const Rbm& rbm);
Rbm load_rbm(const std::string& path);

}  // namespace ssn
