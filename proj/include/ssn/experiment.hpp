#pragma once

// Config-driven experiment orchestration: target-distribution training and
// evaluation, classification, pattern completion under occlusion, guided
// dreaming, plus metric persistence with checksummed manifests.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ssn/boltzmann.hpp"
#include "ssn/dataset.hpp"
#include "ssn/rbm.hpp"
#include "ssn/sampling_net.hpp"
#include "ssn/training.hpp"

namespace ssn {

inline constexpr const char* kCodeVersion = "1.0.0";

struct ExperimentConfig {
  std::string preset = "small";  // small | paper
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  int threads = 1;
  std::string noise = "poisson";  // poisson | rn

  // substrate
  double sigma_fixed = 0.05;
  double sigma_trial = 0.02;
  int rn_neurons = 0;  // 0 = auto: 200 flat, 400 hierarchical

  // activation calibration / injected fit
  int calib_units = 5;
  double calib_duration = 1e4;  // ms per bias point
  double fit_nu0 = 0.0, fit_wb0 = 0.0, fit_s = 0.0;  // nu0,s > 0 -> use as-is

  // target-mode experiments
  int n_units = 5;
  int iterations = 500;
  double eta = 0.0;  // 0 = per-backend default (1.0 Poisson, 0.5 RN)
  double sleep_duration = 1e4;
  double test_duration = 5e5;
  double early_stop_dkl = 0.0;

  // datasets
  std::string data_dir = "data";
  std::string dataset = "mnist";  // mnist | fmnist
  std::vector<int> classes{0, 1, 4, 7};
  int train_per_class = 200;
  int test_per_class = 250;
  int n_hidden = 60;

  // reference RBM
  int cd_epochs = 50;
  double cd_eta = 0.05;
  int rbm_sweeps = 500;  // Gibbs sweeps per classified image

  // data-mode training
  int data_iterations = 100;
  double data_eta = 0.4;
  double wake_duration = 200.0;
  double val_duration = 200.0;
  int val_per_class = 10;

  // inference / generative experiments
  double classify_duration = 500.0;
  double complete_duration = 500.0;
  double gap_duration = 100.0;
  double dream_dwell = 500.0;
  int dream_cycles = 3;
  double box_filter = 0.0;  // ms; 0 = raw binary states
  std::string occlusion_scheme = "salt";  // salt | patch
  double occlusion_fraction = 0.25;
  int complete_images = 24;

  // batch benchmark
  int bench_targets = 20;
  int bench_repetitions = 10;

  // artifact inputs
  std::string params_file;  // shadow sidecar
  std::string rbm_file;
  std::string target_file;

  void validate() const;
};

// key=value text ('#' comments, blank lines ignored); unknown keys error.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);
void apply_config_line(ExperimentConfig& cfg, const std::string& line);
// Canonical serialization: every field, fixed order; feeds the config hash.
std::string serialize_config(const ExperimentConfig& cfg);
// small: 200/250 per class, 100 in-the-loop iterations; paper: full protocol.
void apply_preset(ExperimentConfig& cfg);

// FNV-1a (64-bit) checksums, hex-encoded.
std::string fnv1a_hex(const void* data, std::size_t size);
std::string file_checksum(const std::string& path);

// Manifest: config hash, code version, per-file checksums.  Wall clock is
// recorded in the manifest but never inside checksummed metric files.
struct RunRecord {
  std::string kind;
  std::string config_hash;
  std::uint64_t seed = 0;
  double wall_clock_s = 0.0;
  std::map<std::string, std::string> files;  // name -> checksum

  void add_file(const std::string& out_dir, const std::string& name);
  void write_manifest(const std::string& out_dir) const;
};

// Occlusion mask (1 = masked, receives no clamp).  salt&pepper draws a
// uniform pixel subset of round(fraction*n) pixels; patch places a square
// of the same area uniformly at random.
std::vector<std::uint8_t> occlude(const std::string& scheme, double fraction, int width,
                                  int height, std::uint64_t seed);

// Resolved activation fit: injected values if present, otherwise a fresh
// calibration with the configured backend.
ActivationFit resolve_fit(const ExperimentConfig& cfg);
BuildConfig make_build_config(const ExperimentConfig& cfg, bool hierarchical,
                              std::uint64_t wiring_seed);

// One full target-distribution experiment: Beta-drawn target, U(-15,15)
// init, wake-sleep training, then joint and clamped-conditional test runs
// using the best iterate.
struct TargetOutcome {
  BoltzmannTarget target;
  TrainResult training;
  double test_dkl = 0.0;
  std::vector<std::array<double, 2>> dkl_vs_time;  // (ms, DKL) during test
  double conditional_dkl = 0.0;   // evidence (z1,z2) = (0,1), clamped run
  double sliced_conditional_dkl = 0.0;  // same conditional carved from the joint run
  double evidence_mass = 0.0;     // p*(z1=0, z2=1)
  double clamp_on_efficacy = 0.0, clamp_off_efficacy = 0.0;
};
TargetOutcome run_target_experiment(const ExperimentConfig& cfg, const ActivationFit& fit,
                                    std::uint64_t target_seed, std::uint64_t trial_seed);

// Classification over a labeled set; per-image trial seeds derive from
// `seed`.  confusion(i,j) counts true class i predicted as j.
struct ClassifyOutcome {
  double error = 0.0;
  Eigen::MatrixXi confusion;
  std::vector<int> predictions;
  std::vector<std::uint64_t> image_seeds;
};
ClassifyOutcome classify_set(const SamplingNetwork& sn, const LabeledData& data, double duration,
                             std::uint64_t seed, double burn_in, int threads);

// Pattern completion: per image, a random-input gap then the occluded
// image; MSE over masked pixels per sample time, plus a running label
// readout.  Times in the traces are relative to stimulus onset.
struct CompletionOutcome {
  std::vector<double> times;             // ms since onset
  Matrix mse;                            // images x times
  std::vector<double> label_error;       // running-readout error per time
  std::vector<std::vector<std::uint8_t>> masks;
  std::vector<std::uint64_t> image_seeds;
};
CompletionOutcome pattern_complete(const SamplingNetwork& sn, const LabeledData& images,
                                   const ExperimentConfig& cfg, std::uint64_t seed);

// Guided dreaming: one-hot label clamps cycling through all labels with
// random-input gaps; visible states recorded per dwell.
struct DreamOutcome {
  std::vector<int> schedule;        // label per dwell
  std::vector<long> samples_per_label;
  Matrix mean_image;                // labels x pixels, in [0,1]
  StateMatrix states;               // dwell samples x visible units
  std::vector<int> state_labels;    // clamped label per sample row
};
DreamOutcome guided_dream(const SamplingNetwork& sn, const ExperimentConfig& cfg,
                          std::uint64_t seed);

// 10 ms-scale box filter over each unit's binary state series (graylevel
// frames); width is in samples.
Matrix box_filter_states(const StateMatrix& states, int width);

// Plot-data emitters.  All write CSV with headers even for empty input.
void write_quantiles_csv(const std::string& path, const std::vector<std::string>& names,
                         const std::vector<std::vector<double>>& samples);
void write_confusion_csv(const std::string& path, const Eigen::MatrixXi& confusion,
                         const std::vector<int>& class_map);
void write_dkl_vs_time_csv(const std::string& path,
                           const std::vector<std::array<double, 2>>& trace);
void write_mse_trace_csv(const std::string& path, const CompletionOutcome& oc);

// Boltzmann parameter persistence (CSV: n, then b, then W rows).
void save_target(const std::string& path, const BoltzmannTarget& target);
BoltzmannTarget load_target(const std::string& path);

// CLI entry: dispatches a subcommand, writes artifacts + manifest under
// cfg.out_dir, returns a process exit code.
int run_command(const std::string& kind, ExperimentConfig cfg);

}  // namespace ssn
