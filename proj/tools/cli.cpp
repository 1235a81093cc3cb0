// Command-line front end: one subcommand per experiment, shared
// configuration pipeline (defaults -> preset -> config file -> --set
// overrides -> explicit flags), artifacts + manifest under --out.

#include <cstdio>
#include <exception>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ssn/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Sampling-based inference with LIF networks under hardware constraints"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, preset, out_dir;
  std::uint64_t seed = 0;
  int threads = 0;
  std::vector<std::string> overrides;
  auto* opt_config = app.add_option("--config", config_path, "key=value config file");
  auto* opt_preset = app.add_option("--preset", preset, "experiment scale")
                         ->check(CLI::IsMember({"small", "paper"}));
  auto* opt_seed = app.add_option("--seed", seed, "master seed");
  auto* opt_out = app.add_option("--out", out_dir, "output directory");
  auto* opt_threads = app.add_option("--threads", threads, "worker threads");
  app.add_option("--set", overrides, "single key=value override (repeatable)")
      ->type_size(1);

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"calibrate", "Measure activation functions and logistic fits"},
      {"sample-target", "Sample a translated random target and compare to the exact joint"},
      {"train-target", "Wake-sleep training toward a random target, then test runs"},
      {"infer", "Clamped-conditional sampling with stored parameters"},
      {"pretrain", "Build the reference RBM (CD-1) and score it by Gibbs sampling"},
      {"train-data", "Hardware-in-the-loop training on image data"},
      {"classify", "Classify the test set with stored parameters"},
      {"complete", "Pattern completion from occluded images"},
      {"dream", "Label-guided generation with random-input gaps"},
      {"bench-targets", "Training benchmark across many targets and repetitions"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  CLI11_PARSE(app, argc, argv);

  try {
    ssn::ExperimentConfig cfg;
    if (*opt_config) cfg = ssn::parse_config_file(config_path);  // may pick the preset
    if (*opt_preset) cfg.preset = preset;
    ssn::apply_preset(cfg);
    // A second file pass lets explicit keys override preset-derived values.
    if (*opt_config) cfg = [&] {
      ssn::ExperimentConfig c = cfg;
      std::ifstream is(config_path);
      std::string line;
      while (std::getline(is, line)) ssn::apply_config_line(c, line);
      return c;
    }();
    for (const std::string& kv : overrides) ssn::apply_config_line(cfg, kv);
    if (*opt_seed) cfg.seed = seed;
    if (*opt_out) cfg.out_dir = out_dir;
    if (*opt_threads) cfg.threads = threads;
    return ssn::run_command(app.get_subcommands().front()->get_name(), std::move(cfg));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
