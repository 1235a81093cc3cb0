#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "ssn/experiment.hpp"

using namespace ssn;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  REQUIRE(is.good());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct TempDir {
  std::filesystem::path dir;
  explicit TempDir(const std::string& tag)
      : dir(std::filesystem::temp_directory_path() / ("ssn_exp_" + tag)) {
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
  }
  ~TempDir() { std::filesystem::remove_all(dir); }
  std::string operator/(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_CASE("config: parse, serialize, canonical fixed point") {
  ExperimentConfig cfg = parse_config_text(
      "# comment line\n"
      "seed = 42   # trailing comment\n"
      "noise=rn\n"
      "\n"
      "classes=1,3,8\n"
      "occlusion_fraction=0.5\n"
      "params_file=a/b.shw\n");
  CHECK(cfg.seed == 42);
  CHECK(cfg.noise == "rn");
  CHECK(cfg.classes == std::vector<int>{1, 3, 8});
  CHECK(cfg.occlusion_fraction == doctest::Approx(0.5));
  CHECK(cfg.params_file == "a/b.shw");
  // untouched keys keep their defaults
  CHECK(cfg.n_units == 5);
  CHECK(cfg.dataset == "mnist");

  // serialize -> parse -> serialize is a fixed point (canonical text)
  const std::string text = serialize_config(cfg);
  CHECK(serialize_config(parse_config_text(text)) == text);
  CHECK(text.find("classes=1,3,8\n") != std::string::npos);

  CHECK_THROWS_AS(apply_config_line(cfg, "no_such_key=1"), ConfigError);
  CHECK_THROWS_AS(apply_config_line(cfg, "just a sentence"), ConfigError);
  ExperimentConfig untouched = cfg;
  apply_config_line(untouched, "   # only a comment");
  CHECK(serialize_config(untouched) == serialize_config(cfg));
}

TEST_CASE("config: presets and validation") {
  ExperimentConfig cfg;
  cfg.preset = "small";
  apply_preset(cfg);
  CHECK(cfg.train_per_class == 200);
  CHECK(cfg.test_per_class == 250);
  CHECK(cfg.data_iterations == 100);
  CHECK(cfg.early_stop_dkl > 0.0);

  cfg.preset = "paper";
  apply_preset(cfg);
  CHECK(cfg.train_per_class == 0);
  CHECK(cfg.sleep_duration == doctest::Approx(1e5));
  CHECK(cfg.test_duration == doctest::Approx(5e5));
  CHECK(cfg.iterations == 500);
  CHECK(cfg.early_stop_dkl == 0.0);

  ExperimentConfig bad;
  bad.preset = "huge";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ExperimentConfig{};
  bad.occlusion_fraction = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ExperimentConfig{};
  bad.noise = "ideal";
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ExperimentConfig{};
  bad.classes.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("fnv1a: reference vectors and file checksum") {
  // Published FNV-1a 64-bit test vectors.
  CHECK(fnv1a_hex("", 0) == "cbf29ce484222325");
  CHECK(fnv1a_hex("a", 1) == "af63dc4c8601ec8c");
  CHECK(fnv1a_hex("foobar", 6) == "85944171f73967e8");

  TempDir tmp("fnv");
  {
    std::ofstream os(tmp / "x.bin", std::ios::binary);
    os << "foobar";
  }
  CHECK(file_checksum(tmp / "x.bin") == "85944171f73967e8");
}

TEST_CASE("occlude: salt subset, patch geometry, errors") {
  // fraction 0 -> nothing masked
  const auto none = occlude("salt", 0.0, 12, 12, 9);
  CHECK(std::count(none.begin(), none.end(), 1) == 0);

  // salt: exactly round(0.25*144) = 36 distinct pixels, deterministic in the seed
  const auto salt = occlude("salt", 0.25, 12, 12, 9);
  REQUIRE(salt.size() == 144);
  CHECK(std::count(salt.begin(), salt.end(), 1) == 36);
  CHECK(occlude("salt", 0.25, 12, 12, 9) == salt);
  CHECK(occlude("salt", 0.25, 12, 12, 10) != salt);

  // patch: same area as a contiguous 6x6 block
  const auto patch = occlude("patch", 0.25, 12, 12, 3);
  CHECK(std::count(patch.begin(), patch.end(), 1) == 36);
  int rmin = 12, rmax = -1, cmin = 12, cmax = -1;
  for (int r = 0; r < 12; ++r)
    for (int c = 0; c < 12; ++c)
      if (patch[static_cast<std::size_t>(r * 12 + c)]) {
        rmin = std::min(rmin, r), rmax = std::max(rmax, r);
        cmin = std::min(cmin, c), cmax = std::max(cmax, c);
      }
  CHECK(rmax - rmin + 1 == 6);
  CHECK(cmax - cmin + 1 == 6);
  // block interior fully masked
  for (int r = rmin; r <= rmax; ++r)
    for (int c = cmin; c <= cmax; ++c) CHECK(patch[static_cast<std::size_t>(r * 12 + c)] == 1);

  // patch placement covers the whole image across seeds
  std::set<std::pair<int, int>> corners;
  for (std::uint64_t s = 0; s < 64; ++s) {
    const auto m = occlude("patch", 0.25, 12, 12, s);
    int first = -1;
    for (std::size_t i = 0; i < m.size(); ++i)
      if (m[i]) {
        first = static_cast<int>(i);
        break;
      }
    corners.insert({first / 12, first % 12});
  }
  CHECK(corners.size() > 10);  // 49 possible positions; 64 draws must spread

  CHECK_THROWS_AS(occlude("patch", 0.9, 4, 4, 1), ConfigError);   // 14 not a square
  CHECK_THROWS_AS(occlude("patch", 1.0, 2, 8, 1), ConfigError);   // side 4 > height 2
  CHECK_THROWS_AS(occlude("stripes", 0.25, 12, 12, 1), ConfigError);
  CHECK_THROWS_AS(occlude("salt", -0.1, 12, 12, 1), ConfigError);
}

TEST_CASE("quantile csv: empty -> header only, hand-computed rows") {
  TempDir tmp("quant");
  write_quantiles_csv(tmp / "empty.csv", {}, {});
  CHECK(slurp(tmp / "empty.csv") == "name,median,q25,q75,min,max,n\n");

  write_quantiles_csv(tmp / "q.csv", {"a", "b"}, {{4.0, 1.0, 3.0, 2.0}, {5.0}});
  const std::string text = slurp(tmp / "q.csv");
  // {1,2,3,4}: median 2.5, q25 1.75, q75 3.25 (linear interpolation)
  CHECK(text.find("a,2.5,1.75,3.25,1,4,4\n") != std::string::npos);
  CHECK(text.find("b,5,5,5,5,5,1\n") != std::string::npos);

  CHECK_THROWS_AS(write_quantiles_csv(tmp / "bad.csv", {"a"}, {{}}), ConfigError);
  CHECK_THROWS_AS(write_quantiles_csv(tmp / "bad.csv", {"a", "b"}, {{1.0}}), ConfigError);
}

TEST_CASE("confusion csv: class names from the class map, counts preserved") {
  TempDir tmp("conf");
  Eigen::MatrixXi m(2, 2);
  m << 9, 1, 3, 7;
  write_confusion_csv(tmp / "c.csv", m, {4, 7});
  CHECK(slurp(tmp / "c.csv") == "true_class,pred_4,pred_7\n4,9,1\n7,3,7\n");
  CHECK_THROWS_AS(write_confusion_csv(tmp / "c.csv", m, {4, 7, 9}), ConfigError);
}

TEST_CASE("target csv roundtrip") {
  TempDir tmp("target");
  const BoltzmannTarget t = beta_target(4, 77);
  save_target(tmp / "t.csv", t);
  const BoltzmannTarget back = load_target(tmp / "t.csv");
  CHECK((back.b - t.b).cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-15));
  CHECK((back.w - t.w).cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-15));

  {
    std::ofstream os(tmp / "bad.csv");
    os << "3\n1.0,2.0,3.0\n0.0,1.0\n";  // truncated weight rows
  }
  CHECK_THROWS_AS(load_target(tmp / "bad.csv"), IoError);
  CHECK_THROWS_AS(load_target(tmp / "missing.csv"), IoError);
}

TEST_CASE("box filter: width 1 identity, centered window, clamped edges") {
  StateMatrix s(5, 2);
  s << 1, 0, 0, 0, 1, 1, 0, 1, 1, 0;
  CHECK((box_filter_states(s, 1) - s.cast<double>()).cwiseAbs().maxCoeff() ==
        doctest::Approx(0.0));
  const Matrix f = box_filter_states(s, 3);
  // row 0 window = rows [0,1]; row 2 window = rows [1,3]
  CHECK(f(0, 0) == doctest::Approx(0.5));
  CHECK(f(2, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(f(2, 1) == doctest::Approx(2.0 / 3.0));
  CHECK(f(4, 0) == doctest::Approx(0.5));
  CHECK_THROWS_AS(box_filter_states(s, 0), ConfigError);
}

TEST_CASE("build config: backend wiring and fit injection") {
  ExperimentConfig cfg;
  cfg.noise = "rn";
  CHECK(make_build_config(cfg, false, 1).noise.kind == NoiseKind::RandomNetwork);
  CHECK(make_build_config(cfg, false, 1).noise.rn.n_neurons == 200);
  CHECK(make_build_config(cfg, true, 1).noise.rn.n_neurons == 400);
  cfg.rn_neurons = 64;
  CHECK(make_build_config(cfg, true, 1).noise.rn.n_neurons == 64);
  cfg.noise = "poisson";
  CHECK(make_build_config(cfg, true, 1).noise.kind == NoiseKind::Poisson);

  cfg.fit_nu0 = 200.0;
  cfg.fit_wb0 = 1.5;
  cfg.fit_s = 2.0;
  const ActivationFit fit = resolve_fit(cfg);
  CHECK(fit.ok);
  CHECK(fit.nu0 == doctest::Approx(200.0));
  CHECK(fit.wb0 == doctest::Approx(1.5));
  CHECK(fit.s == doctest::Approx(2.0));
}

TEST_CASE("run_command: calibrate artifacts and manifest determinism") {
  TempDir tmp("cmd");
  ExperimentConfig cfg;
  cfg.calib_units = 2;
  cfg.calib_duration = 300.0;
  cfg.seed = 5;
  cfg.out_dir = tmp / "a";
  CHECK(run_command("calibrate", cfg) == 0);
  for (const char* name : {"config.txt", "activation.csv", "fits.csv", "metrics.csv",
                           "manifest.json"})
    CHECK(std::filesystem::exists(std::filesystem::path(cfg.out_dir) / name));

  // identical seeds -> identical metric-file checksums (manifest equality)
  cfg.out_dir = tmp / "b";
  CHECK(run_command("calibrate", cfg) == 0);
  const auto ja = nlohmann::json::parse(slurp(tmp / "a/manifest.json"));
  const auto jb = nlohmann::json::parse(slurp(tmp / "b/manifest.json"));
  CHECK(ja["config_hash"] != jb["config_hash"]);  // out_dir differs
  CHECK(ja["kind"] == "calibrate");
  CHECK(ja["files"]["activation.csv"] == jb["files"]["activation.csv"]);
  CHECK(ja["files"]["fits.csv"] == jb["files"]["fits.csv"]);
  CHECK(ja["files"]["metrics.csv"] == jb["files"]["metrics.csv"]);

  // different seed -> different measured activation
  cfg.out_dir = tmp / "c";
  cfg.seed = 6;
  CHECK(run_command("calibrate", cfg) == 0);
  const auto jc = nlohmann::json::parse(slurp(tmp / "c/manifest.json"));
  CHECK(jc["files"]["activation.csv"] != ja["files"]["activation.csv"]);

  CHECK_THROWS_AS(run_command("fly-to-the-moon", cfg), ConfigError);
}
