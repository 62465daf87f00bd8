#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "bridgelab/experiments.hpp"

using namespace bridgelab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("bridgelab_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string write_config(const fs::path& dir, const json& j) {
  const fs::path p = dir / "config.json";
  std::ofstream os(p);
  os << j.dump(2);
  return p.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// iteration -> kl for one procedure, parsed from the gauss1d table.
std::map<int, double> kl_column(const fs::path& csv, const std::string& proc,
                                const std::string& sigma_field) {
  std::ifstream is(csv);
  std::string line;
  std::getline(is, line);  // header
  std::map<int, double> out;
  while (std::getline(is, line)) {
    std::stringstream ss(line);
    std::string procedure, sigma, rho, iter, kl;
    std::getline(ss, procedure, ',');
    std::getline(ss, sigma, ',');
    std::getline(ss, rho, ',');
    std::getline(ss, iter, ',');
    std::getline(ss, kl, ',');
    if (procedure != proc || sigma != sigma_field) continue;
    if (procedure == "idbm" && rho != "0") continue;
    out[std::stoi(iter)] = std::stod(kl);
  }
  return out;
}

}  // namespace

TEST_CASE("config validation") {
  json good = {{"schema", 1},
               {"kind", "gauss1d"},
               {"seed", 7},
               {"params", {{"iterations", 5}}}};
  CHECK_NOTHROW(validate_experiment_config(good));

  SUBCASE("unknown top-level key") {
    json bad = good;
    bad["extra"] = 1;
    CHECK_THROWS_AS(validate_experiment_config(bad), ConfigError);
  }
  SUBCASE("unknown param key") {
    json bad = good;
    bad["params"]["bogus"] = true;
    CHECK_THROWS_AS(validate_experiment_config(bad), ConfigError);
  }
  SUBCASE("missing schema") {
    json bad = {{"kind", "gauss1d"}};
    CHECK_THROWS_AS(validate_experiment_config(bad), ConfigError);
  }
  SUBCASE("wrong schema version") {
    json bad = good;
    bad["schema"] = 2;
    CHECK_THROWS_AS(validate_experiment_config(bad), ConfigError);
  }
  SUBCASE("unknown kind") {
    json bad = good;
    bad["kind"] = "mystery";
    CHECK_THROWS_AS(validate_experiment_config(bad), ConfigError);
  }
  SUBCASE("nested sampler spec is validated") {
    json bad = {{"schema", 1},
                {"kind", "idbm_run"},
                {"params",
                 {{"gamma", {{"kind", "gaussian"}, {"oops", 1}}},
                  {"upsilon", {{"kind", "gaussian"}}}}}};
    CHECK_THROWS_AS(validate_experiment_config(bad), ConfigError);
  }
}

TEST_CASE("runner exit codes") {
  TempDir tmp("exit_codes");
  SUBCASE("missing config file") {
    CHECK(run_experiment((tmp.path / "nope.json").string(), std::nullopt,
                         tmp.path.string(), false) == kExitIo);
  }
  SUBCASE("malformed json") {
    const fs::path p = tmp.path / "bad.json";
    std::ofstream(p) << "{ not json";
    CHECK(run_experiment(p.string(), std::nullopt, tmp.path.string(), false) ==
          kExitConfig);
  }
  SUBCASE("config error") {
    const std::string p = write_config(
        tmp.path, {{"schema", 1}, {"kind", "gauss1d"}, {"params", {{"x", 1}}}});
    CHECK(run_experiment(p, std::nullopt, tmp.path.string(), false) ==
          kExitConfig);
  }
  SUBCASE("kind mismatch against the subcommand") {
    const std::string p =
        write_config(tmp.path, {{"schema", 1}, {"kind", "gauss1d"}});
    CHECK(run_experiment(p, std::nullopt, tmp.path.string(), false,
                         "gaussnd") == kExitConfig);
  }
  SUBCASE("dry run validates without writing") {
    const std::string p =
        write_config(tmp.path, {{"schema", 1}, {"kind", "gauss1d"}});
    const fs::path out = tmp.path / "dry";
    CHECK(run_experiment(p, std::nullopt, out.string(), true) == kExitOk);
    CHECK(!fs::exists(out));
  }
  SUBCASE("unwritable output directory") {
    const std::string p =
        write_config(tmp.path, {{"schema", 1}, {"kind", "gauss1d"}});
    CHECK(run_experiment(p, std::nullopt, "/proc/definitely/not/writable",
                         false) == kExitIo);
  }
}

TEST_CASE("gauss1d command") {
  TempDir tmp("gauss1d");
  const json config = {{"schema", 1},
                       {"kind", "gauss1d"},
                       {"seed", 5},
                       {"params",
                        {{"sigmas", {0.01, 1.0, 100.0}},
                         {"rho0s", {0.0}},
                         {"iterations", 12}}}};
  const std::string p = write_config(tmp.path, config);
  const fs::path out_a = tmp.path / "a";
  const fs::path out_b = tmp.path / "b";
  REQUIRE(run_experiment(p, std::nullopt, out_a.string(), false) == kExitOk);
  REQUIRE(run_experiment(p, std::nullopt, out_b.string(), false) == kExitOk);

  SUBCASE("bit-identical outputs and manifests across reruns") {
    CHECK(slurp(out_a / "gauss1d_kl.csv") == slurp(out_b / "gauss1d_kl.csv"));
    CHECK(slurp(out_a / "manifest.json") == slurp(out_b / "manifest.json"));
  }
  SUBCASE("bridge-mixture iteration dominates at iteration 10") {
    const auto idbm = kl_column(out_a / "gauss1d_kl.csv", "idbm", "1");
    const auto ipf = kl_column(out_a / "gauss1d_kl.csv", "ipf", "1");
    REQUIRE(idbm.count(10));
    REQUIRE(ipf.count(10));
    CHECK(idbm.at(10) < ipf.at(10));
  }
  SUBCASE("huge regularization flattens both curves") {
    const auto idbm = kl_column(out_a / "gauss1d_kl.csv", "idbm", "100");
    const auto ipf = kl_column(out_a / "gauss1d_kl.csv", "ipf", "100");
    CHECK(idbm.at(1) < 1e-3);
    CHECK(ipf.at(1) < 1e-3);
  }
}

TEST_CASE("gaussnd command emits dominated trajectories") {
  TempDir tmp("gaussnd");
  const json config = {{"schema", 1},
                       {"kind", "gaussnd"},
                       {"seed", 3},
                       {"params",
                        {{"dims", {3}},
                         {"sigmas", {0.5}},
                         {"n_scenarios", 2},
                         {"iterations", 4}}}};
  const std::string p = write_config(tmp.path, config);
  const fs::path out = tmp.path / "out";
  REQUIRE(run_experiment(p, std::nullopt, out.string(), false) == kExitOk);
  std::ifstream is(out / "gaussnd_kl.csv");
  std::string line;
  std::getline(is, line);
  CHECK(line == "d,sigma,scenario,procedure,iteration,kl");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 2 * 2 * 5);  // 2 scenarios x 2 procedures x iterations 0..4
}

TEST_CASE("sinkhorn_compare command") {
  TempDir tmp("sinkhorn");
  const json config = {{"schema", 1},
                       {"kind", "sinkhorn_compare"},
                       {"params",
                        {{"bins", 400},
                         {"sigmas", {1.0}},
                         {"tol", 1e-9}}}};
  const std::string p = write_config(tmp.path, config);
  const fs::path out = tmp.path / "out";
  REQUIRE(run_experiment(p, std::nullopt, out.string(), false) == kExitOk);
  std::ifstream is(out / "sinkhorn_compare.csv");
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  std::stringstream ss(row);
  std::string field;
  std::vector<std::string> fields;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  REQUIRE(fields.size() == 8);
  CHECK(std::stoi(fields[3]) == 1);           // converged
  CHECK(std::stod(fields[7]) < 2e-3);         // |corr - analytic| at 400 bins
}

TEST_CASE("sgm_toy command writes samples and a checkpoint") {
  TempDir tmp("sgm_toy");
  const json config = {
      {"schema", 1},
      {"kind", "sgm_toy"},
      {"seed", 9},
      {"params",
       {{"sde", {{"dim", 1}, {"sigma2", 1.0}}},
        {"gamma", {{"kind", "gaussian"}, {"mean", {0.0}}, {"var", 0.25}}},
        {"sgd_steps", 600},
        {"hidden", {32, 32}},
        {"n_generate", 2000},
        {"generate_steps", 64}}}};
  const std::string p = write_config(tmp.path, config);
  const fs::path out = tmp.path / "out";
  REQUIRE(run_experiment(p, std::nullopt, out.string(), false) == kExitOk);
  CHECK(fs::exists(out / "model_score.mlp"));
  CHECK(fs::exists(out / "samples.csv"));
  CHECK(fs::exists(out / "summary.csv"));
  CHECK(fs::exists(out / "manifest.json"));
  const json manifest = json::parse(slurp(out / "manifest.json"));
  CHECK(manifest.at("kind") == "sgm_toy");
  CHECK(manifest.at("outputs").size() == 3);
}

TEST_CASE("idbm and dipf commands write diagnostics") {
  TempDir tmp("runs");
  json params = {
      {"sde", {{"dim", 1}, {"sigma2", 1.0}}},
      {"gamma", {{"kind", "gaussian"}, {"mean", {-1.0}}, {"var", 1.0}}},
      {"upsilon", {{"kind", "gaussian"}, {"mean", {1.0}}, {"var", 1.0}}},
      {"n_iterations", 2},
      {"sgd_steps", 400},
      {"batch_size", 128},
      {"euler_steps", 40},
      {"coupling_cache", 4000},
      {"hidden", {32, 32}},
      {"dipf_cache_paths", 512},
      {"dipf_cache_refresh", 100}};

  for (const std::string kind : {"idbm_run", "dipf_run"}) {
    const json config = {
        {"schema", 1}, {"kind", kind}, {"seed", 4}, {"params", params}};
    const fs::path dir = tmp.path / kind;
    fs::create_directories(dir);
    const std::string p = write_config(dir, config);
    const fs::path out = dir / "out";
    REQUIRE(run_experiment(p, std::nullopt, out.string(), false) == kExitOk);
    CHECK(fs::exists(out / "diagnostics.csv"));
    CHECK(fs::exists(out / "timings.csv"));
    CHECK(fs::exists(out / "final_coupling.csv"));
    CHECK(fs::exists(out / "manifest.json"));
    std::ifstream is(out / "diagnostics.csv");
    std::string line;
    std::getline(is, line);
    CHECK(line ==
          "iteration,direction,loss,l_oc,terminal_mean_err,terminal_var_err,"
          "coupling_corr");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == 2);
  }
}

TEST_CASE("content hash is stable") {
  CHECK(content_hash_hex("abc") == content_hash_hex("abc"));
  CHECK(content_hash_hex("abc") != content_hash_hex("abd"));
  CHECK(content_hash_hex("").size() == 16);
}

TEST_CASE("samplers from config specs") {
  CounterRng rng(1);
  SUBCASE("two_moons produces finite 2D points") {
    const json spec = {{"kind", "two_moons"}, {"noise", 0.05}};
    const Eigen::MatrixXd x = make_sampler(spec)(500, rng);
    CHECK(x.cols() == 2);
    CHECK(x.allFinite());
    CHECK(sampler_dim(spec) == 2);
  }
  SUBCASE("two_rings radii are respected") {
    const json spec = {
        {"kind", "two_rings"}, {"radii", {0.5, 1.0}}, {"noise", 0.0}};
    const Eigen::MatrixXd x = make_sampler(spec)(2000, rng);
    for (int i = 0; i < x.rows(); ++i) {
      const double r = x.row(i).norm();
      CHECK((std::abs(r - 0.5) < 1e-9 || std::abs(r - 1.0) < 1e-9));
    }
  }
  SUBCASE("mixture1d spec round trip") {
    const json spec = {{"kind", "mixture1d"},
                       {"weights", {0.5, 0.5}},
                       {"means", {-1.0, 1.0}},
                       {"sds", {0.1, 0.1}}};
    const Eigen::MatrixXd x = make_sampler(spec)(4000, rng);
    CHECK(std::abs(x.col(0).mean()) < 0.05);
  }
}
