#include <CLI11.hpp>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif
#include <Eigen/Core>

#include "bridgelab/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"bridgelab: Schrodinger-bridge transport experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool dry_run = false;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON experiment config")
        ->required();
    cmd->add_option("--seed", seed, "Seed override");
    cmd->add_option("--out", out_dir, "Output directory override");
    cmd->add_flag("--dry-run", dry_run, "Validate the config and exit");
    return cmd;
  };

  // Subcommand name -> config kind it runs.
  const std::vector<std::pair<std::string, std::string>> kinds = {
      {"gauss1d", "gauss1d"},
      {"gaussnd", "gaussnd"},
      {"mixture1d", "mixture1d"},
      {"idbm", "idbm_run"},
      {"dipf", "dipf_run"},
      {"sgm-toy", "sgm_toy"},
      {"sinkhorn-compare", "sinkhorn_compare"},
  };
  for (const auto& [name, kind] : kinds)
    add_common(app.add_subcommand(name, "Run a '" + kind + "' config"));

  CLI11_PARSE(app, argc, argv);

  if (const char* threads = std::getenv("BRIDGELAB_THREADS")) {
    const int n = std::atoi(threads);
    if (n > 0) {
#ifdef _OPENMP
      omp_set_num_threads(n);
#endif
      Eigen::setNbThreads(n);
    }
  }

  const std::string sub = app.get_subcommands().at(0)->get_name();
  std::string expected_kind;
  for (const auto& [name, kind] : kinds)
    if (name == sub) expected_kind = kind;

  return bridgelab::run_experiment(config_path, seed, out_dir, dry_run,
                                   expected_kind);
}
