#pragma once

#include <optional>
#include <string>
#include <vector>

#include "crmc/design.hpp"
#include "crmc/kappa.hpp"

namespace crmc {

struct MonteCarloConfig {
  long reps = 1000;
  std::uint64_t seed = 20240101;
  double alpha = 0.05;
  bool use_unfeasible = true;
  bool use_lz = true;
  bool use_cr = true;
  // kappa-norm statistics per replication when CR is enabled; a handful of
  // extra solves each, so desk runs that only need coverage can turn it off.
  bool kappa_norms = true;
  KappaNormMode kappa_norm_mode = KappaNormMode::Auto;
  bool parallel = true;
  int threads = 0;  // 0: CRMC_THREADS env var, then hardware count
  // Repeated solves make conjugate gradient the cheaper default here; the
  // per-call Auto/dense switch still applies to ad-hoc estimation.
  SolverOptions solver{KappaMode::MatrixFree};
};

struct EstimatorMcStats {
  double omega_mean = 0.0;
  double omega_sd = 0.0;
  double bias_pct = 0.0;  // 100 (mean omega - n Var_mc(beta)) / (n Var_mc(beta))
  double coverage = 0.0;
  long failures = 0;
};

struct MonteCarloSummary {
  long reps = 0;
  long failures = 0;  // replications where any requested estimator failed
  double alpha = 0.05;
  int n = 0;
  int G = 0;
  double k_eff_mean = 0.0;
  double beta_mean = 0.0;
  double beta_variance = 0.0;
  double omega_target = 0.0;  // n * Var_mc(beta)
  std::optional<EstimatorMcStats> unfeasible, lz, cr;
  std::optional<double> kappa_norm_mean, kappa_norm_sd;
};

// Per-replication streams are split off the config seed with the Philox
// counter, so summaries are identical for any thread count.
MonteCarloSummary run_monte_carlo(const DesignSpec& design, const MonteCarloConfig& cfg);

// Named presets covering the reported simulation grids; names look like
// "table2:G175:K0.201" or "table6:G70:n500". Throws config_error for an
// unknown name.
DesignSpec preset_design(const std::string& name);
std::vector<std::string> preset_names();

int resolve_thread_count(int requested);

}  // namespace crmc
