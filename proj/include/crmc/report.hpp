#pragma once

#include <optional>
#include <string>
#include <vector>

#include "crmc/fit.hpp"
#include "crmc/inference.hpp"
#include "crmc/monte_carlo.hpp"

namespace crmc {

enum class OutputFormat { Text, Json, Csv };

OutputFormat parse_output_format(const std::string& name);

struct FitReport {
  int n = 0;
  int d = 0;
  int k_controls = 0;
  int k_eff = 0;
  int num_clusters = 0;
  std::vector<std::string> coefficient_names;
  std::vector<std::string> dropped_controls;
  AssumptionDiagnostics diagnostics;
  std::vector<InferenceReport> estimates;
  std::vector<VarianceSolverInfo> solver_infos;  // parallel to estimates
  std::optional<double> kappa_inf_norm;
};

// Text renders aligned tables at 6 significant digits; json carries full
// binary precision and a schema tag; csv is one row per
// coefficient x estimator.
std::string render_fit_report(const FitReport& report, OutputFormat format);
std::string render_diagnostics(const FitReport& report, OutputFormat format);
std::string render_mc_summary(const MonteCarloSummary& summary, OutputFormat format);

}  // namespace crmc
