#pragma once

#include <optional>
#include <string>

#include "crmc/fit.hpp"
#include "crmc/kappa.hpp"

namespace crmc {

enum class VarianceMethod { LZ, CR, Unfeasible, General };

std::string variance_method_name(VarianceMethod m);

struct VarianceSolverInfo {
  long iterations = 0;
  double residual_norm = 0.0;
  std::string storage = "none";
  double sigma_min_eigenvalue = 0.0;
};

struct VarianceEstimate {
  Mat sigma;  // d x d meat, symmetrized
  VarianceMethod method = VarianceMethod::LZ;
  VarianceSolverInfo solver;
  std::optional<double> kappa_inf_norm;
};

// Classical clustered meat: (1/n) sum_g (sum_{i in g} v_i u_i)(... )'.
VarianceEstimate sigma_lz(const FitResult& fit, const ClusterPartition& partition);

// Same form evaluated at the true error draws; simulation benchmark only.
VarianceEstimate sigma_unfeasible(const FitResult& fit, const ClusterPartition& partition,
                                  const Vec& true_errors);

// General weighted class: (1/n) sum_a sum_b kappa[a,b] v_{i_a} v_{j_a}' u_{i_b} u_{j_b}.
// kappa = I recovers sigma_lz.
VarianceEstimate sigma_general(const FitResult& fit, const PairIndex& idx, const Mat& kappa);

// Correction-matrix estimator: solve A c = s with s_b = u_{i_b} u_{j_b}, then
// (1/n) sum_a c_a v_{i_a} v_{j_a}'. Never materializes kappa.
VarianceEstimate sigma_cr(const FitResult& fit, const KappaSystem& sys,
                          const SolverOptions& opts = {});
VarianceEstimate sigma_cr(const FitResult& fit, const AnnihilatorOperator& op,
                          const PairIndex& idx, const SolverOptions& opts = {});

}  // namespace crmc
