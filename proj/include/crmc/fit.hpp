#pragma once

#include <optional>
#include <vector>

#include "crmc/annihilator.hpp"
#include "crmc/dataset.hpp"

namespace crmc {

struct FitResult {
  Vec beta;    // d
  Mat v_hat;   // n x d partialled-out regressors, row i = v_i'
  Vec u_hat;   // n residuals
  Mat gamma_cap;  // d x d, (1/n) sum v_i v_i'

  // Control coefficients recovered by back-substitution, in original column
  // order; NaN where the column was dropped as collinear.
  std::optional<Vec> gamma;
  std::vector<bool> gamma_retained;

  Eigen::Index n() const { return u_hat.size(); }
  Eigen::Index d() const { return beta.size(); }
};

// Partialled-out OLS: beta = (sum v_i v_i')^-1 (sum v_i y_i) with v = M X,
// residuals u = M (y - X beta). Throws numeric_error when sum v v' is
// singular (regressors of interest collinear with controls).
FitResult fit_ols(const Dataset& data, const AnnihilatorOperator& op,
                  bool recover_gamma = false);

// Observable proxies for the design conditions: control share, leverage
// floor, partialled-regressor growth, and curvature of the Gram matrix.
struct AssumptionDiagnostics {
  double control_share = 0.0;       // k_eff / n
  double min_m_diagonal = 1.0;      // min_i M_ii
  double max_vhat_over_sqrt_n = 0.0;
  double gamma_min_eigenvalue = 0.0;
  int n = 0;
  int num_clusters = 0;
};

AssumptionDiagnostics assumption_diagnostics(const AnnihilatorOperator& op,
                                             const FitResult& fit,
                                             const ClusterPartition& partition);

}  // namespace crmc
