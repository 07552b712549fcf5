#include "crmc/fit.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "crmc/errors.hpp"

namespace crmc {

FitResult fit_ols(const Dataset& data, const AnnihilatorOperator& op, bool recover_gamma) {
  data.validate();
  const Eigen::Index n = data.n();
  if (op.n() != n) throw data_error("annihilator size does not match dataset");

  FitResult fit;
  fit.v_hat = op.apply(data.X);
  const Vec y_tilde = op.apply(data.y);

  Mat vtv = fit.v_hat.transpose() * fit.v_hat;
  Eigen::LDLT<Mat> ldlt(vtv);
  // LDLT accepts semidefinite input, so check invertibility explicitly.
  // The raw X scale is the reference: a regressor fully absorbed by the
  // controls leaves a uniformly tiny (but nonzero) Gram matrix behind.
  Eigen::SelfAdjointEigenSolver<Mat> es(vtv);
  const double lmin = es.eigenvalues().minCoeff();
  Eigen::SelfAdjointEigenSolver<Mat> es_x(Mat(data.X.transpose() * data.X));
  const double xscale = es_x.eigenvalues().maxCoeff();
  if (!(lmin > 0.0) || lmin <= xscale * 1e-12)
    throw numeric_error("regressors of interest collinear with controls (singular Gamma)");

  fit.beta = ldlt.solve(fit.v_hat.transpose() * y_tilde);
  fit.u_hat = y_tilde - fit.v_hat * fit.beta;
  fit.gamma_cap = vtv / static_cast<double>(n);

  if (recover_gamma && data.num_controls() > 0) {
    const Vec coefs = op.project_coefficients(data.y - data.X * fit.beta);
    Vec gamma = Vec::Constant(data.num_controls(), std::numeric_limits<double>::quiet_NaN());
    fit.gamma_retained.assign(data.num_controls(), false);
    const auto& retained = op.retained_columns();
    for (size_t k = 0; k < retained.size(); ++k) {
      gamma(retained[k]) = coefs(static_cast<Eigen::Index>(k));
      fit.gamma_retained[retained[k]] = true;
    }
    fit.gamma = std::move(gamma);
  }
  return fit;
}

AssumptionDiagnostics assumption_diagnostics(const AnnihilatorOperator& op,
                                             const FitResult& fit,
                                             const ClusterPartition& partition) {
  AssumptionDiagnostics diag;
  diag.n = op.n();
  diag.num_clusters = partition.num_clusters();
  diag.control_share = static_cast<double>(op.k_eff()) / op.n();
  diag.min_m_diagonal = op.min_diagonal();
  diag.max_vhat_over_sqrt_n =
      std::sqrt(fit.v_hat.rowwise().squaredNorm().maxCoeff() / static_cast<double>(op.n()));
  Eigen::SelfAdjointEigenSolver<Mat> es(fit.gamma_cap);
  diag.gamma_min_eigenvalue = es.eigenvalues().minCoeff();
  return diag;
}

}  // namespace crmc
