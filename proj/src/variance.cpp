#include "crmc/variance.hpp"

#include <Eigen/Eigenvalues>

#include "crmc/errors.hpp"

namespace crmc {

namespace {

Mat symmetrized(const Mat& s) { return 0.5 * (s + s.transpose()); }

double min_eigenvalue(const Mat& s) {
  Eigen::SelfAdjointEigenSolver<Mat> es(s);
  return es.eigenvalues().minCoeff();
}

// (1/n) sum over clusters of the outer product of per-cluster scores
// sum_{i in g} v_i * e_i.
Mat score_outer_meat(const FitResult& fit, const ClusterPartition& partition,
                     const Vec& errors) {
  const Eigen::Index d = fit.d();
  Mat sigma = Mat::Zero(d, d);
  Vec score(d);
  for (const auto& rows : partition.groups) {
    score.setZero();
    for (int i : rows) score += errors(i) * fit.v_hat.row(i).transpose();
    sigma.noalias() += score * score.transpose();
  }
  return sigma / static_cast<double>(fit.n());
}

// (1/n) sum_a t_a v_{i_a} v_{j_a}'.
Mat pair_weighted_meat(const FitResult& fit, const PairIndex& idx, const Vec& t) {
  const Eigen::Index d = fit.d();
  Mat sigma = Mat::Zero(d, d);
  for (long a = 0; a < idx.size(); ++a) {
    const auto& p = idx.pairs[static_cast<size_t>(a)];
    sigma.noalias() += t(a) * (fit.v_hat.row(p.i).transpose() * fit.v_hat.row(p.j));
  }
  return sigma / static_cast<double>(fit.n());
}

Vec residual_products(const FitResult& fit, const PairIndex& idx) {
  Vec s(idx.size());
  for (long a = 0; a < idx.size(); ++a) {
    const auto& p = idx.pairs[static_cast<size_t>(a)];
    s(a) = fit.u_hat(p.i) * fit.u_hat(p.j);
  }
  return s;
}

}  // namespace

std::string variance_method_name(VarianceMethod m) {
  switch (m) {
    case VarianceMethod::LZ: return "lz";
    case VarianceMethod::CR: return "cr";
    case VarianceMethod::Unfeasible: return "unfeasible";
    case VarianceMethod::General: return "general";
  }
  return "unknown";
}

VarianceEstimate sigma_lz(const FitResult& fit, const ClusterPartition& partition) {
  VarianceEstimate out;
  out.method = VarianceMethod::LZ;
  out.sigma = symmetrized(score_outer_meat(fit, partition, fit.u_hat));
  out.solver.sigma_min_eigenvalue = min_eigenvalue(out.sigma);
  return out;
}

VarianceEstimate sigma_unfeasible(const FitResult& fit, const ClusterPartition& partition,
                                  const Vec& true_errors) {
  if (true_errors.size() != fit.n())
    throw std::invalid_argument("true error vector length does not match fit");
  VarianceEstimate out;
  out.method = VarianceMethod::Unfeasible;
  out.sigma = symmetrized(score_outer_meat(fit, partition, true_errors));
  out.solver.sigma_min_eigenvalue = min_eigenvalue(out.sigma);
  return out;
}

VarianceEstimate sigma_general(const FitResult& fit, const PairIndex& idx, const Mat& kappa) {
  if (kappa.rows() != idx.size() || kappa.cols() != idx.size())
    throw std::invalid_argument("kappa dimensions do not match the pair index");
  VarianceEstimate out;
  out.method = VarianceMethod::General;
  const Vec t = kappa * residual_products(fit, idx);
  out.sigma = symmetrized(pair_weighted_meat(fit, idx, t));
  out.solver.sigma_min_eigenvalue = min_eigenvalue(out.sigma);
  return out;
}

VarianceEstimate sigma_cr(const FitResult& fit, const KappaSystem& sys,
                          const SolverOptions& opts) {
  VarianceEstimate out;
  out.method = VarianceMethod::CR;
  SolveInfo info;
  const Vec c = sys.solve(residual_products(fit, sys.pair_index()), opts.tol,
                          opts.max_iter, &info);
  out.sigma = symmetrized(pair_weighted_meat(fit, sys.pair_index(), c));
  out.solver.iterations = info.iterations;
  out.solver.residual_norm = info.residual_norm;
  out.solver.storage = sys.storage_name();
  out.solver.sigma_min_eigenvalue = min_eigenvalue(out.sigma);
  return out;
}

VarianceEstimate sigma_cr(const FitResult& fit, const AnnihilatorOperator& op,
                          const PairIndex& idx, const SolverOptions& opts) {
  const KappaSystem sys = build_kappa_system(op, idx, opts.mode, opts.dense_threshold);
  return sigma_cr(fit, sys, opts);
}

}  // namespace crmc
