#include "crmc/annihilator.hpp"

#include <algorithm>
#include <cmath>

#include "crmc/errors.hpp"

namespace crmc {

Vec AnnihilatorOperator::apply(const Vec& x) const {
  if (k_eff() == 0) return x;
  return x - q_ * (q_.transpose() * x);
}

Mat AnnihilatorOperator::apply(const Mat& x) const {
  if (k_eff() == 0) return x;
  return x - q_ * (q_.transpose() * x);
}

Vec AnnihilatorOperator::row(int i) const {
  Vec r = Vec::Zero(n_);
  if (k_eff() > 0) r.noalias() = -(q_ * q_.row(i).transpose());
  r(i) += 1.0;
  return r;
}

double AnnihilatorOperator::diagonal(int i) const {
  if (k_eff() == 0) return 1.0;
  return 1.0 - q_.row(i).squaredNorm();
}

double AnnihilatorOperator::min_diagonal() const {
  if (k_eff() == 0) return 1.0;
  return 1.0 - q_.rowwise().squaredNorm().maxCoeff();
}

const Mat& AnnihilatorOperator::dense() const {
  if (n_ > dense_cap_)
    throw numeric_error("dense annihilator requested for n=" + std::to_string(n_) +
                        " above cap " + std::to_string(dense_cap_));
  std::call_once(cache_->once, [this] {
    cache_->m = materialize();
    cache_->built = true;
  });
  return cache_->m;
}

Mat AnnihilatorOperator::materialize() const {
  Mat m = Mat::Identity(n_, n_);
  if (k_eff() > 0) m.noalias() -= q_ * q_.transpose();
  return m;
}

Vec AnnihilatorOperator::project_coefficients(const Vec& target) const {
  if (k_eff() == 0) return Vec(0);
  Vec qty = q_.transpose() * target;
  return r_.triangularView<Eigen::Upper>().solve(qty);
}

AnnihilatorOperator compute_annihilator(const Mat& W, double rank_tol, int dense_cap) {
  AnnihilatorOperator op;
  op.n_ = static_cast<int>(W.rows());
  op.k_input_ = static_cast<int>(W.cols());
  op.dense_cap_ = dense_cap;
  if (op.n_ < 1) throw data_error("annihilator needs at least one observation");

  if (W.cols() == 0) {
    op.q_ = Mat(op.n_, 0);
    op.r_ = Mat(0, 0);
    return op;
  }

  Eigen::ColPivHouseholderQR<Mat> qr(W);
  qr.setThreshold(rank_tol);  // relative to the largest column norm
  const int rank = static_cast<int>(qr.rank());
  if (rank >= op.n_)
    throw numeric_error("saturated controls: k_eff=" + std::to_string(rank) +
                        " >= n=" + std::to_string(op.n_) +
                        "; M = 0 and no inference is possible");

  op.q_ = qr.householderQ().setLength(rank) * Mat::Identity(op.n_, rank);
  op.r_ = qr.matrixR().topLeftCorner(rank, rank).triangularView<Eigen::Upper>();
  const auto& perm = qr.colsPermutation().indices();
  op.retained_.assign(perm.data(), perm.data() + rank);
  return op;
}

}  // namespace crmc
