#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <vector>

#include "crmc/dataset.hpp"

namespace crmc {

// Residual-maker projection M = I - W (W'W)^-1 W', held in factored form.
// Stores the thin orthonormal factor Q of the retained control columns, so
// M x = x - Q (Q'x) without ever forming the n x n matrix. A dense copy of M
// is materialized lazily and cached only when n <= dense_cap, since the
// correction-system builder touches many entries.
class AnnihilatorOperator {
 public:
  static constexpr int kDefaultDenseCap = 5000;

  int n() const { return n_; }
  int k_eff() const { return static_cast<int>(q_.cols()); }
  // Original W column indices kept by the rank-revealing factorization,
  // in pivot order.
  const std::vector<int>& retained_columns() const { return retained_; }
  int num_input_columns() const { return k_input_; }

  Vec apply(const Vec& x) const;  // M x
  Mat apply(const Mat& x) const;  // M X, column-wise

  Vec row(int i) const;           // e_i - Q (Q'e_i); equals column i by symmetry
  double diagonal(int i) const;   // M_ii = 1 - ||Q.row(i)||^2
  double min_diagonal() const;

  bool dense_cached() const { return cache_->built; }
  int dense_cap() const { return dense_cap_; }
  // Dense n x n M; builds and caches on first call. Throws numeric_error when
  // n exceeds the cap (callers must stay matrix-free in that regime).
  const Mat& dense() const;
  // Always builds a fresh dense copy, ignoring the cache/cap.
  Mat materialize() const;

  const Mat& q_factor() const { return q_; }

  // Least-squares coefficients of `target` on the retained control columns.
  // Entry k corresponds to retained_columns()[k].
  Vec project_coefficients(const Vec& target) const;

 private:
  friend AnnihilatorOperator compute_annihilator(const Mat&, double, int);

  // Copies share the lazily built dense cache; all reads are idempotent.
  struct DenseCache {
    std::once_flag once;
    Mat m;
    bool built = false;
  };

  int n_ = 0;
  int k_input_ = 0;
  int dense_cap_ = kDefaultDenseCap;
  Mat q_;  // n x k_eff, orthonormal columns
  Mat r_;  // k_eff x k_eff upper triangular (pivoted)
  std::vector<int> retained_;

  std::shared_ptr<DenseCache> cache_ = std::make_shared<DenseCache>();
};

// Rank is decided by column-pivoted Householder QR with relative tolerance
// rank_tol (pivots below rank_tol times the largest column norm are treated
// as zero). Collinear columns are dropped, not errored. Throws numeric_error
// when the retained controls saturate the sample (k_eff >= n).
AnnihilatorOperator compute_annihilator(const Mat& W, double rank_tol = 1e-10,
                                        int dense_cap = AnnihilatorOperator::kDefaultDenseCap);

}  // namespace crmc
