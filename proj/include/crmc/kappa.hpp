#pragma once

#include <memory>
#include <mutex>
#include <string>

#include "crmc/annihilator.hpp"
#include "crmc/pair_index.hpp"

namespace crmc {

// DenseCollapsed folds the ordered pair space onto unordered pairs
// (L' = sum s_g (s_g+1)/2) through the orthonormal symmetric-subspace
// embedding; it factors a matrix a quarter the size and is exact for the
// swap-symmetric right-hand sides the estimators produce.
enum class KappaMode { Auto, Dense, DenseCollapsed, MatrixFree };
enum class KappaNormMode { Auto, Exact, Estimate };

struct SolverOptions {
  KappaMode mode = KappaMode::Auto;
  long dense_threshold = 4000;  // dense A above this L would exceed ~128 MB
  double tol = 1e-10;           // relative residual
  long max_iter = -1;           // conjugate gradient cap; -1 means 10*L
};

struct SolveInfo {
  long iterations = 0;
  double residual_norm = 0.0;  // relative
};

// The L x L correction system A = S'(M (x) M) S, where S selects the
// within-cluster vec positions (j-1)n + i. Entrywise
//   A[a,b] = M(i_a, i_b) * M(j_a, j_b),
// symmetric and positive semidefinite. Dense mode materializes A and factors
// it once; matrix-free mode keeps only the pair index and the M operator and
// evaluates A c by scattering c into a sparse n x n matrix C with
// C(i_b, j_b) += c_b, forming D = M C M, and gathering D(i_a, j_a).
class KappaSystem {
 public:
  long size() const { return L_; }
  long collapsed_size() const { return collapsed_ ? dense_a_->rows() : 0; }
  bool dense_storage() const { return dense_a_ != nullptr; }
  std::string storage_name() const {
    if (!dense_storage()) return "matrix-free";
    return collapsed_ ? "dense-collapsed" : "dense";
  }

  const Mat& dense_matrix() const;
  Vec apply(const Vec& c) const;  // A c

  // Solves A c = rhs to relative residual tol. Dense mode uses a symmetric
  // factorization with a residual check; matrix-free mode runs Jacobi-
  // preconditioned conjugate gradient. Throws numeric_error with a hint
  // about cluster-indicator controls when the system is singular or CG
  // stalls.
  Vec solve(const Vec& rhs, double tol = 1e-10, long max_iter = -1,
            SolveInfo* info = nullptr) const;

  // Max absolute row sum of A^-1. Exact mode inverts (or solves L unit
  // systems); estimate mode runs the Hager lower-bound estimator, one solve
  // per step, valid for the infinity norm because A^-1 is symmetric.
  double inf_norm_inverse(KappaNormMode mode = KappaNormMode::Auto,
                          double tol = 1e-10, long max_iter = -1) const;

  const PairIndex& pair_index() const { return *idx_; }
  const AnnihilatorOperator& annihilator() const { return *op_; }

 private:
  friend KappaSystem build_kappa_system(const AnnihilatorOperator&,
                                        const PairIndex&, KappaMode, long);

  struct FactorCache {
    std::once_flag once;
    std::shared_ptr<Eigen::LDLT<Mat>> ldlt;
  };

  const AnnihilatorOperator* op_ = nullptr;
  const PairIndex* idx_ = nullptr;
  long L_ = 0;
  bool collapsed_ = false;
  std::shared_ptr<Mat> dense_a_;                 // A, or the collapsed P'AP
  std::vector<long> unordered_of_;               // ordered position -> collapsed row
  std::shared_ptr<FactorCache> factor_ = std::make_shared<FactorCache>();

  Vec apply_via_dense_m(const Vec& c) const;
  Vec apply_via_q(const Vec& c) const;
  Vec solve_collapsed(const Vec& rhs, double tol, SolveInfo* info) const;
  Vec solve_cg(const Vec& rhs, double tol, long max_iter, SolveInfo* info) const;
  double exact_inf_norm_inverse(double tol, long max_iter) const;
  double estimate_inf_norm_inverse(double tol, long max_iter) const;
};

// The KappaSystem keeps references to op and idx; both must outlive it.
// Auto picks dense when L <= dense_threshold.
KappaSystem build_kappa_system(const AnnihilatorOperator& op, const PairIndex& idx,
                               KappaMode mode = KappaMode::Auto,
                               long dense_threshold = 4000);

inline Vec solve_kappa_system(const KappaSystem& sys, const Vec& rhs,
                              double tol = 1e-10, long max_iter = -1,
                              SolveInfo* info = nullptr) {
  return sys.solve(rhs, tol, max_iter, info);
}

double kappa_inf_norm(const KappaSystem& sys, KappaNormMode mode = KappaNormMode::Auto,
                      double tol = 1e-10, long max_iter = -1);

}  // namespace crmc
