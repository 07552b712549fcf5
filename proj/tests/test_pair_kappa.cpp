#include <cmath>
#include <cstdlib>

#include "doctest.h"

#include "crmc/annihilator.hpp"
#include "crmc/errors.hpp"
#include "crmc/fit.hpp"
#include "crmc/kappa.hpp"
#include "crmc/pair_index.hpp"
#include "crmc/variance.hpp"
#include "oracle_utils.hpp"

using namespace crmc;

namespace {

ClusterPartition partition_of(const std::vector<std::int64_t>& ids) {
  return partition_clusters(ids);
}

}  // namespace

TEST_CASE("pair index: two clusters of two") {
  const PairIndex idx = build_pair_index(partition_of({0, 0, 1, 1}));
  CHECK(idx.size() == 8);
  CHECK(idx.pairs[0].i == 0);
  CHECK(idx.pairs[0].j == 0);
  CHECK(idx.pairs[1].i == 0);
  CHECK(idx.pairs[1].j == 1);
  CHECK(idx.pairs[2].i == 1);
  CHECK(idx.pairs[2].j == 0);
  CHECK(idx.cluster_offset == std::vector<long>{0, 4, 8});
}

TEST_CASE("pair index: singletons") {
  const PairIndex idx = build_pair_index(partition_of({0, 1, 2, 3, 4}));
  CHECK(idx.size() == 5);
  for (const auto& p : idx.pairs) CHECK(p.i == p.j);
}

TEST_CASE("pair index: MA(1)-style restriction keeps 7 of 9 pairs") {
  const PairIndex idx = build_pair_index(
      partition_of({0, 0, 0}),
      [](int i, int j) { return std::abs(i - j) <= 1; });
  CHECK(idx.size() == 7);
  CHECK(idx.restricted);
  for (const auto& p : idx.pairs) CHECK(std::abs(p.li - p.lj) <= 1);
}

TEST_CASE("pair index: restriction may not exclude a diagonal pair") {
  CHECK_THROWS_AS(build_pair_index(partition_of({0, 0}),
                                   [](int i, int j) { return i != j; }),
                  numeric_error);
}

TEST_CASE("pair index: swap positions invert pairs") {
  const PairIndex idx = build_pair_index(partition_of({0, 0, 0, 1, 1}));
  for (long a = 0; a < idx.size(); ++a) {
    const long b = idx.swap_position(a);
    CHECK(idx.pairs[static_cast<size_t>(b)].i == idx.pairs[static_cast<size_t>(a)].j);
    CHECK(idx.pairs[static_cast<size_t>(b)].j == idx.pairs[static_cast<size_t>(a)].i);
    CHECK(idx.swap_position(b) == a);
  }
}

TEST_CASE("kappa system: M = I makes A the identity") {
  const auto design = oracle::make_design(3, {2, 2, 1}, 0);
  const AnnihilatorOperator op = compute_annihilator(design.data.W);
  const PairIndex idx = build_pair_index(partition_of(design.data.cluster_id));
  const KappaSystem sys = build_kappa_system(op, idx, KappaMode::Dense);
  CHECK((sys.dense_matrix() - Mat::Identity(idx.size(), idx.size()))
            .cwiseAbs()
            .maxCoeff() == 0.0);

  Vec rhs(idx.size());
  for (long a = 0; a < idx.size(); ++a) rhs(a) = 0.1 * static_cast<double>(a) - 0.3;
  CHECK((sys.solve(rhs) - rhs).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("kappa system: singleton partition reduces to the Hadamard square") {
  const auto design = oracle::make_design(7, std::vector<int>(8, 1), 3);
  const AnnihilatorOperator op = compute_annihilator(design.data.W);
  const PairIndex idx = build_pair_index(partition_of(design.data.cluster_id));
  const KappaSystem sys = build_kappa_system(op, idx, KappaMode::Dense);
  const Mat m = oracle::dense_annihilator(design.data.W);
  CHECK((sys.dense_matrix() - m.cwiseProduct(m)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("kappa system: entries match the brute-force Kronecker oracle") {
  const auto design = oracle::make_design(13, {2, 2, 2}, 2);
  const AnnihilatorOperator op = compute_annihilator(design.data.W);
  const PairIndex idx = build_pair_index(partition_of(design.data.cluster_id));
  const KappaSystem sys = build_kappa_system(op, idx, KappaMode::Dense);
  const Mat a_oracle =
      oracle::kronecker_system(oracle::dense_annihilator(design.data.W), idx);
  CHECK((sys.dense_matrix() - a_oracle).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("kappa system: restricted index matches the selected Kronecker block") {
  const auto design = oracle::make_design(17, {3, 3}, 2);
  const PairIndex idx = build_pair_index(
      partition_of(design.data.cluster_id),
      [](int i, int j) { return std::abs(i - j) <= 1; });
  const AnnihilatorOperator op = compute_annihilator(design.data.W);
  const KappaSystem sys = build_kappa_system(op, idx, KappaMode::Dense);
  const Mat a_oracle =
      oracle::kronecker_system(oracle::dense_annihilator(design.data.W), idx);
  CHECK((sys.dense_matrix() - a_oracle).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("kappa system is positive semidefinite") {
  const auto design = oracle::make_design(19, {4, 3, 2, 1}, 3);
  const AnnihilatorOperator op = compute_annihilator(design.data.W);
  const PairIndex idx = build_pair_index(partition_of(design.data.cluster_id));
  const KappaSystem sys = build_kappa_system(op, idx, KappaMode::Dense);
  Eigen::SelfAdjointEigenSolver<Mat> es(sys.dense_matrix());
  CHECK(es.eigenvalues().minCoeff() >= -1e-10);
}

TEST_CASE("dense and matrix-free applications agree") {
  const auto design = oracle::make_design(29, std::vector<int>(15, 4), 18);
  const AnnihilatorOperator op = compute_annihilator(design.data.W);
  const PairIndex idx = build_pair_index(partition_of(design.data.cluster_id));
  const KappaSystem dense = build_kappa_system(op, idx, KappaMode::Dense);
  const KappaSystem free = build_kappa_system(op, idx, KappaMode::MatrixFree);

  std::mt19937_64 gen(4);
  std::normal_distribution<double> nrm(0.0, 1.0);
  Vec c(idx.size());
  for (long a = 0; a < idx.size(); ++a) c(a) = nrm(gen);
  CHECK((dense.apply(c) - free.apply(c)).cwiseAbs().maxCoeff() <= 1e-10);

  // Thin-factor path (the dense cap forces it) agrees with the dense-M path.
  const AnnihilatorOperator tiny_cap = compute_annihilator(design.data.W, 1e-10, 1);
  const KappaSystem via_q = build_kappa_system(tiny_cap, idx, KappaMode::MatrixFree);
  CHECK((via_q.apply(c) - dense.apply(c)).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("dense and matrix-free solves agree") {
  const auto design = oracle::make_design(37, std::vector<int>(15, 4), 18);
  const AnnihilatorOperator op = compute_annihilator(design.data.W);
  const PairIndex idx = build_pair_index(partition_of(design.data.cluster_id));
  const KappaSystem dense = build_kappa_system(op, idx, KappaMode::Dense);
  const KappaSystem free = build_kappa_system(op, idx, KappaMode::MatrixFree);

  Vec rhs(idx.size());
  for (long a = 0; a < idx.size(); ++a) {
    const auto& p = idx.pairs[static_cast<size_t>(a)];
    rhs(a) = design.data.y(p.i) * design.data.y(p.j);
  }
  SolveInfo info_dense, info_free;
  const Vec cd = dense.solve(rhs, 1e-10, -1, &info_dense);
  const Vec cf = free.solve(rhs, 1e-10, -1, &info_free);
  CHECK((cd - cf).cwiseAbs().maxCoeff() / cd.cwiseAbs().maxCoeff() <= 1e-8);
  CHECK(info_free.iterations > 0);

  // Swap symmetry: rhs built from products is swap-invariant, so is c.
  for (long a = 0; a < idx.size(); ++a)
    CHECK(std::abs(cf(a) - cf(idx.swap_position(a))) <= 1e-8);
}

TEST_CASE("cluster-indicator controls make the system singular") {
  const int n = 12, g = 3;
  auto design = oracle::make_design(41, std::vector<int>(g, n / g), 0);
  design.data.W = Mat::Zero(n, g);
  for (int i = 0; i < n; ++i) design.data.W(i, i / (n / g)) = 1.0;
  const AnnihilatorOperator op = compute_annihilator(design.data.W);
  const PairIndex idx = build_pair_index(partition_of(design.data.cluster_id));
  Vec rhs = Vec::Ones(idx.size());

  const KappaSystem dense = build_kappa_system(op, idx, KappaMode::Dense);
  CHECK_THROWS_AS(dense.solve(rhs), numeric_error);
  const KappaSystem free = build_kappa_system(op, idx, KappaMode::MatrixFree);
  CHECK_THROWS_AS(free.solve(rhs), numeric_error);
}

TEST_CASE("defining equations: kappa inverts the system, swap-adjusted") {
  const auto design = oracle::make_design(43, {3, 2, 2}, 2);
  const AnnihilatorOperator op = compute_annihilator(design.data.W);
  const PairIndex idx = build_pair_index(partition_of(design.data.cluster_id));
  const KappaSystem sys = build_kappa_system(op, idx, KappaMode::Dense);
  const long L = idx.size();

  Mat kappa(L, L);
  Vec e = Vec::Zero(L);
  for (long b = 0; b < L; ++b) {
    e(b) = 1.0;
    kappa.col(b) = sys.solve(e, 1e-12);
    e(b) = 0.0;
  }
  CHECK((kappa * sys.dense_matrix() - Mat::Identity(L, L)).cwiseAbs().maxCoeff() <= 1e-8);

  // The cross-product form M(i_b, j_c) M(j_b, i_c) is the same system
  // composed with the pair swap, so kappa times it is the swap permutation.
  const Mat m = oracle::dense_annihilator(design.data.W);
  Mat crossed(L, L);
  for (long b = 0; b < L; ++b)
    for (long c = 0; c < L; ++c)
      crossed(b, c) = m(idx.pairs[static_cast<size_t>(b)].i,
                        idx.pairs[static_cast<size_t>(c)].j) *
                      m(idx.pairs[static_cast<size_t>(b)].j,
                        idx.pairs[static_cast<size_t>(c)].i);
  Mat swap = Mat::Zero(L, L);
  for (long a = 0; a < L; ++a) swap(a, idx.swap_position(a)) = 1.0;
  CHECK((kappa * crossed - swap).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("restricted index: dense and matrix-free agree, solve included") {
  const auto design = oracle::make_design(67, {4, 4, 4}, 3);
  const PairIndex idx = build_pair_index(
      partition_of(design.data.cluster_id),
      [](int i, int j) { return std::abs(i - j) <= 1; });
  const AnnihilatorOperator op = compute_annihilator(design.data.W);
  const KappaSystem dense = build_kappa_system(op, idx, KappaMode::Dense);
  const KappaSystem free = build_kappa_system(op, idx, KappaMode::MatrixFree);
  std::mt19937_64 gen(9);
  std::normal_distribution<double> nrm(0.0, 1.0);
  Vec c(idx.size());
  for (long a = 0; a < idx.size(); ++a) c(a) = nrm(gen);
  CHECK((dense.apply(c) - free.apply(c)).cwiseAbs().maxCoeff() <= 1e-12);

  const FitResult fit = fit_ols(design.data, op);
  SolverOptions mf;
  mf.mode = KappaMode::MatrixFree;
  const Mat a = sigma_cr(fit, dense).sigma;
  const Mat b = sigma_cr(fit, free, mf).sigma;
  CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("collapsed symmetric system solves like the ordered one") {
  const auto design = oracle::make_design(53, {4, 3, 3, 2}, 4);
  const auto partition = partition_clusters(design.data.cluster_id);
  const PairIndex idx = build_pair_index(partition);
  const AnnihilatorOperator op = compute_annihilator(design.data.W);
  const KappaSystem ordered = build_kappa_system(op, idx, KappaMode::Dense);
  const KappaSystem collapsed = build_kappa_system(op, idx, KappaMode::DenseCollapsed);
  CHECK(collapsed.storage_name() == "dense-collapsed");
  CHECK(collapsed.collapsed_size() == (4 * 5 + 3 * 4 + 3 * 4 + 2 * 3) / 2);

  // Swap-symmetric rhs, as produced by residual products.
  Vec rhs(idx.size());
  for (long a = 0; a < idx.size(); ++a) {
    const auto& p = idx.pairs[static_cast<size_t>(a)];
    rhs(a) = design.data.y(p.i) * design.data.y(p.j);
  }
  const Vec c_ord = ordered.solve(rhs, 1e-12);
  const Vec c_col = collapsed.solve(rhs, 1e-12);
  CHECK((c_ord - c_col).cwiseAbs().maxCoeff() <= 1e-9);

  const FitResult fit = fit_ols(design.data, op);
  const Mat s_ord = sigma_cr(fit, ordered).sigma;
  const Mat s_col = sigma_cr(fit, collapsed).sigma;
  CHECK((s_ord - s_col).cwiseAbs().maxCoeff() <= 1e-10);

  CHECK_THROWS_AS(collapsed.inf_norm_inverse(), std::invalid_argument);
  CHECK_THROWS_AS(collapsed.apply(rhs), std::invalid_argument);
}

TEST_CASE("kappa norm: identity system") {
  const auto design = oracle::make_design(47, {1, 1, 1, 1}, 0);
  const AnnihilatorOperator op = compute_annihilator(design.data.W);
  const PairIndex idx = build_pair_index(partition_of(design.data.cluster_id));
  const KappaSystem sys = build_kappa_system(op, idx, KappaMode::Dense);
  CHECK(sys.inf_norm_inverse(KappaNormMode::Exact) == doctest::Approx(1.0));
  CHECK(sys.inf_norm_inverse(KappaNormMode::Estimate) == doctest::Approx(1.0));
}

TEST_CASE("kappa norm: the estimate is a tight lower bound") {
  const auto design = oracle::make_design(59, std::vector<int>(15, 4), 18);
  const AnnihilatorOperator op = compute_annihilator(design.data.W);
  const PairIndex idx = build_pair_index(partition_of(design.data.cluster_id));
  const KappaSystem sys = build_kappa_system(op, idx, KappaMode::Dense);
  const double exact = sys.inf_norm_inverse(KappaNormMode::Exact);
  const double estimate = sys.inf_norm_inverse(KappaNormMode::Estimate);
  CHECK(estimate <= exact * (1.0 + 1e-10));
  CHECK(estimate >= 0.5 * exact);
}

TEST_CASE("kappa norm: exact mode agrees with an explicit inverse") {
  const auto design = oracle::make_design(61, {3, 3, 2}, 2);
  const AnnihilatorOperator op = compute_annihilator(design.data.W);
  const PairIndex idx = build_pair_index(partition_of(design.data.cluster_id));
  const KappaSystem sys = build_kappa_system(op, idx, KappaMode::Dense);
  const Mat inv = sys.dense_matrix().fullPivLu().inverse();
  const double expect = inv.cwiseAbs().rowwise().sum().maxCoeff();
  CHECK(sys.inf_norm_inverse(KappaNormMode::Exact) ==
        doctest::Approx(expect).epsilon(1e-8));
}
