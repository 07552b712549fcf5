#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

namespace crmc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// One regression problem: outcome, regressors of interest, control block,
// cluster assignment. Rows are observations in input order.
struct Dataset {
  Vec y;                            // n
  Mat X;                            // n x d
  Mat W;                            // n x K (K may be 0)
  std::vector<std::int64_t> cluster_id;  // n

  Eigen::Index n() const { return y.size(); }
  Eigen::Index d() const { return X.cols(); }
  Eigen::Index num_controls() const { return W.cols(); }

  // Throws data_error on shape mismatch or non-finite values.
  void validate() const;
};

// Groups ordered by first appearance of each id; within-group order
// preserves observation order.
struct ClusterPartition {
  std::vector<std::vector<int>> groups;  // observation indices per cluster
  std::vector<int> sizes;
  int n = 0;

  int num_clusters() const { return static_cast<int>(groups.size()); }
  int max_size() const;
};

ClusterPartition partition_clusters(std::span<const std::int64_t> cluster_id);

}  // namespace crmc
