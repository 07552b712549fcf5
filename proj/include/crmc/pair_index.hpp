#pragma once

#include <functional>
#include <vector>

#include "crmc/dataset.hpp"

namespace crmc {

// Admissibility predicate on within-cluster local positions (0-based).
// Pairs (i,j) with pred(i,j) false carry an assumed-zero error covariance.
// Diagonal pairs must stay admissible.
using PairRestriction = std::function<bool(int local_i, int local_j)>;

// Enumeration of the ordered within-cluster index pairs that define the
// correction system. Pairs are listed cluster by cluster, within a cluster
// i outer / j inner in observation order, so the list position is the
// paper-style h(g,i,j) mapping minus one.
struct PairIndex {
  struct Pair {
    int g;   // cluster number, 0-based
    int i;   // global row index of the first member
    int j;   // global row index of the second member
    int li;  // local position of i within its cluster
    int lj;  // local position of j within its cluster
  };

  std::vector<Pair> pairs;
  std::vector<long> cluster_offset;        // size G+1, pairs of cluster g at [off[g], off[g+1])
  std::vector<std::vector<int>> groups;    // copy of the partition's groups
  bool restricted = false;

  long size() const { return static_cast<long>(pairs.size()); }
  int num_clusters() const { return static_cast<int>(groups.size()); }
  // Position of the swapped pair (g,j,i); used by the symmetry checks.
  long swap_position(long a) const;
};

// Without a restriction L = sum_g s_g^2. Throws numeric_error if the
// restriction excludes a diagonal pair (variances cannot be restricted
// to zero).
PairIndex build_pair_index(const ClusterPartition& partition,
                           const PairRestriction& restriction = nullptr);

}  // namespace crmc
