#include "crmc/pair_index.hpp"

#include <algorithm>

#include "crmc/errors.hpp"

namespace crmc {

long PairIndex::swap_position(long a) const {
  const Pair& p = pairs[static_cast<size_t>(a)];
  if (p.li == p.lj) return a;
  const long lo = cluster_offset[p.g];
  const long hi = cluster_offset[p.g + 1];
  // Pairs within a cluster are sorted by (li, lj).
  auto begin = pairs.begin() + lo;
  auto end = pairs.begin() + hi;
  auto it = std::lower_bound(begin, end, std::make_pair(p.lj, p.li),
                             [](const Pair& q, const std::pair<int, int>& key) {
                               return std::make_pair(q.li, q.lj) < key;
                             });
  if (it == end || it->li != p.lj || it->lj != p.li)
    throw numeric_error("pair index is not closed under swaps");
  return it - pairs.begin();
}

PairIndex build_pair_index(const ClusterPartition& partition,
                           const PairRestriction& restriction) {
  PairIndex idx;
  idx.groups = partition.groups;
  idx.restricted = static_cast<bool>(restriction);
  idx.cluster_offset.assign(1, 0);
  idx.cluster_offset.reserve(partition.num_clusters() + 1);

  long total = 0;
  for (int s : partition.sizes) total += static_cast<long>(s) * s;
  idx.pairs.reserve(static_cast<size_t>(total));

  for (int g = 0; g < partition.num_clusters(); ++g) {
    const auto& rows = partition.groups[g];
    const int s = static_cast<int>(rows.size());
    for (int li = 0; li < s; ++li) {
      if (restriction && !restriction(li, li))
        throw numeric_error("restriction excludes a diagonal pair; variances cannot be "
                            "restricted to zero");
      for (int lj = 0; lj < s; ++lj) {
        // The covariance matrix is symmetric, so admissibility is symmetrized.
        if (restriction && li != lj && !restriction(li, lj) && !restriction(lj, li))
          continue;
        idx.pairs.push_back({g, rows[li], rows[lj], li, lj});
      }
    }
    idx.cluster_offset.push_back(static_cast<long>(idx.pairs.size()));
  }
  return idx;
}

}  // namespace crmc
