#include "crmc/dataset.hpp"

#include <algorithm>
#include <unordered_map>

#include "crmc/errors.hpp"

namespace crmc {

void Dataset::validate() const {
  const Eigen::Index nn = y.size();
  if (nn < 1) throw data_error("dataset is empty");
  if (X.rows() != nn) throw data_error("X row count does not match y");
  if (X.cols() < 1) throw data_error("at least one regressor of interest is required");
  if (W.cols() > 0 && W.rows() != nn) throw data_error("W row count does not match y");
  if (static_cast<Eigen::Index>(cluster_id.size()) != nn)
    throw data_error("cluster assignment length does not match y");
  if (!y.allFinite()) throw data_error("non-finite value in outcome column");
  if (!X.allFinite()) throw data_error("non-finite value in regressors of interest");
  if (W.size() > 0 && !W.allFinite()) throw data_error("non-finite value in controls");
}

int ClusterPartition::max_size() const {
  int m = 0;
  for (int s : sizes) m = std::max(m, s);
  return m;
}

ClusterPartition partition_clusters(std::span<const std::int64_t> cluster_id) {
  if (cluster_id.empty()) throw data_error("cannot partition an empty cluster vector");
  ClusterPartition out;
  out.n = static_cast<int>(cluster_id.size());
  std::unordered_map<std::int64_t, int> first_seen;
  first_seen.reserve(cluster_id.size());
  for (int i = 0; i < out.n; ++i) {
    auto [it, inserted] = first_seen.try_emplace(cluster_id[i], out.num_clusters());
    if (inserted) out.groups.emplace_back();
    out.groups[it->second].push_back(i);
  }
  out.sizes.reserve(out.groups.size());
  for (const auto& g : out.groups) out.sizes.push_back(static_cast<int>(g.size()));
  return out;
}

}  // namespace crmc
