#include "crmc/monte_carlo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "crmc/errors.hpp"
#include "crmc/inference.hpp"
#include "crmc/variance.hpp"

namespace crmc {

namespace {

struct EstimatorRecord {
  bool ok = false;
  double omega = 0.0;
  bool covered = false;
};

struct RepRecord {
  bool fit_ok = false;
  double beta = 0.0;
  double k_eff = 0.0;
  EstimatorRecord unf, lz, cr;
  bool kappa_ok = false;
  double kappa = 0.0;
};

// Fold one variance estimate into coverage bookkeeping. The interval is the
// Gaussian one around beta_hat; coverage is of the true beta.
EstimatorRecord evaluate(const FitResult& fit, const VarianceEstimate& var,
                         double true_beta, double z) {
  EstimatorRecord rec;
  const Mat omega = sandwich(fit, var);
  rec.omega = omega(0, 0);
  if (!(rec.omega > 0.0)) return rec;  // undefined standard error
  const double se = std::sqrt(rec.omega / static_cast<double>(fit.n()));
  rec.covered = std::abs(fit.beta(0) - true_beta) <= z * se;
  rec.ok = true;
  return rec;
}

RepRecord run_replication(const DesignSpec& design, const DesignConstants& constants,
                          const MonteCarloConfig& cfg, long rep, double z) {
  RepRecord rec;
  Philox4x32 rng(cfg.seed, static_cast<std::uint64_t>(rep) + 1);
  try {
    const SimulatedData sim = generate_design(design, constants, rng);
    const ClusterPartition partition = partition_clusters(sim.data.cluster_id);
    const AnnihilatorOperator op = compute_annihilator(sim.data.W);
    const FitResult fit = fit_ols(sim.data, op);
    rec.beta = fit.beta(0);
    rec.k_eff = op.k_eff();
    rec.fit_ok = true;

    if (cfg.use_unfeasible) {
      try {
        rec.unf = evaluate(fit, sigma_unfeasible(fit, partition, sim.true_errors),
                           design.beta, z);
      } catch (const numeric_error&) {}
    }
    if (cfg.use_lz) {
      try {
        rec.lz = evaluate(fit, sigma_lz(fit, partition), design.beta, z);
      } catch (const numeric_error&) {}
    }
    if (cfg.use_cr || cfg.kappa_norms) {
      const PairIndex idx = build_pair_index(partition);
      const KappaSystem sys =
          build_kappa_system(op, idx, cfg.solver.mode, cfg.solver.dense_threshold);
      if (cfg.use_cr) {
        try {
          rec.cr = evaluate(fit, sigma_cr(fit, sys, cfg.solver), design.beta, z);
        } catch (const numeric_error&) {}
      }
      if (cfg.use_cr && cfg.kappa_norms) {
        try {
          rec.kappa = sys.inf_norm_inverse(cfg.kappa_norm_mode, cfg.solver.tol,
                                           cfg.solver.max_iter);
          rec.kappa_ok = true;
        } catch (const numeric_error&) {}
      }
    }
  } catch (const std::exception&) {
    rec.fit_ok = false;
  }
  return rec;
}

struct Moments {
  long count = 0;
  double mean = 0.0;
  double m2 = 0.0;
  void add(double x) {
    ++count;
    const double delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta * (x - mean);
  }
  double variance() const { return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0; }
  double sd() const { return std::sqrt(variance()); }
};

}  // namespace

int resolve_thread_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("CRMC_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

MonteCarloSummary run_monte_carlo(const DesignSpec& design, const MonteCarloConfig& cfg) {
  design.validate();
  if (cfg.reps < 1) throw config_error("reps must be >= 1");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw config_error("alpha must lie in (0,1)");

  const DesignConstants constants = calibrate_constants(design, cfg.seed);
  const double z = normal_quantile(1.0 - cfg.alpha / 2.0);

  std::vector<RepRecord> records(static_cast<size_t>(cfg.reps));
  const int threads = cfg.parallel ? std::min<long>(resolve_thread_count(cfg.threads),
                                                    cfg.reps)
                                   : 1;
  if (threads <= 1) {
    for (long r = 0; r < cfg.reps; ++r)
      records[static_cast<size_t>(r)] = run_replication(design, constants, cfg, r, z);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    for (int t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (long r = t; r < cfg.reps; r += threads)
          records[static_cast<size_t>(r)] = run_replication(design, constants, cfg, r, z);
      });
    }
    for (auto& th : pool) th.join();
  }

  // Sequential aggregation in replication order keeps summaries bitwise
  // stable across thread counts.
  MonteCarloSummary sum;
  sum.reps = cfg.reps;
  sum.alpha = cfg.alpha;
  sum.n = design.n;
  sum.G = design.G;

  Moments beta_m, keff_m, kappa_m;
  Moments unf_m, lz_m, cr_m;
  long unf_cov = 0, lz_cov = 0, cr_cov = 0;
  long unf_fail = 0, lz_fail = 0, cr_fail = 0;
  for (const auto& rec : records) {
    if (!rec.fit_ok) {
      ++sum.failures;
      continue;
    }
    beta_m.add(rec.beta);
    keff_m.add(rec.k_eff);
    if (cfg.use_unfeasible) {
      if (rec.unf.ok) { unf_m.add(rec.unf.omega); unf_cov += rec.unf.covered; }
      else ++unf_fail;
    }
    if (cfg.use_lz) {
      if (rec.lz.ok) { lz_m.add(rec.lz.omega); lz_cov += rec.lz.covered; }
      else ++lz_fail;
    }
    if (cfg.use_cr) {
      if (rec.cr.ok) { cr_m.add(rec.cr.omega); cr_cov += rec.cr.covered; }
      else ++cr_fail;
    }
    if (rec.kappa_ok) kappa_m.add(rec.kappa);
  }
  if (beta_m.count == 0) throw numeric_error("every replication failed");

  sum.beta_mean = beta_m.mean;
  sum.beta_variance = beta_m.variance();
  sum.k_eff_mean = keff_m.mean;
  sum.omega_target = static_cast<double>(design.n) * sum.beta_variance;

  auto finish = [&](const Moments& m, long cov, long fails) {
    EstimatorMcStats st;
    st.failures = fails;
    if (m.count > 0) {
      st.omega_mean = m.mean;
      st.omega_sd = m.sd();
      st.coverage = static_cast<double>(cov) / static_cast<double>(m.count);
      if (sum.omega_target > 0.0)
        st.bias_pct = 100.0 * (m.mean - sum.omega_target) / sum.omega_target;
    }
    return st;
  };
  if (cfg.use_unfeasible) sum.unfeasible = finish(unf_m, unf_cov, unf_fail);
  if (cfg.use_lz) sum.lz = finish(lz_m, lz_cov, lz_fail);
  if (cfg.use_cr) sum.cr = finish(cr_m, cr_cov, cr_fail);
  if (kappa_m.count > 0) {
    sum.kappa_norm_mean = kappa_m.mean;
    sum.kappa_norm_sd = kappa_m.sd();
  }
  return sum;
}

namespace {

int nearest_basis_size(double target) {
  static constexpr int sizes[] = {1, 7, 13, 28, 34, 84, 90, 210, 216};
  int best = sizes[0];
  for (int s : sizes) {
    const double d_best = std::abs(static_cast<double>(best) - target);
    const double d_s = std::abs(static_cast<double>(s) - target);
    if (d_s < d_best || (d_s == d_best && s < best)) best = s;
  }
  return best;
}

struct PresetParams {
  int table = 0;
  int G = -1;
  int n = -1;
  double ratio = -1.0;
};

PresetParams parse_preset(const std::string& name) {
  PresetParams p;
  size_t pos = 0;
  bool first = true;
  while (pos <= name.size()) {
    size_t next = name.find(':', pos);
    if (next == std::string::npos) next = name.size();
    const std::string tok = name.substr(pos, next - pos);
    if (tok.empty()) throw config_error("invalid preset name '" + name + "'");
    try {
      if (first) {
        if (tok.rfind("table", 0) != 0) throw config_error("");
        p.table = std::stoi(tok.substr(5));
        first = false;
      } else if (tok[0] == 'G') {
        p.G = std::stoi(tok.substr(1));
      } else if (tok[0] == 'n') {
        p.n = std::stoi(tok.substr(1));
      } else if (tok[0] == 'K') {
        p.ratio = std::stod(tok.substr(1));
      } else {
        throw config_error("");
      }
    } catch (const std::exception&) {
      throw config_error("invalid preset name '" + name + "'");
    }
    pos = next + 1;
  }
  if (p.table == 0 || p.G < 0) throw config_error("invalid preset name '" + name + "'");
  return p;
}

}  // namespace

DesignSpec preset_design(const std::string& name) {
  const PresetParams p = parse_preset(name);
  DesignSpec spec;

  if (p.table >= 2 && p.table <= 5) {
    // Full Monte Carlo grids at n = 700 and G clusters.
    spec.n = p.n > 0 ? p.n : 700;
    spec.G = p.G;
    if (p.ratio < 0.0) throw config_error("preset '" + name + "' needs a K ratio");
    const double target = p.ratio * spec.n;
    switch (p.table) {
      case 2:
        spec.variant = DesignVariant::ManyControls;
        spec.control_kind = ControlKind::Continuous;
        spec.K = std::max(1, static_cast<int>(std::lround(target)));
        break;
      case 3:
        spec.variant = DesignVariant::ManyControls;
        spec.control_kind = ControlKind::Discrete;
        spec.K = std::max(1, static_cast<int>(std::lround(target)));
        break;
      case 4:
        spec.variant = DesignVariant::PartiallyLinear;
        spec.K = nearest_basis_size(target);
        break;
      case 5:
        spec.variant = DesignVariant::TwowayFixedEffects;
        if (700 % spec.G != 0)
          throw config_error("panel preset needs G dividing 700");
        spec.T = 700 / spec.G;
        spec.n = spec.G * spec.T;
        spec.N_d = std::max(1, static_cast<int>(std::lround(target)));
        spec.K = std::max(0, spec.N_d - 1);
        break;
    }
    spec.validate();
    return spec;
  }

  if (p.table >= 6 && p.table <= 15) {
    // kappa-norm grids: the G label encodes the cluster size 700 / G, the
    // cluster count scales with n.
    if (p.n <= 0) throw config_error("preset '" + name + "' needs an n value");
    if (p.G <= 0 || 700 % p.G != 0)
      throw config_error("preset '" + name + "' needs a G label dividing 700");
    const int cluster_size = 700 / p.G;
    if (p.n % cluster_size != 0)
      throw config_error("preset '" + name + "': n must be divisible by the cluster size " +
                         std::to_string(cluster_size));
    double ratio = p.ratio;
    spec.n = p.n;
    switch (p.table) {
      case 6: case 7: case 8:
        spec.variant = DesignVariant::ManyControls;
        spec.control_kind = ControlKind::Continuous;
        if (ratio < 0.0) ratio = p.table == 6 ? 0.2 : (p.table == 7 ? 0.3 : 0.4);
        spec.G = spec.n / cluster_size;
        spec.K = std::max(1, static_cast<int>(std::lround(ratio * spec.n)));
        break;
      case 9: case 10: case 11:
        spec.variant = DesignVariant::ManyControls;
        spec.control_kind = ControlKind::Discrete;
        if (ratio < 0.0) ratio = p.table == 9 ? 0.2 : (p.table == 10 ? 0.3 : 0.4);
        spec.G = spec.n / cluster_size;
        spec.K = std::max(1, static_cast<int>(std::lround(ratio * spec.n)));
        break;
      case 12: case 13: case 14:
        spec.variant = DesignVariant::PartiallyLinear;
        if (ratio < 0.0) ratio = p.table == 12 ? 0.2 : (p.table == 13 ? 0.3 : 0.4);
        spec.G = spec.n / cluster_size;
        spec.K = nearest_basis_size(ratio * spec.n);
        break;
      case 15:
        spec.variant = DesignVariant::TwowayFixedEffects;
        if (ratio < 0.0) ratio = 0.2;
        spec.T = cluster_size;
        spec.G = spec.n / spec.T;
        spec.N_d = std::max(1, static_cast<int>(std::lround(ratio * spec.n)));
        spec.K = std::max(0, spec.N_d - 1);
        break;
    }
    spec.validate();
    return spec;
  }
  throw config_error("unknown preset table in '" + name + "'");
}

std::vector<std::string> preset_names() {
  std::vector<std::string> names;
  const char* mc_ratios[] = {"0.001", "0.101", "0.201", "0.301", "0.401"};
  const char* pl_ratios[] = {"0.001", "0.010", "0.019", "0.040", "0.049",
                             "0.120", "0.129", "0.300", "0.309"};
  const char* tw_ratios[] = {"0.001", "0.100", "0.200", "0.250", "0.333"};
  for (const char* g : {"G175", "G70", "G35"}) {
    for (const char* r : mc_ratios) {
      names.push_back(std::string("table2:") + g + ":K" + r);
      names.push_back(std::string("table3:") + g + ":K" + r);
    }
    for (const char* r : pl_ratios) names.push_back(std::string("table4:") + g + ":K" + r);
    for (const char* r : tw_ratios) names.push_back(std::string("table5:") + g + ":K" + r);
  }
  for (int table = 6; table <= 15; ++table) {
    for (const char* g : {"G140", "G70", "G35"}) {
      const int size = 700 / std::stoi(std::string(g).substr(1));
      for (int base : {250, 500, 750, 1000}) {
        int n = base;
        while (n % size != 0) n -= 10;  // printed grids use nearby divisible sizes
        names.push_back("table" + std::to_string(table) + ":" + g + ":n" + std::to_string(n));
      }
    }
  }
  names.push_back("table15:G70:n510:K0.333");
  return names;
}

}  // namespace crmc
