#include <algorithm>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "crmc/csv.hpp"
#include "crmc/errors.hpp"
#include "crmc/inference.hpp"
#include "crmc/monte_carlo.hpp"
#include "crmc/report.hpp"
#include "crmc/rng.hpp"
#include "crmc/transforms.hpp"
#include "crmc/variance.hpp"

namespace {

using namespace crmc;

// Applies a key=value config file by appending "--key value" tokens for
// keys the command line did not set, so explicit flags always win.
void expand_config_arguments(std::vector<std::string>& args) {
  std::string path;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file '" + path + "'");
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    const size_t b = line.find_last_not_of(" \t\r");
    line = line.substr(a, b - a + 1);
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("config file line " + std::to_string(line_no) +
                         ": expected key=value");
    auto trim = [](std::string s) {
      const size_t x = s.find_first_not_of(" \t");
      const size_t y = s.find_last_not_of(" \t");
      return x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) continue;
    const std::string flag = "--" + key;
    bool already_set = false;
    for (const auto& arg : args)
      if (arg == flag || arg.rfind(flag + "=", 0) == 0) already_set = true;
    if (already_set) continue;
    if (value == "true") {
      args.push_back(flag);
    } else if (value == "false") {
      continue;
    } else {
      args.push_back(flag);
      args.push_back(value);
    }
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const size_t a = tok.find_first_not_of(" \t");
    const size_t b = tok.find_last_not_of(" \t");
    if (a != std::string::npos) out.push_back(tok.substr(a, b - a + 1));
  }
  return out;
}

void emit(const std::string& text, const std::string& output_path) {
  if (output_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(output_path, std::ios::binary);
  if (!out) throw config_error("cannot open output file '" + output_path + "'");
  out << text;
}

KappaMode parse_mode(const std::string& name) {
  if (name == "auto") return KappaMode::Auto;
  if (name == "dense") return KappaMode::Dense;
  if (name == "dense-collapsed") return KappaMode::DenseCollapsed;
  if (name == "matrix-free") return KappaMode::MatrixFree;
  throw config_error("unknown solver mode '" + name +
                     "' (auto, dense, dense-collapsed, matrix-free)");
}

struct FitArgs {
  std::string input, y, cluster, transforms, output, config_path;
  std::string x_list, w_list, absorb_list;
  std::string estimators = "lz,cr";
  std::string format = "text";
  std::string solver_mode = "auto";
  double alpha = 0.05;
  double rank_tol = 1e-10;
  double solver_tol = 1e-10;
  long dense_threshold = 4000;
  bool kappa_norm = false;
};

FitReport run_fit_pipeline(const FitArgs& args, bool diagnostics_only) {
  const auto xs = split_list(args.x_list);
  const auto ws = split_list(args.w_list);
  const auto absorbs = split_list(args.absorb_list);
  if (args.input.empty()) throw config_error("--input is required");
  if (args.y.empty()) throw config_error("--y is required");
  if (xs.empty()) throw config_error("at least one --x column is required");
  if (args.cluster.empty()) throw config_error("--cluster is required");

  const CsvTable table = read_csv_file(args.input);
  RegressionFrame frame = make_frame(table, args.y, xs, ws, args.cluster, absorbs);
  if (!args.transforms.empty())
    apply_transforms(frame, read_transform_spec_file(args.transforms));
  absorb_factors(frame, absorbs);
  const Dataset data = assemble_dataset(frame);

  const ClusterPartition partition = partition_clusters(data.cluster_id);
  const AnnihilatorOperator op = compute_annihilator(data.W, args.rank_tol);
  const FitResult fit = fit_ols(data, op);

  FitReport report;
  report.n = static_cast<int>(data.n());
  report.d = static_cast<int>(data.d());
  report.k_controls = static_cast<int>(data.num_controls());
  report.k_eff = op.k_eff();
  report.num_clusters = partition.num_clusters();
  report.coefficient_names = frame.x_names;
  std::vector<bool> kept(frame.w_names.size(), false);
  for (int c : op.retained_columns()) kept[static_cast<size_t>(c)] = true;
  for (size_t c = 0; c < kept.size(); ++c)
    if (!kept[c]) report.dropped_controls.push_back(frame.w_names[c]);
  report.diagnostics = assumption_diagnostics(op, fit, partition);
  if (diagnostics_only) return report;

  SolverOptions solver;
  solver.mode = parse_mode(args.solver_mode);
  solver.tol = args.solver_tol;
  solver.dense_threshold = args.dense_threshold;

  bool want_cr = false;
  for (const auto& est : split_list(args.estimators)) {
    if (est == "cr") {
      want_cr = true;
      continue;
    }
    if (est == "lz") {
      const VarianceEstimate var = sigma_lz(fit, partition);
      report.estimates.push_back(confidence_interval(fit, var, args.alpha));
      report.solver_infos.push_back(var.solver);
    } else if (est == "unf" || est == "unfeasible") {
      throw config_error("the unfeasible estimator needs true error draws; it is "
                         "available in `simulate` only");
    } else {
      throw config_error("unknown estimator '" + est + "' (lz, cr)");
    }
  }
  if (want_cr) {
    const PairIndex idx = build_pair_index(partition);
    const KappaSystem sys = build_kappa_system(op, idx, solver.mode, solver.dense_threshold);
    const VarianceEstimate var = sigma_cr(fit, sys, solver);
    report.estimates.push_back(confidence_interval(fit, var, args.alpha));
    report.solver_infos.push_back(var.solver);
    if (args.kappa_norm) {
      // collapsed storage cannot expose the ordered correction matrix
      if (solver.mode == KappaMode::DenseCollapsed) {
        const KappaSystem ordered =
            build_kappa_system(op, idx, KappaMode::Auto, solver.dense_threshold);
        report.kappa_inf_norm = ordered.inf_norm_inverse(KappaNormMode::Auto, solver.tol);
      } else {
        report.kappa_inf_norm = sys.inf_norm_inverse(KappaNormMode::Auto, solver.tol);
      }
    }
  }
  if (report.estimates.empty() && !diagnostics_only)
    throw config_error("no estimator requested");
  return report;
}

void add_fit_options(CLI::App* cmd, FitArgs& args, bool diagnostics_only) {
  cmd->add_option("--config", args.config_path,
                  "key=value file mirroring the flags; flags override");
  cmd->add_option("--input", args.input, "input CSV path");
  cmd->add_option("--y", args.y, "outcome column");
  cmd->add_option("--x", args.x_list, "regressor-of-interest columns (comma separated)");
  cmd->add_option("--w", args.w_list, "control columns (comma separated)");
  cmd->add_option("--cluster", args.cluster, "cluster id column");
  cmd->add_option("--absorb", args.absorb_list, "categorical columns to absorb");
  cmd->add_option("--transforms", args.transforms, "transform spec file");
  cmd->add_option("--format", args.format, "text | json | csv");
  cmd->add_option("--output", args.output, "write the report here instead of stdout");
  cmd->add_option("--rank-tol", args.rank_tol, "relative rank tolerance for the controls");
  if (!diagnostics_only) {
    cmd->add_option("--estimators", args.estimators, "subset of lz,cr");
    cmd->add_option("--alpha", args.alpha, "two-sided interval level");
    cmd->add_option("--solver-mode", args.solver_mode,
                    "auto | dense | dense-collapsed | matrix-free");
    cmd->add_option("--solver-tol", args.solver_tol, "relative residual tolerance");
    cmd->add_option("--dense-threshold", args.dense_threshold,
                    "largest L solved with a dense factorization");
    cmd->add_flag("--kappa-norm", args.kappa_norm, "also report ||kappa||_inf");
  }
}

struct SimArgs {
  std::string preset, design, control_kind = "continuous", format = "text", output;
  std::string config_path;
  std::string estimators = "unf,lz,cr";
  std::string solver_mode = "matrix-free";
  std::string kappa_norm_mode = "auto";
  long reps = 1000;
  std::uint64_t seed = 20240101;
  double alpha = 0.05;
  int n = 700, G = 175, K = 141, T = 0, N_d = 0;
  double rho = 0.3, beta = 1.0;
  int threads = 0;
  bool no_parallel = false, no_kappa_norms = false, list_presets = false;
};

int run_simulate(const SimArgs& args) {
  if (args.list_presets) {
    for (const auto& name : preset_names()) std::cout << name << "\n";
    return 0;
  }
  DesignSpec spec;
  if (!args.preset.empty()) {
    spec = preset_design(args.preset);
  } else {
    if (args.design == "many-controls") spec.variant = DesignVariant::ManyControls;
    else if (args.design == "partially-linear") spec.variant = DesignVariant::PartiallyLinear;
    else if (args.design == "twoway-fe") spec.variant = DesignVariant::TwowayFixedEffects;
    else throw config_error("--design must be many-controls, partially-linear or twoway-fe "
                            "(or use --preset)");
    spec.n = args.n;
    spec.G = args.G;
    spec.K = args.K;
    spec.rho = args.rho;
    spec.beta = args.beta;
    spec.T = args.T;
    spec.N_d = args.N_d;
    if (args.control_kind == "continuous") spec.control_kind = ControlKind::Continuous;
    else if (args.control_kind == "discrete") spec.control_kind = ControlKind::Discrete;
    else throw config_error("--control-kind must be continuous or discrete");
    if (spec.variant == DesignVariant::TwowayFixedEffects) {
      if (spec.T <= 0) throw config_error("twoway-fe needs --t");
      if (spec.N_d <= 0) throw config_error("twoway-fe needs --nd");
      spec.n = spec.G * spec.T;
      spec.K = std::max(0, spec.N_d - 1);
    }
  }

  MonteCarloConfig cfg;
  cfg.reps = args.reps;
  cfg.seed = args.seed;
  cfg.alpha = args.alpha;
  cfg.use_unfeasible = cfg.use_lz = cfg.use_cr = false;
  for (const auto& est : split_list(args.estimators)) {
    if (est == "unf" || est == "unfeasible") cfg.use_unfeasible = true;
    else if (est == "lz") cfg.use_lz = true;
    else if (est == "cr") cfg.use_cr = true;
    else throw config_error("unknown estimator '" + est + "' (unf, lz, cr)");
  }
  if (!cfg.use_unfeasible && !cfg.use_lz && !cfg.use_cr)
    throw config_error("no estimator requested");
  cfg.kappa_norms = !args.no_kappa_norms;
  if (args.kappa_norm_mode == "auto") cfg.kappa_norm_mode = KappaNormMode::Auto;
  else if (args.kappa_norm_mode == "exact") cfg.kappa_norm_mode = KappaNormMode::Exact;
  else if (args.kappa_norm_mode == "estimate") cfg.kappa_norm_mode = KappaNormMode::Estimate;
  else throw config_error("--kappa-norm-mode must be auto, exact or estimate");
  cfg.parallel = !args.no_parallel;
  cfg.threads = args.threads;
  cfg.solver.mode = parse_mode(args.solver_mode);

  const MonteCarloSummary summary = run_monte_carlo(spec, cfg);
  emit(render_mc_summary(summary, parse_output_format(args.format)), args.output);
  return 0;
}

struct OracleArgs {
  int n = 6;
  std::string clusters = "3x2";
  int K = 2;
  std::uint64_t seed = 1;
  double tol = 1e-10;
};

std::vector<std::int64_t> parse_cluster_spec(const std::string& spec, int n) {
  std::vector<int> sizes;
  const size_t x = spec.find('x');
  if (x != std::string::npos) {
    const int g = std::stoi(spec.substr(0, x));
    const int s = std::stoi(spec.substr(x + 1));
    if (g < 1 || s < 1) throw config_error("invalid --clusters spec '" + spec + "'");
    sizes.assign(static_cast<size_t>(g), s);
  } else {
    for (const auto& tok : split_list(spec)) sizes.push_back(std::stoi(tok));
  }
  int total = 0;
  for (int s : sizes) total += s;
  if (total != n)
    throw config_error("--clusters sizes sum to " + std::to_string(total) +
                       ", expected n=" + std::to_string(n));
  std::vector<std::int64_t> ids;
  ids.reserve(static_cast<size_t>(n));
  for (size_t g = 0; g < sizes.size(); ++g)
    for (int k = 0; k < sizes[g]; ++k) ids.push_back(static_cast<std::int64_t>(g));
  return ids;
}

// Full-size cross-check of the correction system: the entrywise build
// against the n^2 x n^2 Kronecker product with explicit column selection,
// and the solve route against an explicitly inverted correction matrix.
int run_oracle_check(const OracleArgs& args) {
  if (args.n > 16) throw config_error("oracle-check is limited to n <= 16");
  if (args.K >= args.n) throw config_error("oracle-check needs K < n");

  Philox4x32 rng(args.seed, 7);
  std::normal_distribution<double> nrm(0.0, 1.0);
  Dataset data;
  data.W.resize(args.n, args.K);
  for (int i = 0; i < args.n; ++i)
    for (int k = 0; k < args.K; ++k) data.W(i, k) = nrm(rng);
  data.X.resize(args.n, 1);
  data.y.resize(args.n);
  for (int i = 0; i < args.n; ++i) {
    data.X(i, 0) = nrm(rng);
    data.y(i) = data.X(i, 0) + nrm(rng);
  }
  data.cluster_id = parse_cluster_spec(args.clusters, args.n);

  const ClusterPartition partition = partition_clusters(data.cluster_id);
  const PairIndex idx = build_pair_index(partition);
  const AnnihilatorOperator op = compute_annihilator(data.W);
  const KappaSystem sys = build_kappa_system(op, idx, KappaMode::Dense);

  // Independent dense route: M by explicit inversion, then the Kronecker
  // product, then column selection at vec positions (j-1)n + i.
  const int n = args.n;
  Mat m_brute = Mat::Identity(n, n);
  if (args.K > 0) {
    const Mat wtw = data.W.transpose() * data.W;
    m_brute -= data.W * wtw.inverse() * data.W.transpose();
  }
  Mat kron(n * n, n * n);
  for (int r1 = 0; r1 < n; ++r1)
    for (int r2 = 0; r2 < n; ++r2)
      for (int c1 = 0; c1 < n; ++c1)
        for (int c2 = 0; c2 < n; ++c2)
          kron(r1 * n + r2, c1 * n + c2) = m_brute(r1, c1) * m_brute(r2, c2);
  const long L = idx.size();
  Mat a_brute(L, L);
  auto vec_pos = [n](const PairIndex::Pair& p) { return p.j * n + p.i; };
  for (long a = 0; a < L; ++a)
    for (long b = 0; b < L; ++b)
      a_brute(a, b) = kron(vec_pos(idx.pairs[static_cast<size_t>(a)]),
                           vec_pos(idx.pairs[static_cast<size_t>(b)]));

  const double a_diff = (sys.dense_matrix() - a_brute).cwiseAbs().maxCoeff();

  const FitResult fit = fit_ols(data, op);
  const Mat kappa_explicit = a_brute.fullPivLu().inverse();
  const VarianceEstimate via_kappa = sigma_general(fit, idx, kappa_explicit);
  const VarianceEstimate via_solve = sigma_cr(fit, sys);
  const double sigma_diff = (via_kappa.sigma - via_solve.sigma).cwiseAbs().maxCoeff();

  const bool ok = a_diff <= args.tol && sigma_diff <= args.tol;
  std::cout << "kronecker-entry check: max |A - S'(MxM)S| = " << a_diff
            << (a_diff <= args.tol ? "  PASS" : "  FAIL") << "\n";
  std::cout << "explicit-kappa check:  max |Sigma(kappa) - Sigma_cr| = " << sigma_diff
            << (sigma_diff <= args.tol ? "  PASS" : "  FAIL") << "\n";
  return ok ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cluster-robust inference for linear models with many controls"};
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "estimate and report from a CSV file");
  add_fit_options(fit_cmd, fit_args, false);

  FitArgs diag_args;
  auto* diag_cmd = app.add_subcommand("diagnose", "assumption diagnostics only");
  add_fit_options(diag_cmd, diag_args, true);

  SimArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo coverage study");
  sim_cmd->add_option("--config", sim_args.config_path,
                      "key=value file mirroring the flags; flags override");
  sim_cmd->add_option("--preset", sim_args.preset, "named design preset");
  sim_cmd->add_flag("--list-presets", sim_args.list_presets, "print preset names and exit");
  sim_cmd->add_option("--design", sim_args.design,
                      "many-controls | partially-linear | twoway-fe");
  sim_cmd->add_option("--n", sim_args.n, "sample size");
  sim_cmd->add_option("--g", sim_args.G, "number of clusters / individuals");
  sim_cmd->add_option("--k", sim_args.K, "control count or basis size");
  sim_cmd->add_option("--t", sim_args.T, "panel length (twoway-fe)");
  sim_cmd->add_option("--nd", sim_args.N_d, "matched categories (twoway-fe)");
  sim_cmd->add_option("--rho", sim_args.rho, "error recursion coefficient");
  sim_cmd->add_option("--beta", sim_args.beta, "true coefficient");
  sim_cmd->add_option("--control-kind", sim_args.control_kind, "continuous | discrete");
  sim_cmd->add_option("--reps", sim_args.reps, "replications");
  sim_cmd->add_option("--seed", sim_args.seed, "stream seed");
  sim_cmd->add_option("--alpha", sim_args.alpha, "interval level");
  sim_cmd->add_option("--estimators", sim_args.estimators, "subset of unf,lz,cr");
  sim_cmd->add_flag("--no-kappa-norms", sim_args.no_kappa_norms,
                    "skip the per-replication ||kappa||_inf statistics");
  sim_cmd->add_option("--kappa-norm-mode", sim_args.kappa_norm_mode,
                      "auto | exact | estimate");
  sim_cmd->add_option("--threads", sim_args.threads,
                      "worker threads (default: CRMC_THREADS, then hardware)");
  sim_cmd->add_flag("--no-parallel", sim_args.no_parallel, "run replications serially");
  sim_cmd->add_option("--solver-mode", sim_args.solver_mode,
                      "auto | dense | dense-collapsed | matrix-free");
  sim_cmd->add_option("--format", sim_args.format, "text | json | csv");
  sim_cmd->add_option("--output", sim_args.output, "write the summary here");

  OracleArgs oracle_args;
  auto* oracle_cmd = app.add_subcommand(
      "oracle-check", "brute-force Kronecker validation of the correction system");
  oracle_cmd->add_option("--n", oracle_args.n, "sample size (<= 16)");
  oracle_cmd->add_option("--clusters", oracle_args.clusters, "GxS or comma-separated sizes");
  oracle_cmd->add_option("--k", oracle_args.K, "number of random controls");
  oracle_cmd->add_option("--seed", oracle_args.seed, "rng seed");
  oracle_cmd->add_option("--tol", oracle_args.tol, "pass tolerance");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    expand_config_arguments(args);
    std::reverse(args.begin(), args.end());  // CLI11 vector parse pops from the back
    app.parse(args);
    if (fit_cmd->parsed()) {
      const FitReport report = run_fit_pipeline(fit_args, false);
      emit(render_fit_report(report, parse_output_format(fit_args.format)),
           fit_args.output);
      return 0;
    }
    if (diag_cmd->parsed()) {
      const FitReport report = run_fit_pipeline(diag_args, true);
      emit(render_diagnostics(report, parse_output_format(diag_args.format)),
           diag_args.output);
      return 0;
    }
    if (sim_cmd->parsed()) return run_simulate(sim_args);
    if (oracle_cmd->parsed()) return run_oracle_check(oracle_args);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const numeric_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
