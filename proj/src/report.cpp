#include "crmc/report.hpp"

#include <cstdio>
#include <sstream>

#include "json.hpp"

#include "crmc/errors.hpp"

namespace crmc {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string sig6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

ordered_json json_vec(const Vec& v) {
  ordered_json arr = ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

ordered_json json_solver(const VarianceSolverInfo& s) {
  return ordered_json{{"storage", s.storage},
                      {"iterations", s.iterations},
                      {"residual_norm", s.residual_norm},
                      {"sigma_min_eigenvalue", s.sigma_min_eigenvalue}};
}

ordered_json json_diagnostics(const AssumptionDiagnostics& d) {
  return ordered_json{{"control_share", d.control_share},
                      {"min_m_diagonal", d.min_m_diagonal},
                      {"max_vhat_over_sqrt_n", d.max_vhat_over_sqrt_n},
                      {"gamma_min_eigenvalue", d.gamma_min_eigenvalue},
                      {"n", d.n},
                      {"num_clusters", d.num_clusters}};
}

void append_table(std::ostringstream& out,
                  const std::vector<std::string>& header,
                  const std::vector<std::vector<std::string>>& rows) {
  std::vector<size_t> width(header.size());
  for (size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& row : rows)
    for (size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  auto line = [&](const std::vector<std::string>& cells) {
    for (size_t c = 0; c < cells.size(); ++c) {
      out << cells[c];
      if (c + 1 < cells.size()) out << std::string(width[c] - cells[c].size() + 2, ' ');
    }
    out << '\n';
  };
  line(header);
  for (const auto& row : rows) line(row);
}

}  // namespace

OutputFormat parse_output_format(const std::string& name) {
  if (name == "text") return OutputFormat::Text;
  if (name == "json") return OutputFormat::Json;
  if (name == "csv") return OutputFormat::Csv;
  throw config_error("unknown output format '" + name + "' (text, json, csv)");
}

std::string render_fit_report(const FitReport& report, OutputFormat format) {
  if (format == OutputFormat::Json) {
    ordered_json j;
    j["schema_version"] = "crmc-fit/1";
    j["n"] = report.n;
    j["d"] = report.d;
    j["k_controls"] = report.k_controls;
    j["k_eff"] = report.k_eff;
    j["num_clusters"] = report.num_clusters;
    j["coefficients"] = report.coefficient_names;
    j["dropped_controls"] = report.dropped_controls;
    j["diagnostics"] = json_diagnostics(report.diagnostics);
    ordered_json ests = ordered_json::array();
    for (size_t e = 0; e < report.estimates.size(); ++e) {
      const auto& rep = report.estimates[e];
      ordered_json je;
      je["method"] = variance_method_name(rep.method);
      je["alpha"] = rep.alpha;
      je["beta"] = json_vec(rep.beta);
      je["std_errors"] = json_vec(rep.std_errors);
      je["ci_lower"] = json_vec(rep.ci_lower);
      je["ci_upper"] = json_vec(rep.ci_upper);
      je["p_values"] = json_vec(rep.p_values);
      je["solver"] = json_solver(report.solver_infos[e]);
      ests.push_back(std::move(je));
    }
    j["estimates"] = std::move(ests);
    if (report.kappa_inf_norm) j["kappa_inf_norm"] = *report.kappa_inf_norm;
    return j.dump(2) + "\n";
  }

  if (format == OutputFormat::Csv) {
    std::ostringstream out;
    out << "coefficient,method,beta,std_error,ci_lower,ci_upper,p_value\n";
    for (size_t e = 0; e < report.estimates.size(); ++e) {
      const auto& rep = report.estimates[e];
      for (Eigen::Index k = 0; k < rep.beta.size(); ++k) {
        out << report.coefficient_names[static_cast<size_t>(k)] << ','
            << variance_method_name(rep.method) << ',' << full(rep.beta(k)) << ','
            << full(rep.std_errors(k)) << ',' << full(rep.ci_lower(k)) << ','
            << full(rep.ci_upper(k)) << ',' << full(rep.p_values(k)) << '\n';
      }
    }
    return out.str();
  }

  std::ostringstream out;
  out << "n = " << report.n << ", d = " << report.d << ", controls = " << report.k_controls
      << " (k_eff = " << report.k_eff << "), clusters = " << report.num_clusters << "\n";
  if (!report.dropped_controls.empty()) {
    out << "warning: dropped collinear controls:";
    for (const auto& c : report.dropped_controls) out << ' ' << c;
    out << "\n";
  }
  for (size_t e = 0; e < report.estimates.size(); ++e) {
    const auto& rep = report.estimates[e];
    out << "\n[" << variance_method_name(rep.method) << "]  alpha = " << sig6(rep.alpha)
        << ", storage = " << report.solver_infos[e].storage << "\n";
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index k = 0; k < rep.beta.size(); ++k)
      rows.push_back({report.coefficient_names[static_cast<size_t>(k)], sig6(rep.beta(k)),
                      sig6(rep.std_errors(k)), sig6(rep.ci_lower(k)), sig6(rep.ci_upper(k)),
                      sig6(rep.p_values(k))});
    append_table(out, {"coef", "estimate", "std_error", "ci_lower", "ci_upper", "p"}, rows);
  }
  if (report.kappa_inf_norm)
    out << "\nkappa_inf_norm = " << sig6(*report.kappa_inf_norm) << "\n";
  out << "\ndiagnostics: K_eff/n = " << sig6(report.diagnostics.control_share)
      << ", min M_ii = " << sig6(report.diagnostics.min_m_diagonal)
      << ", max |v_i|/sqrt(n) = " << sig6(report.diagnostics.max_vhat_over_sqrt_n)
      << ", lambda_min(Gamma) = " << sig6(report.diagnostics.gamma_min_eigenvalue) << "\n";
  return out.str();
}

std::string render_diagnostics(const FitReport& report, OutputFormat format) {
  if (format == OutputFormat::Json) {
    ordered_json j;
    j["schema_version"] = "crmc-diagnose/1";
    j["n"] = report.n;
    j["k_controls"] = report.k_controls;
    j["k_eff"] = report.k_eff;
    j["num_clusters"] = report.num_clusters;
    j["dropped_controls"] = report.dropped_controls;
    j["diagnostics"] = json_diagnostics(report.diagnostics);
    return j.dump(2) + "\n";
  }
  if (format == OutputFormat::Csv) {
    std::ostringstream out;
    out << "metric,value\n";
    out << "n," << report.n << "\n";
    out << "k_eff," << report.k_eff << "\n";
    out << "num_clusters," << report.num_clusters << "\n";
    out << "control_share," << full(report.diagnostics.control_share) << "\n";
    out << "min_m_diagonal," << full(report.diagnostics.min_m_diagonal) << "\n";
    out << "max_vhat_over_sqrt_n," << full(report.diagnostics.max_vhat_over_sqrt_n) << "\n";
    out << "gamma_min_eigenvalue," << full(report.diagnostics.gamma_min_eigenvalue) << "\n";
    return out.str();
  }
  std::ostringstream out;
  out << "n = " << report.n << ", controls = " << report.k_controls << " (k_eff = "
      << report.k_eff << "), clusters = " << report.num_clusters << "\n"
      << "K_eff/n            = " << sig6(report.diagnostics.control_share) << "\n"
      << "min M_ii           = " << sig6(report.diagnostics.min_m_diagonal) << "\n"
      << "max |v_i|/sqrt(n)  = " << sig6(report.diagnostics.max_vhat_over_sqrt_n) << "\n"
      << "lambda_min(Gamma)  = " << sig6(report.diagnostics.gamma_min_eigenvalue) << "\n";
  if (!report.dropped_controls.empty()) {
    out << "dropped collinear controls:";
    for (const auto& c : report.dropped_controls) out << ' ' << c;
    out << "\n";
  }
  return out.str();
}

std::string render_mc_summary(const MonteCarloSummary& s, OutputFormat format) {
  if (format == OutputFormat::Json) {
    ordered_json j;
    j["schema_version"] = "crmc-simulate/1";
    j["reps"] = s.reps;
    j["failures"] = s.failures;
    j["alpha"] = s.alpha;
    j["n"] = s.n;
    j["G"] = s.G;
    j["k_eff_mean"] = s.k_eff_mean;
    j["beta_mean"] = s.beta_mean;
    j["beta_variance"] = s.beta_variance;
    j["omega_target"] = s.omega_target;
    auto add = [&](const char* name, const std::optional<EstimatorMcStats>& st) {
      if (!st) return;
      j[name] = ordered_json{{"omega_mean", st->omega_mean},
                             {"omega_sd", st->omega_sd},
                             {"bias_pct", st->bias_pct},
                             {"coverage", st->coverage},
                             {"p_hat", 1.0 - st->coverage},
                             {"failures", st->failures}};
    };
    add("unfeasible", s.unfeasible);
    add("lz", s.lz);
    add("cr", s.cr);
    if (s.kappa_norm_mean) {
      j["kappa_inf_norm"] = ordered_json{{"mean", *s.kappa_norm_mean},
                                         {"sd", *s.kappa_norm_sd}};
    }
    return j.dump(2) + "\n";
  }

  if (format == OutputFormat::Csv) {
    std::ostringstream out;
    out << "estimator,omega_mean,omega_sd,bias_pct,coverage,p_hat,failures\n";
    auto add = [&](const char* name, const std::optional<EstimatorMcStats>& st) {
      if (!st) return;
      out << name << ',' << full(st->omega_mean) << ',' << full(st->omega_sd) << ','
          << full(st->bias_pct) << ',' << full(st->coverage) << ','
          << full(1.0 - st->coverage) << ',' << st->failures << '\n';
    };
    add("unfeasible", s.unfeasible);
    add("lz", s.lz);
    add("cr", s.cr);
    return out.str();
  }

  std::ostringstream out;
  out << "reps = " << s.reps << " (failures " << s.failures << "), n = " << s.n
      << ", G = " << s.G << ", mean k_eff = " << sig6(s.k_eff_mean) << "\n"
      << "beta: mean = " << sig6(s.beta_mean) << ", variance = " << sig6(s.beta_variance)
      << ", n*Var = " << sig6(s.omega_target) << "\n\n";
  std::vector<std::vector<std::string>> rows;
  auto add = [&](const char* name, const std::optional<EstimatorMcStats>& st) {
    if (!st) return;
    rows.push_back({name, sig6(st->omega_mean), sig6(st->omega_sd), sig6(st->bias_pct),
                    sig6(st->coverage), sig6(1.0 - st->coverage),
                    std::to_string(st->failures)});
  };
  add("unfeasible", s.unfeasible);
  add("lz", s.lz);
  add("cr", s.cr);
  append_table(out, {"estimator", "mean", "sd", "bias%", "coverage", "p_hat", "failures"},
               rows);
  if (s.kappa_norm_mean)
    out << "\nkappa_inf_norm: mean = " << sig6(*s.kappa_norm_mean)
        << ", sd = " << sig6(*s.kappa_norm_sd) << "\n";
  return out.str();
}

}  // namespace crmc
