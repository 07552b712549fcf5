#include "crmc/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "crmc/errors.hpp"

namespace crmc {

namespace {

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r");
  const size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

std::vector<std::string> split_args(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(trim(tok));
  return out;
}

}  // namespace

TransformSpec parse_transform_spec(const std::string& text) {
  TransformSpec spec;
  std::stringstream ss(text);
  std::string raw;
  long line_no = 0;
  while (std::getline(ss, raw)) {
    ++line_no;
    std::string line = trim(raw);
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = trim(line.substr(0, hash));
    if (line.empty()) continue;

    const size_t eq = line.find('=');
    if (eq != std::string::npos && line.find('(') == std::string::npos) {
      const std::string key = trim(line.substr(0, eq));
      if (key != "time")
        throw config_error("transform spec line " + std::to_string(line_no) +
                           ": unknown assignment '" + key + "'");
      spec.time_column = trim(line.substr(eq + 1));
      continue;
    }

    const size_t open = line.find('(');
    const size_t close = line.rfind(')');
    if (open == std::string::npos || close == std::string::npos || close < open)
      throw config_error("transform spec line " + std::to_string(line_no) +
                         ": expected op(args)");
    const std::string op = trim(line.substr(0, open));
    const auto args = split_args(line.substr(open + 1, close - open - 1));

    TransformStep step;
    if (op == "square" && args.size() == 1) {
      step.kind = TransformStep::Kind::Square;
      step.a = args[0];
    } else if (op == "interact" && args.size() == 2) {
      step.kind = TransformStep::Kind::Interact;
      step.a = args[0];
      step.b = args[1];
    } else if (op == "power" && args.size() == 2) {
      step.kind = TransformStep::Kind::Power;
      step.a = args[0];
      step.degree = std::stoi(args[1]);
      if (step.degree < 1 || step.degree > 5)
        throw config_error("transform spec line " + std::to_string(line_no) +
                           ": power degree must lie in 1..5");
    } else if (op == "trend_interact" && args.size() == 2) {
      step.kind = TransformStep::Kind::TrendInteract;
      step.a = args[0];
      step.degree = std::stoi(args[1]);
      if (step.degree < 1 || step.degree > 2)
        throw config_error("transform spec line " + std::to_string(line_no) +
                           ": trend degree must be 1 or 2");
    } else if (op == "group_demean" && args.size() == 1) {
      step.kind = TransformStep::Kind::GroupDemean;
      step.a = args[0];
    } else {
      throw config_error("transform spec line " + std::to_string(line_no) +
                         ": unknown op '" + op + "' or wrong arity");
    }
    spec.steps.push_back(std::move(step));
  }
  return spec;
}

TransformSpec read_transform_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open transform spec '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_transform_spec(buf.str());
}

int RegressionFrame::column(const std::string& name) const {
  for (size_t k = 0; k < names.size(); ++k)
    if (names[k] == name) return static_cast<int>(k);
  return -1;
}

const Vec& RegressionFrame::at(const std::string& name) const {
  const int k = column(name);
  if (k < 0) throw data_error("unknown column '" + name + "'");
  return columns[static_cast<size_t>(k)];
}

void RegressionFrame::append(const std::string& name, Vec values) {
  if (column(name) >= 0)
    throw config_error("generated column name '" + name + "' collides");
  names.push_back(name);
  columns.push_back(std::move(values));
}

RegressionFrame make_frame(const CsvTable& table, const std::string& y,
                           const std::vector<std::string>& x,
                           const std::vector<std::string>& w,
                           const std::string& cluster,
                           const std::vector<std::string>& categorical_cols) {
  RegressionFrame frame;
  frame.y_name = y;
  frame.x_names = x;
  frame.w_names = w;

  auto load = [&](const std::string& name) {
    if (frame.column(name) >= 0) return;
    frame.names.push_back(name);
    frame.columns.push_back(numeric_column(table, name));
  };
  load(y);
  for (const auto& c : x) load(c);
  for (const auto& c : w) load(c);
  // Remaining numeric columns stay available for transforms.
  for (const auto& name : table.names) {
    if (frame.column(name) >= 0) continue;
    if (name == cluster) continue;
    if (std::find(categorical_cols.begin(), categorical_cols.end(), name) !=
        categorical_cols.end())
      continue;
    try {
      load(name);
    } catch (const data_error&) {
      // non-numeric free column; usable only as a categorical
    }
  }

  frame.cluster_id = cluster_column(table, cluster);
  for (const auto& name : categorical_cols) {
    const int col = table.require_column(name);
    std::vector<std::string> tokens;
    tokens.reserve(static_cast<size_t>(table.num_rows()));
    for (const auto& row : table.rows) tokens.push_back(row[static_cast<size_t>(col)]);
    frame.cat_names.push_back(name);
    frame.categorical.push_back(std::move(tokens));
  }
  return frame;
}

namespace {

std::vector<std::vector<int>> level_groups(const std::vector<std::string>& tokens) {
  std::unordered_map<std::string, int> ids;
  std::vector<std::vector<int>> groups;
  for (int i = 0; i < static_cast<int>(tokens.size()); ++i) {
    auto [it, inserted] = ids.try_emplace(tokens[i], static_cast<int>(groups.size()));
    if (inserted) groups.emplace_back();
    groups[static_cast<size_t>(it->second)].push_back(i);
  }
  return groups;
}

// Demean the y/x/w role columns within the given groups. Returns the largest
// absolute within-group mean removed (for the alternating-pass loop).
double demean_roles(RegressionFrame& frame, const std::vector<std::vector<int>>& groups) {
  double worst = 0.0;
  auto demean_one = [&](Vec& v) {
    for (const auto& rows : groups) {
      double mean = 0.0;
      for (int i : rows) mean += v(i);
      mean /= static_cast<double>(rows.size());
      worst = std::max(worst, std::abs(mean));
      for (int i : rows) v(i) -= mean;
    }
  };
  auto role_column = [&](const std::string& name) -> Vec& {
    const int k = frame.column(name);
    if (k < 0) throw data_error("unknown column '" + name + "'");
    return frame.columns[static_cast<size_t>(k)];
  };
  demean_one(role_column(frame.y_name));
  for (const auto& name : frame.x_names) demean_one(role_column(name));
  for (const auto& name : frame.w_names) demean_one(role_column(name));
  return worst;
}

std::vector<std::vector<int>> groups_for(const RegressionFrame& frame,
                                         const std::string& by) {
  for (size_t k = 0; k < frame.cat_names.size(); ++k)
    if (frame.cat_names[k] == by) return level_groups(frame.categorical[k]);
  // Numeric columns group by exact value.
  const Vec& v = frame.at(by);
  std::vector<std::string> tokens(static_cast<size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) tokens[static_cast<size_t>(i)] = std::to_string(v(i));
  return level_groups(tokens);
}

}  // namespace

void apply_transforms(RegressionFrame& frame, const TransformSpec& spec) {
  for (const auto& step : spec.steps) {
    switch (step.kind) {
      case TransformStep::Kind::Square: {
        const Vec& a = frame.at(step.a);
        frame.append("sq(" + step.a + ")", a.cwiseProduct(a));
        frame.w_names.push_back(frame.names.back());
        break;
      }
      case TransformStep::Kind::Interact: {
        const Vec& a = frame.at(step.a);
        const Vec& b = frame.at(step.b);
        frame.append("ix(" + step.a + "," + step.b + ")", a.cwiseProduct(b));
        frame.w_names.push_back(frame.names.back());
        break;
      }
      case TransformStep::Kind::Power: {
        const Vec& a = frame.at(step.a);
        frame.append("pow(" + step.a + "," + std::to_string(step.degree) + ")",
                     a.array().pow(step.degree).matrix());
        frame.w_names.push_back(frame.names.back());
        break;
      }
      case TransformStep::Kind::TrendInteract: {
        if (spec.time_column.empty())
          throw config_error("trend_interact needs a `time = column` line in the "
                             "transform file");
        const Vec& a = frame.at(step.a);
        const Vec& t = frame.at(spec.time_column);
        for (int p = 1; p <= step.degree; ++p) {
          frame.append("trend" + std::to_string(p) + "(" + step.a + ")",
                       a.cwiseProduct(t.array().pow(p).matrix()));
          frame.w_names.push_back(frame.names.back());
        }
        break;
      }
      case TransformStep::Kind::GroupDemean: {
        demean_roles(frame, groups_for(frame, step.a));
        break;
      }
    }
  }
}

void absorb_factors(RegressionFrame& frame, const std::vector<std::string>& factors) {
  if (factors.empty()) return;
  std::vector<std::vector<std::vector<int>>> groups;
  groups.reserve(factors.size());
  for (const auto& f : factors) groups.push_back(groups_for(frame, f));
  // One pass is exact for a single factor; several factors alternate.
  for (int pass = 0; pass < 200; ++pass) {
    double worst = 0.0;
    for (const auto& g : groups) worst = std::max(worst, demean_roles(frame, g));
    if (worst <= 1e-12) return;
  }
  throw numeric_error("fixed-effect absorption did not converge");
}

Dataset assemble_dataset(const RegressionFrame& frame) {
  Dataset data;
  data.y = frame.at(frame.y_name);
  const Eigen::Index n = data.y.size();
  data.X.resize(n, static_cast<Eigen::Index>(frame.x_names.size()));
  for (size_t k = 0; k < frame.x_names.size(); ++k)
    data.X.col(static_cast<Eigen::Index>(k)) = frame.at(frame.x_names[k]);
  data.W.resize(n, static_cast<Eigen::Index>(frame.w_names.size()));
  for (size_t k = 0; k < frame.w_names.size(); ++k)
    data.W.col(static_cast<Eigen::Index>(k)) = frame.at(frame.w_names[k]);
  data.cluster_id = frame.cluster_id;
  data.validate();
  return data;
}

}  // namespace crmc
