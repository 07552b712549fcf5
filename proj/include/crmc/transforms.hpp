#pragma once

#include <string>
#include <vector>

#include "crmc/csv.hpp"
#include "crmc/dataset.hpp"

namespace crmc {

struct TransformStep {
  enum class Kind { Square, Interact, Power, TrendInteract, GroupDemean };
  Kind kind;
  std::string a;
  std::string b;      // second column for interact
  int degree = 0;     // power exponent (<= 5) or trend degree (<= 2)
};

struct TransformSpec {
  std::vector<TransformStep> steps;
  std::string time_column;  // required by trend_interact
};

// One step per line: square(col), interact(a,b), power(col,p),
// trend_interact(col,degree), group_demean(col); plus `time = col`.
// '#' starts a comment.
TransformSpec parse_transform_spec(const std::string& text);
TransformSpec read_transform_spec_file(const std::string& path);

// Working table for the fit pipeline: named numeric columns plus the roles
// that map them into a Dataset. Generated control columns are appended in
// step order with deterministic names (sq(c), ix(a,b), pow(c,p),
// trend1(c), trend2(c)).
struct RegressionFrame {
  std::vector<std::string> names;
  std::vector<Vec> columns;
  std::string y_name;
  std::vector<std::string> x_names;
  std::vector<std::string> w_names;
  std::vector<std::int64_t> cluster_id;
  std::vector<std::vector<std::string>> categorical;  // parallel to cat_names
  std::vector<std::string> cat_names;

  int column(const std::string& name) const;
  const Vec& at(const std::string& name) const;  // data_error when absent
  void append(const std::string& name, Vec values);  // config_error on collision
};

RegressionFrame make_frame(const CsvTable& table, const std::string& y,
                           const std::vector<std::string>& x,
                           const std::vector<std::string>& w,
                           const std::string& cluster,
                           const std::vector<std::string>& categorical_cols);

// Appends generated columns to the frame's control list in step order;
// group_demean demeans the y/x/w role columns within the levels of its
// column (absorbing those fixed effects).
void apply_transforms(RegressionFrame& frame, const TransformSpec& spec);

// Alternating within-group demeaning over several factors, iterated to
// convergence; a single factor finishes in one pass.
void absorb_factors(RegressionFrame& frame, const std::vector<std::string>& factors);

Dataset assemble_dataset(const RegressionFrame& frame);

}  // namespace crmc
