#pragma once

#include "crmc/variance.hpp"

namespace crmc {

// Standard normal quantile (Wichura's AS241, ~1e-15 absolute accuracy on
// (1e-300, 1-1e-16)) and cdf (via erfc).
double normal_quantile(double p);
double normal_cdf(double x);

struct InferenceReport {
  Vec beta;
  Mat omega;        // d x d sandwich
  Vec std_errors;   // sqrt(omega_kk / n)
  Vec ci_lower;
  Vec ci_upper;
  Vec p_values;     // two-sided Gaussian, H0: beta_k = 0
  double alpha = 0.05;
  VarianceMethod method = VarianceMethod::LZ;
};

// Omega = Gamma^-1 Sigma Gamma^-1, symmetrized. Throws on singular Gamma.
Mat sandwich(const FitResult& fit, const VarianceEstimate& var);

// Gaussian interval [beta - z_{1-a/2} se, beta - z_{a/2} se]. Throws
// numeric_error naming the coordinate when omega has a non-positive diagonal.
InferenceReport confidence_interval(const FitResult& fit, const VarianceEstimate& var,
                                    double alpha = 0.05);

}  // namespace crmc
