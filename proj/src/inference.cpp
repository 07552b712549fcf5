#include "crmc/inference.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "crmc/errors.hpp"

namespace crmc {

// Wichura's algorithm AS 241 (PPND16).
double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("normal_quantile: p must lie in (0,1)");
  const double q = p - 0.5;
  double r;
  if (std::abs(q) <= 0.425) {
    r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
              3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
            4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
              6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
            2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
              2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
            5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
              1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

Mat sandwich(const FitResult& fit, const VarianceEstimate& var) {
  const Eigen::Index d = fit.d();
  if (var.sigma.rows() != d || var.sigma.cols() != d)
    throw std::invalid_argument("sandwich: meat dimension mismatch");
  Eigen::SelfAdjointEigenSolver<Mat> es(fit.gamma_cap);
  const double lmin = es.eigenvalues().minCoeff();
  const double lmax = es.eigenvalues().maxCoeff();
  if (!(lmin > 0.0) || lmin <= lmax * 1e-13)
    throw numeric_error("sandwich: Gamma is singular");
  Eigen::LDLT<Mat> ldlt(fit.gamma_cap);
  const Mat b = ldlt.solve(var.sigma);
  const Mat omega = ldlt.solve(b.transpose()).transpose();
  return 0.5 * (omega + omega.transpose());
}

InferenceReport confidence_interval(const FitResult& fit, const VarianceEstimate& var,
                                    double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw config_error("alpha must lie in (0,1)");
  InferenceReport rep;
  rep.alpha = alpha;
  rep.method = var.method;
  rep.beta = fit.beta;
  rep.omega = sandwich(fit, var);
  const Eigen::Index d = fit.d();
  const double n = static_cast<double>(fit.n());
  rep.std_errors.resize(d);
  rep.ci_lower.resize(d);
  rep.ci_upper.resize(d);
  rep.p_values.resize(d);
  const double z = normal_quantile(1.0 - alpha / 2.0);
  for (Eigen::Index k = 0; k < d; ++k) {
    const double okk = rep.omega(k, k);
    if (!(okk > 0.0))
      throw numeric_error("indefinite variance estimate: non-positive sandwich diagonal "
                          "at coordinate " + std::to_string(k + 1) + " (method " +
                          variance_method_name(var.method) + ")");
    const double se = std::sqrt(okk / n);
    rep.std_errors(k) = se;
    rep.ci_lower(k) = rep.beta(k) - z * se;
    rep.ci_upper(k) = rep.beta(k) + z * se;
    rep.p_values(k) = std::erfc(std::abs(rep.beta(k)) / se / std::sqrt(2.0));
  }
  return rep;
}

}  // namespace crmc
