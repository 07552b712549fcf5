#include "crmc/design.hpp"

#include <cmath>
#include <random>

#include "crmc/errors.hpp"

namespace crmc {

namespace {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Uniform = std::uniform_real_distribution<double>;
using Normal = std::normal_distribution<double>;

constexpr int kSupportedBasis[] = {1, 7, 13, 28, 34, 84, 90, 210, 216};

double g_surface(const Vec6& z) { return std::exp(-std::sqrt(z.norm())); }
double h_surface(const Vec6& z) { return std::exp(std::sqrt(z.norm())); }

// One control row for the many-controls design: intercept first, then
// Uniform(-1,1) or 1{N(0,1) >= 1} coordinates.
void draw_control_row(ControlKind kind, int K, Philox4x32& rng, Vec& out) {
  out(0) = 1.0;
  if (kind == ControlKind::Continuous) {
    Uniform u(-1.0, 1.0);
    for (int k = 1; k < K; ++k) out(k) = u(rng);
  } else {
    Normal nrm(0.0, 1.0);
    for (int k = 1; k < K; ++k) out(k) = nrm(rng) >= 1.0 ? 1.0 : 0.0;
  }
}

Vec6 draw_z(Philox4x32& rng) {
  Uniform u(-1.0, 1.0);
  Vec6 z;
  for (int k = 0; k < 6; ++k) z(k) = u(rng);
  return z;
}

double ar_coefficient(double rho, double sign_source) {
  return sign_source >= 0.0 ? rho : -rho;
}

}  // namespace

double clipped_identity(double a) {
  if (a > 2.0) return 2.0;
  if (a < -2.0) return -2.0;
  return a;
}

bool power_basis_size_supported(int K) {
  for (int k : kSupportedBasis)
    if (k == K) return true;
  return false;
}

Vec build_power_basis(const Vec6& z, int K) {
  if (!power_basis_size_supported(K))
    throw config_error("unsupported polynomial basis size " + std::to_string(K));
  Vec out(K);
  int pos = 0;
  auto push = [&](double v) {
    if (pos < K) out(pos) = v;
    ++pos;
  };
  push(1.0);                                                   // 1
  for (int i = 0; i < 6; ++i) push(z(i));                      // 7
  for (int i = 0; i < 6; ++i) push(z(i) * z(i));               // 13
  for (int i = 0; i < 6; ++i)                                  // 28
    for (int j = i + 1; j < 6; ++j) push(z(i) * z(j));
  for (int i = 0; i < 6; ++i) push(std::pow(z(i), 3));         // 34
  for (int i = 0; i < 6; ++i)                                  // 84: z_i^2 z_j, z_i z_j z_k
    for (int j = 0; j < 6; ++j)
      if (j != i) push(z(i) * z(i) * z(j));
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j)
      for (int k = j + 1; k < 6; ++k) push(z(i) * z(j) * z(k));
  for (int i = 0; i < 6; ++i) push(std::pow(z(i), 4));         // 90
  for (int i = 0; i < 6; ++i)                                  // 210: remaining degree-4
    for (int j = 0; j < 6; ++j)
      if (j != i) push(std::pow(z(i), 3) * z(j));
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j) push(z(i) * z(i) * z(j) * z(j));
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      for (int k = j + 1; k < 6; ++k)
        if (j != i && k != i) push(z(i) * z(i) * z(j) * z(k));
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j)
      for (int k = j + 1; k < 6; ++k)
        for (int l = k + 1; l < 6; ++l) push(z(i) * z(j) * z(k) * z(l));
  for (int i = 0; i < 6; ++i) push(std::pow(z(i), 5));         // 216
  if (pos < K)
    throw numeric_error("internal basis enumeration mismatch");
  return out;
}

void DesignSpec::validate() const {
  if (n < 1 || G < 1) throw config_error("design needs n >= 1 and G >= 1");
  if (!(rho > -1.0 && rho < 1.0)) throw config_error("rho must lie in (-1,1)");
  switch (variant) {
    case DesignVariant::ManyControls:
      if (n % G != 0) throw config_error("balanced design requires G to divide n");
      if (K < 1) throw config_error("many-controls design needs K >= 1 (intercept)");
      break;
    case DesignVariant::PartiallyLinear:
      if (n % G != 0) throw config_error("balanced design requires G to divide n");
      if (!power_basis_size_supported(K))
        throw config_error("unsupported polynomial basis size " + std::to_string(K));
      break;
    case DesignVariant::TwowayFixedEffects:
      if (T < 2)
        throw config_error("panel design needs T >= 2; the within transformation "
                           "annihilates a T=1 panel");
      if (n != G * T) throw config_error("panel design requires n = G * T");
      if (N_d < 1) throw config_error("panel design needs N_d >= 1");
      break;
  }
  if (calibration_draws < 1000) throw config_error("calibration needs at least 1000 draws");
}

DesignConstants calibrate_constants(const DesignSpec& spec, std::uint64_t seed) {
  spec.validate();
  // Streams 2^62 and 2^62+1 are reserved for calibration so replication
  // streams (small integers) never collide with them.
  Philox4x32 rng(seed, (1ull << 62));
  Philox4x32 rng2(seed, (1ull << 62) + 1);
  Normal nrm(0.0, 1.0);
  const long m = spec.calibration_draws;
  DesignConstants c;

  if (spec.variant == DesignVariant::PartiallyLinear) {
    // V[x] = V[h(z)] + kappa_v (1 + E[(i'z)^2]) = 1.
    double sum_sz2 = 0.0, sum_h = 0.0, sum_h2 = 0.0;
    for (long t = 0; t < m; ++t) {
      const Vec6 z = draw_z(rng);
      const double sz = z.sum();
      const double h = h_surface(z);
      sum_sz2 += sz * sz;
      sum_h += h;
      sum_h2 += h * h;
    }
    const double e_sz2 = sum_sz2 / m;
    const double var_h = sum_h2 / m - (sum_h / m) * (sum_h / m);
    if (var_h >= 1.0)
      throw numeric_error("cannot calibrate: V[h(z)] >= 1 leaves no variance for v");
    c.kappa_v = (1.0 - var_h) / (1.0 + e_sz2);

    double sum_tu2 = 0.0;
    for (long t = 0; t < m; ++t) {
      const Vec6 z = draw_z(rng2);
      const double sz = z.sum();
      const double sd = std::sqrt(c.kappa_v * (1.0 + sz * sz));
      const double x = h_surface(z) + sd * nrm(rng2);
      const double arg = clipped_identity(x) + sz;
      sum_tu2 += arg * arg;
    }
    c.kappa_u1 = 1.0 / (1.0 + sum_tu2 / m);
    return c;
  }

  // Many-controls and panel designs: V[x] = kappa_x (1 + E[(i'w)^2]) = 1.
  const bool panel = spec.variant == DesignVariant::TwowayFixedEffects;
  const int k = panel ? 6 : spec.K;
  Vec w(std::max(k, 1));
  double sum_sw2 = 0.0;
  for (long t = 0; t < m; ++t) {
    double sw;
    if (panel) {
      sw = draw_z(rng).sum();
    } else {
      draw_control_row(spec.control_kind, k, rng, w);
      sw = w.head(k).sum();
    }
    sum_sw2 += sw * sw;
  }
  c.kappa_x = 1.0 / (1.0 + sum_sw2 / m);

  double sum_tu2 = 0.0;
  for (long t = 0; t < m; ++t) {
    double sw;
    if (panel) {
      sw = draw_z(rng2).sum();
    } else {
      draw_control_row(spec.control_kind, k, rng2, w);
      sw = w.head(k).sum();
    }
    const double sd = std::sqrt(c.kappa_x * (1.0 + sw * sw));
    const double x = sd * nrm(rng2);
    const double arg = clipped_identity(x) + sw;
    sum_tu2 += arg * arg;
  }
  c.kappa_u1 = 1.0 / (1.0 + sum_tu2 / m);
  return c;
}

namespace {

SimulatedData gen_many_controls(const DesignSpec& spec, const DesignConstants& cs,
                                Philox4x32& rng) {
  const int n = spec.n, K = spec.K, s = spec.n / spec.G;
  Normal nrm(0.0, 1.0);
  SimulatedData out;
  out.data.y.resize(n);
  out.data.X.resize(n, 1);
  out.data.W.resize(n, K);
  out.data.cluster_id.resize(n);
  out.true_errors.resize(n);

  Vec w(K);
  double u_prev = 0.0;
  for (int i = 0; i < n; ++i) {
    const int g = i / s;
    draw_control_row(spec.control_kind, K, rng, w);
    const double sw = w.sum();
    const double x = std::sqrt(cs.kappa_x * (1.0 + sw * sw)) * nrm(rng);
    double u;
    if (i % s == 0) {
      const double arg = clipped_identity(x) + sw;
      u = std::sqrt(cs.kappa_u1 * (1.0 + arg * arg)) * nrm(rng);
    } else {
      u = ar_coefficient(spec.rho, x) * u_prev + nrm(rng);
    }
    u_prev = u;
    out.data.W.row(i) = w.transpose();
    out.data.X(i, 0) = x;
    out.data.y(i) = spec.beta * x + u;
    out.data.cluster_id[i] = g;
    out.true_errors(i) = u;
  }
  return out;
}

SimulatedData gen_partially_linear(const DesignSpec& spec, const DesignConstants& cs,
                                   Philox4x32& rng) {
  const int n = spec.n, K = spec.K, s = spec.n / spec.G;
  Normal nrm(0.0, 1.0);
  SimulatedData out;
  out.data.y.resize(n);
  out.data.X.resize(n, 1);
  out.data.W.resize(n, K);
  out.data.cluster_id.resize(n);
  out.true_errors.resize(n);

  double u_prev = 0.0;
  for (int i = 0; i < n; ++i) {
    const int g = i / s;
    const Vec6 z = draw_z(rng);
    const double sz = z.sum();
    const double v = std::sqrt(cs.kappa_v * (1.0 + sz * sz)) * nrm(rng);
    const double x = h_surface(z) + v;
    double u;
    if (i % s == 0) {
      const double arg = clipped_identity(x) + sz;
      u = std::sqrt(cs.kappa_u1 * (1.0 + arg * arg)) * nrm(rng);
    } else {
      u = ar_coefficient(spec.rho, z(0)) * u_prev + nrm(rng);
    }
    u_prev = u;
    out.data.W.row(i) = build_power_basis(z, K).transpose();
    out.data.X(i, 0) = x;
    out.data.y(i) = spec.beta * x + g_surface(z) + u;
    out.data.cluster_id[i] = g;
    out.true_errors(i) = u;
  }
  return out;
}

SimulatedData gen_twoway_fe(const DesignSpec& spec, const DesignConstants& cs,
                            Philox4x32& rng) {
  const int N = spec.G, T = spec.T, n = spec.n, nd = spec.N_d;
  Normal nrm(0.0, 1.0);
  Vec y_raw(n), x_raw(n), u_raw(n);
  std::vector<int> category(n);

  double u_prev = 0.0;
  for (int i = 0; i < N; ++i) {
    for (int t = 0; t < T; ++t) {
      const int m = i * T + t;
      const Vec6 z = draw_z(rng);
      const double sz = z.sum();
      const double x = std::sqrt(cs.kappa_x * (1.0 + sz * sz)) * nrm(rng);
      double u;
      if (t == 0) {
        const double arg = clipped_identity(x) + sz;
        u = std::sqrt(cs.kappa_u1 * (1.0 + arg * arg)) * nrm(rng);
      } else {
        u = ar_coefficient(spec.rho, x) * u_prev + nrm(rng);
      }
      u_prev = u;
      x_raw(m) = x;
      u_raw(m) = u;
      y_raw(m) = spec.beta * x + u;  // alpha_i = e_{d_it} = 0
      category[m] = m % nd;          // round-robin keeps sparse matching balanced
    }
  }
  if (spec.random_category_assignment) {
    std::uniform_int_distribution<int> cat(0, nd - 1);
    for (int m = 0; m < n; ++m) category[m] = cat(rng);
  }

  // Within transformation: demean y, x and the category dummies by
  // individual, then drop the last dummy column (demeaned dummies sum to
  // zero across categories).
  Mat dummies = Mat::Zero(n, nd);
  for (int m = 0; m < n; ++m) dummies(m, category[m]) = 1.0;

  SimulatedData out;
  out.data.y = y_raw;
  out.data.X = x_raw;
  out.true_errors = u_raw;
  for (int i = 0; i < N; ++i) {
    auto yseg = out.data.y.segment(i * T, T);
    yseg.array() -= yseg.mean();
    auto xseg = out.data.X.col(0).segment(i * T, T);
    xseg.array() -= xseg.mean();
    auto dblk = dummies.middleRows(i * T, T);
    const Eigen::RowVectorXd mu = dblk.colwise().mean();
    dblk.rowwise() -= mu;
  }
  out.data.W = dummies.leftCols(nd - 1);
  out.data.cluster_id.resize(n);
  for (int m = 0; m < n; ++m) out.data.cluster_id[m] = m / T;
  return out;
}

}  // namespace

SimulatedData generate_design(const DesignSpec& spec, const DesignConstants& constants,
                              Philox4x32& rng) {
  spec.validate();
  switch (spec.variant) {
    case DesignVariant::ManyControls: return gen_many_controls(spec, constants, rng);
    case DesignVariant::PartiallyLinear: return gen_partially_linear(spec, constants, rng);
    case DesignVariant::TwowayFixedEffects: return gen_twoway_fe(spec, constants, rng);
  }
  throw config_error("unknown design variant");
}

}  // namespace crmc
