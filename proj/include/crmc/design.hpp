#pragma once

#include <cstdint>

#include "crmc/dataset.hpp"
#include "crmc/rng.hpp"

namespace crmc {

enum class DesignVariant { ManyControls, PartiallyLinear, TwowayFixedEffects };
enum class ControlKind { Continuous, Discrete };

struct DesignSpec {
  DesignVariant variant = DesignVariant::ManyControls;
  int n = 700;
  int G = 175;       // clusters (ManyControls / PartiallyLinear) or individuals (Twoway)
  int K = 141;       // control count; basis size for PartiallyLinear
  double rho = 0.3;
  double beta = 1.0;
  ControlKind control_kind = ControlKind::Continuous;
  int T = 0;         // Twoway: panel length; n = G * T
  int N_d = 0;       // Twoway: number of matched categories
  bool random_category_assignment = false;  // Twoway: otherwise round-robin
  long calibration_draws = 200000;

  void validate() const;  // throws config_error
};

// Scale constants making V[x] = V[U_1] = 1 in each design, fitted by
// pre-simulation. Deterministic for a fixed seed.
struct DesignConstants {
  double kappa_x = 0.0;   // ManyControls / Twoway
  double kappa_v = 0.0;   // PartiallyLinear
  double kappa_u1 = 0.0;
};

DesignConstants calibrate_constants(const DesignSpec& spec, std::uint64_t seed);

struct SimulatedData {
  Dataset data;
  Vec true_errors;  // structural U draws, observation order
};

SimulatedData generate_design(const DesignSpec& spec, const DesignConstants& constants,
                              Philox4x32& rng);

// Table of nested polynomial expansions of a 6-vector:
// 1; linears; squares; pairwise products; cubes; remaining degree-3
// monomials; 4th powers; remaining degree-4 monomials; 5th powers.
// Supported sizes: 1, 7, 13, 28, 34, 84, 90, 210, 216.
bool power_basis_size_supported(int K);
Vec build_power_basis(const Eigen::Matrix<double, 6, 1>& z, int K);

// Piecewise-clipped identity: a on [-2,2], else 2 sgn(a).
double clipped_identity(double a);

}  // namespace crmc
