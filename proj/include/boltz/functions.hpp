#pragma once

#include <functional>
#include <vector>

#include "boltz/kernel.hpp"
#include "boltz/quadrature.hpp"
#include "boltz/vec.hpp"

namespace boltz {

struct EmptyMassError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One Gaussian component on the lifted space R^{n+1}:
//   a * exp(-beta |x_s - c_s|^2 - beta_lift (x_{n+1} - c_{n+1})^2),
// where x_s collects the first n coordinates. Isotropic components take
// beta_lift = beta; Maxwellians take beta_lift = 0 so the restriction to the
// paraboloid is a Gaussian in v alone.
struct LiftedGaussian {
  double amp = 1.0;
  Vec center;  // in R^{n+1}
  double beta = 1.0;
  double beta_lift = 1.0;
};

// F(x) = sum_j of the components above; test functions are restrictions
// f(v) = F(v, |v|^2/2).
struct FunctionRep {
  int n = 3;
  std::vector<LiftedGaussian> comps;

  FunctionRep() = default;
  explicit FunctionRep(int dim) : n(dim) {}

  double eval_lifted(const Vec& x) const;
  Vec grad_lifted(const Vec& x) const;
  // Hessian of F at a lifted point, row-major (n+1) x (n+1).
  void hessian_lifted(const Vec& x, double* h) const;

  double eval(const Vec& v) const { return eval_lifted(lift(v)); }

  // |grad~|^i F at a lifted point x:
  //   max over 0 <= j <= i of sup_{|xi|<=1} |(xi . grad~)^j F(x)|
  // = max(|F|, |grad F|) for i = 1, additionally the Hessian spectral norm
  // for i = 2.
  double deriv_envelope_lifted(const Vec& x, int i) const;
  double deriv_envelope(const Vec& v, int i) const {
    return deriv_envelope_lifted(lift(v), i);
  }

  // Radius beyond which every component (restricted to velocities) is below
  // `tail` in absolute value.
  double support_radius(double tail = 1e-14) const;

  FunctionRep scaled(double c) const;
};

// Isotropic lifted Gaussian with center given in R^{n+1}.
FunctionRep single_gaussian(int n, double amp, const Vec& center_lifted,
                            double beta);

struct MaxwellianParams {
  double rho = 1.0;
  Vec u;
  double temp = 1.0;
};

// mu(v) = rho (2 pi T)^{-n/2} exp(-|v-u|^2 / 2T) as a lifted representation
// constant in the (n+1)-th coordinate.
FunctionRep maxwellian(const MaxwellianParams& params, int n);

// Spectral norm of a symmetric m x m matrix (row-major), via Jacobi sweeps.
double sym_spectral_norm(const double* a, int m);

// Nonnegative density that may be a mixture restriction or an indicator.
struct Density {
  int n = 3;
  std::function<double(const Vec&)> eval;
  double radius = 8.0;  // support/truncation radius

  static Density from_rep(const FunctionRep& rep);
  static Density ball_indicator(int n, double radius);
  static Density zero(int n);
};

struct AssumptionConstants {
  double c_g_upper = 0.0;  // C_g
  int i_exponent = 1;
  double c_g_lower = 0.0;  // C~_g
  double radius_r = 1.0;
  double radius_delta = 0.5;
};

// C_g: sup over a in {gamma, gamma+2s} (endpoints suffice; the ratio is
// log-convex in a) and over a velocity grid of
//   <v>^{-a} int |v-v_*|^a <v_*>^i |g(v_*)| dv_*,  i = 1 or 2 by s-regime.
// grid_per_axis odd; higher values sharpen the sup.
double assumption_u_constant(const FunctionRep& g, const KernelParams& params,
                             const QuadratureSpec& quad,
                             int grid_per_axis = 9);

// C~_g: estimate of inf over linear tubes of radius delta of the mass of g
// on B_R minus the tube, via a two-level grid search over tube direction and
// offset.
double tube_mass_inf(const Density& g, double radius_r, double delta,
                     const QuadratureSpec& quad);

// Mass of g on the full ball B_R.
double ball_mass(const Density& g, double radius_r,
                 const QuadratureSpec& quad);

// Largest delta (by bisection) such that every tube of radius delta leaves at
// least target_fraction of the B_R mass outside. Throws EmptyMassError when g
// has no mass on B_R.
double corollary_l_delta(const Density& g, double radius_r,
                         double target_fraction, const QuadratureSpec& quad);

}  // namespace boltz
