#pragma once

#include "boltz/functions.hpp"
#include "boltz/kernel.hpp"
#include "boltz/quadrature.hpp"

namespace boltz {

// Radial profile of the projection bump phi on R^{n+1}: C^infinity, supported
// on the closed unit ball, calibrated once per dimension so that the integral
// of phi over every n-dimensional linear slice through the origin equals 1.
// Since phi is radial all such slices agree, and the normalization reduces to
//   |S^{n-1}| int_0^1 r^{n-1} phi(r) dr = 1.
// `rho` is the distance from the origin in R^{n+1}.
double lp_phi(double rho, int n);

struct LPSpec {
  int j_max = 5;
};

// Smooth extension of the scale-2^{-j} projection to a lifted point
// x in R^{n+1}:
//   (P_j f)(x) = int dv' 2^{nj} phi(2^j |x - lift(v')|) <v'> f(v'),
// which restricts to P_j f(v) on the paraboloid x = lift(v). The <v'> factor
// is the lifted-surface measure density. Deterministic tensor quadrature over
// the support box |x_s - v'| <= 2^{-j}; the MC backend is not used here.
double project_p(int j, const FunctionRep& f, const Vec& x,
                 const QuadratureSpec& quad);

// Q_j = P_j - P_{j-1} for j >= 1; Q_0 = P_0.
double project_q(int j, const FunctionRep& f, const Vec& x,
                 const QuadratureSpec& quad);

// |grad~|^i Q_j f at a lifted point x: max over 0 <= m <= i of
// sup_{|xi|<=1} |(xi . grad~)^m Q_j f(x)|, with the (n+1)-dimensional
// derivatives taken by central finite differences at step proportional to
// 2^{-j} (the variation scale of Q_j f).
double project_q_envelope(int j, const FunctionRep& f, const Vec& x, int i,
                          const QuadratureSpec& quad);

// sum_{j=0}^{j_max} 2^{2(s-i)j} int | |grad~|^i Q_j f(v) |^2 <v>^{gamma+2s} dv
// over a tensor grid covering the support of f (widened by the unit bump
// radius). i in {0, 1, 2}. Error bound from a two-pass fine/coarse estimate.
IntegralResult square_sum(const FunctionRep& f, int i, const LPSpec& spec,
                          const KernelParams& params,
                          const QuadratureSpec& quad);

}  // namespace boltz
