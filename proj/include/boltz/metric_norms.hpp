#pragma once

#include "boltz/functions.hpp"
#include "boltz/quadrature.hpp"

namespace boltz {

// Anisotropic metric on the lifted paraboloid:
//   d(v,v') = sqrt(|v-v'|^2 + (|v|^2 - |v'|^2)^2 / 4),
// the Euclidean distance between (v,|v|^2/2) and (v',|v'|^2/2).
double aniso_dist(const Vec& v, const Vec& v_prime);

struct SeminormSpec {
  double s = 0.5;
  double gamma = 0.0;
  double cutoff = 1.0;  // indicator d(v,v') <= cutoff

  // per-point weight exponent in (<v><v'>)^{(gamma+2s+1)/2}
  double weight_exp() const { return 0.5 * (gamma + 2.0 * s + 1.0); }
};

struct WeightedNormSpec {
  double p = 2.0;
  double ell = 0.0;
};

struct SeminormResult {
  double value = 0.0;    // the seminorm itself
  double squared = 0.0;  // the double integral
  double error = 0.0;    // error bound on the squared value
  bool converged = true;
};

// (int <v>^ell |f|^p dv)^{1/p}
double weighted_lp(const FunctionRep& f, const WeightedNormSpec& spec,
                   const QuadratureSpec& quad);

// |f|^2_{N-dot} = int int_{d<=1} (f'-f)^2 (<v><v'>)^{(gamma+2s+1)/2}
//                 d(v,v')^{-n-2s} dv' dv
SeminormResult seminorm_dot_n(const FunctionRep& f, const SeminormSpec& spec,
                              const QuadratureSpec& quad);

// Same seminorm for a pointwise-evaluable field (e.g. sqrt of a mixture);
// the caller supplies the dimension and an effective support radius.
SeminormResult seminorm_dot_n_field(const ScalarField& f, int n,
                                    double support_radius,
                                    const SeminormSpec& spec,
                                    const QuadratureSpec& quad);

// |f|_{N^{s,gamma}} = sqrt(||f||^2_{L^2_{gamma+2s}} + |f|^2_{N-dot})
double norm_n_full(const FunctionRep& f, const SeminormSpec& spec,
                   const QuadratureSpec& quad);

// Gagliardo realization of the weighted isotropic H^s_ell norm:
//   sqrt(||f||^2_{L^2_ell} + int int_{|v-v'|<=1} <v>^ell (f-f')^2
//        |v-v'|^{-n-2s} dv' dv)
double iso_sobolev(const FunctionRep& f, double s, double ell,
                   const QuadratureSpec& quad);

}  // namespace boltz
