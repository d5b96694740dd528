#pragma once

#include "boltz/functions.hpp"
#include "boltz/kernel.hpp"
#include "boltz/quadrature.hpp"
#include "boltz/weakform.hpp"

namespace boltz {

// All entries require f to be a strictly positive mixture (every component
// amplitude > 0); violations throw std::domain_error. log f and sqrt(f) are
// evaluated pointwise from the mixture (log f via a stable log-sum-exp).

// Entropy production D(g,f) = -int dv Q(g,f) log f, computed in weak form
// with test function log f, i.e. with the difference log f - log f' inside
// the collision integral.
WeakResult entropy_production(const Density& g, const FunctionRep& f,
                              const KernelParams& params,
                              const QuadratureSpec& quad);

struct EntropySplit {
  WeakResult d_value;  // D(g,f), computed independently
  WeakResult s_value;  // S(g,f) = int B g_* (f log(f/f') + f' - f)
  WeakResult t_value;  // T(g,f) = -int B g_* (f' - f)
  double h_value = 0.0;  // H(f) = -int f log f
};

// D = S + T up to combined quadrature tolerance; the S integrand is
// pointwise nonnegative. T is reduced by the cancellation lemma to
//   T(g,f) = -2 C' int dv int dv_* f g_* |v - v_*|^gamma
// (the factor 2 because C' is normalized to the half-weighted K_g form),
// a smooth double integral evaluated deterministically.
EntropySplit entropy_split(const Density& g, const FunctionRep& f,
                           const KernelParams& params,
                           const QuadratureSpec& quad);

// int int int B g_* (sqrt f' - sqrt f)^2: the pointwise lower bound for
// S(g,f) coming from a log(a/b) - a + b >= (sqrt a - sqrt b)^2. Equals
// 2 N_g(sqrt f) in the convention of n_g().
WeakResult s_lower_bound(const Density& g, const FunctionRep& f,
                         const KernelParams& params,
                         const QuadratureSpec& quad);

// H(f) = -int f log f dv
double h_functional(const FunctionRep& f, const QuadratureSpec& quad);

// a log(a/b) - a + b for a, b > 0; nonnegative, and >= (sqrt a - sqrt b)^2.
double entropy_integrand(double a, double b);

}  // namespace boltz
