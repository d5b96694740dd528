#pragma once

#include <functional>
#include <vector>

#include "boltz/functions.hpp"
#include "boltz/kernel.hpp"
#include "boltz/quadrature.hpp"

namespace boltz {

struct WeakResult {
  double value = 0.0;
  double error = 0.0;
  bool converged = true;
};

// <Q(g,f), h> = int dv int dv_* int dsigma B g_* f (h' - h).
// The integrand always carries the (h' - h) cancellation; with the omega ring
// summed symmetrically the angular integrand is O(theta^{1-2s}) near the pole.
WeakResult trilinear_sigma(const Density& g, const FunctionRep& f,
                           const FunctionRep& h, const KernelParams& params,
                           const QuadratureSpec& quad);

// Same value computed as (gain - loss) above a crossover angle plus the
// difference form below it; a quadrature-consistency cross-check of
// trilinear_sigma, not an independent definition.
WeakResult trilinear_gain_loss(const Density& g, const FunctionRep& f,
                               const FunctionRep& h,
                               const KernelParams& params,
                               const QuadratureSpec& quad);

// N_g(f) = 1/2 int int int B g_* (f' - f)^2 >= 0
WeakResult n_g(const Density& g, const FunctionRep& f,
               const KernelParams& params, const QuadratureSpec& quad);

// K_g(f) = 1/2 int int int B g_* [(f')^2 - f^2]
WeakResult k_g(const Density& g, const FunctionRep& f,
               const KernelParams& params, const QuadratureSpec& quad);

// Cancellation-lemma form K_g(f) = C' int dv f^2 (g * |.|^gamma)(v).
WeakResult k_g_oracle(const Density& g, const FunctionRep& f,
                      const KernelParams& params, const QuadratureSpec& quad);

enum class DyadicKind { Plus, Minus, Star };

// Dyadic pieces of the trilinear form. Plus/Minus use the sigma form with
// B_k = B chi_k(|v-v'|); Star uses the Carleman form with B~_k over the plane
// through v' with normal v'-v_*.
WeakResult dyadic_piece(DyadicKind which, int k, const Density& g,
                        const FunctionRep& f, const FunctionRep& h,
                        const KernelParams& params, const QuadratureSpec& quad);

// D^k_+ evaluated in Carleman coordinates (the duality cross-check).
WeakResult dyadic_plus_carleman(int k, const Density& g, const FunctionRep& f,
                                const FunctionRep& h,
                                const KernelParams& params,
                                const QuadratureSpec& quad);

// Remainder operator of the dual decomposition,
//   O_*(f,h) = int dv' f'h' int dv_* g_* int_plane B~ (1 - A),
//   A = Phi(v'-v_*)|v'-v_*|^n / (Phi(v-v_*)|v-v_*|^n)
//     = (|v'-v_*|^2 / (|v-v'|^2 + |v'-v_*|^2))^{(n+gamma)/2} on the plane,
// with the sign fixed so that the decomposition closes:
//   trilinear = sum_k (D^k_+ - D^k_*) + O_*.
// Since A <= 1 on the plane (gamma > -n), the integrand is nonnegative.
WeakResult o_star(const Density& g, const FunctionRep& f, const FunctionRep& h,
                  const KernelParams& params, const QuadratureSpec& quad);

// Generic sigma-form functional
//   int dv int dv_* int dsigma B g_* W(frame)
// with the pointwise weight W supplied by the caller, who must build the
// collision-pole cancellation into W (e.g. a difference h' - h, or a squared
// difference). The outer v grid is truncated at radius_v; `tag` decorrelates
// the Monte Carlo sample streams of distinct functionals.
WeakResult weak_sigma_form(
    const Density& g, double radius_v,
    const std::function<double(const CollisionFrame&)>& w,
    const KernelParams& params, const QuadratureSpec& quad, std::uint64_t tag);

// D = |u|^2 |u_bar|^2 - <u, u_bar>^2 >= 0
double gram_det(const Vec& u, const Vec& u_bar);

using TripleField = std::function<double(const Vec& v, const Vec& v_prime,
                                         const Vec& v_bar_prime)>;

struct CoplaneCheck {
  double lhs = 0.0, rhs = 0.0;
  double lhs_err = 0.0, rhs_err = 0.0;
  // fraction of rhs integration weight dropped for near-parallel normals
  double excluded_mass = 0.0;

  double gap() const;
};

// Two-sided evaluation of the co-plane change of variables at fixed
// v_*, v_bar_*:
//   int dv int dsigma_bar int dsigma H(v, v', v_bar')
//   = int dv' int dv_bar' int_coplane dpi_v H / (|v-v_*|^{n-2}
//     |v-v_bar_*|^{n-2} D^{1/2}).
CoplaneCheck coplane_identity_check(const TripleField& h, const Vec& v_star,
                                    const Vec& v_bar_star, int n,
                                    const KernelParams& params,
                                    const QuadratureSpec& quad);

struct CoercivityProfile {
  std::vector<int> ks;
  std::vector<double> i_k;
  // sum_k 2^{k(n-1+2s)} I_k over the window
  double weighted_sum = 0.0;
};

// I_k = int_{B_R} dv_* int dv int dsigma (f'-f)^2 1_{Omega_k} g_*
//       |v-v_*|^{n-1+gamma+2s},
// Omega_k = {|v-v'| <= 2^{-k}, <2v'-v-v_*, v-v_*> >= 0}.
CoercivityProfile coercivity_profile(const Density& g, const FunctionRep& f,
                                     const KernelParams& params,
                                     const QuadratureSpec& quad, int k_min,
                                     int k_max, double radius_r);

// Symmetrized weak form 1/2 int int int B f_* f (phi' + phi_*' - phi - phi_*)
// for a test function phi; exactly zero for collision invariants.
WeakResult collision_invariant_defect(const FunctionRep& f,
                                      const std::function<double(const Vec&)>& phi,
                                      const KernelParams& params,
                                      const QuadratureSpec& quad);

}  // namespace boltz
