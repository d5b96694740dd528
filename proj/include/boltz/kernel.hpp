#pragma once

#include <cmath>
#include <stdexcept>

#include "boltz/vec.hpp"

namespace boltz {

struct GeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PoleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Surface area of the unit sphere S^{m-1} in R^m.
double sphere_area(int m);

// Collision kernel family B(v-v_*, sigma) = C_Phi |v-v_*|^gamma b(cos theta),
// with the canonical angular model
//   b(cos theta) = theta^{-(1+2s)} sin^{-(n-2)} theta  on (0, pi/2],
// zero for theta > pi/2, so that sin^{n-2} theta * b = theta^{-1-2s} exactly.
struct KernelParams {
  int n = 3;
  double gamma = 0.0;
  double s = 0.5;
  double c_phi = 1.0;
  double c_b = 1.0;

  KernelParams() = default;
  KernelParams(int n_, double gamma_, double s_, double c_phi_ = 1.0,
               double c_b_ = 1.0);

  double nu() const { return 2.0 * s; }
  // Derivative order used in the cancellation estimates: 1 for s < 1/2,
  // 2 for s >= 1/2.
  int deriv_order() const { return s < 0.5 ? 1 : 2; }

  double kinetic_factor(double r) const { return c_phi * std::pow(r, gamma); }

  // sin^{n-2}(theta) * b(cos theta); equals theta^{-1-2s} on (0, pi/2].
  double angular_profile(double theta) const;

  // b(cos theta) itself. Throws PoleError at theta = 0.
  double angular_b(double theta) const;
};

struct CollisionFrame {
  Vec v, v_star;
  Vec sigma;
  Vec v_prime, v_star_prime;
  Vec k_hat;  // (v - v_star)/|v - v_star|
  double cos_theta = 1.0;
  double theta = 0.0;
  double rel_speed = 0.0;  // |v - v_star|

  double dist_v_vprime() const { return norm(v - v_prime); }
};

CollisionFrame collide(const Vec& v, const Vec& v_star, const Vec& sigma);

double kernel_B(const CollisionFrame& frame, const KernelParams& params);

// Smooth transition: 0 for t <= 0, 1 for t >= 1.
double smooth_step(double t);

// Dyadic partition of unity on (0, infinity):
//   chi_k(r) = psi(log2(1/r) - k),  sum_k chi_k(r) = 1,
// with psi a C^infinity bump equal to 1 on [eps, 1-eps] and supported in
// [-eps, 1+eps] (eps = kChiOverlap). The support of chi_k is therefore a
// slightly widened version of [2^{-k-1}, 2^{-k}].
inline constexpr double kChiOverlap = 0.25;

struct DyadicIndex {
  int k = 0;

  double chi(double r) const;
  // Widened support bounds in r.
  double support_lo() const { return std::exp2(-k - 1 - kChiOverlap); }
  double support_hi() const { return std::exp2(-k + kChiOverlap); }
};

double kernel_B_dyadic(const CollisionFrame& frame, const KernelParams& params,
                       const DyadicIndex& k);

// Carleman-transformed kernel
//   B~ = 2^{n-1} B(v - v_*, (2v'-v-v_*)/|2v'-v-v_*|)
//        / (|v'-v_*| |v-v_*|^{n-2}),
// for v on the plane through v' with normal v' - v_*. The angular argument
// equals (|v'-v_*|^2 - |v-v'|^2) / (|v-v'|^2 + |v'-v_*|^2).
double kernel_B_tilde(const Vec& v, const Vec& v_star, const Vec& v_prime,
                      const KernelParams& params,
                      double orth_tol = 1e-8);

double kernel_B_tilde_dyadic(const Vec& v, const Vec& v_star,
                             const Vec& v_prime, const KernelParams& params,
                             const DyadicIndex& k, double orth_tol = 1e-8);

// Cancellation-lemma machinery. The radial kernel is
//   S(z) = (c_n C_Phi / 2) |z|^gamma * I_b,
//   I_b  = int_0^{pi/2} sin^{n-2}t b(cos t) [cos^{-(gamma+n)}(t/2) - 1] dt,
// and C' = (c_n C_Phi / 2) I_b, so S(z) = C' |z|^gamma.
struct CancellationLemma {
  double c_n = 0.0;       // dimensional constant, |S^{n-2}| (see below)
  double integral = 0.0;  // I_b
  double c_prime = 0.0;   // C'
};

// The dimensional constant is calibrated to |S^{n-2}| (n=2: 2, n=3: 2pi);
// the two-way K_g identity test validates this normalization.
CancellationLemma cancellation_lemma(const KernelParams& params,
                                     double rel_tol = 1e-10);

double cancellation_kernel_S(double z_norm, const KernelParams& params);

}  // namespace boltz
