#include "boltz/kernel.hpp"

#include <algorithm>

namespace boltz {

double sphere_area(int m) {
  // |S^{m-1}|, with the 0-sphere counted as two points.
  if (m == 1) return 2.0;
  return 2.0 * std::pow(M_PI, 0.5 * m) / std::tgamma(0.5 * m);
}

KernelParams::KernelParams(int n_, double gamma_, double s_, double c_phi_,
                           double c_b_)
    : n(n_), gamma(gamma_), s(s_), c_phi(c_phi_), c_b(c_b_) {
  if (n < 2) throw ParameterError("kernel: dimension n must be >= 2");
  if (!(gamma > -n)) throw ParameterError("kernel: gamma must exceed -n");
  if (!(s > 0.0 && s < 1.0)) throw ParameterError("kernel: s must be in (0,1)");
  if (!(c_phi > 0.0)) throw ParameterError("kernel: C_Phi must be positive");
  if (!(c_b > 0.0 && c_b <= 1.0))
    throw ParameterError("kernel: c_b must be in (0,1]");
}

double KernelParams::angular_profile(double theta) const {
  if (theta <= 0.0) throw PoleError("angular kernel pole at theta = 0");
  if (theta > 0.5 * M_PI) return 0.0;
  return std::pow(theta, -1.0 - 2.0 * s);
}

double KernelParams::angular_b(double theta) const {
  if (theta <= 0.0) throw PoleError("angular kernel pole at theta = 0");
  if (theta > 0.5 * M_PI) return 0.0;
  double sin_t = std::sin(theta);
  return std::pow(theta, -1.0 - 2.0 * s) * std::pow(sin_t, -(n - 2));
}

CollisionFrame collide(const Vec& v, const Vec& v_star, const Vec& sigma) {
  CollisionFrame fr;
  fr.v = v;
  fr.v_star = v_star;
  fr.sigma = sigma;
  Vec rel = v - v_star;
  fr.rel_speed = norm(rel);
  if (fr.rel_speed <= 0.0)
    throw GeometryError("collide: zero relative velocity (v == v_star)");
  double sig_norm = norm(sigma);
  if (std::abs(sig_norm - 1.0) > 1e-9)
    throw GeometryError("collide: sigma is not a unit vector");
  fr.k_hat = (1.0 / fr.rel_speed) * rel;
  Vec mid = 0.5 * (v + v_star);
  Vec half = (0.5 * fr.rel_speed) * sigma;
  fr.v_prime = mid + half;
  fr.v_star_prime = mid - half;
  fr.cos_theta = std::clamp(dot(fr.k_hat, sigma), -1.0, 1.0);
  // atan2 form stays accurate at both theta ~ 0 and theta ~ pi, and makes
  // sin(theta/2) = |sigma - k_hat|/2 hold to machine precision.
  fr.theta = 2.0 * std::atan2(norm(sigma - fr.k_hat), norm(sigma + fr.k_hat));
  return fr;
}

double kernel_B(const CollisionFrame& frame, const KernelParams& params) {
  if (frame.cos_theta < 0.0) return 0.0;
  return params.kinetic_factor(frame.rel_speed) *
         params.angular_b(frame.theta);
}

double smooth_step(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  double a = std::exp(-1.0 / t);
  double b = std::exp(-1.0 / (1.0 - t));
  return a / (a + b);
}

double DyadicIndex::chi(double r) const {
  if (r <= 0.0) return 0.0;
  double x = std::log2(1.0 / r) - k;
  // psi(x) = E(x) - E(x-1) with E a smooth step across [-eps, eps];
  // integer translates of psi telescope to 1.
  auto edge = [](double t) {
    return smooth_step((t + kChiOverlap) / (2.0 * kChiOverlap));
  };
  return edge(x) - edge(x - 1.0);
}

double kernel_B_dyadic(const CollisionFrame& frame, const KernelParams& params,
                       const DyadicIndex& k) {
  double chi = k.chi(frame.dist_v_vprime());
  if (chi == 0.0) return 0.0;
  return chi * kernel_B(frame, params);
}

namespace {

double b_tilde_impl(const Vec& v, const Vec& v_star, const Vec& v_prime,
                    const KernelParams& params, double orth_tol,
                    double* dist_out) {
  Vec pv = v_prime - v;
  Vec pu = v_prime - v_star;
  double d_vp = norm(pv);
  double d_ps = norm(pu);
  if (d_ps <= 0.0)
    throw GeometryError("B~: v' == v_star");
  if (d_vp <= 0.0) throw PoleError("B~: pole at v == v'");
  double ip = dot(pv, pu);
  if (std::abs(ip) > orth_tol * d_vp * d_ps)
    throw GeometryError("B~: v is not on the Carleman plane");
  if (dist_out) *dist_out = d_vp;
  // On the plane, |v - v_star|^2 = |v - v'|^2 + |v' - v_star|^2.
  double rel2 = d_vp * d_vp + d_ps * d_ps;
  double rel = std::sqrt(rel2);
  double cos_theta = (d_ps * d_ps - d_vp * d_vp) / rel2;
  cos_theta = std::clamp(cos_theta, -1.0, 1.0);
  if (cos_theta < 0.0) return 0.0;
  double theta = std::acos(cos_theta);
  double b_val = params.angular_b(theta);
  double phi = params.kinetic_factor(rel);
  return std::exp2(params.n - 1) * phi * b_val /
         (d_ps * std::pow(rel, params.n - 2));
}

}  // namespace

double kernel_B_tilde(const Vec& v, const Vec& v_star, const Vec& v_prime,
                      const KernelParams& params, double orth_tol) {
  return b_tilde_impl(v, v_star, v_prime, params, orth_tol, nullptr);
}

double kernel_B_tilde_dyadic(const Vec& v, const Vec& v_star,
                             const Vec& v_prime, const KernelParams& params,
                             const DyadicIndex& k, double orth_tol) {
  double d_vp = 0.0;
  double val = b_tilde_impl(v, v_star, v_prime, params, orth_tol, &d_vp);
  return val * k.chi(d_vp);
}

namespace {

// Composite Gauss-Legendre on dyadic theta cells accumulating
// int_0^{pi/2} sin^{n-2}t b(cos t) [cos^{-(gamma+n)}(t/2) - 1] dt.
// The integrand behaves like theta^{1-2s} near zero, so the dyadic tail
// converges geometrically.
double cancellation_integral(const KernelParams& params, double rel_tol) {
  static const double nodes[8] = {
      -0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
      -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
      0.7966664774136267,  0.9602898564975363};
  static const double weights[8] = {
      0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
      0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
      0.2223810344533745, 0.1012285362903763};
  double expo = params.gamma + params.n;
  auto integrand = [&](double t) {
    double prof = params.angular_profile(t);  // theta^{-1-2s}
    double fac = std::pow(std::cos(0.5 * t), -expo) - 1.0;
    return prof * fac;
  };
  double total = 0.0;
  double hi = 0.5 * M_PI;
  for (int cell = 0; cell < 2000; ++cell) {
    double lo = 0.5 * hi;
    double mid = 0.5 * (lo + hi);
    double rad = 0.5 * (hi - lo);
    double cell_val = 0.0;
    for (int i = 0; i < 8; ++i)
      cell_val += weights[i] * integrand(mid + rad * nodes[i]);
    cell_val *= rad;
    total += cell_val;
    if (cell > 4 && std::abs(cell_val) < rel_tol * std::abs(total)) break;
    hi = lo;
  }
  return total;
}

}  // namespace

CancellationLemma cancellation_lemma(const KernelParams& params,
                                     double rel_tol) {
  if (params.gamma + params.n <= 0.0)
    throw ParameterError("cancellation lemma: gamma + n must be positive");
  CancellationLemma out;
  out.c_n = sphere_area(params.n - 1);
  out.integral = cancellation_integral(params, rel_tol);
  out.c_prime = 0.5 * out.c_n * params.c_phi * out.integral;
  if (!(out.c_prime > 0.0) || !std::isfinite(out.c_prime))
    throw ParameterError("cancellation lemma: divergent integral");
  return out;
}

double cancellation_kernel_S(double z_norm, const KernelParams& params) {
  if (z_norm <= 0.0) throw ParameterError("S(z): |z| must be positive");
  CancellationLemma lem = cancellation_lemma(params);
  return lem.c_prime * std::pow(z_norm, params.gamma);
}

}  // namespace boltz
