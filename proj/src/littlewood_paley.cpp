#include "boltz/littlewood_paley.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <mutex>
#include <vector>

#include "boltz/reduction.hpp"

namespace boltz {
namespace {

// Unnormalized C^infinity bump profile on [0, 1).
double bump_raw(double rho) {
  double t = 1.0 - rho * rho;
  if (t <= 0.0) return 0.0;
  return std::exp(-1.0 / t);
}

// 1 / (|S^{n-1}| int_0^1 r^{n-1} bump_raw(r) dr), cached per slice dimension.
double slice_norm_constant(int n) {
  static std::array<double, kMaxDim + 1> cache{};
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  if (cache[n] == 0.0) {
    std::vector<double> xs, ws;
    composite_gl(0.0, 1.0, 16, 20, xs, ws);
    double integral = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i)
      integral += ws[i] * std::pow(xs[i], n - 1) * bump_raw(xs[i]);
    cache[n] = 1.0 / (sphere_area(n) * integral);
  }
  return cache[n];
}

// Finite-difference step for derivatives of Q_j f, which varies on scale
// 2^{-j}.
double fd_step(int j) { return 0.02 * std::exp2(-j); }

}  // namespace

double lp_phi(double rho, int n) {
  if (n < 1 || n > kMaxDim) throw ParameterError("lp_phi: dimension");
  return slice_norm_constant(n) * bump_raw(rho);
}

double project_p(int j, const FunctionRep& f, const Vec& x,
                 const QuadratureSpec& quad) {
  if (j < 0) throw ParameterError("project_p: j >= 0 required");
  const int n = f.n;
  if (x.n != n + 1) throw ParameterError("project_p: x must be lifted");
  const double r = std::exp2(-j);
  const double scale = 1.0 / r;
  const double jac = std::pow(scale, n);
  // The bump vanishes unless |x_s - v'| <= 2^{-j}; two GL panels across the
  // support box resolve the smooth compact integrand.
  std::vector<double> xs, ws;
  composite_gl(-r, r, 2, quad.outer_nodes, xs, ws);
  const std::size_t m = xs.size();
  const double cn = slice_norm_constant(n);
  double total = 0.0;
  if (n == 2) {
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b) {
        Vec vp{x[0] + xs[a], x[1] + xs[b]};
        Vec d = x - lift(vp);
        double rho = norm(d) * scale;
        if (rho >= 1.0) continue;
        total += ws[a] * ws[b] * cn * bump_raw(rho) * bracket(vp) * f.eval(vp);
      }
  } else if (n == 3) {
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b)
        for (std::size_t c = 0; c < m; ++c) {
          Vec vp{x[0] + xs[a], x[1] + xs[b], x[2] + xs[c]};
          Vec d = x - lift(vp);
          double rho = norm(d) * scale;
          if (rho >= 1.0) continue;
          total +=
              ws[a] * ws[b] * ws[c] * cn * bump_raw(rho) * bracket(vp) * f.eval(vp);
        }
  } else {
    throw ParameterError("project_p: only n = 2, 3 supported");
  }
  return jac * total;
}

double project_q(int j, const FunctionRep& f, const Vec& x,
                 const QuadratureSpec& quad) {
  if (j == 0) return project_p(0, f, x, quad);
  return project_p(j, f, x, quad) - project_p(j - 1, f, x, quad);
}

double project_q_envelope(int j, const FunctionRep& f, const Vec& x, int i,
                          const QuadratureSpec& quad) {
  if (i < 0 || i > 2) throw ParameterError("project_q_envelope: i in {0,1,2}");
  const int m = f.n + 1;
  auto F = [&](const Vec& y) { return project_q(j, f, y, quad); };
  const double f0 = F(x);
  double env = std::abs(f0);
  if (i == 0) return env;
  const double h = fd_step(j);
  std::array<double, 2 * kMaxDim> plus{}, minus{};
  double grad2 = 0.0;
  for (int d = 0; d < m; ++d) {
    Vec xp = x, xm = x;
    xp[d] += h;
    xm[d] -= h;
    plus[d] = F(xp);
    minus[d] = F(xm);
    double g = (plus[d] - minus[d]) / (2.0 * h);
    grad2 += g * g;
  }
  env = std::max(env, std::sqrt(grad2));
  if (i == 1) return env;
  std::array<double, kMaxDim * kMaxDim> hess{};
  for (int d = 0; d < m; ++d)
    hess[d * m + d] = (plus[d] - 2.0 * f0 + minus[d]) / (h * h);
  for (int d = 0; d < m; ++d)
    for (int e = d + 1; e < m; ++e) {
      Vec xpp = x, xpm = x, xmp = x, xmm = x;
      xpp[d] += h;
      xpp[e] += h;
      xpm[d] += h;
      xpm[e] -= h;
      xmp[d] -= h;
      xmp[e] += h;
      xmm[d] -= h;
      xmm[e] -= h;
      double c = (F(xpp) - F(xpm) - F(xmp) + F(xmm)) / (4.0 * h * h);
      hess[d * m + e] = c;
      hess[e * m + d] = c;
    }
  return std::max(env, sym_spectral_norm(hess.data(), m));
}

namespace {

// One evaluation of the square-function sum on an outer grid of the given
// order. `q` keeps the full inner resolution for the projections; only the
// outer grid is coarsened between the two error-estimate passes, because the
// finite-difference Hessian amplifies any change of the inner rule by
// 2^{2j}/step^2.
double square_sum_pass(const FunctionRep& f, int i, const LPSpec& spec,
                       const KernelParams& params, const QuadratureSpec& q,
                       int outer_order, double radius) {
  std::vector<double> xs, ws;
  composite_gl(-radius, radius, q.outer_panels, outer_order, xs, ws);
  const std::size_t m = xs.size();
  const int n = f.n;
  const std::size_t total = (n == 2) ? m * m : m * m * m;
  std::vector<double> cell(total, 0.0);
  parallel_for(total, [&](std::size_t idx) {
    Vec v(n);
    double w;
    if (n == 2) {
      std::size_t a = idx / m, b = idx % m;
      v = Vec{xs[a], xs[b]};
      w = ws[a] * ws[b];
    } else {
      std::size_t a = idx / (m * m), b = (idx / m) % m, c = idx % m;
      v = Vec{xs[a], xs[b], xs[c]};
      w = ws[a] * ws[b] * ws[c];
    }
    const Vec x = lift(v);
    double acc = 0.0;
    for (int j = 0; j <= spec.j_max; ++j) {
      double env = project_q_envelope(j, f, x, i, q);
      acc += std::exp2(2.0 * (params.s - i) * j) * env * env;
    }
    cell[idx] =
        w * acc * std::pow(bracket(v), params.gamma + 2.0 * params.s);
  });
  return pairwise_sum(cell);
}

}  // namespace

IntegralResult square_sum(const FunctionRep& f, int i, const LPSpec& spec,
                          const KernelParams& params,
                          const QuadratureSpec& quad) {
  if (spec.j_max < 0) throw ParameterError("square_sum: j_max >= 0");
  // Q_j f lives within distance 2^{-j} <= 1 of the support of f.
  const double radius =
      std::min(quad.r_infinity, f.support_radius() + 1.0);
  const double fine =
      square_sum_pass(f, i, spec, params, quad, quad.outer_nodes, radius);
  const double coarse = square_sum_pass(
      f, i, spec, params, quad, std::max(3, quad.outer_nodes / 2), radius);
  IntegralResult out;
  out.value = fine;
  out.error = std::abs(fine - coarse);
  out.converged =
      out.error <=
      std::max(quad.abs_tol, quad.rel_tol * std::abs(fine)) * 1e4;
  return out;
}

}  // namespace boltz
