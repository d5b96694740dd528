#include "boltz/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "boltz/reduction.hpp"

namespace boltz {
namespace {

void require_positive(const FunctionRep& f) {
  if (f.comps.empty()) throw std::domain_error("entropy: empty mixture");
  for (const auto& c : f.comps)
    if (!(c.amp > 0.0))
      throw std::domain_error("entropy: mixture amplitudes must be positive");
}

// log f(v) for a positive mixture, stable against underflow of individual
// components (log-sum-exp over the lifted Gaussian exponents).
double log_eval(const FunctionRep& f, const Vec& v) {
  Vec x = lift(v);
  double best = -1e300;
  std::vector<double> expo(f.comps.size());
  for (std::size_t j = 0; j < f.comps.size(); ++j) {
    const auto& c = f.comps[j];
    double qs = 0.0;
    for (int d = 0; d < f.n; ++d) {
      double dd = x[d] - c.center[d];
      qs += dd * dd;
    }
    double dl = x[f.n] - c.center[f.n];
    expo[j] = std::log(c.amp) - c.beta * qs - c.beta_lift * dl * dl;
    best = std::max(best, expo[j]);
  }
  double acc = 0.0;
  for (double e : expo) acc += std::exp(e - best);
  return best + std::log(acc);
}

// Outer radius for integrands carrying f'-only mass: v' in supp f and
// v_* in supp g constrain |v| <= R_f + |v - v_*|.
double enlarged_radius(const Density& g, const FunctionRep& f,
                       const QuadratureSpec& q) {
  double rf = std::min(f.support_radius(), q.r_infinity);
  return std::min(q.r_infinity, rf + std::min(g.radius, q.r_infinity));
}

// Deterministic smooth double integral int dv int dv_* f(v) g_* k(|v-v_*|)
// with a two-pass error estimate (the cancellation-lemma route for T).
WeakResult pair_integral(const Density& g, const FunctionRep& f,
                         const std::function<double(double)>& kernel,
                         const QuadratureSpec& q) {
  const int n = f.n;
  const double radius = std::min(q.r_infinity, f.support_radius());
  auto pass = [&](int order) {
    std::vector<double> xs, ws, ys, vs;
    composite_gl(-radius, radius, q.outer_panels, order, xs, ws);
    double rs = std::min(q.r_infinity, g.radius);
    composite_gl(-rs, rs, q.outer_panels, order + 1, ys, vs);
    std::vector<Vec> spts;
    std::vector<double> sw;
    // v_* nodes with g folded in, negligible entries dropped
    double mx = 0.0;
    std::vector<double> raw;
    std::vector<Vec> rawp;
    auto push_star = [&](const Vec& p, double w) {
      double val = g.eval(p) * w;
      rawp.push_back(p);
      raw.push_back(val);
      mx = std::max(mx, std::abs(val));
    };
    if (n == 2) {
      for (std::size_t i = 0; i < ys.size(); ++i)
        for (std::size_t j = 0; j < ys.size(); ++j)
          push_star(Vec{ys[i], ys[j]}, vs[i] * vs[j]);
    } else {
      for (std::size_t i = 0; i < ys.size(); ++i)
        for (std::size_t j = 0; j < ys.size(); ++j)
          for (std::size_t k = 0; k < ys.size(); ++k)
            push_star(Vec{ys[i], ys[j], ys[k]}, vs[i] * vs[j] * vs[k]);
    }
    for (std::size_t i = 0; i < raw.size(); ++i)
      if (std::abs(raw[i]) > 1e-13 * mx) {
        spts.push_back(rawp[i]);
        sw.push_back(raw[i]);
      }
    const std::size_t m = xs.size();
    const std::size_t total = (n == 2) ? m * m : m * m * m;
    std::vector<double> buf(total);
    parallel_for(total, [&](std::size_t idx) {
      Vec v(n);
      double w;
      if (n == 2) {
        v = Vec{xs[idx / m], xs[idx % m]};
        w = ws[idx / m] * ws[idx % m];
      } else {
        v = Vec{xs[idx / (m * m)], xs[(idx / m) % m], xs[idx % m]};
        w = ws[idx / (m * m)] * ws[(idx / m) % m] * ws[idx % m];
      }
      double fv = f.eval(v);
      double acc = 0.0;
      if (std::abs(fv) > 1e-300)
        for (std::size_t j = 0; j < spts.size(); ++j)
          acc += sw[j] * kernel(norm(v - spts[j]));
      buf[idx] = w * fv * acc;
    });
    return pairwise_sum(buf);
  };
  double fine = pass(q.outer_nodes);
  double coarse = pass(std::max(3, q.outer_nodes / 2));
  WeakResult r;
  r.value = fine;
  r.error = std::abs(fine - coarse);
  r.converged =
      r.error <= std::max(q.abs_tol, std::abs(fine) * q.rel_tol) * 1e4;
  return r;
}

}  // namespace

double entropy_integrand(double a, double b) {
  return a * std::log(a / b) - a + b;
}

WeakResult entropy_production(const Density& g, const FunctionRep& f,
                              const KernelParams& params,
                              const QuadratureSpec& quad) {
  require_positive(f);
  const double radius = std::min(quad.r_infinity, f.support_radius());
  // D = -int B g_* f (log f' - log f) = int B g_* f (log f - log f')
  auto w = [&f](const CollisionFrame& fr) {
    double lf = log_eval(f, fr.v);
    double lfp = log_eval(f, fr.v_prime);
    return std::exp(lf) * (lf - lfp);
  };
  return weak_sigma_form(g, radius, w, params, quad, 40);
}

WeakResult s_lower_bound(const Density& g, const FunctionRep& f,
                         const KernelParams& params,
                         const QuadratureSpec& quad) {
  require_positive(f);
  auto w = [&f](const CollisionFrame& fr) {
    double d = std::exp(0.5 * log_eval(f, fr.v_prime)) -
               std::exp(0.5 * log_eval(f, fr.v));
    return d * d;
  };
  return weak_sigma_form(g, enlarged_radius(g, f, quad), w, params, quad, 42);
}

EntropySplit entropy_split(const Density& g, const FunctionRep& f,
                           const KernelParams& params,
                           const QuadratureSpec& quad) {
  require_positive(f);
  EntropySplit out;
  out.d_value = entropy_production(g, f, params, quad);
  // S integrand f log(f/f') + f' - f is pointwise nonnegative and carries
  // second-order pole cancellation on its own.
  auto ws = [&f](const CollisionFrame& fr) {
    double lf = log_eval(f, fr.v);
    double lfp = log_eval(f, fr.v_prime);
    double fv = std::exp(lf), fp = std::exp(lfp);
    return fv * (lf - lfp) + fp - fv;
  };
  out.s_value =
      weak_sigma_form(g, enlarged_radius(g, f, quad), ws, params, quad, 41);
  // T by the cancellation lemma: the S(z) = C'|z|^gamma kernel is normalized
  // to the half-weighted K_g form, while T carries no 1/2, so
  //   T = -2 int int f g_* S(|v-v_*|).
  KernelParams p = params;
  out.t_value = pair_integral(
      g, f,
      [&p](double r) { return -2.0 * cancellation_kernel_S(r, p); }, quad);
  out.h_value = h_functional(f, quad);
  return out;
}

double h_functional(const FunctionRep& f, const QuadratureSpec& quad) {
  require_positive(f);
  auto integrand = [&f](const Vec& v) {
    double lf = log_eval(f, v);
    return -std::exp(lf) * lf;
  };
  return integrate_rn(integrand, f.n, quad).value;
}

}  // namespace boltz
