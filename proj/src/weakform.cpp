#include "boltz/weakform.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "boltz/reduction.hpp"
#include "boltz/rng.hpp"

namespace boltz {
namespace {

using FrameFn = std::function<double(const CollisionFrame&)>;
using PairFn = std::function<double(const Vec&, const Vec&, const QuadratureSpec&)>;

constexpr double kTinySpeed = 1e-12;
constexpr double kThetaSplit = 0.3;  // gain/loss crossover angle

// Resolution roughly halved in every 1-D direction; used for the coarse pass
// of the two-pass error estimate.
QuadratureSpec halved(const QuadratureSpec& q) {
  QuadratureSpec h = q;
  h.outer_nodes = std::max(3, q.outer_nodes / 2);
  h.nodes_per_cell = std::max(3, q.nodes_per_cell - 2);
  h.sphere_azimuth = std::max(4, q.sphere_azimuth / 2);
  h.dyadic_depth = std::max(4, q.dyadic_depth - 2);
  return h;
}

struct Grid {
  std::vector<Vec> pts;
  std::vector<double> wts;
};

Grid tensor_grid(int n, double radius, int panels, int order) {
  std::vector<double> xs, ws;
  composite_gl(-radius, radius, panels, order, xs, ws);
  const std::size_t m = xs.size();
  Grid g;
  if (n == 2) {
    g.pts.reserve(m * m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        g.pts.push_back(Vec{xs[i], xs[j]});
        g.wts.push_back(ws[i] * ws[j]);
      }
  } else if (n == 3) {
    g.pts.reserve(m * m * m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        for (std::size_t k = 0; k < m; ++k) {
          g.pts.push_back(Vec{xs[i], xs[j], xs[k]});
          g.wts.push_back(ws[i] * ws[j] * ws[k]);
        }
  } else {
    throw ParameterError("tensor grid: only n = 2, 3 supported");
  }
  return g;
}

// Density nodes with weights folded in, dropping negligible entries.
void density_nodes(const Density& g, int n, const QuadratureSpec& q,
                   std::vector<Vec>& pts, std::vector<double>& wts) {
  Grid grid =
      tensor_grid(n, std::min(q.r_infinity, g.radius), q.outer_panels,
                  q.outer_nodes + 1);
  std::vector<double> vals(grid.pts.size());
  double mx = 0.0;
  for (std::size_t i = 0; i < grid.pts.size(); ++i) {
    vals[i] = g.eval(grid.pts[i]) * grid.wts[i];
    mx = std::max(mx, std::abs(vals[i]));
  }
  pts.clear();
  wts.clear();
  for (std::size_t i = 0; i < grid.pts.size(); ++i) {
    if (std::abs(vals[i]) > 1e-13 * mx) {
      pts.push_back(grid.pts[i]);
      wts.push_back(vals[i]);
    }
  }
}

struct Ring {
  std::vector<Vec> dirs;
  double weight = 1.0;
};

// Even azimuthal ring orthogonal to the frame axis; opposite directions are
// always paired so first-order terms cancel when the ring is summed.
Ring make_ring(const std::vector<Vec>& basis, int n, const QuadratureSpec& q) {
  Ring r;
  if (n == 2) {
    r.dirs = {basis[0], -1.0 * basis[0]};
    r.weight = 1.0;
  } else {
    int m = std::max(4, q.sphere_azimuth);
    if (m % 2) ++m;
    r.dirs.reserve(m);
    for (int j = 0; j < m; ++j) {
      double phi = 2.0 * M_PI * j / m;
      r.dirs.push_back(std::cos(phi) * basis[0] + std::sin(phi) * basis[1]);
    }
    r.weight = 2.0 * M_PI / m;
  }
  return r;
}

// int dsigma B(frame) w(frame) over theta in (0, theta_hi], with the theta
// mesh dyadic toward the pole and a measured-ratio geometric extrapolation of
// the remaining tail. The per-node weight carries sin^{n-2}(theta), so with
// b = theta^{-1-2s} sin^{-(n-2)} the product stays the exact power law.
double angular_dyadic(const Vec& v, const Vec& vs, const KernelParams& p,
                      const QuadratureSpec& q, double theta_hi,
                      const FrameFn& w) {
  Vec k_hat = normalized(v - vs);
  auto basis = complement_basis({k_hat}, p.n);
  Ring ring = make_ring(basis, p.n, q);
  const GaussRule& rule = gauss_legendre(q.nodes_per_cell);
  double hi = theta_hi;
  double total = 0.0, c_prev = 0.0, c_last = 0.0;
  int cells = 0;
  for (int m = 0; m < q.dyadic_depth && hi > q.theta_min; ++m) {
    double lo = 0.5 * hi;
    double c = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      double theta = 0.5 * (lo + hi) + 0.5 * (hi - lo) * rule.nodes[i];
      double wt = 0.5 * (hi - lo) * rule.weights[i];
      double ct = std::cos(theta), st = std::sin(theta);
      double ringsum = 0.0;
      for (const Vec& d : ring.dirs) {
        Vec sigma = ct * k_hat + st * d;
        CollisionFrame fr = collide(v, vs, sigma);
        ringsum += kernel_B(fr, p) * w(fr);
      }
      c += wt * std::pow(st, p.n - 2) * ring.weight * ringsum;
    }
    total += c;
    c_prev = c_last;
    c_last = c;
    ++cells;
    hi = lo;
  }
  if (cells >= 2 && std::abs(c_prev) > 1e-300) {
    double rho = std::min(std::abs(c_last) / std::abs(c_prev), 0.9);
    total += c_last * rho / (1.0 - rho);
  }
  return total;
}

// int dsigma kernel(frame) w(frame) over theta in [ta, tb]; no pole inside
// the band, so a plain composite rule suffices.
double angular_band(const Vec& v, const Vec& vs, int n,
                    const QuadratureSpec& q, double ta, double tb,
                    const FrameFn& kernel, const FrameFn& w) {
  if (!(tb > ta)) return 0.0;
  Vec k_hat = normalized(v - vs);
  auto basis = complement_basis({k_hat}, n);
  Ring ring = make_ring(basis, n, q);
  int panels = std::clamp(static_cast<int>(std::ceil((tb - ta) / 0.15)), 2, 16);
  std::vector<double> ts, ws;
  composite_gl(ta, tb, panels, q.nodes_per_cell, ts, ws);
  double total = 0.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    double ct = std::cos(ts[i]), st = std::sin(ts[i]);
    double ringsum = 0.0;
    for (const Vec& d : ring.dirs) {
      Vec sigma = ct * k_hat + st * d;
      CollisionFrame fr = collide(v, vs, sigma);
      ringsum += kernel(fr) * w(fr);
    }
    total += ws[i] * std::pow(st, n - 2) * ring.weight * ringsum;
  }
  return total;
}

// Deterministic double integral over v (tensor grid of the given radius) and
// v_* (tensor grid weighted by g); `pair` supplies everything inside.
double det_pair_pass(const Density& g, int n, const QuadratureSpec& q,
                     double radius_v, const PairFn& pair) {
  Grid gv = tensor_grid(n, radius_v, q.outer_panels, q.outer_nodes);
  std::vector<Vec> spts;
  std::vector<double> sw;
  density_nodes(g, n, q, spts, sw);
  std::vector<double> buf(gv.pts.size());
  parallel_for(gv.pts.size(), [&](std::size_t i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < spts.size(); ++j)
      acc += sw[j] * pair(gv.pts[i], spts[j], q);
    buf[i] = gv.wts[i] * acc;
  });
  return pairwise_sum(buf);
}

WeakResult finish(double fine, double coarse, const QuadratureSpec& q) {
  WeakResult r;
  r.value = fine;
  r.error = std::abs(fine - coarse);
  r.converged =
      r.error <= std::max(q.abs_tol, std::abs(fine) * q.rel_tol) * 1e4;
  return r;
}

WeakResult det_pair_integral(const Density& g, int n, const QuadratureSpec& q,
                             double radius_v, const PairFn& pair) {
  double fine = det_pair_pass(g, n, q, radius_v, pair);
  double coarse = det_pair_pass(g, n, halved(q), radius_v, pair);
  return finish(fine, coarse, q);
}

WeakResult mc_finish(std::vector<double>& buf, const QuadratureSpec& q) {
  const std::size_t n = buf.size();
  double mean = pairwise_sum(buf) / static_cast<double>(n);
  for (double& x : buf) {
    double d = x - mean;
    x = d * d;
  }
  double var = n > 1 ? pairwise_sum(buf) /
                           (static_cast<double>(n) * static_cast<double>(n - 1))
                     : 0.0;
  WeakResult r;
  r.value = mean;
  r.error = std::sqrt(var);
  r.converged =
      r.error <= std::max(q.abs_tol, std::abs(mean) * q.rel_tol) * 1e4;
  return r;
}

double gauss_weight(const Vec& v, double sigma) {
  return std::pow(2.0 * M_PI * sigma * sigma, 0.5 * v.n) *
         std::exp(norm2(v) / (2.0 * sigma * sigma));
}

// theta proposal for one sample: returns false to reject the pair, otherwise
// sets theta and the reciprocal proposal density.
using ThetaSampler =
    std::function<bool(RngStream&, double rel, double& theta, double& inv_pdf)>;
// Per-pair factory for the sigma-node weight (excluding B and g_*); an empty
// function skips the pair.
using PairFactory = std::function<FrameFn(const Vec&, const Vec&)>;

WeakResult mc_sigma_generic(const Density& g, const KernelParams& p,
                            const QuadratureSpec& q, double sigma_v,
                            std::uint64_t tag, const ThetaSampler& sampler,
                            const std::function<double(const CollisionFrame&)>&
                                kernel,
                            const PairFactory& factory) {
  const int n = p.n;
  const double sigma_s =
      std::clamp(std::min(g.radius, q.r_infinity) / 3.0, 1.0, 3.0);
  const std::uint64_t count = q.mc_samples;
  std::vector<double> buf(count);
  parallel_for(count, [&](std::size_t i) {
    RngStream rng(q.seed, (tag << 40) + i);
    Vec v = rng.normal_vec(n, 0.0, nullptr, sigma_v);
    Vec vs = rng.normal_vec(n, 0.0, nullptr, sigma_s);
    buf[i] = 0.0;
    double gval = g.eval(vs);
    if (gval == 0.0) return;
    Vec d = v - vs;
    double rel = norm(d);
    if (rel < kTinySpeed) return;
    double theta = 0.0, inv_pdf = 0.0;
    if (!sampler(rng, rel, theta, inv_pdf)) return;
    FrameFn w = factory(v, vs);
    if (!w) return;
    Vec k_hat = (1.0 / rel) * d;
    auto basis = complement_basis({k_hat}, n);
    Ring ring = make_ring(basis, n, q);
    double ct = std::cos(theta), st = std::sin(theta);
    double ringsum = 0.0;
    for (const Vec& dir : ring.dirs) {
      Vec sigma = ct * k_hat + st * dir;
      CollisionFrame fr = collide(v, vs, sigma);
      ringsum += kernel(fr) * w(fr);
    }
    buf[i] = gauss_weight(v, sigma_v) * gauss_weight(vs, sigma_s) * gval *
             ring.weight * ringsum * std::pow(st, n - 2) * inv_pdf;
  });
  return mc_finish(buf, q);
}

ThetaSampler pole_sampler(double s, double theta_hi) {
  double pexp = 1.0 / (2.0 - 2.0 * s);
  double pcoef = (2.0 - 2.0 * s) / theta_hi;
  return [=](RngStream& rng, double, double& theta, double& inv_pdf) {
    double u = rng.uniform();
    double frac = std::pow(u, pexp);
    theta = theta_hi * frac;
    inv_pdf = 1.0 / (pcoef * std::pow(frac, 1.0 - 2.0 * s));
    return theta > 0.0;
  };
}

ThetaSampler band_sampler(double ta, double tb) {
  return [=](RngStream& rng, double, double& theta, double& inv_pdf) {
    if (!(tb > ta)) return false;
    theta = rng.uniform(ta, tb);
    inv_pdf = tb - ta;
    return true;
  };
}

// theta band induced by |v - v'| = rel sin(theta/2) in [lo, hi], capped at
// pi/2; returns false when empty.
bool dyadic_theta_band(const DyadicIndex& k, double rel, double& ta,
                       double& tb) {
  double slo = k.support_lo() / rel;
  double shi = k.support_hi() / rel;
  if (slo >= 1.0) return false;
  ta = 2.0 * std::asin(slo);
  tb = std::min(2.0 * std::asin(std::min(1.0, shi)), 0.5 * M_PI);
  return tb > ta;
}

// ---------- Carleman-side engines ----------

// Supplies the radial mesh on the plane for a given |v' - v_*|; returns false
// when the radial support is empty.
using RadialFn = std::function<bool(double unorm, const QuadratureSpec&,
                                    std::vector<double>&,
                                    std::vector<double>&)>;

double det_carleman_pass(
    const Density& g, int n, const QuadratureSpec& q, double radius_p,
    const std::function<double(const Vec&)>& outer_w, const RadialFn& radial,
    const std::function<double(const Vec&, const Vec&, const Vec&)>& plane_w) {
  Grid gp = tensor_grid(n, radius_p, q.outer_panels, q.outer_nodes);
  std::vector<Vec> spts;
  std::vector<double> sw;
  density_nodes(g, n, q, spts, sw);
  std::vector<double> buf(gp.pts.size());
  parallel_for(gp.pts.size(), [&](std::size_t i) {
    const Vec& vp = gp.pts[i];
    buf[i] = 0.0;
    double ow = outer_w(vp);
    if (std::abs(ow) < 1e-300) return;
    double acc = 0.0;
    std::vector<double> rs, rw;
    for (std::size_t j = 0; j < spts.size(); ++j) {
      Vec u = vp - spts[j];
      double un = norm(u);
      if (un < 1e-10) continue;
      if (!radial(un, q, rs, rw)) continue;
      auto basis = complement_basis({(1.0 / un) * u}, n);
      Ring ring = make_ring(basis, n, q);
      double ps = 0.0;
      for (std::size_t a = 0; a < rs.size(); ++a) {
        double rfac = rw[a] * std::pow(rs[a], n - 2) * ring.weight;
        for (const Vec& dir : ring.dirs)
          ps += rfac * plane_w(vp + rs[a] * dir, vp, spts[j]);
      }
      acc += sw[j] * ps;
    }
    buf[i] = gp.wts[i] * ow * acc;
  });
  return pairwise_sum(buf);
}

WeakResult det_carleman(
    const Density& g, int n, const QuadratureSpec& q, double radius_p,
    const std::function<double(const Vec&)>& outer_w, const RadialFn& radial,
    const std::function<double(const Vec&, const Vec&, const Vec&)>& plane_w) {
  double fine = det_carleman_pass(g, n, q, radius_p, outer_w, radial, plane_w);
  double coarse =
      det_carleman_pass(g, n, halved(q), radius_p, outer_w, radial, plane_w);
  return finish(fine, coarse, q);
}

using RadialSampler =
    std::function<bool(RngStream&, double unorm, double& r, double& inv_pdf)>;

WeakResult mc_carleman(
    const Density& g, const KernelParams& p, const QuadratureSpec& q,
    double sigma_p, std::uint64_t tag, const RadialSampler& sampler,
    const std::function<double(const Vec&)>& outer_w,
    const std::function<double(const Vec&, const Vec&, const Vec&)>& plane_w) {
  const int n = p.n;
  const double sigma_s =
      std::clamp(std::min(g.radius, q.r_infinity) / 3.0, 1.0, 3.0);
  const std::uint64_t count = q.mc_samples;
  std::vector<double> buf(count);
  parallel_for(count, [&](std::size_t i) {
    RngStream rng(q.seed, (tag << 40) + i);
    Vec vp = rng.normal_vec(n, 0.0, nullptr, sigma_p);
    Vec vs = rng.normal_vec(n, 0.0, nullptr, sigma_s);
    buf[i] = 0.0;
    double gval = g.eval(vs);
    if (gval == 0.0) return;
    Vec u = vp - vs;
    double un = norm(u);
    if (un < 1e-10) return;
    double r = 0.0, inv_pdf = 0.0;
    if (!sampler(rng, un, r, inv_pdf)) return;
    double ow = outer_w(vp);
    if (ow == 0.0) return;
    auto basis = complement_basis({(1.0 / un) * u}, n);
    Ring ring = make_ring(basis, n, q);
    double ps = 0.0;
    for (const Vec& dir : ring.dirs) ps += plane_w(vp + r * dir, vp, vs);
    buf[i] = gauss_weight(vp, sigma_p) * gauss_weight(vs, sigma_s) * gval *
             ow * ps * ring.weight * std::pow(r, n - 2) * inv_pdf;
  });
  return mc_finish(buf, q);
}

double support_radius_or(const FunctionRep& f, double cap) {
  return std::min(cap, f.support_radius());
}

double mc_sigma_v(double radius_v) {
  return std::clamp(radius_v / 3.0, 1.0, 4.0);
}

// 1 - A where A is the ratio of kinetic prefactors across the Carleman
// plane:
//   A = Phi(v'-v_*)|v'-v_*|^n / Phi(v-v_*)|v-v_*|^n
//     = (|u|^2 / (r^2 + |u|^2))^{(n+gamma)/2}  for v on the plane.
double carleman_one_minus_a(double r, double un, const KernelParams& p) {
  double t = (r / un) * (r / un);
  return -std::expm1(-0.5 * (p.n + p.gamma) * std::log1p(t));
}

WeakResult trilinear_impl(const Density& g, const FunctionRep& f,
                          const FunctionRep& h, const KernelParams& p,
                          const QuadratureSpec& q, double theta_hi,
                          std::uint64_t tag) {
  double radius_v = support_radius_or(f, q.r_infinity);
  if (q.backend == Backend::MonteCarlo) {
    return mc_sigma_generic(
        g, p, q, mc_sigma_v(radius_v), tag, pole_sampler(p.s, theta_hi),
        [&p](const CollisionFrame& fr) { return kernel_B(fr, p); },
        [&](const Vec& v, const Vec&) -> FrameFn {
          double fv = f.eval(v);
          if (std::abs(fv) < 1e-14) return nullptr;
          double hv = h.eval(v);
          return [&h, fv, hv](const CollisionFrame& fr) {
            return fv * (h.eval(fr.v_prime) - hv);
          };
        });
  }
  return det_pair_integral(
      g, p.n, q, radius_v,
      [&](const Vec& v, const Vec& vs, const QuadratureSpec& qq) {
        double fv = f.eval(v);
        if (std::abs(fv) < 1e-14) return 0.0;
        if (norm(v - vs) < kTinySpeed) return 0.0;
        double hv = h.eval(v);
        return fv * angular_dyadic(v, vs, p, qq, theta_hi,
                                   [&h, hv](const CollisionFrame& fr) {
                                     return h.eval(fr.v_prime) - hv;
                                   });
      });
}

}  // namespace

WeakResult trilinear_sigma(const Density& g, const FunctionRep& f,
                           const FunctionRep& h, const KernelParams& params,
                           const QuadratureSpec& quad) {
  return trilinear_impl(g, f, h, params, quad, 0.5 * M_PI, 21);
}

WeakResult trilinear_gain_loss(const Density& g, const FunctionRep& f,
                               const FunctionRep& h,
                               const KernelParams& params,
                               const QuadratureSpec& quad) {
  const double tc = kThetaSplit;
  WeakResult below = trilinear_impl(g, f, h, params, quad, tc, 22);
  double radius_v = support_radius_or(f, quad.r_infinity);
  WeakResult above;
  auto bfull = [&params](const CollisionFrame& fr) {
    return kernel_B(fr, params);
  };
  if (quad.backend == Backend::MonteCarlo) {
    above = mc_sigma_generic(
        g, params, quad, mc_sigma_v(radius_v), 23,
        band_sampler(tc, 0.5 * M_PI), bfull,
        [&](const Vec& v, const Vec&) -> FrameFn {
          double fv = f.eval(v);
          if (std::abs(fv) < 1e-14) return nullptr;
          double hv = h.eval(v);
          return [&h, fv, hv](const CollisionFrame& fr) {
            // gain and loss kept as separate terms on purpose
            double gain = h.eval(fr.v_prime);
            double loss = hv;
            return fv * gain - fv * loss;
          };
        });
  } else {
    above = det_pair_integral(
        g, params.n, quad, radius_v,
        [&](const Vec& v, const Vec& vs, const QuadratureSpec& qq) {
          double fv = f.eval(v);
          if (std::abs(fv) < 1e-14) return 0.0;
          if (norm(v - vs) < kTinySpeed) return 0.0;
          double hv = h.eval(v);
          auto one = [](const CollisionFrame&) { return 1.0; };
          double gain =
              angular_band(v, vs, params.n, qq, tc, 0.5 * M_PI, bfull,
                           [&h](const CollisionFrame& fr) {
                             return h.eval(fr.v_prime);
                           });
          double bmass =
              angular_band(v, vs, params.n, qq, tc, 0.5 * M_PI, bfull, one);
          return fv * gain - fv * hv * bmass;
        });
  }
  WeakResult r;
  r.value = below.value + above.value;
  r.error = below.error + above.error;
  r.converged = below.converged && above.converged;
  return r;
}

WeakResult n_g(const Density& g, const FunctionRep& f,
               const KernelParams& params, const QuadratureSpec& quad) {
  // (f' - f)^2 has mass where only f' is supported, so the v-domain covers
  // the f-support enlarged by the reachable |v - v'| <= |v' - v_*|.
  double radius_v = std::min(
      quad.r_infinity, f.support_radius() + std::min(g.radius, quad.r_infinity));
  if (quad.backend == Backend::MonteCarlo) {
    return mc_sigma_generic(
        g, params, quad, mc_sigma_v(radius_v), 24,
        pole_sampler(params.s, 0.5 * M_PI),
        [&params](const CollisionFrame& fr) { return kernel_B(fr, params); },
        [&](const Vec& v, const Vec&) -> FrameFn {
          double fv = f.eval(v);
          return [&f, fv](const CollisionFrame& fr) {
            double d = f.eval(fr.v_prime) - fv;
            return 0.5 * d * d;
          };
        });
  }
  return det_pair_integral(
      g, params.n, quad, radius_v,
      [&](const Vec& v, const Vec& vs, const QuadratureSpec& qq) {
        if (norm(v - vs) < kTinySpeed) return 0.0;
        double fv = f.eval(v);
        return angular_dyadic(v, vs, params, qq, 0.5 * M_PI,
                              [&f, fv](const CollisionFrame& fr) {
                                double d = f.eval(fr.v_prime) - fv;
                                return 0.5 * d * d;
                              });
      });
}

WeakResult k_g(const Density& g, const FunctionRep& f,
               const KernelParams& params, const QuadratureSpec& quad) {
  double radius_v = std::min(
      quad.r_infinity, f.support_radius() + std::min(g.radius, quad.r_infinity));
  if (quad.backend == Backend::MonteCarlo) {
    return mc_sigma_generic(
        g, params, quad, mc_sigma_v(radius_v), 25,
        pole_sampler(params.s, 0.5 * M_PI),
        [&params](const CollisionFrame& fr) { return kernel_B(fr, params); },
        [&](const Vec& v, const Vec&) -> FrameFn {
          double fv2 = f.eval(v);
          fv2 *= fv2;
          return [&f, fv2](const CollisionFrame& fr) {
            double fp = f.eval(fr.v_prime);
            return 0.5 * (fp * fp - fv2);
          };
        });
  }
  return det_pair_integral(
      g, params.n, quad, radius_v,
      [&](const Vec& v, const Vec& vs, const QuadratureSpec& qq) {
        if (norm(v - vs) < kTinySpeed) return 0.0;
        double fv2 = f.eval(v);
        fv2 *= fv2;
        return angular_dyadic(v, vs, params, qq, 0.5 * M_PI,
                              [&f, fv2](const CollisionFrame& fr) {
                                double fp = f.eval(fr.v_prime);
                                return 0.5 * (fp * fp - fv2);
                              });
      });
}

WeakResult k_g_oracle(const Density& g, const FunctionRep& f,
                      const KernelParams& params, const QuadratureSpec& quad) {
  double c_prime = cancellation_lemma(params).c_prime;
  double radius_v = support_radius_or(f, quad.r_infinity);
  WeakResult base;
  if (quad.backend == Backend::MonteCarlo) {
    const int n = params.n;
    double sv = mc_sigma_v(radius_v);
    double ss = std::clamp(std::min(g.radius, quad.r_infinity) / 3.0, 1.0, 3.0);
    std::vector<double> buf(quad.mc_samples);
    parallel_for(quad.mc_samples, [&](std::size_t i) {
      RngStream rng(quad.seed, (26ULL << 40) + i);
      Vec v = rng.normal_vec(n, 0.0, nullptr, sv);
      Vec vs = rng.normal_vec(n, 0.0, nullptr, ss);
      buf[i] = 0.0;
      double gval = g.eval(vs);
      if (gval == 0.0) return;
      double rel = norm(v - vs);
      if (rel < kTinySpeed) return;
      double fv = f.eval(v);
      buf[i] = gauss_weight(v, sv) * gauss_weight(vs, ss) * gval * fv * fv *
               std::pow(rel, params.gamma);
    });
    base = mc_finish(buf, quad);
  } else {
    base = det_pair_integral(
        g, params.n, quad, radius_v,
        [&](const Vec& v, const Vec& vs, const QuadratureSpec&) {
          double rel = norm(v - vs);
          if (rel < kTinySpeed) return 0.0;
          double fv = f.eval(v);
          return fv * fv * std::pow(rel, params.gamma);
        });
  }
  base.value *= c_prime;
  base.error *= std::abs(c_prime);
  return base;
}

WeakResult dyadic_piece(DyadicKind which, int k, const Density& g,
                        const FunctionRep& f, const FunctionRep& h,
                        const KernelParams& params,
                        const QuadratureSpec& quad) {
  const DyadicIndex kk{k};
  if (which == DyadicKind::Star) {
    // D^k_* = int dv' f' h' int dv_* g_* int_plane B~_k
    double radius_p = std::min(support_radius_or(f, quad.r_infinity),
                               support_radius_or(h, quad.r_infinity));
    auto outer_w = [&](const Vec& vp) { return f.eval(vp) * h.eval(vp); };
    auto plane_w = [&](const Vec& v, const Vec& vp, const Vec& vs) {
      return kernel_B_tilde_dyadic(v, vs, vp, params, kk);
    };
    if (quad.backend == Backend::MonteCarlo) {
      return mc_carleman(
          g, params, quad, mc_sigma_v(radius_p),
          1024 + static_cast<std::uint64_t>(k + 100),
          [&](RngStream& rng, double un, double& r, double& inv_pdf) {
            double lo = kk.support_lo();
            double hi = std::min(kk.support_hi(), un * (1.0 - 1e-12));
            if (!(hi > lo)) return false;
            r = rng.uniform(lo, hi);
            inv_pdf = hi - lo;
            return true;
          },
          outer_w, plane_w);
    }
    auto radial = [&](double un, const QuadratureSpec& qq,
                      std::vector<double>& rs, std::vector<double>& rw) {
      double lo = kk.support_lo();
      double hi = std::min(kk.support_hi(), un * (1.0 - 1e-12));
      if (!(hi > lo)) return false;
      composite_gl(lo, hi, std::max(2, qq.outer_panels), qq.nodes_per_cell, rs,
                   rw);
      return true;
    };
    return det_carleman(g, params.n, quad, radius_p, outer_w, radial, plane_w);
  }

  const bool plus = which == DyadicKind::Plus;
  auto bk = [&params, kk](const CollisionFrame& fr) {
    return kernel_B_dyadic(fr, params, kk);
  };
  double radius_v = support_radius_or(f, quad.r_infinity);
  if (quad.backend == Backend::MonteCarlo) {
    return mc_sigma_generic(
        g, params, quad, mc_sigma_v(radius_v),
        (plus ? 768ULL : 896ULL) + static_cast<std::uint64_t>(k + 100),
        [kk](RngStream& rng, double rel, double& theta, double& inv_pdf) {
          double ta, tb;
          if (!dyadic_theta_band(kk, rel, ta, tb)) return false;
          theta = rng.uniform(ta, tb);
          inv_pdf = tb - ta;
          return true;
        },
        bk,
        [&](const Vec& v, const Vec&) -> FrameFn {
          double fv = f.eval(v);
          if (std::abs(fv) < 1e-14) return nullptr;
          if (plus) {
            return [&h, fv](const CollisionFrame& fr) {
              return fv * h.eval(fr.v_prime);
            };
          }
          double fh = fv * h.eval(v);
          return [fh](const CollisionFrame&) { return fh; };
        });
  }
  return det_pair_integral(
      g, params.n, quad, radius_v,
      [&](const Vec& v, const Vec& vs, const QuadratureSpec& qq) {
        double fv = f.eval(v);
        if (std::abs(fv) < 1e-14) return 0.0;
        double rel = norm(v - vs);
        if (rel < kTinySpeed) return 0.0;
        double ta, tb;
        if (!dyadic_theta_band(kk, rel, ta, tb)) return 0.0;
        if (plus) {
          return fv * angular_band(v, vs, params.n, qq, ta, tb, bk,
                                   [&h](const CollisionFrame& fr) {
                                     return h.eval(fr.v_prime);
                                   });
        }
        auto one = [](const CollisionFrame&) { return 1.0; };
        return fv * h.eval(v) *
               angular_band(v, vs, params.n, qq, ta, tb, bk, one);
      });
}

WeakResult dyadic_plus_carleman(int k, const Density& g, const FunctionRep& f,
                                const FunctionRep& h,
                                const KernelParams& params,
                                const QuadratureSpec& quad) {
  const DyadicIndex kk{k};
  double radius_p = support_radius_or(h, quad.r_infinity);
  auto outer_w = [&](const Vec& vp) { return h.eval(vp); };
  auto plane_w = [&](const Vec& v, const Vec& vp, const Vec& vs) {
    double bt = kernel_B_tilde_dyadic(v, vs, vp, params, kk);
    if (bt == 0.0) return 0.0;
    return bt * f.eval(v);
  };
  if (quad.backend == Backend::MonteCarlo) {
    return mc_carleman(
        g, params, quad, mc_sigma_v(radius_p),
        1280 + static_cast<std::uint64_t>(k + 100),
        [&](RngStream& rng, double un, double& r, double& inv_pdf) {
          double lo = kk.support_lo();
          double hi = std::min(kk.support_hi(), un * (1.0 - 1e-12));
          if (!(hi > lo)) return false;
          r = rng.uniform(lo, hi);
          inv_pdf = hi - lo;
          return true;
        },
        outer_w, plane_w);
  }
  auto radial = [&](double un, const QuadratureSpec& qq,
                    std::vector<double>& rs, std::vector<double>& rw) {
    double lo = kk.support_lo();
    double hi = std::min(kk.support_hi(), un * (1.0 - 1e-12));
    if (!(hi > lo)) return false;
    composite_gl(lo, hi, std::max(2, qq.outer_panels), qq.nodes_per_cell, rs,
                 rw);
    return true;
  };
  return det_carleman(g, params.n, quad, radius_p, outer_w, radial, plane_w);
}

WeakResult o_star(const Density& g, const FunctionRep& f, const FunctionRep& h,
                  const KernelParams& params, const QuadratureSpec& quad) {
  double radius_p = std::min(support_radius_or(f, quad.r_infinity),
                             support_radius_or(h, quad.r_infinity));
  auto outer_w = [&](const Vec& vp) { return f.eval(vp) * h.eval(vp); };
  auto plane_w = [&](const Vec& v, const Vec& vp, const Vec& vs) {
    double bt = kernel_B_tilde(v, vs, vp, params);
    if (bt == 0.0) return 0.0;
    double r = norm(v - vp);
    double un = norm(vp - vs);
    return bt * carleman_one_minus_a(r, un, params);
  };
  if (quad.backend == Backend::MonteCarlo) {
    double pexp = 1.0 / (2.0 - 2.0 * params.s);
    return mc_carleman(
        g, params, quad, mc_sigma_v(radius_p), 30,
        [&](RngStream& rng, double un, double& r, double& inv_pdf) {
          double frac = std::pow(rng.uniform(), pexp);
          r = un * (1.0 - 1e-12) * frac;
          if (r <= 0.0) return false;
          double pdf = (2.0 - 2.0 * params.s) *
                       std::pow(frac, 1.0 - 2.0 * params.s) /
                       (un * (1.0 - 1e-12));
          inv_pdf = 1.0 / pdf;
          return true;
        },
        outer_w, plane_w);
  }
  auto radial = [](double un, const QuadratureSpec& qq, std::vector<double>& rs,
                   std::vector<double>& rw) {
    radial_rule_dyadic(un * (1.0 - 1e-12), qq, rs, rw);
    return true;
  };
  return det_carleman(g, params.n, quad, radius_p, outer_w, radial, plane_w);
}

WeakResult weak_sigma_form(
    const Density& g, double radius_v,
    const std::function<double(const CollisionFrame&)>& w,
    const KernelParams& params, const QuadratureSpec& quad,
    std::uint64_t tag) {
  if (quad.backend == Backend::MonteCarlo) {
    return mc_sigma_generic(
        g, params, quad, mc_sigma_v(radius_v), tag,
        pole_sampler(params.s, 0.5 * M_PI),
        [&params](const CollisionFrame& fr) { return kernel_B(fr, params); },
        [&](const Vec&, const Vec&) -> FrameFn { return w; });
  }
  return det_pair_integral(
      g, params.n, quad, radius_v,
      [&](const Vec& v, const Vec& vs, const QuadratureSpec& qq) {
        if (norm(v - vs) < kTinySpeed) return 0.0;
        return angular_dyadic(v, vs, params, qq, 0.5 * M_PI, w);
      });
}

double gram_det(const Vec& u, const Vec& u_bar) {
  double d = norm2(u) * norm2(u_bar) - dot(u, u_bar) * dot(u, u_bar);
  return std::max(d, 0.0);
}

double CoplaneCheck::gap() const {
  double scale = std::max({std::abs(lhs), std::abs(rhs), 1e-300});
  return std::abs(lhs - rhs) / scale;
}

namespace {

double coplane_lhs_pass(const TripleField& h, const Vec& v_star,
                        const Vec& v_bar_star, int n,
                        const QuadratureSpec& q) {
  Grid gv = tensor_grid(n, q.r_infinity, q.outer_panels, q.outer_nodes);
  auto sph = sphere_rule(n, q);
  std::vector<double> buf(gv.pts.size());
  parallel_for(gv.pts.size(), [&](std::size_t i) {
    const Vec& v = gv.pts[i];
    Vec mid = 0.5 * (v + v_star);
    double rho = 0.5 * norm(v - v_star);
    Vec midb = 0.5 * (v + v_bar_star);
    double rhob = 0.5 * norm(v - v_bar_star);
    double acc = 0.0;
    for (const auto& [sig, wsig] : sph) {
      Vec vp = mid + rho * sig;
      double inner = 0.0;
      for (const auto& [sigb, wsigb] : sph)
        inner += wsigb * h(v, vp, midb + rhob * sigb);
      acc += wsig * inner;
    }
    buf[i] = gv.wts[i] * acc;
  });
  return pairwise_sum(buf);
}

// RHS of the co-plane change of variables. The prefactor 2^{2(n-1)} comes
// from the two coarea normalizations (one per sphere measure).
double coplane_rhs_pass(const TripleField& h, const Vec& v_star,
                        const Vec& v_bar_star, int n, const QuadratureSpec& q,
                        double* excluded) {
  Grid ga = tensor_grid(n, q.r_infinity, q.outer_panels, q.outer_nodes);
  Grid gb = tensor_grid(n, q.r_infinity, q.outer_panels, q.outer_nodes + 1);
  const double cst = std::exp2(2.0 * (n - 1));
  std::vector<double> buf(ga.pts.size()), ex(ga.pts.size());
  std::vector<double> ts, tw;
  if (n == 3)
    composite_gl(-q.plane_radius, q.plane_radius,
                 std::max(4, 2 * q.outer_panels), q.outer_nodes, ts, tw);
  parallel_for(ga.pts.size(), [&](std::size_t i) {
    const Vec& vp = ga.pts[i];
    Vec u = vp - v_star;
    double un2 = norm2(u);
    double acc = 0.0, exc = 0.0;
    for (std::size_t j = 0; j < gb.pts.size(); ++j) {
      const Vec& vbp = gb.pts[j];
      Vec ub = vbp - v_bar_star;
      double d = gram_det(u, ub);
      if (d <= 1e-9 * un2 * norm2(ub) || un2 * norm2(ub) == 0.0) {
        exc += std::abs(ga.wts[i] * gb.wts[j]);
        continue;
      }
      double sq = std::sqrt(d);
      if (n == 2) {
        double det2 = u[0] * ub[1] - u[1] * ub[0];
        double b1 = dot(vp, u), b2 = dot(vbp, ub);
        Vec w{(b1 * ub[1] - u[1] * b2) / det2,
              (u[0] * b2 - b1 * ub[0]) / det2};
        acc += ga.wts[i] * gb.wts[j] * cst * h(w, vp, vbp) / sq;
      } else {
        Vec anchor = coplane_anchor(vp, u, vbp, ub);
        Vec tdir = complement_basis({normalized(u), normalized(ub)}, 3)[0];
        double line = 0.0;
        for (std::size_t a = 0; a < ts.size(); ++a) {
          Vec v = anchor + ts[a] * tdir;
          double sp = norm(v - v_star) * norm(v - v_bar_star);
          if (sp < 1e-12) continue;
          line += tw[a] * h(v, vp, vbp) / sp;
        }
        acc += ga.wts[i] * gb.wts[j] * cst * line / sq;
      }
    }
    buf[i] = acc;
    ex[i] = exc;
  });
  if (excluded) {
    double tot_a = 0.0, tot_b = 0.0;
    for (double w : ga.wts) tot_a += std::abs(w);
    for (double w : gb.wts) tot_b += std::abs(w);
    *excluded = pairwise_sum(ex) / std::max(tot_a * tot_b, 1e-300);
  }
  return pairwise_sum(buf);
}

double coplane_lhs_mc(const TripleField& h, const Vec& v_star,
                      const Vec& v_bar_star, int n, const QuadratureSpec& q,
                      double* err) {
  double sv = std::clamp(q.r_infinity / 3.0, 1.0, 4.0);
  double area = sphere_area(n);
  std::vector<double> buf(q.mc_samples);
  parallel_for(q.mc_samples, [&](std::size_t i) {
    RngStream rng(q.seed, (31ULL << 40) + i);
    Vec v = rng.normal_vec(n, 0.0, nullptr, sv);
    Vec sig = rng.unit_vec(n);
    Vec sigb = rng.unit_vec(n);
    Vec vp = 0.5 * (v + v_star) + (0.5 * norm(v - v_star)) * sig;
    Vec vbp = 0.5 * (v + v_bar_star) + (0.5 * norm(v - v_bar_star)) * sigb;
    buf[i] = gauss_weight(v, sv) * area * area * h(v, vp, vbp);
  });
  WeakResult r = mc_finish(buf, q);
  if (err) *err = r.error;
  return r.value;
}

double coplane_rhs_mc(const TripleField& h, const Vec& v_star,
                      const Vec& v_bar_star, int n, const QuadratureSpec& q,
                      double* err, double* excluded) {
  double sv = std::clamp(q.r_infinity / 3.0, 1.0, 4.0);
  double st = std::max(1.0, q.plane_radius / 3.0);
  const double cst = std::exp2(2.0 * (n - 1));
  std::vector<double> buf(q.mc_samples), ex(q.mc_samples);
  parallel_for(q.mc_samples, [&](std::size_t i) {
    RngStream rng(q.seed, (32ULL << 40) + i);
    Vec vp = rng.normal_vec(n, 0.0, nullptr, sv);
    Vec vbp = rng.normal_vec(n, 0.0, nullptr, sv);
    double t = (n == 3) ? st * rng.normal() : 0.0;
    buf[i] = 0.0;
    ex[i] = 0.0;
    Vec u = vp - v_star;
    Vec ub = vbp - v_bar_star;
    double d = gram_det(u, ub);
    double wdens = gauss_weight(vp, sv) * gauss_weight(vbp, sv);
    if (d <= 1e-9 * norm2(u) * norm2(ub) || norm2(u) * norm2(ub) == 0.0) {
      ex[i] = 1.0;  // dropped-sample fraction
      return;
    }
    double sq = std::sqrt(d);
    if (n == 2) {
      double det2 = u[0] * ub[1] - u[1] * ub[0];
      double b1 = dot(vp, u), b2 = dot(vbp, ub);
      Vec w{(b1 * ub[1] - u[1] * b2) / det2, (u[0] * b2 - b1 * ub[0]) / det2};
      buf[i] = wdens * cst * h(w, vp, vbp) / sq;
    } else {
      Vec anchor = coplane_anchor(vp, u, vbp, ub);
      Vec tdir = complement_basis({normalized(u), normalized(ub)}, 3)[0];
      Vec v = anchor + t * tdir;
      double sp = norm(v - v_star) * norm(v - v_bar_star);
      if (sp < 1e-12) return;
      double tw = std::sqrt(2.0 * M_PI) * st * std::exp(t * t / (2 * st * st));
      buf[i] = wdens * cst * tw * h(v, vp, vbp) / (sp * sq);
    }
  });
  WeakResult r = mc_finish(buf, q);
  if (err) *err = r.error;
  if (excluded)
    *excluded = pairwise_sum(ex) / static_cast<double>(q.mc_samples);
  return r.value;
}

}  // namespace

CoplaneCheck coplane_identity_check(const TripleField& h, const Vec& v_star,
                                    const Vec& v_bar_star, int n,
                                    const KernelParams& params,
                                    const QuadratureSpec& quad) {
  if (n != params.n)
    throw ParameterError("co-plane check: dimension mismatch");
  CoplaneCheck out;
  if (quad.backend == Backend::MonteCarlo) {
    out.lhs = coplane_lhs_mc(h, v_star, v_bar_star, n, quad, &out.lhs_err);
    out.rhs = coplane_rhs_mc(h, v_star, v_bar_star, n, quad, &out.rhs_err,
                             &out.excluded_mass);
    return out;
  }
  out.lhs = coplane_lhs_pass(h, v_star, v_bar_star, n, quad);
  double lhs_c = coplane_lhs_pass(h, v_star, v_bar_star, n, halved(quad));
  out.lhs_err = std::abs(out.lhs - lhs_c);
  out.rhs =
      coplane_rhs_pass(h, v_star, v_bar_star, n, quad, &out.excluded_mass);
  double rhs_c = coplane_rhs_pass(h, v_star, v_bar_star, n, halved(quad),
                                  nullptr);
  out.rhs_err = std::abs(out.rhs - rhs_c);
  return out;
}

CoercivityProfile coercivity_profile(const Density& g, const FunctionRep& f,
                                     const KernelParams& params,
                                     const QuadratureSpec& quad, int k_min,
                                     int k_max, double radius_r) {
  if (k_max < k_min)
    throw ParameterError("coercivity profile: empty window");
  const int n = params.n;
  const int nk = k_max - k_min + 1;
  double radius_v = std::min(
      quad.r_infinity,
      f.support_radius() + std::exp2(static_cast<double>(-k_min)));
  Grid gv = tensor_grid(n, radius_v, quad.outer_panels, quad.outer_nodes);
  // polar grid for v_* on B_R: smooth in r and direction, no staircase error
  std::vector<double> rr, rw;
  composite_gl(0.0, radius_r, std::max(2, quad.outer_panels), quad.outer_nodes,
               rr, rw);
  auto sph = sphere_rule(n, quad);
  std::vector<Vec> spts;
  std::vector<double> sw;
  for (std::size_t a = 0; a < rr.size(); ++a) {
    for (const auto& [dir, wd] : sph) {
      Vec vs = rr[a] * dir;
      double val = g.eval(vs) * rw[a] * std::pow(rr[a], n - 1) * wd;
      if (std::abs(val) > 1e-300) {
        spts.push_back(vs);
        sw.push_back(val);
      }
    }
  }
  const double power = n - 1 + params.gamma + 2.0 * params.s;
  std::vector<double> buf(gv.pts.size() * nk, 0.0);
  parallel_for(gv.pts.size(), [&](std::size_t i) {
    const Vec& v = gv.pts[i];
    double fv = f.eval(v);
    for (std::size_t j = 0; j < spts.size(); ++j) {
      const Vec& vs = spts[j];
      double rel = norm(v - vs);
      if (rel < kTinySpeed) continue;
      double wjt = sw[j] * std::pow(rel, power) * gv.wts[i];
      // theta caps: theta_k = 2 asin(min(1, 2^{-k}/rel)) wedge pi/2,
      // decreasing in k; integrate the bands once and accumulate.
      std::vector<double> caps(nk);
      for (int k = k_min; k <= k_max; ++k)
        caps[k - k_min] = std::min(
            2.0 * std::asin(std::min(1.0, std::exp2(-k) / rel)), 0.5 * M_PI);
      Vec k_hat = normalized(v - vs);
      auto basis = complement_basis({k_hat}, n);
      Ring ring = make_ring(basis, n, quad);
      auto band = [&](double ta, double tb) {
        if (!(tb > ta + 1e-15)) return 0.0;
        int panels =
            std::clamp(static_cast<int>(std::ceil((tb - ta) / 0.3)), 1, 8);
        std::vector<double> tsn, tswn;
        composite_gl(ta, tb, panels, quad.nodes_per_cell, tsn, tswn);
        double s = 0.0;
        for (std::size_t a = 0; a < tsn.size(); ++a) {
          double ct = std::cos(tsn[a]), st = std::sin(tsn[a]);
          double ringsum = 0.0;
          for (const Vec& d : ring.dirs) {
            CollisionFrame fr = collide(v, vs, ct * k_hat + st * d);
            double df = f.eval(fr.v_prime) - fv;
            ringsum += df * df;
          }
          s += tswn[a] * std::pow(st, n - 2) * ring.weight * ringsum;
        }
        return s;
      };
      double cum = band(0.0, caps[nk - 1]);
      buf[i * nk + (nk - 1)] += wjt * cum;
      for (int idx = nk - 2; idx >= 0; --idx) {
        cum += band(caps[idx + 1], caps[idx]);
        buf[i * nk + idx] += wjt * cum;
      }
    }
  });
  CoercivityProfile prof;
  prof.ks.resize(nk);
  prof.i_k.assign(nk, 0.0);
  std::vector<double> col(gv.pts.size());
  for (int idx = 0; idx < nk; ++idx) {
    prof.ks[idx] = k_min + idx;
    for (std::size_t i = 0; i < gv.pts.size(); ++i) col[i] = buf[i * nk + idx];
    prof.i_k[idx] = pairwise_sum(col);
  }
  prof.weighted_sum = 0.0;
  for (int idx = 0; idx < nk; ++idx)
    prof.weighted_sum +=
        std::exp2(prof.ks[idx] * (n - 1 + 2.0 * params.s)) * prof.i_k[idx];
  return prof;
}

WeakResult collision_invariant_defect(
    const FunctionRep& f, const std::function<double(const Vec&)>& phi,
    const KernelParams& params, const QuadratureSpec& quad) {
  Density g = Density::from_rep(f);
  double radius_v = support_radius_or(f, quad.r_infinity);
  if (quad.backend == Backend::MonteCarlo) {
    return mc_sigma_generic(
        g, params, quad, mc_sigma_v(radius_v), 27,
        pole_sampler(params.s, 0.5 * M_PI),
        [&params](const CollisionFrame& fr) { return kernel_B(fr, params); },
        [&](const Vec& v, const Vec& vs) -> FrameFn {
          double fv = f.eval(v);
          double base = phi(v) + phi(vs);
          return [&phi, fv, base](const CollisionFrame& fr) {
            return 0.5 * fv *
                   (phi(fr.v_prime) + phi(fr.v_star_prime) - base);
          };
        });
  }
  return det_pair_integral(
      g, params.n, quad, radius_v,
      [&](const Vec& v, const Vec& vs, const QuadratureSpec& qq) {
        if (norm(v - vs) < kTinySpeed) return 0.0;
        double fv = f.eval(v);
        if (std::abs(fv) < 1e-14) return 0.0;
        double base = phi(v) + phi(vs);
        return angular_dyadic(
            v, vs, params, qq, 0.5 * M_PI,
            [&phi, fv, base](const CollisionFrame& fr) {
              return 0.5 * fv *
                     (phi(fr.v_prime) + phi(fr.v_star_prime) - base);
            });
      });
}

}  // namespace boltz
