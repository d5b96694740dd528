#include "boltz/functions.hpp"

#include <algorithm>
#include <cmath>

#include "boltz/reduction.hpp"

namespace boltz {

namespace {

inline double comp_value(const LiftedGaussian& c, const Vec& x, int n) {
  double q = 0.0;
  for (int i = 0; i < n; ++i) {
    double d = x[i] - c.center[i];
    q += c.beta * d * d;
  }
  double dl = x[n] - c.center[n];
  q += c.beta_lift * dl * dl;
  return c.amp * std::exp(-q);
}

inline double axis_beta(const LiftedGaussian& c, int i, int n) {
  return i < n ? c.beta : c.beta_lift;
}

}  // namespace

double FunctionRep::eval_lifted(const Vec& x) const {
  double sum = 0.0;
  for (const auto& c : comps) sum += comp_value(c, x, n);
  return sum;
}

Vec FunctionRep::grad_lifted(const Vec& x) const {
  Vec g(n + 1);
  for (const auto& c : comps) {
    double val = comp_value(c, x, n);
    for (int i = 0; i <= n; ++i)
      g[i] += -2.0 * axis_beta(c, i, n) * (x[i] - c.center[i]) * val;
  }
  return g;
}

void FunctionRep::hessian_lifted(const Vec& x, double* h) const {
  const int m = n + 1;
  std::fill(h, h + m * m, 0.0);
  for (const auto& c : comps) {
    double val = comp_value(c, x, n);
    for (int i = 0; i < m; ++i) {
      double bi = axis_beta(c, i, n);
      double di = x[i] - c.center[i];
      for (int j = 0; j < m; ++j) {
        double bj = axis_beta(c, j, n);
        double dj = x[j] - c.center[j];
        double term = 4.0 * bi * bj * di * dj * val;
        if (i == j) term -= 2.0 * bi * val;
        h[i * m + j] += term;
      }
    }
  }
}

double sym_spectral_norm(const double* a, int m) {
  double w[kMaxDim * kMaxDim];
  std::copy(a, a + m * m, w);
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < m; ++p)
      for (int q = p + 1; q < m; ++q) off += w[p * m + q] * w[p * m + q];
    if (off < 1e-28) break;
    for (int p = 0; p < m; ++p) {
      for (int q = p + 1; q < m; ++q) {
        double apq = w[p * m + q];
        if (std::abs(apq) < 1e-30) continue;
        double theta = 0.5 * (w[q * m + q] - w[p * m + p]) / apq;
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double cs = 1.0 / std::sqrt(t * t + 1.0);
        double sn = t * cs;
        for (int i = 0; i < m; ++i) {
          double aip = w[i * m + p];
          double aiq = w[i * m + q];
          w[i * m + p] = cs * aip - sn * aiq;
          w[i * m + q] = sn * aip + cs * aiq;
        }
        for (int i = 0; i < m; ++i) {
          double api = w[p * m + i];
          double aqi = w[q * m + i];
          w[p * m + i] = cs * api - sn * aqi;
          w[q * m + i] = sn * api + cs * aqi;
        }
      }
    }
  }
  double out = 0.0;
  for (int i = 0; i < m; ++i) out = std::max(out, std::abs(w[i * m + i]));
  return out;
}

double FunctionRep::deriv_envelope_lifted(const Vec& x, int i) const {
  if (i != 1 && i != 2)
    throw ParameterError("deriv_envelope: order must be 1 or 2");
  double env = std::abs(eval_lifted(x));
  env = std::max(env, norm(grad_lifted(x)));
  if (i == 2) {
    double h[kMaxDim * kMaxDim];
    hessian_lifted(x, h);
    env = std::max(env, sym_spectral_norm(h, n + 1));
  }
  return env;
}

double FunctionRep::support_radius(double tail) const {
  double r = 1.0;
  for (const auto& c : comps) {
    double a = std::abs(c.amp);
    if (a <= tail || c.beta <= 0.0) continue;
    double cs = 0.0;
    for (int i = 0; i < n; ++i) cs += c.center[i] * c.center[i];
    r = std::max(r, std::sqrt(cs) + std::sqrt(std::log(a / tail) / c.beta));
  }
  return r;
}

FunctionRep FunctionRep::scaled(double c) const {
  FunctionRep out = *this;
  for (auto& comp : out.comps) comp.amp *= c;
  return out;
}

FunctionRep single_gaussian(int n, double amp, const Vec& center_lifted,
                            double beta) {
  if (!(beta > 0.0)) throw ParameterError("single_gaussian: beta must be > 0");
  FunctionRep f(n);
  LiftedGaussian c;
  c.amp = amp;
  c.center = center_lifted;
  c.beta = beta;
  c.beta_lift = beta;
  f.comps.push_back(c);
  return f;
}

FunctionRep maxwellian(const MaxwellianParams& params, int n) {
  if (!(params.rho > 0.0) || !(params.temp > 0.0))
    throw ParameterError("maxwellian: rho and T must be positive");
  FunctionRep f(n);
  LiftedGaussian c;
  c.amp = params.rho * std::pow(2.0 * M_PI * params.temp, -0.5 * n);
  c.center = Vec(n + 1);
  for (int i = 0; i < params.u.n; ++i) c.center[i] = params.u[i];
  c.beta = 0.5 / params.temp;
  c.beta_lift = 0.0;
  f.comps.push_back(c);
  return f;
}

Density Density::from_rep(const FunctionRep& rep) {
  Density d;
  d.n = rep.n;
  d.radius = rep.support_radius();
  d.eval = [rep](const Vec& v) { return rep.eval(v); };
  return d;
}

Density Density::ball_indicator(int n, double radius) {
  Density d;
  d.n = n;
  d.radius = radius;
  d.eval = [radius](const Vec& v) { return norm(v) <= radius ? 1.0 : 0.0; };
  return d;
}

Density Density::zero(int n) {
  Density d;
  d.n = n;
  d.radius = 1.0;
  d.eval = [](const Vec&) { return 0.0; };
  return d;
}

double assumption_u_constant(const FunctionRep& g, const KernelParams& params,
                             const QuadratureSpec& quad, int grid_per_axis) {
  const int n = params.n;
  const int i_exp = params.deriv_order();
  const double a_lo = params.gamma;
  const double a_hi = params.gamma + 2.0 * params.s;
  auto weight = [&](const Vec& vs) {
    return std::pow(bracket(vs), i_exp) * std::abs(g.eval(vs));
  };
  auto dirs = sphere_rule(n, quad);
  const double grid_l = 6.0;
  const int gp = std::max(3, grid_per_axis);
  std::size_t total = 1;
  for (int d = 0; d < n; ++d) total *= gp;
  std::vector<double> sup_per_point(total, 0.0);
  parallel_for(total, [&](std::size_t idx) {
    Vec v(n);
    std::size_t rem = idx;
    for (int d = 0; d < n; ++d) {
      int j = static_cast<int>(rem % gp);
      rem /= gp;
      v[d] = -grid_l + 2.0 * grid_l * j / (gp - 1);
    }
    double r_max = norm(v) + g.support_radius();
    std::vector<double> rs, ws;
    radial_rule_dyadic(r_max, quad, rs, ws);
    double k_lo = 0.0, k_hi = 0.0;
    for (std::size_t ir = 0; ir < rs.size(); ++ir) {
      double r = rs[ir];
      double ring = 0.0;
      for (const auto& [dir, w] : dirs) ring += w * weight(v + r * dir);
      double base = ws[ir] * std::pow(r, n - 1) * ring;
      k_lo += base * std::pow(r, a_lo);
      k_hi += base * std::pow(r, a_hi);
    }
    double br = bracket(v);
    sup_per_point[idx] = std::max(std::pow(br, -a_lo) * k_lo,
                                  std::pow(br, -a_hi) * k_hi);
  });
  double sup = 0.0;
  for (double x : sup_per_point) sup = std::max(sup, x);
  return sup;
}

double ball_mass(const Density& g, double radius_r,
                 const QuadratureSpec& quad) {
  auto dirs = sphere_rule(g.n, quad);
  std::vector<double> rs, ws;
  composite_gl(0.0, radius_r, 8, quad.nodes_per_cell, rs, ws);
  std::vector<double> partial(rs.size(), 0.0);
  parallel_for(rs.size(), [&](std::size_t ir) {
    double r = rs[ir];
    double ring = 0.0;
    for (const auto& [dir, w] : dirs) ring += w * g.eval(r * dir);
    partial[ir] = ws[ir] * std::pow(r, g.n - 1) * ring;
  });
  return pairwise_sum(partial);
}

namespace {

// Mass of g inside (tube of radius delta around line {p + t d}) intersected
// with B_R. p is the offset in the plane orthogonal to d.
double tube_overlap(const Density& g, double radius_r, double delta,
                    const Vec& dir, const Vec& offset,
                    const QuadratureSpec& quad) {
  const int n = g.n;
  std::vector<Vec> perp = complement_basis({dir}, n);
  std::vector<double> ts, tw, ps, pw;
  composite_gl(-radius_r, radius_r, 8, quad.nodes_per_cell, ts, tw);
  double acc = 0.0;
  if (n == 2) {
    composite_gl(-delta, delta, 2, quad.nodes_per_cell, ps, pw);
    for (std::size_t it = 0; it < ts.size(); ++it) {
      for (std::size_t ip = 0; ip < ps.size(); ++ip) {
        Vec x = offset + ts[it] * dir + ps[ip] * perp[0];
        if (norm(x) > radius_r) continue;
        acc += tw[it] * pw[ip] * g.eval(x);
      }
    }
    return acc;
  }
  composite_gl(0.0, delta, 2, quad.nodes_per_cell, ps, pw);
  const int az = 8;
  for (std::size_t it = 0; it < ts.size(); ++it) {
    for (std::size_t ip = 0; ip < ps.size(); ++ip) {
      double rho = ps[ip];
      double ring = 0.0;
      for (int j = 0; j < az; ++j) {
        double phi = 2.0 * M_PI * j / az;
        Vec x = offset + ts[it] * dir +
                (rho * std::cos(phi)) * perp[0] +
                (rho * std::sin(phi)) * perp[1];
        if (norm(x) > radius_r) continue;
        ring += g.eval(x);
      }
      acc += tw[it] * pw[ip] * rho * ring * (2.0 * M_PI / az);
    }
  }
  return acc;
}

struct TubeCandidate {
  Vec dir;
  Vec offset;
};

std::vector<TubeCandidate> coarse_tubes(int n, double radius_r,
                                        const QuadratureSpec& quad) {
  std::vector<TubeCandidate> out;
  if (n == 2) {
    const int nd = 24;
    const int no = 17;
    for (int j = 0; j < nd; ++j) {
      double a = M_PI * j / nd;
      Vec d{std::cos(a), std::sin(a)};
      Vec e{-std::sin(a), std::cos(a)};
      for (int k = 0; k < no; ++k) {
        double off = -radius_r + 2.0 * radius_r * k / (no - 1);
        out.push_back({d, off * e});
      }
    }
    return out;
  }
  const int nd = std::max(32, 2 * quad.sphere_azimuth);
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int j = 0; j < nd; ++j) {
    double z = (j + 0.5) / nd;  // hemisphere
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    double phi = golden * j;
    Vec d{r * std::cos(phi), r * std::sin(phi), z};
    std::vector<Vec> perp = complement_basis({d}, 3);
    for (int rr = 0; rr <= 4; ++rr) {
      double rho = radius_r * rr / 4.0;
      int na = rr == 0 ? 1 : 8;
      for (int k = 0; k < na; ++k) {
        double a = 2.0 * M_PI * k / na;
        out.push_back({d, (rho * std::cos(a)) * perp[0] +
                              (rho * std::sin(a)) * perp[1]});
      }
    }
  }
  return out;
}

std::vector<TubeCandidate> refine_tubes(const TubeCandidate& best, int n,
                                        double radius_r) {
  std::vector<TubeCandidate> out;
  std::vector<Vec> perp = complement_basis({best.dir}, n);
  const double ang = n == 2 ? M_PI / 48.0 : 0.35;
  const double off_step = radius_r / (n == 2 ? 32.0 : 8.0);
  std::vector<Vec> dirs = {best.dir};
  for (const Vec& e : perp) {
    dirs.push_back(normalized(best.dir + ang * e));
    dirs.push_back(normalized(best.dir - ang * e));
    dirs.push_back(normalized(best.dir + 0.5 * ang * e));
    dirs.push_back(normalized(best.dir - 0.5 * ang * e));
  }
  for (const Vec& d : dirs) {
    std::vector<Vec> pd = complement_basis({d}, n);
    // Re-express the best offset in the new perpendicular frame.
    Vec base(n);
    for (const Vec& e : pd) base += dot(best.offset, e) * e;
    for (int k1 = -2; k1 <= 2; ++k1) {
      if (n == 2) {
        out.push_back({d, base + (k1 * off_step) * pd[0]});
      } else {
        for (int k2 = -2; k2 <= 2; ++k2)
          out.push_back(
              {d, base + (k1 * off_step) * pd[0] + (k2 * off_step) * pd[1]});
      }
    }
  }
  return out;
}

}  // namespace

double tube_mass_inf(const Density& g, double radius_r, double delta,
                     const QuadratureSpec& quad) {
  if (!(radius_r > delta && delta > 0.0))
    throw ParameterError("tube_mass_inf: need R > delta > 0");
  double total = ball_mass(g, radius_r, quad);
  if (total <= 0.0) return 0.0;
  auto eval_best = [&](const std::vector<TubeCandidate>& tubes,
                       TubeCandidate* best_out) {
    std::vector<double> vals(tubes.size(), 0.0);
    parallel_for(tubes.size(), [&](std::size_t i) {
      vals[i] = tube_overlap(g, radius_r, delta, tubes[i].dir,
                             tubes[i].offset, quad);
    });
    std::size_t arg = 0;
    for (std::size_t i = 1; i < vals.size(); ++i)
      if (vals[i] > vals[arg]) arg = i;
    if (best_out) *best_out = tubes[arg];
    return vals[arg];
  };
  TubeCandidate best;
  double overlap = eval_best(coarse_tubes(g.n, radius_r, quad), &best);
  overlap = std::max(overlap, eval_best(refine_tubes(best, g.n, radius_r),
                                        nullptr));
  return std::max(0.0, total - overlap);
}

double corollary_l_delta(const Density& g, double radius_r,
                         double target_fraction, const QuadratureSpec& quad) {
  double total = ball_mass(g, radius_r, quad);
  if (total <= 1e-14)
    throw EmptyMassError("corollary L: g has no mass on B_R");
  if (target_fraction <= 0.0) return radius_r;
  auto ok = [&](double delta) {
    return tube_mass_inf(g, radius_r, delta, quad) >=
           target_fraction * total;
  };
  double lo = 0.0, hi = radius_r * (1.0 - 1e-9);
  if (ok(hi)) return hi;
  for (int iter = 0; iter < 20; ++iter) {
    double mid = 0.5 * (lo + hi);
    if (mid <= 0.0) break;
    if (ok(mid))
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

}  // namespace boltz
