#include "boltz/metric_norms.hpp"

#include <algorithm>
#include <cmath>

#include "boltz/reduction.hpp"
#include "boltz/rng.hpp"

namespace boltz {

double aniso_dist(const Vec& v, const Vec& v_prime) {
  double e2 = norm2(v - v_prime);
  double q = 0.5 * (norm2(v) - norm2(v_prime));
  return std::sqrt(e2 + q * q);
}

double weighted_lp(const FunctionRep& f, const WeightedNormSpec& spec,
                   const QuadratureSpec& quad) {
  if (!(spec.p >= 1.0)) throw ParameterError("weighted_lp: p must be >= 1");
  QuadratureSpec q = quad;
  q.r_infinity = std::min(q.r_infinity, f.support_radius() + 2.0);
  auto integrand = [&](const Vec& v) {
    return std::pow(bracket(v), spec.ell) *
           std::pow(std::abs(f.eval(v)), spec.p);
  };
  auto res = integrate_rn(integrand, f.n, q);
  return std::pow(std::max(0.0, res.value), 1.0 / spec.p);
}

namespace {

// Shared engine for the anisotropic seminorm and the Gagliardo H^s form.
// dist_kind: 0 = anisotropic d, 1 = Euclidean |v - v'|.
// weight_kind: 0 = (<v><v'>)^w, 1 = <v>^w only.
SeminormResult double_integral(const ScalarField& f_eval, int n,
                               double support_radius, double s, double w,
                               double cutoff, int dist_kind, int weight_kind,
                               const QuadratureSpec& quad) {
  const double expo = n + 2.0 * s;
  auto dist = [&](const Vec& a, const Vec& b) {
    return dist_kind == 0 ? aniso_dist(a, b) : norm(a - b);
  };
  if (quad.backend == Backend::MonteCarlo) {
    const double sigma_v = 2.0;
    const double p_r_expo = 1.0 - 2.0 * s;  // p(r) ~ r^{1-2s} on (0,cutoff]
    const double p_r_norm = (2.0 - 2.0 * s) /
                            std::pow(cutoff, 2.0 - 2.0 * s);
    const double log_gauss_norm =
        -0.5 * n * std::log(2.0 * M_PI * sigma_v * sigma_v);
    const double area = sphere_area(n);
    std::vector<double> vals(quad.mc_samples);
    parallel_for(quad.mc_samples, [&](std::size_t i) {
      RngStream rng(quad.seed, (11ULL << 40) + i);
      Vec v = rng.normal_vec(n);
      double q2 = 0.0;
      for (int d = 0; d < n; ++d) {
        v[d] *= sigma_v;
        q2 += v[d] * v[d];
      }
      double log_pv = log_gauss_norm - 0.5 * q2 / (sigma_v * sigma_v);
      double u = rng.uniform();
      double r = cutoff * std::pow(u, 1.0 / (2.0 - 2.0 * s));
      double p_r = p_r_norm * std::pow(r, p_r_expo);
      Vec omega = rng.unit_vec(n);
      Vec vp = v + r * omega;
      double d_val = dist(v, vp);
      if (d_val > cutoff || d_val <= 0.0) {
        vals[i] = 0.0;
        return;
      }
      double diff = f_eval(vp) - f_eval(v);
      double wt = weight_kind == 0
                      ? std::pow(bracket(v) * bracket(vp), w)
                      : std::pow(bracket(v), w);
      double integrand = diff * diff * wt * std::pow(d_val, -expo) *
                         std::pow(r, n - 1);
      vals[i] = integrand * area / (std::exp(log_pv) * p_r);
    });
    double mean = pairwise_sum(vals) / quad.mc_samples;
    std::vector<double> dev(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) {
      double d = vals[i] - mean;
      dev[i] = d * d;
    }
    double var = pairwise_sum(dev) / (vals.size() - 1);
    SeminormResult out;
    out.squared = mean;
    out.error = std::sqrt(var / vals.size());
    out.value = std::sqrt(std::max(0.0, mean));
    return out;
  }

  const double L = std::min(quad.r_infinity, support_radius + 1.5);
  std::vector<double> xs, ws;
  composite_gl(-L, L, 2 * quad.outer_panels, quad.outer_nodes, xs, ws);
  const std::size_t m = xs.size();
  std::size_t outer_total = 1;
  for (int d = 0; d < n; ++d) outer_total *= m;

  auto dirs = [&] {
    std::vector<std::pair<Vec, double>> out;
    if (n == 2) {
      int az = std::max(16, quad.sphere_azimuth);
      for (int j = 0; j < az; ++j) {
        double phi = 2.0 * M_PI * j / az;
        out.push_back({Vec{std::cos(phi), std::sin(phi)}, 2.0 * M_PI / az});
      }
    } else {
      int p = std::max(6, quad.outer_nodes / 3);
      int az = std::max(12, quad.sphere_azimuth);
      const GaussRule& rule = gauss_legendre(p);
      for (int i = 0; i < p; ++i) {
        double u = rule.nodes[i];
        double rr = std::sqrt(std::max(0.0, 1.0 - u * u));
        for (int j = 0; j < az; ++j) {
          double phi = 2.0 * M_PI * j / az;
          out.push_back({Vec{rr * std::cos(phi), rr * std::sin(phi), u},
                         rule.weights[i] * 2.0 * M_PI / az});
        }
      }
    }
    return out;
  }();

  const GaussRule& rad = gauss_legendre(quad.nodes_per_cell);
  std::vector<double> partial(outer_total, 0.0);
  std::vector<double> inner_tail(outer_total, 0.0);
  parallel_for(outer_total, [&](std::size_t idx) {
    Vec v(n);
    double wv = 1.0;
    std::size_t rem = idx;
    for (int d = 0; d < n; ++d) {
      std::size_t j = rem % m;
      rem /= m;
      v[d] = xs[j];
      wv *= ws[j];
    }
    double fv = f_eval(v);
    double brv = bracket(v);
    double acc = 0.0;
    double tail = 0.0;
    for (const auto& [omega, w_ang] : dirs) {
      // largest r <= cutoff with dist(v, v + r omega) <= cutoff
      double r_max = cutoff;
      if (dist(v, v + cutoff * omega) > cutoff) {
        double lo = 0.0, hi = cutoff;
        for (int it = 0; it < 50; ++it) {
          double mid = 0.5 * (lo + hi);
          if (dist(v, v + mid * omega) <= cutoff)
            lo = mid;
          else
            hi = mid;
        }
        r_max = lo;
      }
      if (r_max <= 0.0) continue;
      double hi = r_max;
      for (int cell = 0; cell <= quad.dyadic_depth; ++cell) {
        double lo = cell == quad.dyadic_depth ? 0.0 : 0.5 * hi;
        double mid = 0.5 * (lo + hi);
        double half = 0.5 * (hi - lo);
        double cell_val = 0.0;
        for (int i = 0; i < quad.nodes_per_cell; ++i) {
          double r = mid + half * rad.nodes[i];
          if (r <= 0.0) continue;
          Vec vp = v + r * omega;
          double d_val = dist(v, vp);
          if (d_val <= 0.0) continue;
          double diff = f_eval(vp) - fv;
          double wt = weight_kind == 0
                          ? std::pow(brv * bracket(vp), w)
                          : std::pow(brv, w);
          cell_val += half * rad.weights[i] * diff * diff * wt *
                      std::pow(d_val, -expo) * std::pow(r, n - 1);
        }
        acc += w_ang * cell_val;
        if (cell == quad.dyadic_depth) tail += w_ang * std::abs(cell_val);
        hi = lo;
      }
    }
    partial[idx] = wv * acc;
    inner_tail[idx] = std::abs(wv) * tail;
  });
  SeminormResult out;
  out.squared = pairwise_sum(partial);
  out.error = pairwise_sum(inner_tail);
  out.value = std::sqrt(std::max(0.0, out.squared));
  return out;
}

}  // namespace

SeminormResult seminorm_dot_n(const FunctionRep& f, const SeminormSpec& spec,
                              const QuadratureSpec& quad) {
  if (!(spec.s > 0.0 && spec.s < 1.0))
    throw ParameterError("seminorm: s must be in (0,1)");
  auto fe = [&f](const Vec& v) { return f.eval(v); };
  return double_integral(fe, f.n, f.support_radius(), spec.s,
                         spec.weight_exp(), spec.cutoff, 0, 0, quad);
}

SeminormResult seminorm_dot_n_field(const ScalarField& f, int n,
                                    double support_radius,
                                    const SeminormSpec& spec,
                                    const QuadratureSpec& quad) {
  if (!(spec.s > 0.0 && spec.s < 1.0))
    throw ParameterError("seminorm: s must be in (0,1)");
  return double_integral(f, n, support_radius, spec.s, spec.weight_exp(),
                         spec.cutoff, 0, 0, quad);
}

double norm_n_full(const FunctionRep& f, const SeminormSpec& spec,
                   const QuadratureSpec& quad) {
  WeightedNormSpec l2{2.0, spec.gamma + 2.0 * spec.s};
  double lp = weighted_lp(f, l2, quad);
  auto dot = seminorm_dot_n(f, spec, quad);
  return std::sqrt(lp * lp + dot.squared);
}

double iso_sobolev(const FunctionRep& f, double s, double ell,
                   const QuadratureSpec& quad) {
  if (!(s > 0.0 && s < 1.0))
    throw ParameterError("iso_sobolev: s must be in (0,1)");
  WeightedNormSpec l2{2.0, ell};
  double lp = weighted_lp(f, l2, quad);
  auto fe = [&f](const Vec& v) { return f.eval(v); };
  auto dot = double_integral(fe, f.n, f.support_radius(), s, ell, 1.0, 1, 1,
                             quad);
  return std::sqrt(lp * lp + dot.squared);
}

}  // namespace boltz
