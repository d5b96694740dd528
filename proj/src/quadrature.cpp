#include "boltz/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "boltz/kernel.hpp"
#include "boltz/reduction.hpp"
#include "boltz/rng.hpp"

namespace boltz {

QuadratureSpec QuadratureSpec::refined(int k) const {
  QuadratureSpec out = *this;
  for (int i = 0; i < k; ++i) {
    out.nodes_per_cell *= 2;
    out.outer_nodes *= 2;
    out.sphere_azimuth *= 2;
    out.dyadic_depth += 1;
    out.mc_samples *= 4;
  }
  return out;
}

const GaussRule& gauss_legendre(int order) {
  static std::map<int, GaussRule> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(order);
  if (it != cache.end()) return it->second;
  if (order < 1) throw ParameterError("gauss_legendre: order must be >= 1");
  GaussRule rule;
  rule.nodes.resize(order);
  rule.weights.resize(order);
  // Newton iteration on P_order from the Chebyshev initial guess.
  for (int i = 0; i < (order + 1) / 2; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (order + 0.5));
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= order; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      pp = order * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    double w = 2.0 / ((1.0 - x * x) * pp * pp);
    rule.nodes[i] = -x;
    rule.nodes[order - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[order - 1 - i] = w;
  }
  if (order % 2 == 1) rule.nodes[order / 2] = 0.0;
  return cache.emplace(order, std::move(rule)).first->second;
}

void composite_gl(double a, double b, int panels, int order,
                  std::vector<double>& nodes, std::vector<double>& weights) {
  const GaussRule& rule = gauss_legendre(order);
  nodes.clear();
  weights.clear();
  nodes.reserve(static_cast<std::size_t>(panels) * order);
  weights.reserve(static_cast<std::size_t>(panels) * order);
  double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    double lo = a + p * h;
    double mid = lo + 0.5 * h;
    for (int i = 0; i < order; ++i) {
      nodes.push_back(mid + 0.5 * h * rule.nodes[i]);
      weights.push_back(0.5 * h * rule.weights[i]);
    }
  }
}

namespace {

double tensor_rn(const ScalarField& f, int n, double radius, int panels,
                 int order) {
  std::vector<double> xs, ws;
  composite_gl(-radius, radius, panels, order, xs, ws);
  const std::size_t m = xs.size();
  std::size_t inner = 1;
  for (int d = 1; d < n; ++d) inner *= m;
  std::vector<double> partial(m, 0.0);
  parallel_for(m, [&](std::size_t i0) {
    double acc = 0.0;
    Vec x;
    x.n = n;
    x.x[0] = xs[i0];
    for (std::size_t idx = 0; idx < inner; ++idx) {
      std::size_t rem = idx;
      double w = ws[i0];
      for (int d = 1; d < n; ++d) {
        std::size_t j = rem % m;
        rem /= m;
        x.x[d] = xs[j];
        w *= ws[j];
      }
      acc += w * f(x);
    }
    partial[i0] = acc;
  });
  return pairwise_sum(partial);
}

IntegralResult mc_mean(const std::vector<double>& vals) {
  IntegralResult out;
  const std::size_t m = vals.size();
  out.value = pairwise_sum(vals) / m;
  std::vector<double> dev(m);
  for (std::size_t i = 0; i < m; ++i) {
    double d = vals[i] - out.value;
    dev[i] = d * d;
  }
  double var = pairwise_sum(dev) / (m > 1 ? m - 1 : 1);
  out.error = std::sqrt(var / m);
  return out;
}

}  // namespace

IntegralResult integrate_rn(const ScalarField& f, int n,
                            const QuadratureSpec& spec) {
  if (n < 1 || n > kMaxDim)
    throw ParameterError("integrate_rn: unsupported dimension");
  if (spec.backend == Backend::MonteCarlo) {
    const double sigma = 0.25 * spec.r_infinity;
    const double log_norm =
        -0.5 * n * std::log(2.0 * M_PI * sigma * sigma);
    std::vector<double> vals(spec.mc_samples);
    parallel_for(spec.mc_samples, [&](std::size_t i) {
      RngStream rng(spec.seed, (1ULL << 40) + i);
      Vec x = rng.normal_vec(n);
      double q2 = 0.0;
      for (int d = 0; d < n; ++d) {
        x.x[d] *= sigma;
        q2 += x.x[d] * x.x[d];
      }
      double log_p = log_norm - 0.5 * q2 / (sigma * sigma);
      vals[i] = f(x) * std::exp(-log_p);
    });
    return mc_mean(vals);
  }
  const int panels = 2 * spec.outer_panels;
  double fine = tensor_rn(f, n, spec.r_infinity, panels, spec.outer_nodes);
  double coarse = tensor_rn(f, n, spec.r_infinity, panels,
                            std::max(2, spec.outer_nodes / 2));
  IntegralResult out;
  out.value = fine;
  out.error = std::abs(fine - coarse);
  out.converged =
      out.error <= std::max(spec.abs_tol, spec.rel_tol * std::abs(fine)) * 1e4;
  return out;
}

namespace {

double sphere_sum(const ScalarField& f, int n, int order, int azimuth) {
  if (n == 2) {
    std::vector<double> partial(azimuth, 0.0);
    parallel_for(azimuth, [&](std::size_t i) {
      double phi = 2.0 * M_PI * i / azimuth;
      Vec s;
      s.n = 2;
      s.x[0] = std::cos(phi);
      s.x[1] = std::sin(phi);
      partial[i] = f(s);
    });
    return pairwise_sum(partial) * (2.0 * M_PI / azimuth);
  }
  const GaussRule& rule = gauss_legendre(order);
  std::vector<double> partial(order, 0.0);
  parallel_for(order, [&](std::size_t i) {
    double u = rule.nodes[i];
    double r = std::sqrt(std::max(0.0, 1.0 - u * u));
    double acc = 0.0;
    Vec s;
    s.n = 3;
    for (int j = 0; j < azimuth; ++j) {
      double phi = 2.0 * M_PI * j / azimuth;
      s.x[0] = r * std::cos(phi);
      s.x[1] = r * std::sin(phi);
      s.x[2] = u;
      acc += f(s);
    }
    partial[i] = rule.weights[i] * acc * (2.0 * M_PI / azimuth);
  });
  return pairwise_sum(partial);
}

}  // namespace

IntegralResult integrate_sphere(const ScalarField& f, int n,
                                const QuadratureSpec& spec) {
  if (n != 2 && n != 3)
    throw ParameterError("integrate_sphere: only n = 2, 3 supported");
  if (spec.backend == Backend::MonteCarlo) {
    const double area = sphere_area(n);
    std::vector<double> vals(spec.mc_samples);
    parallel_for(spec.mc_samples, [&](std::size_t i) {
      RngStream rng(spec.seed, (2ULL << 40) + i);
      vals[i] = area * f(rng.unit_vec(n));
    });
    return mc_mean(vals);
  }
  int order = std::max(4, spec.outer_nodes);
  int azimuth = std::max(spec.sphere_azimuth, 2 * order);
  double fine = sphere_sum(f, n, order, azimuth);
  double coarse = sphere_sum(f, n, std::max(2, order / 2),
                             std::max(8, azimuth / 2));
  IntegralResult out;
  out.value = fine;
  out.error = std::abs(fine - coarse);
  return out;
}

std::vector<std::pair<Vec, double>> sphere_rule(int n,
                                                const QuadratureSpec& spec) {
  std::vector<std::pair<Vec, double>> out;
  if (n == 2) {
    int m = std::max(32, 2 * spec.sphere_azimuth);
    for (int j = 0; j < m; ++j) {
      double phi = 2.0 * M_PI * j / m;
      out.push_back({Vec{std::cos(phi), std::sin(phi)}, 2.0 * M_PI / m});
    }
  } else if (n == 3) {
    int p = std::max(8, spec.outer_nodes / 2);
    int az = std::max(16, spec.sphere_azimuth);
    const GaussRule& rule = gauss_legendre(p);
    for (int i = 0; i < p; ++i) {
      double u = rule.nodes[i];
      double r = std::sqrt(std::max(0.0, 1.0 - u * u));
      for (int j = 0; j < az; ++j) {
        double phi = 2.0 * M_PI * j / az;
        out.push_back({Vec{r * std::cos(phi), r * std::sin(phi), u},
                       rule.weights[i] * 2.0 * M_PI / az});
      }
    }
  } else {
    throw ParameterError("sphere_rule: only n = 2, 3 supported");
  }
  return out;
}

void radial_rule_dyadic(double r, const QuadratureSpec& spec,
                        std::vector<double>& nodes,
                        std::vector<double>& weights) {
  nodes.clear();
  weights.clear();
  std::vector<double> cn, cw;
  double hi = r;
  for (int m = 0; m < spec.dyadic_depth; ++m) {
    composite_gl(0.5 * hi, hi, 1, spec.nodes_per_cell, cn, cw);
    nodes.insert(nodes.end(), cn.begin(), cn.end());
    weights.insert(weights.end(), cw.begin(), cw.end());
    hi *= 0.5;
  }
  composite_gl(0.0, hi, 1, spec.nodes_per_cell, cn, cw);
  nodes.insert(nodes.end(), cn.begin(), cn.end());
  weights.insert(weights.end(), cw.begin(), cw.end());
}

std::vector<Vec> complement_basis(const std::vector<Vec>& axes, int n) {
  std::vector<Vec> frame;  // orthonormalized axes, then complement
  auto push = [&](Vec cand) -> bool {
    for (const Vec& b : frame) cand = cand - dot(cand, b) * b;
    double len = norm(cand);
    if (len < 1e-8) return false;
    frame.push_back((1.0 / len) * cand);
    return true;
  };
  for (const Vec& a : axes) push(a);
  const std::size_t rank = frame.size();
  for (int i = 0; i < n && frame.size() < static_cast<std::size_t>(n); ++i) {
    Vec e{};
    e.n = n;
    e.x[i] = 1.0;
    push(e);
  }
  return std::vector<Vec>(frame.begin() + rank, frame.end());
}

Vec coplane_anchor(const Vec& point1, const Vec& normal1, const Vec& point2,
                   const Vec& normal2, double tol) {
  double a11 = dot(normal1, normal1);
  double a12 = dot(normal1, normal2);
  double a22 = dot(normal2, normal2);
  double det = a11 * a22 - a12 * a12;
  if (det <= tol * a11 * a22)
    throw GeometryError("coplane: normals are (nearly) parallel");
  Vec diff = point2 - point1;
  double b1 = 0.0;
  double b2 = dot(diff, normal2);
  double alpha = (a22 * b1 - a12 * b2) / det;
  double beta = (a11 * b2 - a12 * b1) / det;
  return point1 + alpha * normal1 + beta * normal2;
}

namespace {

// Polar integral over an affine subspace: base point, orthonormal basis
// {b_1..b_d}, measure r^{d-1} dr domega. The radial mesh is dyadic toward the
// base point so power singularities there stay resolved; mass inside the
// innermost shell is charged to the error bound.
IntegralResult polar_subspace(const Vec& base, const std::vector<Vec>& basis,
                              const ScalarField& f,
                              const QuadratureSpec& spec) {
  const int d = static_cast<int>(basis.size());
  if (d < 1 || d > 2)
    throw ParameterError("polar quadrature: codimension out of range");
  const double R = spec.plane_radius;
  std::vector<double> rs, rws;
  {
    std::vector<double> cn, cw;
    // Uniform panels on [1, R]; dyadic cells from 1 toward the base point.
    if (R > 1.0) {
      int panels = std::max(2, static_cast<int>(std::ceil(R - 1.0)));
      int order = std::max(spec.nodes_per_cell, spec.outer_nodes / 2);
      composite_gl(1.0, R, panels, order, cn, cw);
      rs.insert(rs.end(), cn.begin(), cn.end());
      rws.insert(rws.end(), cw.begin(), cw.end());
    }
    double hi = std::min(1.0, R);
    for (int m = 0; m < spec.dyadic_depth; ++m) {
      composite_gl(0.5 * hi, hi, 1, spec.nodes_per_cell, cn, cw);
      rs.insert(rs.end(), cn.begin(), cn.end());
      rws.insert(rws.end(), cw.begin(), cw.end());
      hi *= 0.5;
    }
    composite_gl(0.0, hi, 1, spec.nodes_per_cell, cn, cw);
    rs.insert(rs.end(), cn.begin(), cn.end());
    rws.insert(rws.end(), cw.begin(), cw.end());
  }
  const int azimuth = d == 1 ? 2 : std::max(16, 2 * spec.sphere_azimuth);
  std::vector<Vec> dirs;
  if (d == 1) {
    dirs = {basis[0], -1.0 * basis[0]};
  } else {
    dirs.reserve(azimuth);
    for (int j = 0; j < azimuth; ++j) {
      double phi = 2.0 * M_PI * j / azimuth;
      dirs.push_back(std::cos(phi) * basis[0] + std::sin(phi) * basis[1]);
    }
  }
  const double ang_w = d == 1 ? 1.0 : 2.0 * M_PI / azimuth;
  std::vector<double> partial(rs.size(), 0.0);
  parallel_for(rs.size(), [&](std::size_t i) {
    double r = rs[i];
    double acc = 0.0;
    for (const Vec& dir : dirs) acc += f(base + r * dir);
    partial[i] = rws[i] * std::pow(r, d - 1) * acc * ang_w;
  });
  IntegralResult out;
  out.value = pairwise_sum(partial);
  // Innermost dyadic shell as a proxy for the unresolved center mass.
  double tail = 0.0;
  for (std::size_t i = partial.size() - spec.nodes_per_cell;
       i < partial.size(); ++i)
    tail += std::abs(partial[i]);
  out.error = tail;
  return out;
}

IntegralResult polar_subspace_mc(const Vec& base,
                                 const std::vector<Vec>& basis,
                                 const ScalarField& f,
                                 const QuadratureSpec& spec,
                                 std::uint64_t stream) {
  const int d = static_cast<int>(basis.size());
  const double sigma = 0.25 * spec.plane_radius;
  const double log_norm = -0.5 * d * std::log(2.0 * M_PI * sigma * sigma);
  std::vector<double> vals(spec.mc_samples);
  parallel_for(spec.mc_samples, [&](std::size_t i) {
    RngStream rng(spec.seed, (stream << 40) + i);
    Vec x = base;
    double q2 = 0.0;
    for (int j = 0; j < d; ++j) {
      double z = sigma * rng.normal();
      q2 += z * z;
      x = x + z * basis[j];
    }
    double log_p = log_norm - 0.5 * q2 / (sigma * sigma);
    vals[i] = f(x) * std::exp(-log_p);
  });
  return mc_mean(vals);
}

}  // namespace

IntegralResult integrate_plane(const Vec& point, const Vec& normal,
                               const ScalarField& f,
                               const QuadratureSpec& spec) {
  if (norm(normal) <= 0.0)
    throw GeometryError("integrate_plane: zero normal");
  std::vector<Vec> basis = complement_basis({normal}, point.n);
  if (spec.backend == Backend::MonteCarlo)
    return polar_subspace_mc(point, basis, f, spec, 3);
  return polar_subspace(point, basis, f, spec);
}

IntegralResult integrate_coplane(const Vec& point1, const Vec& normal1,
                                 const Vec& point2, const Vec& normal2,
                                 const ScalarField& f,
                                 const QuadratureSpec& spec) {
  Vec anchor = coplane_anchor(point1, normal1, point2, normal2);
  std::vector<Vec> basis = complement_basis({normal1, normal2}, point1.n);
  if (basis.size() != static_cast<std::size_t>(point1.n) - 2)
    throw GeometryError("integrate_coplane: degenerate normals");
  if (spec.backend == Backend::MonteCarlo)
    return polar_subspace_mc(anchor, basis, f, spec, 4);
  return polar_subspace(anchor, basis, f, spec);
}

}  // namespace boltz
