#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "boltz/kernel.hpp"
#include "boltz/quadrature.hpp"
#include "boltz/reduction.hpp"
#include "boltz/rng.hpp"

using namespace boltz;

TEST_CASE("gauss-legendre rules integrate polynomials exactly") {
  const auto& r8 = gauss_legendre(8);
  double s = 0.0;
  for (int i = 0; i < 8; ++i) s += r8.weights[i];
  CHECK(s == doctest::Approx(2.0).epsilon(1e-14));
  // degree-15 monomial
  double m = 0.0;
  for (int i = 0; i < 8; ++i) m += r8.weights[i] * std::pow(r8.nodes[i], 14);
  CHECK(m == doctest::Approx(2.0 / 15.0).epsilon(1e-12));
}

TEST_CASE("gaussian integral over R^n") {
  QuadratureSpec spec;
  auto g = [](const Vec& v) { return std::exp(-norm2(v)); };
  for (int n : {1, 2, 3}) {
    auto res = integrate_rn(g, n, spec);
    CHECK(res.value == doctest::Approx(std::pow(M_PI, 0.5 * n)).epsilon(1e-10));
  }
}

TEST_CASE("sphere measure and moments") {
  QuadratureSpec spec;
  auto one = [](const Vec&) { return 1.0; };
  CHECK(integrate_sphere(one, 3, spec).value == doctest::Approx(4.0 * M_PI));
  CHECK(integrate_sphere(one, 2, spec).value == doctest::Approx(2.0 * M_PI));
  auto z2 = [](const Vec& s) { return s[2] * s[2]; };
  CHECK(integrate_sphere(z2, 3, spec).value ==
        doctest::Approx(4.0 * M_PI / 3.0).epsilon(1e-10));
}

TEST_CASE("plane integral") {
  QuadratureSpec spec;
  auto g = [](const Vec& v) { return std::exp(-norm2(v)); };
  // plane z = 0 through origin: integral = pi
  auto res = integrate_plane(Vec{0, 0, 0}, Vec{0, 0, 1}, g, spec);
  CHECK(res.value == doctest::Approx(M_PI).epsilon(1e-9));
  // offset plane z = 1: e^{-1} pi
  auto res2 = integrate_plane(Vec{0, 0, 1}, Vec{0, 0, 2}, g, spec);
  CHECK(res2.value == doctest::Approx(M_PI * std::exp(-1.0)).epsilon(1e-9));
  // n = 2 line through origin
  auto res3 = integrate_plane(Vec{0, 0}, Vec{0, 1}, g, spec);
  CHECK(res3.value == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-9));
}

TEST_CASE("coplane integral: x3-axis") {
  QuadratureSpec spec;
  auto g = [](const Vec& v) { return std::exp(-norm2(v)); };
  auto res = integrate_coplane(Vec{0, 0, 0}, Vec{1, 0, 0}, Vec{0, 0, 0},
                               Vec{0, 1, 0}, g, spec);
  CHECK(res.value == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-9));
  CHECK_THROWS_AS(integrate_coplane(Vec{0, 0, 0}, Vec{1, 0, 0}, Vec{0, 0, 0},
                                    Vec{2, 0, 0}, g, spec),
                  GeometryError);
}

TEST_CASE("frame invariance of plane integrals") {
  QuadratureSpec spec;
  auto g = [](const Vec& v) { return std::exp(-norm2(v) + 0.3 * v[0]); };
  RngStream rng(21, 0);
  double base = 0.0;
  double worst = 0.0;
  for (int t = 0; t < 30; ++t) {
    Vec nrm = rng.unit_vec(3);
    auto res = integrate_plane(Vec{0, 0, 0}, nrm, g, spec);
    // rotate-invariant part only when g is radial; use radial g for the check
    (void)res;
    auto gr = [](const Vec& v) { return std::exp(-norm2(v)); };
    auto rr = integrate_plane(Vec{0, 0, 0}, nrm, gr, spec);
    if (t == 0)
      base = rr.value;
    else
      worst = std::max(worst, std::abs(rr.value - base));
  }
  CHECK(worst < 1e-10 * std::abs(base) + 1e-12);
}

TEST_CASE("singular radial power on the plane is handled") {
  QuadratureSpec spec;
  // integrand r^{-0.5} * e^{-r^2} on the z=0 plane:
  // closed form 2 pi int_0^inf r^{0.5} e^{-r^2} dr = pi Gamma(3/4)
  auto g = [](const Vec& v) {
    double r = norm(v);
    if (r <= 0.0) return 0.0;
    return std::pow(r, -0.5) * std::exp(-r * r);
  };
  auto res = integrate_plane(Vec{0, 0, 0}, Vec{0, 0, 1}, g, spec);
  double expect = M_PI * std::tgamma(0.75);
  CHECK(res.value == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("monte carlo consistency on smooth benchmarks") {
  QuadratureSpec det;
  QuadratureSpec mc = det;
  mc.backend = Backend::MonteCarlo;
  mc.mc_samples = 400000;
  auto g = [](const Vec& v) { return std::exp(-norm2(v)) * (1.0 + v[0]); };
  int hits = 0, trials = 10;
  for (int t = 0; t < trials; ++t) {
    mc.seed = 1000 + t;
    auto r = integrate_rn(g, 3, mc);
    double truth = std::pow(M_PI, 1.5);
    if (std::abs(r.value - truth) <= 3.0 * r.error) ++hits;
  }
  CHECK(hits >= 9);
}

TEST_CASE("mc reproducibility across thread counts") {
  QuadratureSpec mc;
  mc.backend = Backend::MonteCarlo;
  mc.mc_samples = 100000;
  mc.seed = 42;
  auto g = [](const Vec& v) { return std::exp(-norm2(v)); };
  set_worker_count(1);
  auto r1 = integrate_rn(g, 3, mc);
  set_worker_count(8);
  auto r8 = integrate_rn(g, 3, mc);
  set_worker_count(1);
  CHECK(r1.value == r8.value);
  CHECK(r1.error == r8.error);
}

TEST_CASE("refinement monotonicity of error bound") {
  QuadratureSpec spec;
  spec.outer_nodes = 8;
  auto g = [](const Vec& v) { return std::exp(-norm2(v)) * std::cos(v[0]); };
  auto coarse = integrate_rn(g, 2, spec);
  auto fine = integrate_rn(g, 2, spec.refined());
  CHECK(fine.error <= coarse.error + 1e-15);
}

TEST_CASE("pairwise sum deterministic and accurate") {
  std::vector<double> xs(10001);
  for (std::size_t i = 0; i < xs.size(); ++i)
    xs[i] = std::sin(0.1 * static_cast<double>(i));
  double a = pairwise_sum(xs);
  double b = pairwise_sum(xs);
  CHECK(a == b);
  long double ref = 0.0;
  for (double x : xs) ref += x;
  CHECK(a == doctest::Approx(static_cast<double>(ref)).epsilon(1e-13));
}
