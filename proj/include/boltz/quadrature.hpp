#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "boltz/vec.hpp"

namespace boltz {

enum class Backend { Deterministic, MonteCarlo };

struct QuadratureSpec {
  Backend backend = Backend::Deterministic;
  double r_infinity = 8.0;   // radial truncation for R^n integrals
  double theta_min = 1e-5;   // angular floor for the collision pole
  int dyadic_depth = 12;     // dyadic cells for singular radial/angular meshes
  int nodes_per_cell = 6;    // Gauss-Legendre nodes per 1-D cell
  int outer_nodes = 20;      // per-dimension nodes for smooth R^n integrals
  int outer_panels = 3;      // composite panels per half-axis
  int sphere_azimuth = 16;   // omega ring size for n = 3
  double plane_radius = 16.0;
  std::uint64_t mc_samples = 200000;
  std::uint64_t seed = 12345;
  double rel_tol = 1e-8;
  double abs_tol = 1e-14;
  double mc_pole_rho = 0.5;  // pole-importance exponent shift

  // One refinement step multiplies deterministic resolution by 2 in each
  // 1-D direction and MC samples by 4.
  QuadratureSpec refined(int k = 1) const;
};

struct IntegralResult {
  double value = 0.0;
  double error = 0.0;  // reported error bound (MC: one standard error)
  bool converged = true;
};

// Gauss-Legendre nodes/weights on [-1, 1]; cached per order.
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const GaussRule& gauss_legendre(int order);

// 1-D nodes/weights on [a, b], composite over `panels` equal panels.
void composite_gl(double a, double b, int panels, int order,
                  std::vector<double>& nodes, std::vector<double>& weights);

using ScalarField = std::function<double(const Vec&)>;

IntegralResult integrate_rn(const ScalarField& integrand, int n,
                            const QuadratureSpec& spec);

// Integral over the unit sphere S^{n-1} in R^n.
IntegralResult integrate_sphere(const ScalarField& integrand, int n,
                                const QuadratureSpec& spec);

// Lebesgue integral over the affine hyperplane through `point` orthogonal to
// `normal`. The radial mesh around `point` is dyadic, so integrands with a
// power singularity at the base point are handled; mass inside the innermost
// shell enters the error bound.
IntegralResult integrate_plane(const Vec& point, const Vec& normal,
                               const ScalarField& integrand,
                               const QuadratureSpec& spec);

// Codimension-2 affine subspace {v : <v-p1,n1> = 0, <v-p2,n2> = 0}.
IntegralResult integrate_coplane(const Vec& point1, const Vec& normal1,
                                 const Vec& point2, const Vec& normal2,
                                 const ScalarField& integrand,
                                 const QuadratureSpec& spec);

// Direction/weight pairs covering S^{n-1} (n = 2: uniform ring; n = 3:
// Gauss-Legendre in cos(polar) times uniform azimuth).
std::vector<std::pair<Vec, double>> sphere_rule(int n,
                                                const QuadratureSpec& spec);

// Radial nodes/weights on [0, R], meshed dyadically toward 0.
void radial_rule_dyadic(double r, const QuadratureSpec& spec,
                        std::vector<double>& nodes,
                        std::vector<double>& weights);

// Orthonormal basis of the orthogonal complement of span{axes...} in R^n,
// via Gram-Schmidt against the coordinate frame.
std::vector<Vec> complement_basis(const std::vector<Vec>& axes, int n);

// Anchor point of the codimension-2 subspace above; throws GeometryError if
// the normals are (nearly) parallel.
Vec coplane_anchor(const Vec& point1, const Vec& normal1, const Vec& point2,
                   const Vec& normal2, double tol = 1e-12);

}  // namespace boltz
