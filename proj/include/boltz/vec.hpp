#pragma once

#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace boltz {

// Small fixed-capacity vector for velocities in R^n (n <= 3) and lifted
// points in R^{n+1}.
inline constexpr int kMaxDim = 4;

struct Vec {
  int n = 0;
  std::array<double, kMaxDim> x{};

  Vec() = default;
  explicit Vec(int dim) : n(dim) { assert(dim >= 0 && dim <= kMaxDim); }
  Vec(std::initializer_list<double> vals) {
    assert(static_cast<int>(vals.size()) <= kMaxDim);
    n = static_cast<int>(vals.size());
    int i = 0;
    for (double v : vals) x[i++] = v;
  }

  double& operator[](int i) { return x[i]; }
  double operator[](int i) const { return x[i]; }

  Vec& operator+=(const Vec& o) {
    for (int i = 0; i < n; ++i) x[i] += o.x[i];
    return *this;
  }
  Vec& operator-=(const Vec& o) {
    for (int i = 0; i < n; ++i) x[i] -= o.x[i];
    return *this;
  }
  Vec& operator*=(double c) {
    for (int i = 0; i < n; ++i) x[i] *= c;
    return *this;
  }

  friend Vec operator+(Vec a, const Vec& b) { return a += b; }
  friend Vec operator-(Vec a, const Vec& b) { return a -= b; }
  friend Vec operator*(double c, Vec a) { return a *= c; }
  friend Vec operator*(Vec a, double c) { return a *= c; }
};

inline double dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (int i = 0; i < a.n; ++i) s += a.x[i] * b.x[i];
  return s;
}

inline double norm2(const Vec& a) { return dot(a, a); }
inline double norm(const Vec& a) { return std::sqrt(norm2(a)); }

inline Vec normalized(const Vec& a) {
  double r = norm(a);
  Vec out = a;
  if (r > 0) out *= 1.0 / r;
  return out;
}

inline Vec zero_vec(int n) { return Vec(n); }

// <v> = sqrt(1 + |v|^2)
inline double bracket(const Vec& v) { return std::sqrt(1.0 + norm2(v)); }

// Lift v in R^n to (v, |v|^2/2) in R^{n+1}.
inline Vec lift(const Vec& v) {
  Vec out(v.n + 1);
  for (int i = 0; i < v.n; ++i) out[i] = v[i];
  out[v.n] = 0.5 * norm2(v);
  return out;
}

}  // namespace boltz
