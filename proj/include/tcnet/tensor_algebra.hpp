#pragma once

#include <array>
#include <cstddef>

#include "tcnet/rng.hpp"

namespace tcnet {

using Vec3 = std::array<double, 3>;

// 3x3 real matrix, row-major.
struct Mat3 {
  std::array<double, 9> m{};

  static Mat3 zero() { return {}; }
  static Mat3 identity() { return diag(1.0, 1.0, 1.0); }
  static Mat3 diag(double a, double b, double c) {
    Mat3 r;
    r.m[0] = a;
    r.m[4] = b;
    r.m[8] = c;
    return r;
  }
  static Mat3 rows(const Vec3& r0, const Vec3& r1, const Vec3& r2) {
    return {{r0[0], r0[1], r0[2], r1[0], r1[1], r1[2], r2[0], r2[1], r2[2]}};
  }

  double& operator()(std::size_t r, std::size_t c) { return m[3 * r + c]; }
  double operator()(std::size_t r, std::size_t c) const { return m[3 * r + c]; }

  bool operator==(const Mat3&) const = default;
};

Mat3 operator+(const Mat3& a, const Mat3& b);
Mat3 operator-(const Mat3& a, const Mat3& b);
Mat3 operator*(double s, const Mat3& a);
Mat3 operator*(const Mat3& a, const Mat3& b);
Vec3 operator*(const Mat3& a, const Vec3& v);

Mat3 transpose(const Mat3& a);
double trace(const Mat3& a);
double det(const Mat3& a);
double frob_inner(const Mat3& a, const Mat3& b);
double frob_norm(const Mat3& a);
bool all_finite(const Mat3& a);

double dot(const Vec3& a, const Vec3& b);
double norm(const Vec3& a);

// 1/2 (A + A^T)
Mat3 sym(const Mat3& a);
// sym(A) - tr(A)/3 I
Mat3 traceless(const Mat3& a);
// result(a, b) = u[a] * w[b]
Mat3 dyadic(const Vec3& u, const Vec3& w);

// Largest |A - A^T| entry.
double asymmetry(const Mat3& a);

// Isotropic (l = 0) and deviatoric (l = 2) parts of a symmetric tensor.
struct SphericalDecomp {
  double iso = 0.0;
  Mat3 aniso;
};

inline constexpr double kSymmetryTolerance = 1e-8;

// Inputs whose asymmetry is within kSymmetryTolerance are symmetrized first;
// anything larger throws NonSymmetricInput.
SphericalDecomp decompose(const Mat3& alpha);
Mat3 reconstruct(const SphericalDecomp& d);

// alpha - tr(alpha)/3 I, no symmetry requirement.
Mat3 deviatoric(const Mat3& alpha);

// Proper rotation: R^T R = I and det R = +1 to 1e-10.
class Rotation {
 public:
  static constexpr double kTolerance = 1e-10;

  Rotation() : r_(Mat3::identity()) {}
  // Throws InvalidRotation unless `r` is proper orthogonal.
  static Rotation from_matrix(const Mat3& r);
  // Unit quaternion (w, x, y, z); normalized before use.
  static Rotation from_quaternion(double w, double x, double y, double z);
  static Rotation about_axis(const Vec3& axis, double angle);

  const Mat3& matrix() const { return r_; }
  Vec3 apply(const Vec3& v) const { return r_ * v; }

 private:
  explicit Rotation(const Mat3& r) : r_(r) {}
  Mat3 r_;
};

// R alpha R^T
Mat3 conjugate(const Rotation& r, const Mat3& alpha);
// Q alpha Q^T for any orthogonal Q (improper allowed). Throws InvalidRotation
// when Q^T Q deviates from I by more than 1e-10.
Mat3 conjugate_orthogonal(const Mat3& q, const Mat3& alpha);

// Uniform over SO(3) via a uniformly distributed unit quaternion (Shoemake).
Rotation sample_rotation(Rng& rng);

}  // namespace tcnet
