#include "tcnet/tensor_algebra.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tcnet/errors.hpp"

namespace tcnet {

std::uint64_t mix64(std::uint64_t x) noexcept {
  Rng r(x);
  return r.next();
}

Mat3 operator+(const Mat3& a, const Mat3& b) {
  Mat3 r;
  for (std::size_t k = 0; k < 9; ++k) r.m[k] = a.m[k] + b.m[k];
  return r;
}

Mat3 operator-(const Mat3& a, const Mat3& b) {
  Mat3 r;
  for (std::size_t k = 0; k < 9; ++k) r.m[k] = a.m[k] - b.m[k];
  return r;
}

Mat3 operator*(double s, const Mat3& a) {
  Mat3 r;
  for (std::size_t k = 0; k < 9; ++k) r.m[k] = s * a.m[k];
  return r;
}

Mat3 operator*(const Mat3& a, const Mat3& b) {
  Mat3 r;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 3; ++k) acc += a(i, k) * b(k, j);
      r(i, j) = acc;
    }
  return r;
}

Vec3 operator*(const Mat3& a, const Vec3& v) {
  return {a(0, 0) * v[0] + a(0, 1) * v[1] + a(0, 2) * v[2],
          a(1, 0) * v[0] + a(1, 1) * v[1] + a(1, 2) * v[2],
          a(2, 0) * v[0] + a(2, 1) * v[1] + a(2, 2) * v[2]};
}

Mat3 transpose(const Mat3& a) {
  Mat3 r;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) r(i, j) = a(j, i);
  return r;
}

double trace(const Mat3& a) { return a.m[0] + a.m[4] + a.m[8]; }

double det(const Mat3& a) {
  return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
         a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
         a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

double frob_inner(const Mat3& a, const Mat3& b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < 9; ++k) acc += a.m[k] * b.m[k];
  return acc;
}

double frob_norm(const Mat3& a) { return std::sqrt(frob_inner(a, a)); }

bool all_finite(const Mat3& a) {
  for (double x : a.m)
    if (!std::isfinite(x)) return false;
  return true;
}

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

Mat3 sym(const Mat3& a) {
  Mat3 r;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) r(i, j) = 0.5 * (a(i, j) + a(j, i));
  return r;
}

Mat3 traceless(const Mat3& a) {
  Mat3 r = sym(a);
  const double mean = trace(a) / 3.0;
  r.m[0] -= mean;
  r.m[4] -= mean;
  r.m[8] -= mean;
  return r;
}

Mat3 dyadic(const Vec3& u, const Vec3& w) {
  Mat3 r;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) r(i, j) = u[i] * w[j];
  return r;
}

double asymmetry(const Mat3& a) {
  return std::max({std::abs(a(0, 1) - a(1, 0)), std::abs(a(0, 2) - a(2, 0)),
                   std::abs(a(1, 2) - a(2, 1))});
}

Mat3 deviatoric(const Mat3& alpha) {
  Mat3 r = alpha;
  const double mean = trace(alpha) / 3.0;
  r.m[0] -= mean;
  r.m[4] -= mean;
  r.m[8] -= mean;
  return r;
}

SphericalDecomp decompose(const Mat3& alpha) {
  if (!all_finite(alpha)) throw NonSymmetricInput("decompose: non-finite tensor");
  if (asymmetry(alpha) > kSymmetryTolerance)
    throw NonSymmetricInput("decompose: tensor asymmetry exceeds tolerance");
  const Mat3 s = sym(alpha);
  SphericalDecomp d;
  d.iso = trace(s) / 3.0;
  d.aniso = deviatoric(s);
  return d;
}

Mat3 reconstruct(const SphericalDecomp& d) { return d.iso * Mat3::identity() + d.aniso; }

namespace {

double orthogonality_defect(const Mat3& q) {
  const Mat3 qtq = transpose(q) * q;
  double worst = 0.0;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      worst = std::max(worst, std::abs(qtq(i, j) - (i == j ? 1.0 : 0.0)));
  return worst;
}

}  // namespace

Rotation Rotation::from_matrix(const Mat3& r) {
  if (!all_finite(r) || orthogonality_defect(r) > kTolerance ||
      std::abs(det(r) - 1.0) > kTolerance)
    throw InvalidRotation("matrix is not a proper rotation");
  return Rotation(r);
}

Rotation Rotation::from_quaternion(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!(n > 0.0) || !std::isfinite(n)) throw InvalidRotation("zero or non-finite quaternion");
  w /= n;
  x /= n;
  y /= n;
  z /= n;
  Mat3 r;
  r(0, 0) = 1 - 2 * (y * y + z * z);
  r(0, 1) = 2 * (x * y - w * z);
  r(0, 2) = 2 * (x * z + w * y);
  r(1, 0) = 2 * (x * y + w * z);
  r(1, 1) = 1 - 2 * (x * x + z * z);
  r(1, 2) = 2 * (y * z - w * x);
  r(2, 0) = 2 * (x * z - w * y);
  r(2, 1) = 2 * (y * z + w * x);
  r(2, 2) = 1 - 2 * (x * x + y * y);
  return Rotation(r);
}

Rotation Rotation::about_axis(const Vec3& axis, double angle) {
  const double n = norm(axis);
  if (!(n > 0.0)) throw InvalidRotation("zero rotation axis");
  const double s = std::sin(angle / 2) / n;
  return from_quaternion(std::cos(angle / 2), axis[0] * s, axis[1] * s, axis[2] * s);
}

Mat3 conjugate(const Rotation& r, const Mat3& alpha) {
  const Mat3& q = r.matrix();
  return q * alpha * transpose(q);
}

Mat3 conjugate_orthogonal(const Mat3& q, const Mat3& alpha) {
  if (!all_finite(q) || orthogonality_defect(q) > Rotation::kTolerance)
    throw InvalidRotation("matrix is not orthogonal");
  return q * alpha * transpose(q);
}

Rotation sample_rotation(Rng& rng) {
  const double u1 = rng.uniform();
  const double u2 = rng.uniform();
  const double u3 = rng.uniform();
  const double a = std::sqrt(1.0 - u1);
  const double b = std::sqrt(u1);
  const double t2 = 2.0 * std::numbers::pi * u2;
  const double t3 = 2.0 * std::numbers::pi * u3;
  return Rotation::from_quaternion(b * std::cos(t3), a * std::sin(t2), a * std::cos(t2),
                                   b * std::sin(t3));
}

}  // namespace tcnet
