#include <doctest.h>

#include "helpers.hpp"
#include "tcnet/errors.hpp"
#include "tcnet/tensor_algebra.hpp"

using namespace tcnet;
using namespace tcnet::testing;

TEST_SUITE("tensor_algebra") {

TEST_CASE("sym") {
  CHECK(sym(Mat3::identity()) == Mat3::identity());
  const Mat3 anti = Mat3::rows({0, 1, 0}, {-1, 0, 0}, {0, 0, 0});
  CHECK(sym(anti) == Mat3::zero());
  const Mat3 a = Mat3::rows({1, 2, 0}, {0, 1, 0}, {0, 0, 1});
  CHECK(sym(a) == Mat3::rows({1, 1, 0}, {1, 1, 0}, {0, 0, 1}));
}

TEST_CASE("traceless") {
  CHECK(max_abs_diff(traceless(Mat3::identity()), Mat3::zero()) == 0.0);
  CHECK(traceless(Mat3::diag(1, 2, 3)) == Mat3::diag(-1, 0, 1));
  const Mat3 fixed = Mat3::rows({1, 2, 3}, {2, -4, 5}, {3, 5, 3});
  CHECK(max_abs_diff(traceless(fixed), fixed) < 1e-15);

  Rng rng(11);
  for (int k = 0; k < 200; ++k) {
    const Mat3 a = random_mat3(rng, 10.0);
    const Mat3 t = traceless(a);
    CHECK(std::abs(trace(t)) <= 1e-14 * 10);
    CHECK(asymmetry(t) == 0.0);
    CHECK(max_abs_diff(traceless(t), t) < 1e-12);
    CHECK(std::abs(frob_inner(t, Mat3::identity())) < 1e-12);
  }
}

TEST_CASE("dyadic") {
  CHECK(dyadic({1, 0, 0}, {1, 0, 0}) == Mat3::rows({1, 0, 0}, {0, 0, 0}, {0, 0, 0}));
  CHECK(dyadic({1, 2, 3}, {0, 0, 0}) == Mat3::zero());
  CHECK(dyadic({1, 2, 0}, {0, 1, 1}) == Mat3::rows({0, 1, 1}, {0, 2, 2}, {0, 0, 0}));
  Rng rng(5);
  for (int k = 0; k < 50; ++k) {
    const Vec3 u = random_vec3(rng), w = random_vec3(rng);
    CHECK(sym(dyadic(u, w)) == sym(dyadic(w, u)));
  }
}

TEST_CASE("decompose") {
  SphericalDecomp d = decompose(Mat3::diag(3, 3, 3));
  CHECK(d.iso == 3.0);
  CHECK(d.aniso == Mat3::zero());
  d = decompose(Mat3::diag(1, 2, 3));
  CHECK(d.iso == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(max_abs_diff(d.aniso, Mat3::diag(-1, 0, 1)) < 1e-15);
  d = decompose(Mat3::zero());
  CHECK(d.iso == 0.0);
  CHECK(d.aniso == Mat3::zero());

  Mat3 bad = Mat3::diag(1, 1, 1);
  bad(0, 1) = 1e-6;
  CHECK_THROWS_AS(decompose(bad), NonSymmetricInput);
  Mat3 slight = Mat3::diag(1, 2, 3);
  slight(0, 1) = 1e-9;
  const SphericalDecomp s = decompose(slight);
  CHECK(asymmetry(s.aniso) == 0.0);
  CHECK(s.aniso(0, 1) == doctest::Approx(0.5e-9));

  Rng rng(3);
  for (int k = 0; k < 200; ++k) {
    const Mat3 a = random_sym(rng, 50.0);
    const SphericalDecomp p = decompose(a);
    CHECK(max_abs_diff(reconstruct(p), a) < 1e-12);
    CHECK(std::abs(trace(p.aniso)) < 1e-12);
    CHECK(asymmetry(p.aniso) < 1e-12);
  }
}

TEST_CASE("rotation construction and conjugation") {
  const Rotation rz = Rotation::about_axis({0, 0, 1}, M_PI / 2);
  CHECK(max_abs_diff(conjugate(rz, Mat3::diag(1, 2, 3)), Mat3::diag(2, 1, 3)) < 1e-15);
  CHECK(max_abs_diff(conjugate(Rotation(), Mat3::diag(1, 2, 3)), Mat3::diag(1, 2, 3)) == 0.0);
  CHECK(max_abs_diff(conjugate(rz, Mat3::identity()), Mat3::identity()) < 1e-15);

  CHECK_THROWS_AS(Rotation::from_matrix(Mat3::diag(1, 1, -1)), InvalidRotation);
  CHECK_THROWS_AS(Rotation::from_matrix(Mat3::diag(2, 1, 1)), InvalidRotation);
  CHECK_NOTHROW(Rotation::from_matrix(rz.matrix()));

  // Improper orthogonal maps are accepted by conjugate_orthogonal only.
  const Mat3 mirror = Mat3::diag(1, 1, -1);
  const Mat3 a = Mat3::rows({1, 2, 3}, {2, 4, 5}, {3, 5, 6});
  const Mat3 m = conjugate_orthogonal(mirror, a);
  CHECK(m(0, 2) == -3.0);
  CHECK(m(1, 2) == -5.0);
  CHECK(m(2, 2) == 6.0);
  CHECK_THROWS_AS(conjugate_orthogonal(Mat3::diag(1, 1, 2), a), InvalidRotation);

  Rng rng(17);
  for (int k = 0; k < 100; ++k) {
    const Rotation r = sample_rotation(rng);
    const Mat3 s = random_sym(rng, 20.0);
    const Mat3 c = conjugate(r, s);
    CHECK(std::abs(trace(c) - trace(s)) < 1e-10);
    CHECK(std::abs(frob_norm(c) - frob_norm(s)) < 1e-10);
    const SphericalDecomp ds = decompose(s), dc = decompose(c);
    CHECK(std::abs(dc.iso - ds.iso) < 1e-10);
    CHECK(max_abs_diff(dc.aniso, conjugate(r, ds.aniso)) < 1e-10);
  }
}

TEST_CASE("frob_norm") {
  CHECK(frob_norm(Mat3::zero()) == 0.0);
  CHECK(frob_norm(Mat3::identity()) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-15));
  CHECK(frob_norm(Mat3::diag(3, 4, 0)) == 5.0);
}

TEST_CASE("sample_rotation") {
  Rng a(99), b(99);
  for (int k = 0; k < 5; ++k) CHECK(sample_rotation(a).matrix() == sample_rotation(b).matrix());

  Rng rng(2024);
  Mat3 mean;
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    const Mat3 r = sample_rotation(rng).matrix();
    CHECK(std::abs(det(r) - 1.0) < 1e-10);
    CHECK(max_abs_diff(transpose(r) * r, Mat3::identity()) < 1e-10);
    mean = mean + (1.0 / n) * r;
  }
  for (double x : mean.m) CHECK(std::abs(x) < 0.05);
}

}  // TEST_SUITE
