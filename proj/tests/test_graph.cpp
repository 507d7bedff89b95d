#include <doctest.h>

#include <algorithm>

#include "helpers.hpp"
#include "tcnet/errors.hpp"
#include "tcnet/graph.hpp"

using namespace tcnet;
using namespace tcnet::testing;

TEST_SUITE("graph") {

TEST_CASE("edge sets") {
  CHECK(build_graph(make_molecule("a", {1, 1}, {{0, 0, 0}, {3, 0, 0}}), 10.0, 8).edges.size() == 2);
  CHECK(build_graph(make_molecule("b", {1, 1}, {{0, 0, 0}, {12, 0, 0}}), 10.0, 8).edges.size() == 0);
  const MolecularGraph g = build_graph(water(), 10.0, 8);
  CHECK(g.edges.size() == 6);
  for (const EdgeFeatures& e : g.edges) {
    CHECK(e.src != e.dst);
    CHECK(e.d > 0.0);
    CHECK(e.d < 10.0);
    CHECK(std::abs(norm(e.r) - e.d) < 1e-12);
    CHECK(std::abs(norm(e.rhat) - 1.0) < 1e-12);
    CHECK(e.rbf.size() == 8);
    CHECK(e.envelope >= 0.0);
    CHECK(e.envelope <= 1.0);
  }
  // r points from the receiving atom i to the sender j.
  const MolecularGraph two = build_graph(make_molecule("c", {1, 1}, {{0, 0, 0}, {3, 0, 0}}), 10.0, 4);
  for (const EdgeFeatures& e : two.edges) CHECK(e.r[0] == (e.src == 1 ? 3.0 : -3.0));
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(build_graph(make_molecule("d", {1, 1}, {{0, 0, 0}, {0, 0, 1e-7}}), 10.0, 8), DegenerateGeometry);
  CHECK_THROWS_AS(build_graph(water(), 0.0, 8), OutOfRange);
  CHECK_THROWS_AS(bessel_rbf(0.0, 10.0, 8), OutOfRange);
  CHECK_THROWS_AS(bessel_rbf(10.0, 10.0, 8), OutOfRange);
  CHECK_THROWS_AS(bessel_rbf(1.0, 10.0, 0), OutOfRange);
  CHECK_THROWS_AS(cosine_envelope(-1.0, 10.0), OutOfRange);
  CHECK_THROWS_AS(cosine_envelope(11.0, 10.0), OutOfRange);
}

TEST_CASE("bessel basis") {
  CHECK(std::abs(bessel_rbf(5.0, 10.0, 3)[1]) < 1e-16);
  for (double x : bessel_rbf(10.0 - 1e-9, 10.0, 6)) CHECK(std::abs(x) < 1e-8);
  const std::vector<double> b = bessel_rbf(1.0, 10.0, 8);
  for (int n = 1; n <= 8; ++n) {
    const double expected = std::sqrt(2.0 / 10.0) * std::sin(n * M_PI * 1.0 / 10.0) / 1.0;
    CHECK(b[n - 1] == doctest::Approx(expected).epsilon(1e-15));
  }
}

TEST_CASE("cosine envelope") {
  CHECK(cosine_envelope(5.0, 10.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(cosine_envelope(1e-9, 10.0) == doctest::Approx(1.0));
  CHECK(cosine_envelope(7.5, 10.0) == doctest::Approx(0.1464466094067262).epsilon(1e-12));
  double prev = 1.0;
  for (double d = 0.1; d < 10.0; d += 0.1) {
    const double e = cosine_envelope(d, 10.0);
    CHECK(e < prev);
    prev = e;
  }
}

TEST_CASE("translation and rotation behaviour") {
  Rng rng(21);
  const Molecule mol = methane();
  const MolecularGraph g0 = build_graph(mol, 10.0, 20);
  const MolecularGraph gt = build_graph(transformed(mol, Rotation(), {3.5, -2.0, 7.25}), 10.0, 20);
  const Rotation r = sample_rotation(rng);
  const MolecularGraph gr = build_graph(transformed(mol, r), 10.0, 20);
  REQUIRE(g0.edges.size() == gt.edges.size());
  REQUIRE(g0.edges.size() == gr.edges.size());
  for (std::size_t k = 0; k < g0.edges.size(); ++k) {
    const EdgeFeatures &a = g0.edges[k], &b = gt.edges[k], &c = gr.edges[k];
    CHECK(a.src == b.src);
    CHECK(a.dst == c.dst);
    CHECK(std::abs(a.d - b.d) < 1e-12);
    CHECK(std::abs(a.d - c.d) < 1e-12);
    CHECK(std::abs(a.envelope - c.envelope) < 1e-12);
    const Vec3 rr = r.apply(a.r), rh = r.apply(a.rhat);
    for (int i = 0; i < 3; ++i) {
      CHECK(std::abs(a.r[i] - b.r[i]) < 1e-12);
      CHECK(std::abs(rr[i] - c.r[i]) < 1e-12);
      CHECK(std::abs(rh[i] - c.rhat[i]) < 1e-12);
    }
    for (std::size_t q = 0; q < a.rbf.size(); ++q) {
      CHECK(std::abs(a.rbf[q] - b.rbf[q]) < 1e-12);
      CHECK(std::abs(a.rbf[q] - c.rbf[q]) < 1e-12);
    }
  }
}

TEST_CASE("atom permutation keeps the edge multiset") {
  const Molecule mol = water();
  Molecule perm = mol;
  std::swap(perm.atomic_numbers[0], perm.atomic_numbers[2]);
  std::swap(perm.positions[0], perm.positions[2]);
  auto features = [](const MolecularGraph& g) {
    std::vector<std::vector<double>> f;
    for (const EdgeFeatures& e : g.edges) {
      std::vector<double> row{e.d};
      row.insert(row.end(), e.rbf.begin(), e.rbf.end());
      f.push_back(row);
    }
    std::sort(f.begin(), f.end());
    return f;
  };
  const auto a = features(build_graph(mol, 10.0, 6));
  const auto b = features(build_graph(perm, 10.0, 6));
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t q = 0; q < a[k].size(); ++q) CHECK(a[k][q] == doctest::Approx(b[k][q]).epsilon(1e-12));
}

}  // TEST_SUITE
