#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "tcnet/errors.hpp"
#include "tcnet/evaluation.hpp"

using namespace tcnet;
using namespace tcnet::testing;

namespace {

// Scalar-loop metrics written independently of the library.
struct Naive {
  double frob = 0, iso = 0, aniso = 0;
};

Naive naive_metrics(const std::vector<Mat3>& p, const std::vector<Mat3>& t) {
  Naive out;
  for (std::size_t k = 0; k < p.size(); ++k) {
    double d[3][3];
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) d[a][b] = p[k](a, b) - t[k](a, b);
    double f = 0;
    for (auto& row : d)
      for (double x : row) f += x * x;
    const double tr = (d[0][0] + d[1][1] + d[2][2]) / 3.0;
    double an = 0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        const double x = d[a][b] - (a == b ? tr : 0.0);
        an += x * x;
      }
    out.frob += std::sqrt(f);
    out.iso += std::abs(tr);
    out.aniso += std::sqrt(an);
  }
  out.frob /= p.size();
  out.iso /= p.size();
  out.aniso /= p.size();
  return out;
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("metric examples") {
  Rng rng(1);
  const Mat3 t = random_sym(rng);
  MetricReport r = metrics({t, t}, {t, t});
  CHECK(r.frob_mae == 0.0);
  CHECK(r.iso_mae == 0.0);
  CHECK(r.aniso_frob_mae == 0.0);
  CHECK(r.n_samples == 2);

  r = metrics({t + Mat3::identity()}, {t});
  CHECK(r.frob_mae == doctest::Approx(std::sqrt(3.0)).epsilon(1e-14));
  CHECK(r.iso_mae == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(r.aniso_frob_mae < 1e-14);

  r = metrics({t + Mat3::diag(-1, 0, 1)}, {t}, true);
  CHECK(r.frob_mae == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK(r.iso_mae < 1e-15);
  CHECK(r.aniso_frob_mae == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  REQUIRE(r.per_sample.size() == 1);
  CHECK(r.per_sample[0].frob == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));

  CHECK_THROWS_AS(metrics({t}, {t, t}), LengthMismatch);
  CHECK_THROWS_AS(metrics({}, {}), EmptyDataset);
}

TEST_CASE("pythagorean decomposition of residuals") {
  Rng rng(2);
  for (int k = 0; k < 200; ++k) {
    const Residual r = residual(random_sym(rng, 5), random_sym(rng, 5));
    CHECK(std::abs(r.frob * r.frob - (3 * r.iso * r.iso + r.aniso * r.aniso)) < 1e-10);
  }
}

TEST_CASE("metrics are rotation invariant and match a naive loop") {
  Rng rng(3);
  std::vector<Mat3> p, t, pr, tr;
  for (int k = 0; k < 100; ++k) {
    p.push_back(random_sym(rng, 10));
    t.push_back(random_sym(rng, 10));
  }
  const Rotation r = sample_rotation(rng);
  for (int k = 0; k < 100; ++k) {
    pr.push_back(conjugate(r, p[k]));
    tr.push_back(conjugate(r, t[k]));
  }
  const MetricReport a = metrics(p, t), b = metrics(pr, tr);
  CHECK(std::abs(a.frob_mae - b.frob_mae) < 1e-10);
  CHECK(std::abs(a.iso_mae - b.iso_mae) < 1e-10);
  CHECK(std::abs(a.aniso_frob_mae - b.aniso_frob_mae) < 1e-10);
  const Naive n = naive_metrics(p, t);
  CHECK(std::abs(a.frob_mae - n.frob) < 1e-12);
  CHECK(std::abs(a.iso_mae - n.iso) < 1e-12);
  CHECK(std::abs(a.aniso_frob_mae - n.aniso) < 1e-12);
}

TEST_CASE("equivariance harness") {
  const Teacher teacher;
  const std::vector<Molecule> mols = synthetic_molecules(10, 4);
  const EquivReport rep = equiv_test(teacher, mols, 64, 42);
  CHECK(rep.eps_equiv < 1e-12);
  CHECK(rep.eps_target < 1e-12);
  CHECK(rep.n_rotations == 64);
  CHECK(rep.n_samples == 10);
  CHECK(rep.n_with_target == 10);

  // A predictor that ignores geometry is not equivariant.
  const EquivReport bad = equiv_test([](const Molecule&) { return Mat3::diag(1, 2, 3); }, mols, 8, 1);
  CHECK(bad.eps_equiv > 0.1);
  const EquivReport id = equiv_test([](const Molecule&) { return Mat3::diag(1, 2, 3); }, mols, 1, 1, true);
  CHECK(id.eps_equiv == 0.0);

  const auto r1 = sample_rotations(5, 9), r2 = sample_rotations(5, 9);
  for (std::size_t k = 0; k < 5; ++k) CHECK(r1[k].matrix() == r2[k].matrix());
  CHECK_THROWS_AS(equiv_test(teacher, {}, 4, 1), EmptyDataset);
}

TEST_CASE("relative deviatoric error") {
  const Mat3 iso = 3.0 * Mat3::identity();
  const Mat3 unit_dev = (1.0 / std::sqrt(2.0)) * Mat3::diag(-1, 0, 1);
  CHECK(relative_deviatoric_error(iso + unit_dev, iso) == doctest::Approx(1e8).epsilon(1e-12));
  CHECK(relative_deviatoric_error(iso, iso) == 0.0);
  CHECK(median({0.1, 0.3, 0.2}) == 0.2);
  CHECK(median({4, 1, 3, 2}) == 2.5);

  // One bin with ratios 0.1, 0.3 and 0.2.
  const Mat3 t = Mat3::diag(-1, 0, 1);
  std::vector<Mat3> preds, targets;
  for (double s : {0.1, 0.3, 0.2}) {
    preds.push_back(t + s * t);
    targets.push_back(t);
  }
  const SizeBinnedReport rep = relative_deviatoric_report(preds, targets, {4, 4, 4});
  REQUIRE(rep.bins.size() == 5);
  CHECK(rep.n_samples == 3);
  for (const SizeBin& b : rep.bins) {
    if (b.heavy_atoms == 4) {
      CHECK(b.count == 3);
      CHECK(b.median == doctest::Approx(0.2).epsilon(1e-7));
    } else {
      CHECK(b.count == 0);
      CHECK(std::isnan(b.median));
    }
  }
  const SizeBinnedReport wide = relative_deviatoric_report({t, t}, {t, t}, {1, 9});
  REQUIRE(wide.bins.size() == 7);
  CHECK(wide.bins.front().heavy_atoms == 1);
  CHECK(wide.bins.back().heavy_atoms == 9);
  std::size_t total = 0;
  for (const SizeBin& b : wide.bins) {
    total += b.count;
    if (b.count) CHECK(b.median == 0.0);
  }
  CHECK(total == 2);
  CHECK_THROWS_AS(relative_deviatoric_report({t}, {t, t}, {3, 3}), LengthMismatch);
  CHECK_THROWS_AS(relative_deviatoric_report({t}, {t}, {3}, 0.0), OutOfRange);
}

TEST_CASE("report serialization") {
  Rng rng(5);
  std::vector<Mat3> p, t;
  for (int k = 0; k < 6; ++k) {
    p.push_back(random_sym(rng));
    t.push_back(random_sym(rng));
  }
  const MetricReport m = metrics(p, t);
  const MetricReport mb = metric_report_from_json(to_json(m));
  CHECK(mb.frob_mae == m.frob_mae);
  CHECK(mb.iso_mae == m.iso_mae);
  CHECK(mb.aniso_frob_mae == m.aniso_frob_mae);
  CHECK(mb.n_samples == 6);

  const EquivReport e = equiv_test(Teacher{}, synthetic_molecules(3, 1), 4, 2);
  const EquivReport eb = equiv_report_from_json(to_json(e));
  CHECK(eb.eps_equiv == e.eps_equiv);
  CHECK(eb.eps_target == e.eps_target);
  CHECK(eb.n_rotations == 4);

  const SizeBinnedReport s = relative_deviatoric_report(p, t, {3, 3, 5, 6, 8, 3});
  const SizeBinnedReport sb = binned_report_from_json(to_json(s));
  REQUIRE(sb.bins.size() == s.bins.size());
  for (std::size_t k = 0; k < s.bins.size(); ++k) {
    CHECK(sb.bins[k].heavy_atoms == s.bins[k].heavy_atoms);
    CHECK(sb.bins[k].count == s.bins[k].count);
    if (std::isnan(s.bins[k].median))
      CHECK(std::isnan(sb.bins[k].median));
    else
      CHECK(sb.bins[k].median == s.bins[k].median);
  }
  const std::string tsv = to_tsv(s);
  CHECK(tsv.rfind("heavy_atoms\tmedian_rel_dev_error\tcount\n", 0) == 0);
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == static_cast<long>(s.bins.size()) + 1);
  CHECK_THROWS(metric_report_from_json(to_json(e)));
}

}  // TEST_SUITE
