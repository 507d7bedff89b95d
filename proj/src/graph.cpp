#include "tcnet/graph.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "tcnet/errors.hpp"

namespace tcnet {

namespace {

void check_range(double d, double cutoff, const char* what) {
  if (!(cutoff > 0.0) || !(d > 0.0) || !(d < cutoff))
    throw OutOfRange(std::string(what) + ": distance " + std::to_string(d) + " outside (0, " +
                     std::to_string(cutoff) + ")");
}

}  // namespace

std::vector<double> bessel_rbf(double d, double cutoff, int k) {
  check_range(d, cutoff, "bessel_rbf");
  if (k < 1) throw OutOfRange("bessel_rbf: basis size must be >= 1");
  const double pref = std::sqrt(2.0 / cutoff);
  std::vector<double> out(static_cast<std::size_t>(k));
  for (int n = 1; n <= k; ++n) out[n - 1] = pref * std::sin(n * std::numbers::pi * d / cutoff) / d;
  return out;
}

double cosine_envelope(double d, double cutoff) {
  check_range(d, cutoff, "cosine_envelope");
  return 0.5 * (std::cos(std::numbers::pi * d / cutoff) + 1.0);
}

MolecularGraph build_graph(const Molecule& mol, double cutoff, int rbf_count) {
  if (!(cutoff > 0.0)) throw OutOfRange("build_graph: cutoff must be positive");
  MolecularGraph g;
  g.n_atoms = static_cast<int>(mol.positions.size());
  for (int i = 0; i < g.n_atoms; ++i) {
    const Vec3& xi = mol.positions[i];
    for (int j = 0; j < g.n_atoms; ++j) {
      if (j == i) continue;
      const Vec3& xj = mol.positions[j];
      EdgeFeatures e;
      e.src = j;
      e.dst = i;
      e.r = {xj[0] - xi[0], xj[1] - xi[1], xj[2] - xi[2]};
      e.d = norm(e.r);
      if (e.d < kMinAtomDistance)
        throw DegenerateGeometry("build_graph: atoms " + std::to_string(i) + " and " + std::to_string(j) +
                                 " coincide");
      if (!(e.d < cutoff)) continue;
      e.rhat = {e.r[0] / e.d, e.r[1] / e.d, e.r[2] / e.d};
      e.rbf = bessel_rbf(e.d, cutoff, rbf_count);
      e.envelope = cosine_envelope(e.d, cutoff);
      g.edges.push_back(std::move(e));
    }
  }
  return g;
}

}  // namespace tcnet
