#pragma once

#include <vector>

#include "tcnet/molecule.hpp"

namespace tcnet {

// Directed edge j -> i: the message from atom `src` (j) to atom `dst` (i).
struct EdgeFeatures {
  int src = 0;
  int dst = 0;
  Vec3 r{};          // x_j - x_i, Angstrom
  double d = 0.0;    // |r|
  Vec3 rhat{};       // r / d
  std::vector<double> rbf;
  double envelope = 0.0;
};

struct MolecularGraph {
  int n_atoms = 0;
  std::vector<EdgeFeatures> edges;
};

// Component n (1-based) is sqrt(2/cutoff) sin(n pi d / cutoff) / d.
// Requires 0 < d < cutoff and k >= 1; throws OutOfRange.
std::vector<double> bessel_rbf(double d, double cutoff, int k);

// 1/2 (cos(pi d / cutoff) + 1); throws OutOfRange outside 0 < d < cutoff.
double cosine_envelope(double d, double cutoff);

// Brute-force radius graph: both directions of every pair with d < cutoff,
// no self edges, ordered by (dst, src). Throws DegenerateGeometry when two
// atoms coincide and OutOfRange when cutoff <= 0.
MolecularGraph build_graph(const Molecule& mol, double cutoff, int rbf_count);

}  // namespace tcnet
