#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tcnet/data_io.hpp"
#include "tcnet/molecule.hpp"
#include "tcnet/rng.hpp"
#include "tcnet/tensor_algebra.hpp"

namespace tcnet::testing {

inline Mat3 random_mat3(Rng& rng, double scale = 1.0) {
  Mat3 a;
  for (double& x : a.m) x = rng.uniform(-scale, scale);
  return a;
}

inline Mat3 random_sym(Rng& rng, double scale = 1.0) { return sym(random_mat3(rng, scale)); }

inline Vec3 random_vec3(Rng& rng, double scale = 1.0) {
  return {rng.uniform(-scale, scale), rng.uniform(-scale, scale), rng.uniform(-scale, scale)};
}

inline double max_abs_diff(const Mat3& a, const Mat3& b) {
  double m = 0.0;
  for (int k = 0; k < 9; ++k) m = std::max(m, std::abs(a.m[k] - b.m[k]));
  return m;
}

inline Molecule make_molecule(std::string id, std::vector<int> z, std::vector<Vec3> pos) {
  Molecule m;
  m.mol_id = std::move(id);
  m.atomic_numbers = std::move(z);
  m.positions = std::move(pos);
  return m;
}

// Tetrahedral CH4, C-H 1.09 Angstrom.
inline Molecule methane() {
  const double a = 1.09 / std::sqrt(3.0);
  return make_molecule("ch4", {6, 1, 1, 1, 1}, {{0, 0, 0}, {a, a, a}, {a, -a, -a}, {-a, a, -a}, {-a, -a, a}});
}

inline Molecule water() {
  return make_molecule("h2o", {8, 1, 1}, {{0, 0, 0}, {0.96, 0, 0}, {-0.24, 0.93, 0}});
}

inline std::vector<Molecule> synthetic_molecules(int n, std::uint64_t seed) {
  std::vector<Molecule> out;
  for (const DatasetRecord& r : synthetic_dataset(n, seed)) out.push_back(r.molecule);
  return out;
}

// |a - n| within 1e-6 relative or 1e-8 absolute.
inline bool grad_close(double analytic, double numeric, double rel = 1e-6, double abs_floor = 1e-8) {
  const double d = std::abs(analytic - numeric);
  return d <= abs_floor || d <= rel * std::max(std::abs(analytic), std::abs(numeric));
}

}  // namespace tcnet::testing
