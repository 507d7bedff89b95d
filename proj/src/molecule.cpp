#include "tcnet/molecule.hpp"

#include <cmath>
#include <string>

#include "tcnet/errors.hpp"

namespace tcnet {

namespace {

constexpr std::array<const char*, 6> kSymbols{"H", "C", "N", "O", "S", "Cl"};

}  // namespace

int element_index(int z) {
  for (std::size_t k = 0; k < kSupportedElements.size(); ++k)
    if (kSupportedElements[k] == z) return static_cast<int>(k);
  throw UnknownElement("unsupported atomic number " + std::to_string(z));
}

bool is_supported_element(int z) {
  for (int e : kSupportedElements)
    if (e == z) return true;
  return false;
}

int atomic_number_from_symbol(const std::string& symbol) {
  for (std::size_t k = 0; k < kSymbols.size(); ++k)
    if (symbol == kSymbols[k]) return kSupportedElements[k];
  throw UnknownElement("unsupported element symbol '" + symbol + "'");
}

std::string element_symbol(int z) { return kSymbols[static_cast<std::size_t>(element_index(z))]; }

int Molecule::heavy_atom_count() const {
  int n = 0;
  for (int z : atomic_numbers) n += z > 1 ? 1 : 0;
  return n;
}

void validate(const Molecule& mol) {
  if (mol.atomic_numbers.empty()) throw DegenerateGeometry("molecule '" + mol.mol_id + "' has no atoms");
  if (mol.atomic_numbers.size() != mol.positions.size())
    throw DegenerateGeometry("molecule '" + mol.mol_id + "': atom and position counts differ");
  for (int z : mol.atomic_numbers) element_index(z);
  for (const Vec3& p : mol.positions)
    for (double x : p)
      if (!std::isfinite(x)) throw DegenerateGeometry("molecule '" + mol.mol_id + "': non-finite coordinate");
  for (std::size_t i = 0; i < mol.positions.size(); ++i)
    for (std::size_t j = i + 1; j < mol.positions.size(); ++j) {
      const Vec3& a = mol.positions[i];
      const Vec3& b = mol.positions[j];
      const double d = norm(Vec3{b[0] - a[0], b[1] - a[1], b[2] - a[2]});
      if (d < kMinAtomDistance)
        throw DegenerateGeometry("molecule '" + mol.mol_id + "': atoms " + std::to_string(i) + " and " +
                                 std::to_string(j) + " coincide");
    }
  if (mol.target_alpha) {
    if (!all_finite(*mol.target_alpha) || asymmetry(*mol.target_alpha) > kSymmetryTolerance)
      throw NonSymmetricInput("molecule '" + mol.mol_id + "': target tensor is not symmetric");
  }
}

Molecule transformed(const Molecule& mol, const Rotation& r, const Vec3& shift) {
  Molecule out = mol;
  for (Vec3& p : out.positions) {
    const Vec3 q = r.apply(p);
    p = {q[0] + shift[0], q[1] + shift[1], q[2] + shift[2]};
  }
  if (out.target_alpha) out.target_alpha = conjugate(r, *out.target_alpha);
  return out;
}

}  // namespace tcnet
