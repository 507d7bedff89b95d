#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tcnet/tensor_algebra.hpp"

namespace tcnet {

// Elements present in the training data: H, C, N, O, S, Cl.
inline constexpr std::array<int, 6> kSupportedElements{1, 6, 7, 8, 16, 17};

// Index of `z` in kSupportedElements; throws UnknownElement.
int element_index(int z);
bool is_supported_element(int z);
// "H" -> 1 etc.; throws UnknownElement.
int atomic_number_from_symbol(const std::string& symbol);
std::string element_symbol(int z);

inline constexpr double kMinAtomDistance = 1e-6;  // Angstrom

struct Molecule {
  std::string mol_id;
  std::vector<int> atomic_numbers;
  std::vector<Vec3> positions;  // Angstrom
  std::optional<Mat3> target_alpha;  // Bohr^3

  std::size_t size() const { return atomic_numbers.size(); }
  int heavy_atom_count() const;
};

// Checks the Molecule invariants: at least one atom, matching array lengths,
// supported elements, finite coordinates, no coincident atoms, symmetric
// target. Throws UnknownElement, DegenerateGeometry or NonSymmetricInput.
void validate(const Molecule& mol);

// Copy with positions mapped by x -> R x + shift (the target is conjugated).
Molecule transformed(const Molecule& mol, const Rotation& r, const Vec3& shift = {0, 0, 0});

}  // namespace tcnet
