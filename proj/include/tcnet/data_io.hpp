#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tcnet/molecule.hpp"

namespace tcnet {

// Six independent components of a symmetric tensor: xx, yy, zz, xy, xz, yz.
using Sym6 = std::array<double, 6>;

Sym6 to_sym6(const Mat3& a);
Mat3 from_sym6(const Sym6& c);

struct DatasetRecord {
  std::string conformer_id;
  Molecule molecule;  // mol_id and target_alpha live here

  const std::string& mol_id() const { return molecule.mol_id; }
  Sym6 alpha() const { return to_sym6(molecule.target_alpha.value_or(Mat3{})); }
};

struct ParseOutput {
  std::vector<DatasetRecord> records;
  std::vector<std::string> warnings;  // one per dropped duplicate
};

// Extended XYZ, one frame per record:
//
//   3
//   mol_id=water conformer_id=0 alpha="xx yy zz xy xz yz"
//   O  0.0 0.0 0.0
//   H  0.96 0.0 0.0
//   H -0.24 0.93 0.0
//
// Element columns accept symbols or atomic numbers; columns after the three
// coordinates are ignored. `alpha` may also carry all nine row-major
// components, which must be symmetric to 1e-8. Throws ParseError (with the
// 1-based line) for structural problems, InvalidTensor for a bad alpha block.
ParseOutput parse_xyz(std::istream& in);
// One JSON object per line: {"mol_id", "conformer_id"?, "Z", "pos", "alpha"}.
ParseOutput parse_jsonl(std::istream& in);
// Picks the reader by extension (.jsonl / .ndjson, anything else is XYZ).
ParseOutput parse_dataset(const std::string& path);

// First frame of a plain XYZ file. The comment line is free-form; a
// mol_id=... entry in it is used when present, otherwise `fallback_id`.
// Throws ParseError.
Molecule read_xyz_molecule(std::istream& in, const std::string& fallback_id = "input");

// Drops records whose mol_id and geometry (elements and bitwise coordinates)
// repeat an earlier record.
ParseOutput deduplicate(std::vector<DatasetRecord> records);

void write_xyz(std::ostream& out, const std::vector<DatasetRecord>& records);
void write_xyz(const std::string& path, const std::vector<DatasetRecord>& records);

struct SplitManifest {
  std::uint64_t seed = 42;
  std::array<double, 3> fractions{0.8, 0.1, 0.1};
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;

  bool operator==(const SplitManifest&) const = default;
};

// Fisher-Yates over the sorted unique mol_ids with the kSplit stream of
// `seed`; the shuffled list is cut into val = floor(f_val n), test =
// floor(f_test n) and train = the rest, in the order train, val, test. Each
// partition is then sorted. Throws EmptyDataset or ConfigError.
SplitManifest make_splits(const std::vector<DatasetRecord>& records, std::uint64_t seed = 42,
                          std::array<double, 3> fractions = {0.8, 0.1, 0.1});

// Throws Error when a mol_id sits in two partitions.
void check_disjoint(const SplitManifest& m);

std::string manifest_to_json(const SplitManifest& m);
SplitManifest manifest_from_json(const std::string& text);
void save_manifest(const std::string& path, const SplitManifest& m);
SplitManifest load_manifest(const std::string& path);

enum class Partition { kTrain, kVal, kTest };
Partition partition_from_string(const std::string& s);
const std::vector<std::string>& partition_ids(const SplitManifest& m, Partition p);

// Records whose mol_id is in `ids`, in dataset order.
std::vector<DatasetRecord> select(const std::vector<DatasetRecord>& records, const std::vector<std::string>& ids);

// Analytic polarizability teacher, exactly equivariant:
//
//   alpha = sum_i a(Z_i) I
//         + pair_scale    sum_{i<j, d<c} k(Z_i) k(Z_j) f(d_ij) TL(rhat_ij (x) rhat_ij)
//         + triplet_scale sum_i g(Z_i) TL(p_i (x) p_i),   p_i = sum_{j != i, d<c} k(Z_j) f(d_ij) rhat_ij
//
// with f the cosine envelope at cutoff c. The triplet term couples the
// directions of different bonds around an atom.
struct Teacher {
  double cutoff = 5.0;
  double pair_scale = 1.0;
  double triplet_scale = 1.0;

  Mat3 operator()(const Molecule& mol) const;

  // Per-element tables, indexed like kSupportedElements.
  static constexpr std::array<double, 6> kIso{4.5, 11.3, 7.4, 5.3, 19.6, 15.0};
  static constexpr std::array<double, 6> kBond{0.6, 1.2, 1.0, 0.9, 1.6, 1.4};
  static constexpr std::array<double, 6> kTriplet{0.3, 1.0, 0.8, 0.6, 1.5, 1.2};
};

struct SynthOptions {
  int min_atoms = 3;
  int max_atoms = 10;
  double min_bond = 1.0;     // Angstrom
  double max_bond = 1.6;
  double min_distance = 0.9;  // between any two atoms
  Teacher teacher;
};

// n random molecules grown atom by atom (each new atom bonded to a random
// earlier one), mol_ids "syn-000000"..., targets from the teacher. Uses the
// kData stream of `seed`.
std::vector<DatasetRecord> synthetic_dataset(int n, std::uint64_t seed, const SynthOptions& opt = {});

}  // namespace tcnet
