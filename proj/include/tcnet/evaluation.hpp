#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tcnet/molecule.hpp"

namespace tcnet {

struct Residual {
  double frob = 0.0;   // ||pred - target||_F
  double iso = 0.0;    // |tr(pred)/3 - tr(target)/3|
  double aniso = 0.0;  // ||dev(pred) - dev(target)||_F
};

Residual residual(const Mat3& pred, const Mat3& target);

struct MetricReport {
  double frob_mae = 0.0;
  double iso_mae = 0.0;
  double aniso_frob_mae = 0.0;
  std::size_t n_samples = 0;
  std::vector<Residual> per_sample;  // filled when requested
};

// Throws LengthMismatch for unequal lengths and EmptyDataset for no samples.
MetricReport metrics(const std::vector<Mat3>& preds, const std::vector<Mat3>& targets, bool keep_per_sample = false);

struct EquivReport {
  double eps_equiv = 0.0;   // mean ||f(Rx) - R f(x) R^T||_F
  double eps_target = 0.0;  // mean ||f(Rx) - R alpha R^T||_F over molecules with a target
  std::size_t n_rotations = 0;
  std::size_t n_samples = 0;
  std::size_t n_with_target = 0;
};

using Predictor = std::function<Mat3(const Molecule&)>;

// The rotations are drawn once from the kRotations stream of `seed` and
// shared by every molecule. `identity_only` replaces them by the identity (a
// harness self-check: eps_equiv must then be exactly zero).
std::vector<Rotation> sample_rotations(std::size_t n, std::uint64_t seed);
EquivReport equiv_test(const Predictor& predict, const std::vector<Molecule>& mols, std::size_t n_rotations = 64,
                       std::uint64_t seed = 42, bool identity_only = false);

struct SizeBin {
  int heavy_atoms = 0;
  std::size_t count = 0;
  double median = 0.0;  // NaN for an empty bin
};

struct SizeBinnedReport {
  double eps = 1e-8;
  std::size_t n_samples = 0;
  std::vector<SizeBin> bins;  // ascending heavy-atom count
};

// ||dev(pred) - dev(target)||_F / (||dev(target)||_F + eps)
double relative_deviatoric_error(const Mat3& pred, const Mat3& target, double eps = 1e-8);

// Bins 3..7 are always present (possibly empty); other counts get their own
// bins when they occur. Even-sized bins report the mean of the two middle
// values. Throws LengthMismatch, OutOfRange for eps <= 0.
SizeBinnedReport relative_deviatoric_report(const std::vector<Mat3>& preds, const std::vector<Mat3>& targets,
                                            const std::vector<int>& heavy_atom_counts, double eps = 1e-8);

double median(std::vector<double> values);

std::string to_json(const MetricReport& r);
std::string to_json(const EquivReport& r);
std::string to_json(const SizeBinnedReport& r);
// Tab-separated "heavy_atoms  median  count" rows with a header line.
std::string to_tsv(const SizeBinnedReport& r);

MetricReport metric_report_from_json(const std::string& text);
EquivReport equiv_report_from_json(const std::string& text);
SizeBinnedReport binned_report_from_json(const std::string& text);

}  // namespace tcnet
