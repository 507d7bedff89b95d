#include "tcnet/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <json.hpp>

#include "tcnet/errors.hpp"
#include "tcnet/rng.hpp"

namespace tcnet {

using json = nlohmann::ordered_json;

Residual residual(const Mat3& pred, const Mat3& target) {
  const Mat3 d = pred - target;
  return {frob_norm(d), std::abs(trace(d)) / 3.0, frob_norm(deviatoric(pred) - deviatoric(target))};
}

MetricReport metrics(const std::vector<Mat3>& preds, const std::vector<Mat3>& targets, bool keep_per_sample) {
  if (preds.size() != targets.size())
    throw LengthMismatch("metrics: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(targets.size()) + " targets");
  if (preds.empty()) throw EmptyDataset("metrics: no samples");
  MetricReport r;
  r.n_samples = preds.size();
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const Residual e = residual(preds[i], targets[i]);
    r.frob_mae += e.frob;
    r.iso_mae += e.iso;
    r.aniso_frob_mae += e.aniso;
    if (keep_per_sample) r.per_sample.push_back(e);
  }
  const double n = static_cast<double>(r.n_samples);
  r.frob_mae /= n;
  r.iso_mae /= n;
  r.aniso_frob_mae /= n;
  return r;
}

std::vector<Rotation> sample_rotations(std::size_t n, std::uint64_t seed) {
  Rng rng = make_stream(seed, Stream::kRotations);
  std::vector<Rotation> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) out.push_back(sample_rotation(rng));
  return out;
}

EquivReport equiv_test(const Predictor& predict, const std::vector<Molecule>& mols, std::size_t n_rotations,
                       std::uint64_t seed, bool identity_only) {
  if (mols.empty()) throw EmptyDataset("equiv_test: no molecules");
  if (n_rotations == 0) throw OutOfRange("equiv_test: need at least one rotation");
  const std::vector<Rotation> rots =
      identity_only ? std::vector<Rotation>(n_rotations) : sample_rotations(n_rotations, seed);
  EquivReport r;
  r.n_rotations = n_rotations;
  r.n_samples = mols.size();
  double sum_equiv = 0.0, sum_target = 0.0;
  for (const Molecule& mol : mols) {
    const Mat3 base = predict(mol);
    for (const Rotation& rot : rots) {
      const Mat3 rotated = predict(transformed(mol, rot));
      sum_equiv += frob_norm(rotated - conjugate(rot, base));
      if (mol.target_alpha) sum_target += frob_norm(rotated - conjugate(rot, *mol.target_alpha));
    }
    if (mol.target_alpha) ++r.n_with_target;
  }
  r.eps_equiv = sum_equiv / double(mols.size() * n_rotations);
  r.eps_target = r.n_with_target ? sum_target / double(r.n_with_target * n_rotations)
                                 : std::numeric_limits<double>::quiet_NaN();
  return r;
}

double relative_deviatoric_error(const Mat3& pred, const Mat3& target, double eps) {
  return frob_norm(deviatoric(pred) - deviatoric(target)) / (frob_norm(deviatoric(target)) + eps);
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

SizeBinnedReport relative_deviatoric_report(const std::vector<Mat3>& preds, const std::vector<Mat3>& targets,
                                            const std::vector<int>& heavy, double eps) {
  if (preds.size() != targets.size() || preds.size() != heavy.size())
    throw LengthMismatch("relative_deviatoric_report: inputs differ in length");
  if (!(eps > 0.0)) throw OutOfRange("relative_deviatoric_report: eps must be positive");
  std::map<int, std::vector<double>> groups;
  for (int h = 3; h <= 7; ++h) groups[h];
  for (std::size_t i = 0; i < preds.size(); ++i)
    groups[heavy[i]].push_back(relative_deviatoric_error(preds[i], targets[i], eps));
  SizeBinnedReport r;
  r.eps = eps;
  r.n_samples = preds.size();
  for (auto& [h, vals] : groups) r.bins.push_back({h, vals.size(), median(vals)});
  return r;
}

namespace {

json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }
double num_from(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

template <class Fn>
auto parse_report(const std::string& text, const char* kind, Fn&& fn) {
  try {
    const json j = json::parse(text);
    if (j.value("report", "") != kind) throw ConfigError(std::string("not a ") + kind + " report");
    return fn(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed ") + kind + " report: " + e.what());
  }
}

}  // namespace

std::string to_json(const MetricReport& r) {
  json j;
  j["report"] = "metrics";
  j["units"] = "bohr^3";
  j["n_samples"] = r.n_samples;
  j["frob_mae"] = num(r.frob_mae);
  j["iso_mae"] = num(r.iso_mae);
  j["aniso_frob_mae"] = num(r.aniso_frob_mae);
  if (!r.per_sample.empty()) {
    json a = json::array();
    for (const Residual& e : r.per_sample) a.push_back({{"frob", num(e.frob)}, {"iso", num(e.iso)}, {"aniso", num(e.aniso)}});
    j["per_sample"] = a;
  }
  return j.dump(2) + "\n";
}

std::string to_json(const EquivReport& r) {
  json j;
  j["report"] = "equivariance";
  j["units"] = "bohr^3";
  j["n_rotations"] = r.n_rotations;
  j["n_samples"] = r.n_samples;
  j["n_with_target"] = r.n_with_target;
  j["eps_equiv"] = num(r.eps_equiv);
  j["eps_target"] = num(r.eps_target);
  return j.dump(2) + "\n";
}

std::string to_json(const SizeBinnedReport& r) {
  json j;
  j["report"] = "relative_deviatoric";
  j["eps"] = r.eps;
  j["n_samples"] = r.n_samples;
  json bins = json::array();
  for (const SizeBin& b : r.bins) bins.push_back({{"heavy_atoms", b.heavy_atoms}, {"median", num(b.median)}, {"count", b.count}});
  j["bins"] = bins;
  return j.dump(2) + "\n";
}

std::string to_tsv(const SizeBinnedReport& r) {
  std::string out = "heavy_atoms\tmedian_rel_dev_error\tcount\n";
  char buf[96];
  for (const SizeBin& b : r.bins) {
    std::snprintf(buf, sizeof buf, "%d\t%.10g\t%zu\n", b.heavy_atoms, b.median, b.count);
    out += buf;
  }
  return out;
}

MetricReport metric_report_from_json(const std::string& text) {
  return parse_report(text, "metrics", [](const json& j) {
    MetricReport r;
    r.n_samples = j.at("n_samples").get<std::size_t>();
    r.frob_mae = num_from(j.at("frob_mae"));
    r.iso_mae = num_from(j.at("iso_mae"));
    r.aniso_frob_mae = num_from(j.at("aniso_frob_mae"));
    if (j.contains("per_sample"))
      for (const json& e : j.at("per_sample"))
        r.per_sample.push_back({num_from(e.at("frob")), num_from(e.at("iso")), num_from(e.at("aniso"))});
    return r;
  });
}

EquivReport equiv_report_from_json(const std::string& text) {
  return parse_report(text, "equivariance", [](const json& j) {
    EquivReport r;
    r.n_rotations = j.at("n_rotations").get<std::size_t>();
    r.n_samples = j.at("n_samples").get<std::size_t>();
    r.n_with_target = j.at("n_with_target").get<std::size_t>();
    r.eps_equiv = num_from(j.at("eps_equiv"));
    r.eps_target = num_from(j.at("eps_target"));
    return r;
  });
}

SizeBinnedReport binned_report_from_json(const std::string& text) {
  return parse_report(text, "relative_deviatoric", [](const json& j) {
    SizeBinnedReport r;
    r.eps = j.at("eps").get<double>();
    r.n_samples = j.at("n_samples").get<std::size_t>();
    for (const json& b : j.at("bins"))
      r.bins.push_back({b.at("heavy_atoms").get<int>(), b.at("count").get<std::size_t>(), num_from(b.at("median"))});
    return r;
  });
}

}  // namespace tcnet
