#include "tcnet/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "tcnet/errors.hpp"
#include "tcnet/graph.hpp"
#include "tcnet/rng.hpp"

namespace tcnet {

using json = nlohmann::ordered_json;

Sym6 to_sym6(const Mat3& a) { return {a(0, 0), a(1, 1), a(2, 2), a(0, 1), a(0, 2), a(1, 2)}; }

Mat3 from_sym6(const Sym6& c) {
  return Mat3::rows({c[0], c[3], c[4]}, {c[3], c[1], c[5]}, {c[4], c[5], c[2]});
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  for (std::string tok; is >> tok;) out.push_back(tok);
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

bool parse_int(const std::string& s, long& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtol(s.c_str(), &end, 10);
  return end == s.c_str() + s.size();
}

// key=value pairs; values may be double-quoted.
std::map<std::string, std::string> parse_comment(const std::string& line, std::size_t lineno) {
  std::map<std::string, std::string> kv;
  std::size_t i = 0;
  const std::size_t n = line.size();
  while (i < n) {
    while (i < n && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= n) break;
    const std::size_t k0 = i;
    while (i < n && line[i] != '=' && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::string key = line.substr(k0, i - k0);
    if (i >= n || line[i] != '=') throw ParseError("expected key=value in comment line, got '" + key + "'", lineno);
    ++i;
    std::string value;
    if (i < n && line[i] == '"') {
      const std::size_t close = line.find('"', i + 1);
      if (close == std::string::npos) throw ParseError("unterminated quote for key '" + key + "'", lineno);
      value = line.substr(i + 1, close - i - 1);
      i = close + 1;
    } else {
      const std::size_t v0 = i;
      while (i < n && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      value = line.substr(v0, i - v0);
    }
    if (key.empty()) throw ParseError("empty key in comment line", lineno);
    kv[key] = value;
  }
  return kv;
}

Mat3 tensor_from_values(const std::vector<double>& v, const std::string& where) {
  for (double x : v)
    if (!std::isfinite(x)) throw InvalidTensor(where + ": non-finite alpha component");
  if (v.size() == 6) return from_sym6({v[0], v[1], v[2], v[3], v[4], v[5]});
  if (v.size() == 9) {
    Mat3 m;
    std::copy(v.begin(), v.end(), m.m.begin());
    if (asymmetry(m) > kSymmetryTolerance) throw InvalidTensor(where + ": alpha is not symmetric");
    return sym(m);
  }
  throw InvalidTensor(where + ": alpha needs 6 or 9 components, got " + std::to_string(v.size()));
}

Mat3 parse_alpha_text(const std::string& text, std::size_t lineno) {
  std::vector<double> vals;
  for (const std::string& tok : split_ws(text)) {
    double x = 0;
    if (!parse_double(tok, x)) throw InvalidTensor("line " + std::to_string(lineno) + ": bad alpha component '" + tok + "'");
    vals.push_back(x);
  }
  return tensor_from_values(vals, "line " + std::to_string(lineno));
}

int parse_element(const std::string& tok, std::size_t lineno) {
  long z = 0;
  try {
    if (parse_int(tok, z)) {
      element_index(static_cast<int>(z));
      return static_cast<int>(z);
    }
    return atomic_number_from_symbol(tok);
  } catch (const UnknownElement& e) {
    throw ParseError(e.what(), lineno);
  }
}

void validate_record(const Molecule& mol, std::size_t lineno) {
  try {
    validate(mol);
  } catch (const NonSymmetricInput& e) {
    throw InvalidTensor(e.what());
  } catch (const Error& e) {
    throw ParseError(e.what(), lineno);
  }
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t k = 0; k < n; ++k) {
    h ^= p[k];
    h *= 0x100000001B3ull;
  }
  return h;
}

std::uint64_t geometry_hash(const Molecule& m) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const std::int32_t z = m.atomic_numbers[i];
    h = fnv1a(h, &z, sizeof z);
    for (double x : m.positions[i]) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, &x, sizeof bits);
      h = fnv1a(h, &bits, sizeof bits);
    }
  }
  return h;
}

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

ParseOutput deduplicate(std::vector<DatasetRecord> records) {
  ParseOutput out;
  std::map<std::pair<std::string, std::uint64_t>, std::vector<std::size_t>> seen;
  for (DatasetRecord& r : records) {
    auto& bucket = seen[{r.mol_id(), geometry_hash(r.molecule)}];
    bool dup = false;
    for (std::size_t k : bucket) {
      const Molecule& o = out.records[k].molecule;
      if (o.atomic_numbers == r.molecule.atomic_numbers && o.positions == r.molecule.positions) {
        out.warnings.push_back("dropped duplicate geometry of mol_id '" + r.mol_id() + "' (conformer '" +
                               r.conformer_id + "')");
        dup = true;
        break;
      }
    }
    if (dup) continue;
    bucket.push_back(out.records.size());
    out.records.push_back(std::move(r));
  }
  return out;
}

ParseOutput parse_xyz(std::istream& in) {
  std::vector<DatasetRecord> records;
  std::string line;
  std::size_t lineno = 0;
  auto next = [&](std::string& l) {
    if (!std::getline(in, l)) return false;
    ++lineno;
    return true;
  };
  while (next(line)) {
    if (trim(line).empty()) continue;
    const std::size_t header = lineno;
    long count = 0;
    if (!parse_int(trim(line), count) || count < 1)
      throw ParseError("expected a positive atom count, got '" + trim(line) + "'", lineno);
    if (!next(line)) throw ParseError("missing comment line", lineno + 1);
    const auto kv = parse_comment(line, lineno);
    DatasetRecord rec;
    auto it = kv.find("mol_id");
    if (it == kv.end() || it->second.empty()) throw ParseError("comment line lacks mol_id", lineno);
    rec.molecule.mol_id = it->second;
    if ((it = kv.find("conformer_id")) != kv.end()) rec.conformer_id = it->second;
    if ((it = kv.find("alpha")) != kv.end()) rec.molecule.target_alpha = parse_alpha_text(it->second, lineno);
    for (long a = 0; a < count; ++a) {
      if (!next(line)) throw ParseError("file ends inside a frame", lineno + 1);
      const auto tok = split_ws(line);
      if (tok.size() < 4) throw ParseError("atom line needs an element and three coordinates", lineno);
      rec.molecule.atomic_numbers.push_back(parse_element(tok[0], lineno));
      Vec3 p{};
      for (int c = 0; c < 3; ++c)
        if (!parse_double(tok[1 + c], p[c]) || !std::isfinite(p[c]))
          throw ParseError("bad coordinate '" + tok[1 + c] + "'", lineno);
      rec.molecule.positions.push_back(p);
    }
    validate_record(rec.molecule, header);
    records.push_back(std::move(rec));
  }
  return deduplicate(std::move(records));
}

Molecule read_xyz_molecule(std::istream& in, const std::string& fallback_id) {
  std::string line;
  std::size_t lineno = 0;
  do {
    if (!std::getline(in, line)) throw ParseError("no XYZ frame found", lineno + 1);
    ++lineno;
  } while (trim(line).empty());
  long count = 0;
  if (!parse_int(trim(line), count) || count < 1)
    throw ParseError("expected a positive atom count, got '" + trim(line) + "'", lineno);
  if (!std::getline(in, line)) throw ParseError("missing comment line", lineno + 1);
  ++lineno;
  Molecule mol;
  mol.mol_id = fallback_id;
  try {
    const auto kv = parse_comment(line, lineno);
    if (auto it = kv.find("mol_id"); it != kv.end() && !it->second.empty()) mol.mol_id = it->second;
  } catch (const ParseError&) {
    // free-form comment
  }
  for (long a = 0; a < count; ++a) {
    if (!std::getline(in, line)) throw ParseError("file ends inside the frame", lineno + 1);
    ++lineno;
    const auto tok = split_ws(line);
    if (tok.size() < 4) throw ParseError("atom line needs an element and three coordinates", lineno);
    mol.atomic_numbers.push_back(parse_element(tok[0], lineno));
    Vec3 p{};
    for (int c = 0; c < 3; ++c)
      if (!parse_double(tok[1 + c], p[c]) || !std::isfinite(p[c]))
        throw ParseError("bad coordinate '" + tok[1 + c] + "'", lineno);
    mol.positions.push_back(p);
  }
  validate_record(mol, 1);
  return mol;
}

ParseOutput parse_jsonl(std::istream& in) {
  std::vector<DatasetRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    DatasetRecord rec;
    try {
      const json j = json::parse(line);
      rec.molecule.mol_id = j.at("mol_id").get<std::string>();
      if (rec.molecule.mol_id.empty()) throw ParseError("empty mol_id", lineno);
      if (j.contains("conformer_id")) {
        const json& c = j.at("conformer_id");
        rec.conformer_id = c.is_string() ? c.get<std::string>() : c.dump();
      }
      for (const json& z : j.at("Z")) {
        const int zi = z.get<int>();
        if (!is_supported_element(zi)) throw ParseError("unsupported atomic number " + std::to_string(zi), lineno);
        rec.molecule.atomic_numbers.push_back(zi);
      }
      for (const json& p : j.at("pos")) {
        if (!p.is_array() || p.size() != 3) throw ParseError("each position needs three coordinates", lineno);
        rec.molecule.positions.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
      }
      if (j.contains("alpha")) {
        const json& a = j.at("alpha");
        if (!a.is_array()) throw InvalidTensor("line " + std::to_string(lineno) + ": alpha must be an array");
        std::vector<double> vals;
        for (const json& x : a) {
          if (!x.is_number()) throw InvalidTensor("line " + std::to_string(lineno) + ": non-numeric alpha component");
          vals.push_back(x.get<double>());
        }
        rec.molecule.target_alpha = tensor_from_values(vals, "line " + std::to_string(lineno));
      }
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed record: ") + e.what(), lineno);
    }
    validate_record(rec.molecule, lineno);
    records.push_back(std::move(rec));
  }
  return deduplicate(std::move(records));
}

ParseOutput parse_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset '" + path + "'", 0);
  const auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  if (ext == ".jsonl" || ext == ".ndjson") return parse_jsonl(in);
  return parse_xyz(in);
}

void write_xyz(std::ostream& out, const std::vector<DatasetRecord>& records) {
  for (const DatasetRecord& r : records) {
    const Molecule& m = r.molecule;
    out << m.size() << "\nmol_id=" << m.mol_id;
    if (!r.conformer_id.empty()) out << " conformer_id=" << r.conformer_id;
    if (m.target_alpha) {
      const Sym6 a = to_sym6(*m.target_alpha);
      out << " alpha=\"";
      for (int k = 0; k < 6; ++k) out << (k ? " " : "") << fmt(a[k]);
      out << '"';
    }
    out << '\n';
    for (std::size_t i = 0; i < m.size(); ++i)
      out << element_symbol(m.atomic_numbers[i]) << ' ' << fmt(m.positions[i][0]) << ' ' << fmt(m.positions[i][1])
          << ' ' << fmt(m.positions[i][2]) << '\n';
  }
}

void write_xyz(const std::string& path, const std::vector<DatasetRecord>& records) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  write_xyz(out, records);
}

SplitManifest make_splits(const std::vector<DatasetRecord>& records, std::uint64_t seed,
                          std::array<double, 3> fractions) {
  if (records.empty()) throw EmptyDataset("make_splits: no records");
  for (double f : fractions)
    if (!(f >= 0.0) || f > 1.0) throw ConfigError("split fractions must lie in [0, 1]");
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1");

  std::vector<std::string> ids;
  for (const DatasetRecord& r : records) ids.push_back(r.mol_id());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  Rng rng = make_stream(seed, Stream::kSplit);
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);

  const double n = static_cast<double>(ids.size());
  const auto n_val = static_cast<std::size_t>(std::floor(fractions[1] * n + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(fractions[2] * n + 1e-9));
  const std::size_t n_train = ids.size() - n_val - n_test;

  SplitManifest m;
  m.seed = seed;
  m.fractions = fractions;
  m.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  m.val.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train),
               ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  m.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
  for (auto* part : {&m.train, &m.val, &m.test}) std::sort(part->begin(), part->end());
  check_disjoint(m);
  return m;
}

void check_disjoint(const SplitManifest& m) {
  std::set<std::string> seen;
  for (const auto* part : {&m.train, &m.val, &m.test})
    for (const std::string& id : *part)
      if (!seen.insert(id).second) throw Error("mol_id '" + id + "' appears in more than one partition");
}

std::string manifest_to_json(const SplitManifest& m) {
  json j;
  j["format"] = "tcnet-split-manifest";
  j["version"] = 1;
  j["seed"] = m.seed;
  j["fractions"] = m.fractions;
  j["train"] = m.train;
  j["val"] = m.val;
  j["test"] = m.test;
  return j.dump(2) + "\n";
}

SplitManifest manifest_from_json(const std::string& text) {
  SplitManifest m;
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != "tcnet-split-manifest") throw ConfigError("not a split manifest");
    m.seed = j.at("seed").get<std::uint64_t>();
    m.fractions = j.at("fractions").get<std::array<double, 3>>();
    m.train = j.at("train").get<std::vector<std::string>>();
    m.val = j.at("val").get<std::vector<std::string>>();
    m.test = j.at("test").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed split manifest: ") + e.what());
  }
  check_disjoint(m);
  return m;
}

void save_manifest(const std::string& path, const SplitManifest& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << manifest_to_json(m);
}

SplitManifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open manifest '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return manifest_from_json(ss.str());
}

Partition partition_from_string(const std::string& s) {
  if (s == "train") return Partition::kTrain;
  if (s == "val") return Partition::kVal;
  if (s == "test") return Partition::kTest;
  throw ConfigError("unknown split '" + s + "' (expected train, val or test)");
}

const std::vector<std::string>& partition_ids(const SplitManifest& m, Partition p) {
  switch (p) {
    case Partition::kTrain: return m.train;
    case Partition::kVal: return m.val;
    case Partition::kTest: break;
  }
  return m.test;
}

std::vector<DatasetRecord> select(const std::vector<DatasetRecord>& records, const std::vector<std::string>& ids) {
  const std::set<std::string> keep(ids.begin(), ids.end());
  std::vector<DatasetRecord> out;
  for (const DatasetRecord& r : records)
    if (keep.count(r.mol_id())) out.push_back(r);
  return out;
}

Mat3 Teacher::operator()(const Molecule& mol) const {
  const std::size_t n = mol.size();
  Mat3 alpha;
  std::vector<int> e(n);
  for (std::size_t i = 0; i < n; ++i) {
    e[i] = element_index(mol.atomic_numbers[i]);
    alpha = alpha + kIso[e[i]] * Mat3::identity();
  }
  std::vector<Vec3> p(n, Vec3{0, 0, 0});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const Vec3 r{mol.positions[j][0] - mol.positions[i][0], mol.positions[j][1] - mol.positions[i][1],
                   mol.positions[j][2] - mol.positions[i][2]};
      const double d = norm(r);
      if (d >= cutoff) continue;
      const Vec3 rhat{r[0] / d, r[1] / d, r[2] / d};
      const double f = cosine_envelope(d, cutoff);
      if (i < j) alpha = alpha + (pair_scale * kBond[e[i]] * kBond[e[j]] * f) * traceless(dyadic(rhat, rhat));
      for (int a = 0; a < 3; ++a) p[i][a] += kBond[e[j]] * f * rhat[a];
    }
  for (std::size_t i = 0; i < n; ++i) alpha = alpha + (triplet_scale * kTriplet[e[i]]) * traceless(dyadic(p[i], p[i]));
  return alpha;
}

std::vector<DatasetRecord> synthetic_dataset(int n, std::uint64_t seed, const SynthOptions& opt) {
  if (n < 1) throw ConfigError("synthetic_dataset: n must be >= 1");
  if (opt.min_atoms < 1 || opt.max_atoms < opt.min_atoms) throw ConfigError("synthetic_dataset: bad atom range");
  // H, C, N, O, S, Cl
  static constexpr std::array<double, 6> kWeights{0.45, 0.30, 0.08, 0.10, 0.035, 0.035};
  Rng rng = make_stream(seed, Stream::kData);
  auto draw_element = [&] {
    double u = rng.uniform();
    for (std::size_t k = 0; k < kWeights.size(); ++k) {
      if (u < kWeights[k]) return kSupportedElements[k];
      u -= kWeights[k];
    }
    return kSupportedElements.back();
  };

  std::vector<DatasetRecord> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int m = 0; m < n; ++m) {
    char id[32];
    std::snprintf(id, sizeof id, "syn-%06d", m);
    DatasetRecord rec;
    rec.conformer_id = "0";
    Molecule& mol = rec.molecule;
    mol.mol_id = id;
    const int atoms = opt.min_atoms + static_cast<int>(rng.below(static_cast<std::uint64_t>(opt.max_atoms - opt.min_atoms + 1)));
    mol.atomic_numbers.push_back(draw_element());
    mol.positions.push_back({0, 0, 0});
    while (static_cast<int>(mol.size()) < atoms) {
      const Vec3& anchor = mol.positions[rng.below(mol.size())];
      const double cz = rng.uniform(-1.0, 1.0);
      const double phi = rng.uniform(0.0, 2.0 * M_PI);
      const double sz = std::sqrt(1.0 - cz * cz);
      const double len = rng.uniform(opt.min_bond, opt.max_bond);
      const Vec3 x{anchor[0] + len * sz * std::cos(phi), anchor[1] + len * sz * std::sin(phi), anchor[2] + len * cz};
      bool clash = false;
      for (const Vec3& q : mol.positions)
        if (norm(Vec3{x[0] - q[0], x[1] - q[1], x[2] - q[2]}) < opt.min_distance) clash = true;
      if (clash) continue;
      mol.atomic_numbers.push_back(draw_element());
      mol.positions.push_back(x);
    }
    mol.target_alpha = opt.teacher(mol);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace tcnet
