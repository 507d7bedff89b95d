// tcnet command-line interface.
//
// Exit codes: 0 success, 2 input or configuration error, 3 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tcnet/config.hpp"
#include "tcnet/data_io.hpp"
#include "tcnet/errors.hpp"
#include "tcnet/evaluation.hpp"
#include "tcnet/model.hpp"
#include "tcnet/training.hpp"

namespace fs = std::filesystem;
using namespace tcnet;

namespace {

constexpr int kInputError = 2;
constexpr int kNumericalError = 3;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

std::vector<DatasetRecord> load_records(const std::string& path) {
  ParseOutput p = parse_dataset(path);
  for (const std::string& w : p.warnings) std::cerr << "warning: " << w << '\n';
  return std::move(p.records);
}

std::vector<Molecule> molecules_of(const std::vector<DatasetRecord>& records) {
  std::vector<Molecule> out;
  out.reserve(records.size());
  for (const DatasetRecord& r : records) out.push_back(r.molecule);
  return out;
}

std::vector<Molecule> partition(const std::vector<DatasetRecord>& records, const SplitManifest& m, Partition p,
                                const std::string& name) {
  std::vector<Molecule> out = molecules_of(select(records, partition_ids(m, p)));
  if (out.empty()) throw EmptyDataset("split '" + name + "' has no records in this dataset");
  return out;
}

std::vector<Mat3> targets_of(const std::vector<Molecule>& mols) {
  std::vector<Mat3> out;
  for (const Molecule& m : mols) {
    if (!m.target_alpha) throw Error("molecule '" + m.mol_id + "' has no target");
    out.push_back(*m.target_alpha);
  }
  return out;
}

void print_mat3(const Mat3& a) {
  for (int r = 0; r < 3; ++r) std::printf("  % .6f  % .6f  % .6f\n", a(r, 0), a(r, 1), a(r, 2));
}

std::array<double, 3> parse_fractions(const std::string& s) {
  std::array<double, 3> f{};
  std::stringstream ss(s);
  std::string tok;
  int k = 0;
  while (std::getline(ss, tok, ',')) {
    if (k >= 3) throw ConfigError("--fractions needs exactly three values");
    try {
      std::size_t used = 0;
      f[k] = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("bad fraction '" + tok + "'");
    }
    ++k;
  }
  if (k != 3) throw ConfigError("--fractions needs exactly three values");
  return f;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensor-channel equivariant network for molecular polarizability tensors"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string output_dir = ".";
  int workers = 1;
  app.add_option("--output-dir", output_dir, "Directory for written files")->envname("TCNET_OUTPUT_DIR");
  app.add_option("--workers", workers, "Worker threads inside a batch")->envname("TCNET_WORKERS")->check(CLI::PositiveNumber);

  // split
  std::string dataset, manifest_path, fractions = "0.8,0.1,0.1", manifest_out = "manifest.json";
  std::uint64_t split_seed = 42;
  auto* split = app.add_subcommand("split", "Molecule-level train/val/test split");
  split->add_option("dataset", dataset, "Extended XYZ or JSONL dataset")->required();
  split->add_option("--seed", split_seed, "Shuffle seed");
  split->add_option("--fractions", fractions, "train,val,test fractions");
  split->add_option("-o,--out", manifest_out, "Manifest file name (inside the output directory)");

  // train
  std::string config_path, resume_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> train_seed;
  auto* trn = app.add_subcommand("train", "Train a model");
  trn->add_option("--config", config_path, "Config file")->required();
  trn->add_option("--dataset", dataset, "Dataset file")->required();
  trn->add_option("--manifest", manifest_path, "Split manifest")->required();
  trn->add_option("--set", overrides, "Override section.key=value (repeatable)");
  trn->add_option("--seed", train_seed, "Training seed (overrides train.seed)");
  trn->add_option("--resume", resume_path, "Continue from a checkpoint");

  // eval
  std::string checkpoint, split_name = "test";
  auto* evl = app.add_subcommand("eval", "Metrics and size-binned deviatoric error on a split");
  evl->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  evl->add_option("--dataset", dataset, "Dataset file")->required();
  evl->add_option("--manifest", manifest_path, "Split manifest")->required();
  evl->add_option("--split", split_name, "train, val or test");
  double rel_eps = 1e-8;
  evl->add_option("--eps", rel_eps, "Stabilizer of the relative deviatoric error");

  // equivcheck
  std::size_t rotations = 64;
  std::uint64_t rot_seed = 42;
  bool identity_only = false;
  std::string precision = "float32";
  auto* eqv = app.add_subcommand("equivcheck", "Rotational equivariance test");
  eqv->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eqv->add_option("--dataset", dataset, "Dataset file")->required();
  eqv->add_option("--manifest", manifest_path, "Split manifest")->required();
  eqv->add_option("--split", split_name, "train, val or test");
  eqv->add_option("--rotations", rotations, "Number of sampled rotations")->check(CLI::PositiveNumber);
  eqv->add_option("--seed", rot_seed, "Rotation sampling seed");
  eqv->add_option("--precision", precision, "float32 or float64")->check(CLI::IsMember({"float32", "float64"}));
  eqv->add_flag("--identity-rotations", identity_only, "Debug: use identity rotations only");

  // predict
  std::string xyz_path;
  auto* prd = app.add_subcommand("predict", "Predict the tensor of one molecule");
  prd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  prd->add_option("xyz", xyz_path, "XYZ file (first frame is used)")->required();

  // synth
  int synth_n = 2000;
  std::uint64_t synth_seed = 42;
  std::string synth_out = "synthetic.xyz";
  SynthOptions synth_opt;
  auto* syn = app.add_subcommand("synth", "Write a synthetic teacher dataset");
  syn->add_option("-n,--count", synth_n, "Number of molecules")->check(CLI::PositiveNumber);
  syn->add_option("--seed", synth_seed, "Generator seed");
  syn->add_option("--triplet-scale", synth_opt.teacher.triplet_scale, "Weight of the teacher's three-body term");
  syn->add_option("--pair-scale", synth_opt.teacher.pair_scale, "Weight of the teacher's bond term");
  syn->add_option("-o,--out", synth_out, "Output file name (inside the output directory)");

  // params
  auto* par = app.add_subcommand("params", "Trainable parameter count of a config");
  par->add_option("--config", config_path, "Config file")->required();
  par->add_option("--set", overrides, "Override section.key=value (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kInputError;
  }

  try {
    const fs::path out_dir(output_dir);

    if (*split) {
      const auto records = load_records(dataset);
      const SplitManifest m = make_splits(records, split_seed, parse_fractions(fractions));
      write_text(out_dir / manifest_out, manifest_to_json(m));
      std::printf("%zu records, %zu mol_ids -> train %zu, val %zu, test %zu (seed %llu) -> %s\n", records.size(),
                  m.train.size() + m.val.size() + m.test.size(), m.train.size(), m.val.size(), m.test.size(),
                  static_cast<unsigned long long>(m.seed), (out_dir / manifest_out).string().c_str());
    } else if (*trn) {
      ConfigFile cfg = load_config(config_path, overrides);
      if (train_seed) cfg.train.seed = *train_seed;
      if (app.get_option("--workers")->count() > 0) cfg.train.workers = workers;
      cfg.model.validate();
      cfg.train.validate();
      const auto records = load_records(dataset);
      const SplitManifest m = load_manifest(manifest_path);
      const auto train_set = partition(records, m, Partition::kTrain, "train");
      const auto val_set = partition(records, m, Partition::kVal, "val");

      TrainState resume;
      TrainOptions opt;
      opt.output_dir = output_dir;
      opt.log = &std::cout;
      if (!resume_path.empty()) {
        resume = load_checkpoint(resume_path);
        opt.resume = &resume;
      }
      std::printf("model parameters: %lld\n", static_cast<long long>(param_count(cfg.model)));
      write_text(out_dir / "config.cfg", format_config(cfg));
      const TrainResult res = train(train_set, val_set, cfg.model, cfg.train, opt);

      const Model<float> model(cfg.model);
      const auto pred = predict_all(model, res.best.ema, val_set, cfg.train.workers);
      const MetricReport rep = metrics(pred, targets_of(val_set));
      std::printf("best epoch %d: val frob_mae %.6f iso_mae %.6f aniso_frob_mae %.6f (bohr^3)\n", res.best.epoch,
                  rep.frob_mae, rep.iso_mae, rep.aniso_frob_mae);
    } else if (*evl) {
      const TrainState st = load_checkpoint(checkpoint);
      const auto records = load_records(dataset);
      const SplitManifest m = load_manifest(manifest_path);
      const auto mols = partition(records, m, partition_from_string(split_name), split_name);
      const Model<float> model(st.model);
      const auto pred = predict_all(model, st.ema, mols, workers);
      const auto targets = targets_of(mols);
      const MetricReport rep = metrics(pred, targets, true);
      std::vector<int> heavy;
      for (const Molecule& mol : mols) heavy.push_back(mol.heavy_atom_count());
      const SizeBinnedReport bins = relative_deviatoric_report(pred, targets, heavy, rel_eps);
      write_text(out_dir / ("metrics_" + split_name + ".json"), to_json(rep));
      write_text(out_dir / ("rel_dev_" + split_name + ".json"), to_json(bins));
      write_text(out_dir / ("rel_dev_" + split_name + ".tsv"), to_tsv(bins));
      std::printf("%s: n %zu frob_mae %.6f iso_mae %.6f aniso_frob_mae %.6f (bohr^3)\n", split_name.c_str(),
                  rep.n_samples, rep.frob_mae, rep.iso_mae, rep.aniso_frob_mae);
    } else if (*eqv) {
      const TrainState st = load_checkpoint(checkpoint);
      const auto records = load_records(dataset);
      const SplitManifest m = load_manifest(manifest_path);
      const auto mols = partition(records, m, partition_from_string(split_name), split_name);
      EquivReport rep;
      if (precision == "float64") {
        const Model<double> model(st.model);
        const Parameters<double> p = cast_parameters<double>(st.ema);
        rep = equiv_test([&](const Molecule& mol) { return model.predict(p, mol); }, mols, rotations, rot_seed,
                         identity_only);
      } else {
        const Model<float> model(st.model);
        rep = equiv_test([&](const Molecule& mol) { return model.predict(st.ema, mol); }, mols, rotations, rot_seed,
                         identity_only);
      }
      write_text(out_dir / ("equiv_" + split_name + ".json"), to_json(rep));
      std::printf("%s (%s): %zu molecules x %zu rotations, eps_equiv %.3e, eps_target %.6f (bohr^3)\n",
                  split_name.c_str(), precision.c_str(), rep.n_samples, rep.n_rotations, rep.eps_equiv,
                  rep.eps_target);
    } else if (*prd) {
      const TrainState st = load_checkpoint(checkpoint);
      std::ifstream in(xyz_path);
      if (!in) throw ParseError("cannot open '" + xyz_path + "'", 0);
      const Molecule mol = read_xyz_molecule(in, fs::path(xyz_path).stem().string());
      const Model<float> model(st.model);
      const Mat3 alpha = model.predict(st.ema, mol);
      const SphericalDecomp d = decompose(sym(alpha));
      std::printf("%s: %zu atoms\nalpha (bohr^3):\n", mol.mol_id.c_str(), mol.size());
      print_mat3(alpha);
      std::printf("alpha_iso: %.6f\nalpha_aniso:\n", d.iso);
      print_mat3(d.aniso);
    } else if (*syn) {
      const auto records = synthetic_dataset(synth_n, synth_seed, synth_opt);
      const fs::path path = out_dir / synth_out;
      if (path.has_parent_path()) fs::create_directories(path.parent_path());
      write_xyz(path.string(), records);
      std::printf("%d molecules -> %s\n", synth_n, path.string().c_str());
    } else if (*par) {
      const ConfigFile cfg = load_config(config_path, overrides);
      std::printf("%lld\n", static_cast<long long>(param_count(cfg.model)));
    }
  } catch (const DivergenceDetected& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  }
  return 0;
}
