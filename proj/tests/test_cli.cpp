#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tcnet/data_io.hpp"
#include "tcnet/evaluation.hpp"
#include "tcnet/training.hpp"

using namespace tcnet;
namespace fs = std::filesystem;

namespace {

struct Cli {
  fs::path dir;

  explicit Cli(const std::string& name) : dir(fs::temp_directory_path() / ("tcnet_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }

  // Runs the binary with `args` inside `dir`; stdout and stderr go to `out.txt`.
  int run(const std::string& args) const {
    const std::string cmd = "cd '" + dir.string() + "' && '" + TCNET_CLI_PATH + "' " + args + " > out.txt 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string read(const std::string& name) const {
    std::ifstream in(dir / name, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  std::string output() const { return read("out.txt"); }
};

const std::string kToy = std::string(TCNET_CONFIG_DIR) + "/toy.cfg";
const std::string kSmall =
    "--set model.scalar_channels=8 --set model.vector_channels=2 --set model.tensor_channels=2 "
    "--set model.hidden=8 --set model.layers=1 --set model.rbf_count=4 --set model.lora_rank=1 "
    "--set train.batch_size=8 --set train.warmup_steps=2";

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("split") {
  const Cli cli("split");
  REQUIRE(cli.run("synth -n 40 --seed 3 -o data.xyz") == 0);
  REQUIRE(cli.run("split data.xyz --seed 42 -o m1.json") == 0);
  CHECK(cli.output().find("train 32, val 4, test 4") != std::string::npos);
  REQUIRE(cli.run("split data.xyz --seed 42 -o m2.json") == 0);
  CHECK(cli.read("m1.json") == cli.read("m2.json"));
  const SplitManifest m = load_manifest((cli.dir / "m1.json").string());
  CHECK_NOTHROW(check_disjoint(m));

  CHECK(cli.run("split missing.xyz") == 2);
  CHECK(cli.output().find("missing.xyz") != std::string::npos);
  CHECK(cli.run("split data.xyz --fractions 0.5,0.5") == 2);
  CHECK(cli.run("frobnicate") == 2);
}

TEST_CASE("params") {
  const Cli cli("params");
  REQUIRE(cli.run("params --config '" + kToy + "'") == 0);
  ModelConfig toy;
  toy = load_config(kToy).model;
  CHECK(std::stoll(cli.output()) == param_count(toy));
}

TEST_CASE("train, eval, equivcheck and predict") {
  const Cli cli("pipeline");
  REQUIRE(cli.run("synth -n 24 --seed 5 -o data.xyz") == 0);
  REQUIRE(cli.run("split data.xyz -o manifest.json --fractions 0.5,0.25,0.25") == 0);

  const std::string base = "--config '" + kToy + "' --dataset data.xyz --manifest manifest.json " + kSmall;
  REQUIRE(cli.run("--output-dir run train " + base + " --set train.epochs=2") == 0);
  CHECK(cli.output().find("best epoch") != std::string::npos);
  CHECK(fs::exists(cli.dir / "run/checkpoint_best.tcn"));
  CHECK(fs::exists(cli.dir / "run/checkpoint_last.tcn"));
  CHECK(fs::exists(cli.dir / "run/train_log.jsonl"));
  CHECK(fs::exists(cli.dir / "run/config.cfg"));

  // Resume to epoch 3 from the saved state.
  REQUIRE(cli.run("--output-dir run train " + base + " --set train.epochs=3 --resume run/checkpoint_last.tcn") == 0);
  const TrainState st = load_checkpoint((cli.dir / "run/checkpoint_last.tcn").string());
  CHECK(st.epoch == 3);
  CHECK(st.history.size() == 3);

  CHECK(cli.run("train " + base + " --set model.tensor_channels=0") == 2);
  CHECK(cli.run("train " + base + " --set model.no_such_key=1") == 2);
  CHECK(cli.run("train " + base + " --set train.learning_rate=1e12 --set train.epochs=30 --output-dir boom") == 3);

  const std::string ck = "--checkpoint run/checkpoint_best.tcn --dataset data.xyz --manifest manifest.json";
  REQUIRE(cli.run("--output-dir reports eval " + ck) == 0);
  const MetricReport m = metric_report_from_json(cli.read("reports/metrics_test.json"));
  CHECK(m.n_samples == 6);
  const SizeBinnedReport b = binned_report_from_json(cli.read("reports/rel_dev_test.json"));
  std::size_t total = 0;
  for (const SizeBin& bin : b.bins) total += bin.count;
  CHECK(total == 6);
  CHECK(cli.read("reports/rel_dev_test.tsv").rfind("heavy_atoms", 0) == 0);

  REQUIRE(cli.run("--output-dir reports equivcheck " + ck + " --rotations 8 --seed 1") == 0);
  const std::string first = cli.read("reports/equiv_test.json");
  const EquivReport e = equiv_report_from_json(first);
  CHECK(e.eps_equiv < 1e-4);
  CHECK(e.n_rotations == 8);
  REQUIRE(cli.run("--output-dir reports equivcheck " + ck + " --rotations 8 --seed 1") == 0);
  CHECK(cli.read("reports/equiv_test.json") == first);
  REQUIRE(cli.run("--output-dir reports equivcheck " + ck + " --rotations 1 --identity-rotations") == 0);
  CHECK(equiv_report_from_json(cli.read("reports/equiv_test.json")).eps_equiv == 0.0);
  REQUIRE(cli.run("--output-dir reports equivcheck " + ck + " --rotations 4 --precision float64") == 0);
  CHECK(equiv_report_from_json(cli.read("reports/equiv_test.json")).eps_equiv < 1e-9);

  // A manifest whose test partition has no records in the dataset.
  SplitManifest empty = load_manifest((cli.dir / "manifest.json").string());
  empty.test = {"not-in-dataset"};
  save_manifest((cli.dir / "empty.json").string(), empty);
  CHECK(cli.run("eval --checkpoint run/checkpoint_best.tcn --dataset data.xyz --manifest empty.json") == 2);

  std::ofstream(cli.dir / "atom.xyz") << "1\nsingle carbon\nC 0.5 -1.0 2.0\n";
  REQUIRE(cli.run("predict --checkpoint run/checkpoint_best.tcn atom.xyz") == 0);
  const std::string out = cli.output();
  CHECK(out.find("alpha_iso") != std::string::npos);
  // The anisotropic block of a lone atom prints as zeros.
  const std::string aniso = out.substr(out.find("alpha_aniso"));
  for (char c : std::string("123456789"))
    CHECK(aniso.find(c) == std::string::npos);

  std::ofstream(cli.dir / "bad.xyz") << "2\ncomment\nC 0 0 0\n";
  CHECK(cli.run("predict --checkpoint run/checkpoint_best.tcn bad.xyz") == 2);
  CHECK(cli.run("predict --checkpoint missing.tcn atom.xyz") == 2);
}

}  // TEST_SUITE
