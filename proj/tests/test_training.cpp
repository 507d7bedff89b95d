#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "helpers.hpp"
#include "tcnet/errors.hpp"
#include "tcnet/training.hpp"

using namespace tcnet;
using namespace tcnet::testing;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model() {
  ModelConfig c;
  c.scalar_channels = 8;
  c.vector_channels = 3;
  c.tensor_channels = 3;
  c.layers = 2;
  c.rbf_count = 6;
  c.hidden = 8;
  c.lora_rank = 2;
  return c;
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.epochs = 3;
  t.batch_size = 4;
  t.learning_rate = 2e-3;
  t.warmup_steps = 3;
  t.ema_decay = 0.9;
  t.seed = 5;
  return t;
}

std::vector<Molecule> with_targets(int n, std::uint64_t seed) { return synthetic_molecules(n, seed); }

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tcnet_training_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

bool same_parameters(const Parameters<float>& a, const Parameters<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k)
    if (a.tensors[k].data != b.tensors[k].data) return false;
  return true;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("frobenius loss") {
  CHECK(frob_loss(Mat3::identity(), Mat3::zero()) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-15));
  CHECK(frob_loss(Mat3::diag(1, 2, 3), Mat3::diag(1, 2, 3)) == 0.0);
  const Mat3 a = Mat3::rows({1, 2, 0}, {2, 0, 0}, {0, 0, 0});
  CHECK(frob_loss(a, Mat3::zero()) == doctest::Approx(3.0).epsilon(1e-15));

  Rng rng(1);
  for (int k = 0; k < 20; ++k) {
    const Mat3 p = random_sym(rng), t = random_sym(rng);
    const Rotation r = sample_rotation(rng);
    CHECK(std::abs(frob_loss(conjugate(r, p), conjugate(r, t)) - frob_loss(p, t)) < 1e-12);
  }

  // Tape version: value and gradient (P - T) / ||P - T||.
  const Mat3 p = random_sym(rng), t = random_sym(rng);
  ad::Tape<double> tape;
  ad::Matrix<double> pm(9, 1);
  for (int k = 0; k < 9; ++k) pm.data[k] = p.m[k];
  const ad::Var pv = tape.leaf(pm);
  const ad::Var loss = frob_loss(tape, pv, t);
  CHECK(tape.value(loss).data[0] == doctest::Approx(frob_loss(p, t)).epsilon(1e-14));
  tape.backward(loss);
  const double n = frob_loss(p, t);
  for (int k = 0; k < 9; ++k) CHECK(tape.grad(pv).data[k] == doctest::Approx((p.m[k] - t.m[k]) / n).epsilon(1e-12));
}

TEST_CASE("learning rate schedule") {
  TrainConfig cfg;
  cfg.learning_rate = 5e-4;
  cfg.warmup_steps = 1000;
  CHECK(learning_rate(cfg, 1000, 5000) == 5e-4);
  CHECK(learning_rate(cfg, 0, 5000) == doctest::Approx(5e-7).epsilon(1e-12));
  CHECK(learning_rate(cfg, 499, 5000) == doctest::Approx(2.5e-4).epsilon(1e-12));
  CHECK(learning_rate(cfg, 3000, 5000) == doctest::Approx(2.5e-4).epsilon(1e-12));
  CHECK(learning_rate(cfg, 5000, 5000) == doctest::Approx(0.0));
  double prev = learning_rate(cfg, 1000, 5000);
  for (int s = 1001; s <= 5000; s += 37) {
    const double lr = learning_rate(cfg, s, 5000);
    CHECK(lr <= prev);
    prev = lr;
  }
}

TEST_CASE("ema") {
  ParamLayout layout;
  layout.add("w", 2, 2, InitKind::kFanIn);
  Parameters<float> shadow = zeros_like<float>(layout);
  Parameters<float> p = zeros_like<float>(layout);
  shadow.tensors[0].data = {1, 2, 3, 4};
  p.tensors[0].data = {3, 2, 1, 0};
  Parameters<float> half = shadow;
  ema_update(half, p, 0.5);
  CHECK(half.tensors[0].data == std::vector<float>{2, 2, 2, 2});
  ema_update(shadow, p, 0.0);
  CHECK(shadow.tensors[0].data == p.tensors[0].data);
}

TEST_CASE("adam on a quadratic") {
  ParamLayout layout;
  layout.add("x", 1, 3, InitKind::kZero);
  Parameters<float> p = zeros_like<float>(layout);
  const std::vector<float> target{1.5f, -0.75f, 0.25f};
  AdamState st = make_adam_state(layout);
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.warmup_steps = 10;
  for (int s = 0; s < 1000; ++s) {
    Parameters<float> g = zeros_like<float>(layout);
    for (int k = 0; k < 3; ++k) g.tensors[0].data[k] = p.tensors[0].data[k] - target[k];
    adam_step(p, g, st, learning_rate(cfg, st.step, 1000), cfg);
  }
  CHECK(st.step == 1000);
  for (int k = 0; k < 3; ++k) CHECK(std::abs(p.tensors[0].data[k] - target[k]) < 1e-6);
}

TEST_CASE("adam bias correction and weight decay") {
  ParamLayout layout;
  layout.add("x", 1, 1, InitKind::kZero);
  Parameters<float> p = zeros_like<float>(layout);
  p.tensors[0].data[0] = 2.0f;
  Parameters<float> g = zeros_like<float>(layout);
  g.tensors[0].data[0] = 0.3f;
  AdamState st = make_adam_state(layout);
  TrainConfig cfg;
  cfg.weight_decay = 0.1;
  adam_step(p, g, st, 0.01, cfg);
  // First step: m_hat / (sqrt(v_hat) + eps) = sign(g); decay acts on the old value.
  const double expect = 2.0 - 0.01 * (0.3 / (0.3 + 1e-8)) - 0.01 * 0.1 * 2.0;
  CHECK(p.tensors[0].data[0] == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("best epoch selection") {
  CHECK(select_best(std::vector<double>{0.5, 0.3, 0.3, 0.4}) == 2);
  CHECK(select_best(std::vector<double>{1.0}) == 1);
  CHECK(select_best(std::vector<double>{0.9, 0.8, 0.7}) == 3);
  CHECK_THROWS_AS(select_best(std::vector<double>{}), EmptyDataset);
  std::vector<EpochRecord> h(3);
  h[0].val_frob_mae = 2;
  h[1].val_frob_mae = 1;
  h[2].val_frob_mae = 1;
  CHECK(select_best(h) == 2);
}

TEST_CASE("epoch log line") {
  EpochRecord r;
  r.epoch = 4;
  r.step = 40;
  r.lr = 1e-3;
  r.train_loss = 0.5;
  r.val_frob_mae = 0.25;
  const std::string line = to_json_line(r);
  CHECK(line.find('\n') == std::string::npos);
  CHECK(line.find("\"epoch\":4") != std::string::npos);
  CHECK(line.find("\"val_frob_mae\":0.25") != std::string::npos);
}

TEST_CASE("checkpoint round trip and corruption") {
  const fs::path dir = scratch_dir("ckpt");
  TrainState st = initial_state(tiny_model(), tiny_train());
  st.epoch = 2;
  st.adam.step = 17;
  st.adam.m.tensors[0].data[0] = 0.125f;
  st.ema.tensors[1].data[0] = -3.5f;
  EpochRecord r;
  r.epoch = 1;
  r.val_frob_mae = 0.7;
  st.history = {r, r};
  const std::string path = (dir / "a.tcn").string();
  save_checkpoint(path, st);
  CHECK_FALSE(fs::exists(path + ".tmp"));
  const TrainState back = load_checkpoint(path);
  CHECK(back.model == st.model);
  CHECK(back.train == st.train);
  CHECK(back.epoch == 2);
  CHECK(back.adam.step == 17);
  CHECK(same_parameters(back.params, st.params));
  CHECK(same_parameters(back.adam.m, st.adam.m));
  CHECK(same_parameters(back.adam.v, st.adam.v));
  CHECK(same_parameters(back.ema, st.ema));
  CHECK(back.history.size() == 2);
  CHECK(back.history[1].val_frob_mae == 0.7);

  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& name, const std::string& data) {
    const std::string p = (dir / name).string();
    std::ofstream(p, std::ios::binary) << data;
    return p;
  };
  std::string flipped = bytes;
  flipped[flipped.size() - 5] ^= 0x40;
  CHECK_THROWS_AS(load_checkpoint(write("flip.tcn", flipped)), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(write("short.tcn", bytes.substr(0, bytes.size() - 8))), CheckpointError);
  std::string magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(load_checkpoint(write("magic.tcn", magic)), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(write("empty.tcn", "")), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint((dir / "missing.tcn").string()), CheckpointError);
}

TEST_CASE("batch gradient across workers") {
  const Model<float> model(tiny_model());
  const TrainState st = initial_state(tiny_model(), tiny_train());
  const auto mols = with_targets(7, 2);
  std::vector<const Molecule*> batch;
  for (const Molecule& m : mols) batch.push_back(&m);
  const BatchGradient one = batch_gradient(model, st.params, batch, 1);
  const BatchGradient two = batch_gradient(model, st.params, batch, 2);
  CHECK(two.loss_sum == doctest::Approx(one.loss_sum).epsilon(1e-6));
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < one.grad.size(); ++k)
    for (std::size_t q = 0; q < one.grad.tensors[k].data.size(); ++q) {
      const double d = one.grad.tensors[k].data[q] - two.grad.tensors[k].data[q];
      num += d * d;
      den += double(one.grad.tensors[k].data[q]) * one.grad.tensors[k].data[q];
    }
  CHECK(std::sqrt(num / den) < 1e-5);
  const BatchGradient again = batch_gradient(model, st.params, batch, 2);
  CHECK(same_parameters(again.grad, two.grad));

  const auto preds1 = predict_all(model, st.params, mols, 1);
  const auto preds3 = predict_all(model, st.params, mols, 3);
  CHECK(preds1 == preds3);
}

TEST_CASE("training is deterministic and reduces the loss") {
  const auto tr = with_targets(16, 3);
  const auto va = with_targets(4, 4);
  TrainConfig cfg = tiny_train();
  cfg.epochs = 4;
  const TrainResult a = train(tr, va, tiny_model(), cfg);
  const TrainResult b = train(tr, va, tiny_model(), cfg);
  CHECK(same_parameters(a.last.params, b.last.params));
  CHECK(same_parameters(a.last.ema, b.last.ema));
  REQUIRE(a.last.history.size() == 4);
  CHECK(a.last.history.back().train_loss < a.last.history.front().train_loss);
  CHECK(a.last.adam.step == 16);
  const int best = select_best(a.last.history);
  CHECK(a.best.epoch == best);

  cfg.workers = 2;
  const TrainResult c = train(tr, va, tiny_model(), cfg);
  CHECK(c.last.history.back().train_loss == doctest::Approx(a.last.history.back().train_loss).epsilon(1e-3));
}

TEST_CASE("resume continues the same trajectory") {
  const auto tr = with_targets(12, 6);
  const auto va = with_targets(4, 7);
  TrainConfig cfg = tiny_train();
  cfg.epochs = 4;

  const fs::path full_dir = scratch_dir("full");
  TrainOptions full_opt;
  full_opt.output_dir = full_dir.string();
  const TrainResult full = train(tr, va, tiny_model(), cfg, full_opt);
  CHECK(fs::exists(full_dir / "checkpoint_best.tcn"));
  CHECK(fs::exists(full_dir / "checkpoint_last.tcn"));
  {
    std::ifstream log(full_dir / "train_log.jsonl");
    int lines = 0;
    for (std::string l; std::getline(log, l);) ++lines;
    CHECK(lines == 4);
  }

  const fs::path cut_dir = scratch_dir("cut");
  TrainOptions cut_opt;
  cut_opt.output_dir = cut_dir.string();
  cut_opt.on_epoch = [](const EpochRecord& r) {
    if (r.epoch == 2) throw std::runtime_error("interrupted");
  };
  CHECK_THROWS_AS(train(tr, va, tiny_model(), cfg, cut_opt), std::runtime_error);
  const TrainState saved = load_checkpoint((cut_dir / "checkpoint_last.tcn").string());
  CHECK(saved.epoch == 2);

  TrainOptions resume_opt;
  resume_opt.output_dir = cut_dir.string();
  resume_opt.resume = &saved;
  const TrainResult resumed = train(tr, va, tiny_model(), cfg, resume_opt);
  CHECK(resumed.last.epoch == 4);
  CHECK(same_parameters(resumed.last.params, full.last.params));
  CHECK(same_parameters(resumed.last.ema, full.last.ema));
  CHECK(resumed.last.adam.step == full.last.adam.step);
  REQUIRE(resumed.last.history.size() == 4);
  for (int k = 0; k < 4; ++k)
    CHECK(resumed.last.history[k].val_frob_mae == full.last.history[k].val_frob_mae);
  CHECK(resumed.best.epoch == full.best.epoch);

  ModelConfig other = tiny_model();
  other.hidden = 9;
  CHECK_THROWS_AS(train(tr, va, other, cfg, resume_opt), ConfigError);
}

TEST_CASE("divergence and empty splits") {
  const auto tr = with_targets(8, 8);
  const auto va = with_targets(2, 9);
  TrainConfig cfg = tiny_train();
  cfg.learning_rate = 1e12;
  cfg.warmup_steps = 1;
  cfg.epochs = 20;
  const fs::path dir = scratch_dir("diverge");
  TrainOptions opt;
  opt.output_dir = dir.string();
  CHECK_THROWS_AS(train(tr, va, tiny_model(), cfg, opt), DivergenceDetected);
  CHECK(fs::exists(dir / "checkpoint_last.tcn"));

  CHECK_THROWS_AS(train({}, va, tiny_model(), tiny_train()), EmptyDataset);
  CHECK_THROWS_AS(train(tr, {}, tiny_model(), tiny_train()), EmptyDataset);
}

}  // TEST_SUITE
