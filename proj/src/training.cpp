#include "tcnet/training.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "tcnet/errors.hpp"
#include "tcnet/rng.hpp"

namespace tcnet {

using json = nlohmann::ordered_json;

double frob_loss(const Mat3& pred, const Mat3& target) { return frob_norm(pred - target); }

template <class T>
ad::Var frob_loss(ad::Tape<T>& tape, ad::Var pred, const Mat3& target) {
  ad::Matrix<T> t(9, 1);
  for (int k = 0; k < 9; ++k) t.data[k] = static_cast<T>(target.m[k]);
  return tape.frob_norm(tape.sub(pred, tape.constant(std::move(t))));
}

template ad::Var frob_loss<float>(ad::Tape<float>&, ad::Var, const Mat3&);
template ad::Var frob_loss<double>(ad::Tape<double>&, ad::Var, const Mat3&);

double learning_rate(const TrainConfig& cfg, std::int64_t step, std::int64_t total_steps) {
  const double base = cfg.learning_rate;
  if (step < cfg.warmup_steps) return base * double(step + 1) / double(cfg.warmup_steps);
  const std::int64_t span = total_steps - cfg.warmup_steps;
  if (span <= 0) return base;
  const double x = std::min(1.0, double(step - cfg.warmup_steps) / double(span));
  return 0.5 * base * (1.0 + std::cos(M_PI * x));
}

AdamState make_adam_state(const ParamLayout& layout) {
  return {zeros_like<float>(layout), zeros_like<float>(layout), 0};
}

void adam_step(Parameters<float>& params, const Parameters<float>& grad, AdamState& st, double lr,
               const TrainConfig& cfg) {
  if (grad.size() != params.size() || st.m.size() != params.size() || st.v.size() != params.size())
    throw ShapeMismatch("adam_step: parameter, gradient and moment counts differ");
  ++st.step;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, double(st.step));
  const double c2 = 1.0 - std::pow(b2, double(st.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params.tensors[k].data;
    const auto& g = grad.tensors[k].data;
    auto& m = st.m.tensors[k].data;
    auto& v = st.v.tensors[k].data;
    if (g.size() != p.size()) throw ShapeMismatch("adam_step: gradient shape differs from parameter shape");
    for (std::size_t q = 0; q < p.size(); ++q) {
      const double gq = g[q];
      const double mq = b1 * m[q] + (1.0 - b1) * gq;
      const double vq = b2 * v[q] + (1.0 - b2) * gq * gq;
      m[q] = static_cast<float>(mq);
      v[q] = static_cast<float>(vq);
      const double update = (mq / c1) / (std::sqrt(vq / c2) + cfg.adam_eps) + cfg.weight_decay * p[q];
      p[q] = static_cast<float>(p[q] - lr * update);
    }
  }
}

void ema_update(Parameters<float>& shadow, const Parameters<float>& params, double decay) {
  if (shadow.size() != params.size()) throw ShapeMismatch("ema_update: parameter counts differ");
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& s = shadow.tensors[k].data;
    const auto& p = params.tensors[k].data;
    for (std::size_t q = 0; q < s.size(); ++q) s[q] = static_cast<float>(decay * s[q] + (1.0 - decay) * p[q]);
  }
}

std::string to_json_line(const EpochRecord& r) {
  json j;
  j["epoch"] = r.epoch;
  j["step"] = r.step;
  j["lr"] = r.lr;
  j["train_loss"] = r.train_loss;
  j["val_frob_mae"] = r.val_frob_mae;
  j["wall_seconds"] = r.wall_seconds;
  return j.dump();
}

int select_best(const std::vector<double>& val) {
  if (val.empty()) throw EmptyDataset("select_best: no validation results");
  std::size_t best = 0;
  for (std::size_t k = 1; k < val.size(); ++k)
    if (val[k] < val[best]) best = k;
  return static_cast<int>(best) + 1;
}

int select_best(const std::vector<EpochRecord>& history) {
  std::vector<double> val;
  for (const EpochRecord& r : history) val.push_back(r.val_frob_mae);
  return select_best(val);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'T', 'C', 'N', 'E', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <class U>
void put_le(std::ostream& out, U x) {
  unsigned char b[sizeof(U)];
  for (std::size_t k = 0; k < sizeof(U); ++k) b[k] = static_cast<unsigned char>((std::uint64_t(x) >> (8 * k)) & 0xFF);
  out.write(reinterpret_cast<const char*>(b), sizeof b);
}

template <class U>
U get_le(std::istream& in) {
  unsigned char b[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof b)) throw CheckpointError("truncated checkpoint");
  std::uint64_t x = 0;
  for (std::size_t k = 0; k < sizeof(U); ++k) x |= std::uint64_t(b[k]) << (8 * k);
  return static_cast<U>(x);
}

std::uint64_t fnv1a(std::uint64_t h, const unsigned char* p, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    h ^= p[k];
    h *= 0x100000001B3ull;
  }
  return h;
}

constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ull;

std::vector<unsigned char> encode_floats(const std::vector<const Parameters<float>*>& groups) {
  std::vector<unsigned char> bytes;
  for (const Parameters<float>* g : groups)
    for (const auto& m : g->tensors)
      for (float f : m.data) {
        const std::uint32_t u = std::bit_cast<std::uint32_t>(f);
        for (int k = 0; k < 4; ++k) bytes.push_back(static_cast<unsigned char>((u >> (8 * k)) & 0xFF));
      }
  return bytes;
}

json history_json(const std::vector<EpochRecord>& h) {
  json a = json::array();
  for (const EpochRecord& r : h) a.push_back(json::parse(to_json_line(r)));
  return a;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& st) {
  const ModelLayout layout = make_layout(st.model);
  const auto& specs = layout.params.specs();
  for (const Parameters<float>* g : {&st.params, &st.adam.m, &st.adam.v, &st.ema})
    if (g->size() != specs.size()) throw CheckpointError("save_checkpoint: state does not match the model layout");

  json h;
  h["format"] = "tcnet-checkpoint";
  ConfigFile cf{st.model, st.train};
  json cfg = json::object();
  for (const auto& [k, v] : to_key_values(cf)) cfg[k] = v;
  h["config"] = cfg;
  h["seed"] = st.train.seed;
  h["epoch"] = st.epoch;
  h["adam_step"] = st.adam.step;
  h["history"] = history_json(st.history);
  h["groups"] = {"params", "adam_m", "adam_v", "ema"};
  json tensors = json::array();
  for (const ParamSpec& s : specs) tensors.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}});
  h["tensors"] = tensors;
  const std::vector<unsigned char> payload = encode_floats({&st.params, &st.adam.m, &st.adam.v, &st.ema});
  h["payload_bytes"] = payload.size();
  h["payload_fnv1a64"] = fnv1a(kFnvOffset, payload.data(), payload.size());
  const std::string header = h.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write '" + tmp + "'");
    out.write(kMagic, sizeof kMagic);
    put_le<std::uint32_t>(out, kVersion);
    put_le<std::uint64_t>(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (!out) throw CheckpointError("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw CheckpointError("'" + path + "' is not a checkpoint");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = get_le<std::uint64_t>(in);
  if (header_len > (1ull << 30)) throw CheckpointError("implausible header length");
  std::string header(header_len, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(header_len))) throw CheckpointError("truncated header");

  TrainState st;
  try {
    const json h = json::parse(header);
    KeyValues kv;
    for (const auto& [k, v] : h.at("config").items()) kv[k] = v.get<std::string>();
    const ConfigFile cf = from_key_values(kv);
    st.model = cf.model;
    st.train = cf.train;
    st.epoch = h.at("epoch").get<int>();
    st.adam.step = h.at("adam_step").get<std::int64_t>();
    for (const json& r : h.at("history")) {
      EpochRecord e;
      e.epoch = r.at("epoch").get<int>();
      e.step = r.at("step").get<std::int64_t>();
      e.lr = r.at("lr").get<double>();
      e.train_loss = r.at("train_loss").get<double>();
      e.val_frob_mae = r.at("val_frob_mae").get<double>();
      e.wall_seconds = r.at("wall_seconds").get<double>();
      st.history.push_back(e);
    }
    const ModelLayout layout = make_layout(st.model);
    const auto& specs = layout.params.specs();
    const json& tensors = h.at("tensors");
    if (tensors.size() != specs.size()) throw CheckpointError("tensor list does not match the stored config");
    for (std::size_t k = 0; k < specs.size(); ++k) {
      const json& t = tensors[k];
      if (t.at("name").get<std::string>() != specs[k].name || t.at("rows").get<int>() != specs[k].rows ||
          t.at("cols").get<int>() != specs[k].cols)
        throw CheckpointError("tensor '" + t.at("name").get<std::string>() + "' does not match the stored config");
    }
    const auto bytes = h.at("payload_bytes").get<std::uint64_t>();
    if (bytes != 4 * 4 * static_cast<std::uint64_t>(layout.params.count()))
      throw CheckpointError("payload size does not match the tensor list");
    std::vector<unsigned char> payload(bytes);
    if (!in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(bytes)))
      throw CheckpointError("truncated payload");
    if (fnv1a(kFnvOffset, payload.data(), payload.size()) != h.at("payload_fnv1a64").get<std::uint64_t>())
      throw CheckpointError("payload checksum mismatch");
    std::size_t off = 0;
    for (Parameters<float>* g : {&st.params, &st.adam.m, &st.adam.v, &st.ema}) {
      *g = zeros_like<float>(layout.params);
      for (auto& m : g->tensors)
        for (float& f : m.data) {
          std::uint32_t u = 0;
          for (int k = 0; k < 4; ++k) u |= std::uint32_t(payload[off + k]) << (8 * k);
          f = std::bit_cast<float>(u);
          off += 4;
        }
    }
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config: ") + e.what());
  }
  return st;
}

// ---------------------------------------------------------------------------
// Gradients and inference

namespace {

template <class Fn>
void parallel_chunks(std::size_t n, int workers, Fn&& fn) {
  const std::size_t w = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n));
  if (w == 1) {
    fn(0, 0, n);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(w);
  for (std::size_t k = 0; k < w; ++k) {
    const std::size_t lo = n * k / w, hi = n * (k + 1) / w;
    threads.emplace_back([&, k, lo, hi] {
      try {
        fn(k, lo, hi);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

BatchGradient batch_gradient(const Model<float>& model, const Parameters<float>& params,
                             const std::vector<const Molecule*>& batch, int workers) {
  const ParamLayout& layout = model.layout().params;
  const std::size_t w = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), batch.size()));
  std::vector<BatchGradient> parts(w);
  for (auto& p : parts) p.grad = zeros_like<float>(layout);
  parallel_chunks(batch.size(), static_cast<int>(w), [&](std::size_t k, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const Molecule& mol = *batch[i];
      if (!mol.target_alpha) throw Error("molecule '" + mol.mol_id + "' has no target");
      ad::Tape<float> tape;
      const std::vector<ad::Var> vars = bind_parameters(tape, params);
      const ForwardResult r = model.forward(tape, vars, mol);
      const ad::Var loss = frob_loss(tape, r.alpha, *mol.target_alpha);
      const double lv = tape.value(loss).data[0];
      if (!std::isfinite(lv)) throw DivergenceDetected("non-finite loss on molecule '" + mol.mol_id + "'");
      tape.backward(loss);
      accumulate_gradients(tape, vars, parts[k].grad);
      parts[k].loss_sum += lv;
    }
  });
  BatchGradient out = std::move(parts[0]);
  for (std::size_t k = 1; k < w; ++k) {
    out.loss_sum += parts[k].loss_sum;
    for (std::size_t t = 0; t < out.grad.size(); ++t) {
      auto& dst = out.grad.tensors[t].data;
      const auto& src = parts[k].grad.tensors[t].data;
      for (std::size_t q = 0; q < dst.size(); ++q) dst[q] += src[q];
    }
  }
  return out;
}

std::vector<Mat3> predict_all(const Model<float>& model, const Parameters<float>& params,
                              const std::vector<Molecule>& mols, int workers) {
  std::vector<Mat3> out(mols.size());
  parallel_chunks(mols.size(), workers, [&](std::size_t, std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) out[i] = model.predict(params, mols[i]);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

TrainState initial_state(const ModelConfig& model_cfg, const TrainConfig& train_cfg) {
  model_cfg.validate();
  train_cfg.validate();
  const ModelLayout layout = make_layout(model_cfg);
  TrainState st;
  st.model = model_cfg;
  st.train = train_cfg;
  Rng rng = make_stream(train_cfg.seed, Stream::kInit);
  st.params = init_parameters(layout.params, rng);
  st.adam = make_adam_state(layout.params);
  st.ema = st.params;
  return st;
}

namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(mix64(make_stream(seed, Stream::kShuffle).next() + static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

double mean_frob_error(const Model<float>& model, const Parameters<float>& params, const std::vector<Molecule>& mols,
                       int workers) {
  const std::vector<Mat3> pred = predict_all(model, params, mols, workers);
  double sum = 0.0;
  for (std::size_t i = 0; i < mols.size(); ++i) sum += frob_loss(pred[i], *mols[i].target_alpha);
  const double mae = sum / double(mols.size());
  if (!std::isfinite(mae)) throw DivergenceDetected("non-finite validation error");
  return mae;
}

}  // namespace

TrainResult train(const std::vector<Molecule>& train_set, const std::vector<Molecule>& val_set,
                  const ModelConfig& model_cfg, const TrainConfig& cfg, const TrainOptions& opt) {
  if (train_set.empty()) throw EmptyDataset("training split is empty");
  if (val_set.empty()) throw EmptyDataset("validation split is empty");
  for (const auto* set : {&train_set, &val_set})
    for (const Molecule& m : *set)
      if (!m.target_alpha) throw Error("molecule '" + m.mol_id + "' has no target");

  TrainResult res;
  TrainState& st = res.last;
  if (opt.resume) {
    st = *opt.resume;
    if (!(st.model == model_cfg)) throw ConfigError("resume: model config differs from the checkpoint");
    st.train = cfg;
    cfg.validate();
  } else {
    st = initial_state(model_cfg, cfg);
  }
  const Model<float> model(model_cfg);

  const bool write = !opt.output_dir.empty();
  std::ofstream log_file;
  if (write) {
    std::filesystem::create_directories(opt.output_dir);
    log_file.open(opt.output_dir + "/train_log.jsonl", opt.resume ? std::ios::app : std::ios::trunc);
    if (!log_file) throw Error("cannot write training log in '" + opt.output_dir + "'");
  }
  auto path = [&](const char* name) { return opt.output_dir + "/" + name; };

  const std::size_t n = train_set.size();
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  const std::int64_t steps_per_epoch = static_cast<std::int64_t>((n + batch - 1) / batch);
  const std::int64_t total_steps = steps_per_epoch * cfg.epochs;

  if (!st.history.empty()) {
    const std::string best_path = opt.output_dir + "/checkpoint_best.tcn";
    if (write && std::filesystem::exists(best_path))
      res.best = load_checkpoint(best_path);
    else
      res.best = st;
  }
  TrainState last_good = st;
  const auto t0 = std::chrono::steady_clock::now();
  double best_val = st.history.empty() ? INFINITY : st.history[select_best(st.history) - 1].val_frob_mae;

  for (int epoch = st.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<std::size_t> order = epoch_order(n, cfg.seed, epoch);
    double loss_sum = 0.0;
    double lr = 0.0;
    try {
      for (std::size_t b0 = 0; b0 < n; b0 += batch) {
        std::vector<const Molecule*> mols;
        for (std::size_t k = b0; k < std::min(n, b0 + batch); ++k) mols.push_back(&train_set[order[k]]);
        BatchGradient g = batch_gradient(model, st.params, mols, cfg.workers);
        const float inv = 1.0f / static_cast<float>(mols.size());
        for (auto& t : g.grad.tensors)
          for (float& x : t.data) x *= inv;
        lr = learning_rate(cfg, st.adam.step, total_steps);
        adam_step(st.params, g.grad, st.adam, lr, cfg);
        ema_update(st.ema, st.params, cfg.ema_decay);
        loss_sum += g.loss_sum;
      }
      EpochRecord rec;
      rec.epoch = epoch;
      rec.step = st.adam.step;
      rec.lr = lr;
      rec.train_loss = loss_sum / double(n);
      if (!std::isfinite(rec.train_loss)) throw DivergenceDetected("non-finite training loss");
      rec.val_frob_mae = mean_frob_error(model, st.ema, val_set, cfg.workers);
      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      st.epoch = epoch;
      st.history.push_back(rec);
      const std::string line = to_json_line(rec);
      if (write) log_file << line << '\n' << std::flush;
      if (opt.log) *opt.log << line << '\n' << std::flush;
      if (rec.val_frob_mae < best_val) {
        best_val = rec.val_frob_mae;
        res.best = st;
        if (write) save_checkpoint(path("checkpoint_best.tcn"), st);
      }
      if (write && cfg.checkpoint_every > 0 && (epoch % cfg.checkpoint_every == 0 || epoch == cfg.epochs))
        save_checkpoint(path("checkpoint_last.tcn"), st);
      if (opt.on_epoch) opt.on_epoch(rec);
      last_good = st;
    } catch (const DivergenceDetected& e) {
      if (write) save_checkpoint(path("checkpoint_last.tcn"), last_good);
      throw DivergenceDetected(std::string(e.what()) + " in epoch " + std::to_string(epoch));
    }
  }
  if (res.best.history.empty()) res.best = st;
  return res;
}

}  // namespace tcnet
