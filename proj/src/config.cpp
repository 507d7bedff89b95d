#include "tcnet/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "tcnet/errors.hpp"

namespace tcnet {

std::string to_string(Readout r) { return r == Readout::kTensorChannel ? "tensor_channel" : "painn"; }

Readout readout_from_string(const std::string& s) {
  if (s == "tensor_channel") return Readout::kTensorChannel;
  if (s == "painn" || s == "painn_readout") return Readout::kPainn;
  throw ConfigError("unknown readout '" + s + "' (expected tensor_channel or painn)");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (scalar_channels < 1) fail("scalar_channels must be >= 1");
  if (vector_channels < 1) fail("vector_channels must be >= 1");
  if (layers < 0) fail("layers must be >= 0");
  if (!(cutoff > 0.0)) fail("cutoff must be positive");
  if (rbf_count < 1) fail("rbf_count must be >= 1");
  if (hidden < 1) fail("hidden must be >= 1");
  if (!(avg_neighbors > 0.0)) fail("avg_neighbors must be positive");
  if (has_tensor_channel()) {
    if (tensor_channels < 1) fail("tensor_channel readout needs tensor_channels >= 1");
    if (branch_count() == 0) fail("tensor_channel readout needs at least one of rr/rv/vv");
    if (use_lora && lora_rank < 1) fail("lora_rank must be >= 1 when lora is enabled");
    if (rv_trace_feedback && !branch_rv) fail("rv_trace_feedback requires the rv branch");
  } else if (tensor_channels != 0) {
    fail("painn readout carries no tensor channels; set tensor_channels = 0");
  }
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (warmup_steps < 0) fail("warmup_steps must be >= 0");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) fail("ema_decay must lie in [0, 1)");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
  if (workers < 1) fail("workers must be >= 1");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int to_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected integer, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError(key + ": expected non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected boolean, got '" + v + "'");
}

std::string fmt_double(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

std::string branches_string(const ModelConfig& m) {
  std::vector<std::string> parts;
  if (m.branch_rr) parts.push_back("rr");
  if (m.branch_rv) parts.push_back("rv");
  if (m.branch_vv) parts.push_back("vv");
  std::string out;
  for (std::size_t k = 0; k < parts.size(); ++k) out += (k ? "," : "") + parts[k];
  return out.empty() ? "none" : out;
}

void set_branches(ModelConfig& m, const std::string& v) {
  m.branch_rr = m.branch_rv = m.branch_vv = false;
  if (v == "none" || v.empty()) return;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item == "rr") m.branch_rr = true;
    else if (item == "rv") m.branch_rv = true;
    else if (item == "vv") m.branch_vv = true;
    else throw ConfigError("model.branches: unknown branch '" + item + "'");
  }
}

void apply(ConfigFile& cfg, const std::string& key, const std::string& v) {
  static const std::map<std::string, std::function<void(ConfigFile&, const std::string&, const std::string&)>>
      setters = {
          {"model.scalar_channels", [](ConfigFile& c, auto& k, auto& x) { c.model.scalar_channels = to_int(k, x); }},
          {"model.vector_channels", [](ConfigFile& c, auto& k, auto& x) { c.model.vector_channels = to_int(k, x); }},
          {"model.tensor_channels", [](ConfigFile& c, auto& k, auto& x) { c.model.tensor_channels = to_int(k, x); }},
          {"model.layers", [](ConfigFile& c, auto& k, auto& x) { c.model.layers = to_int(k, x); }},
          {"model.cutoff", [](ConfigFile& c, auto& k, auto& x) { c.model.cutoff = to_double(k, x); }},
          {"model.rbf_count", [](ConfigFile& c, auto& k, auto& x) { c.model.rbf_count = to_int(k, x); }},
          {"model.hidden", [](ConfigFile& c, auto& k, auto& x) { c.model.hidden = to_int(k, x); }},
          {"model.avg_neighbors", [](ConfigFile& c, auto& k, auto& x) { c.model.avg_neighbors = to_double(k, x); }},
          {"model.branches", [](ConfigFile& c, auto&, auto& x) { set_branches(c.model, x); }},
          {"model.sym", [](ConfigFile& c, auto& k, auto& x) { c.model.use_sym = to_bool(k, x); }},
          {"model.traceless", [](ConfigFile& c, auto& k, auto& x) { c.model.use_tl = to_bool(k, x); }},
          {"model.lora", [](ConfigFile& c, auto& k, auto& x) { c.model.use_lora = to_bool(k, x); }},
          {"model.lora_rank", [](ConfigFile& c, auto& k, auto& x) { c.model.lora_rank = to_int(k, x); }},
          {"model.rv_trace_feedback",
           [](ConfigFile& c, auto& k, auto& x) { c.model.rv_trace_feedback = to_bool(k, x); }},
          {"model.readout", [](ConfigFile& c, auto&, auto& x) { c.model.readout = readout_from_string(x); }},
          {"train.epochs", [](ConfigFile& c, auto& k, auto& x) { c.train.epochs = to_int(k, x); }},
          {"train.batch_size", [](ConfigFile& c, auto& k, auto& x) { c.train.batch_size = to_int(k, x); }},
          {"train.learning_rate", [](ConfigFile& c, auto& k, auto& x) { c.train.learning_rate = to_double(k, x); }},
          {"train.warmup_steps", [](ConfigFile& c, auto& k, auto& x) { c.train.warmup_steps = to_int(k, x); }},
          {"train.ema_decay", [](ConfigFile& c, auto& k, auto& x) { c.train.ema_decay = to_double(k, x); }},
          {"train.seed", [](ConfigFile& c, auto& k, auto& x) { c.train.seed = to_u64(k, x); }},
          {"train.checkpoint_every", [](ConfigFile& c, auto& k, auto& x) { c.train.checkpoint_every = to_int(k, x); }},
          {"train.workers", [](ConfigFile& c, auto& k, auto& x) { c.train.workers = to_int(k, x); }},
          {"train.adam_beta1", [](ConfigFile& c, auto& k, auto& x) { c.train.adam_beta1 = to_double(k, x); }},
          {"train.adam_beta2", [](ConfigFile& c, auto& k, auto& x) { c.train.adam_beta2 = to_double(k, x); }},
          {"train.adam_eps", [](ConfigFile& c, auto& k, auto& x) { c.train.adam_eps = to_double(k, x); }},
          {"train.weight_decay", [](ConfigFile& c, auto& k, auto& x) { c.train.weight_decay = to_double(k, x); }},
      };
  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(cfg, key, v);
}

}  // namespace

ConfigFile parse_config_text(const std::string& text, const std::vector<std::string>& overrides) {
  ConfigFile cfg;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "train")
        throw ConfigError("line " + std::to_string(lineno) + ": unknown section '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    if (section.empty()) throw ConfigError("line " + std::to_string(lineno) + ": key outside of a section");
    apply(cfg, section + "." + trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not section.key=value");
    apply(cfg, trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

ConfigFile load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), overrides);
}

KeyValues to_key_values(const ConfigFile& cfg) {
  const ModelConfig& m = cfg.model;
  const TrainConfig& t = cfg.train;
  return {
      {"model.scalar_channels", std::to_string(m.scalar_channels)},
      {"model.vector_channels", std::to_string(m.vector_channels)},
      {"model.tensor_channels", std::to_string(m.tensor_channels)},
      {"model.layers", std::to_string(m.layers)},
      {"model.cutoff", fmt_double(m.cutoff)},
      {"model.rbf_count", std::to_string(m.rbf_count)},
      {"model.hidden", std::to_string(m.hidden)},
      {"model.avg_neighbors", fmt_double(m.avg_neighbors)},
      {"model.branches", branches_string(m)},
      {"model.sym", fmt_bool(m.use_sym)},
      {"model.traceless", fmt_bool(m.use_tl)},
      {"model.lora", fmt_bool(m.use_lora)},
      {"model.lora_rank", std::to_string(m.lora_rank)},
      {"model.rv_trace_feedback", fmt_bool(m.rv_trace_feedback)},
      {"model.readout", to_string(m.readout)},
      {"train.epochs", std::to_string(t.epochs)},
      {"train.batch_size", std::to_string(t.batch_size)},
      {"train.learning_rate", fmt_double(t.learning_rate)},
      {"train.warmup_steps", std::to_string(t.warmup_steps)},
      {"train.ema_decay", fmt_double(t.ema_decay)},
      {"train.seed", std::to_string(t.seed)},
      {"train.checkpoint_every", std::to_string(t.checkpoint_every)},
      {"train.workers", std::to_string(t.workers)},
      {"train.adam_beta1", fmt_double(t.adam_beta1)},
      {"train.adam_beta2", fmt_double(t.adam_beta2)},
      {"train.adam_eps", fmt_double(t.adam_eps)},
      {"train.weight_decay", fmt_double(t.weight_decay)},
  };
}

ConfigFile from_key_values(const KeyValues& kv) {
  ConfigFile cfg;
  for (const auto& [k, v] : kv) apply(cfg, k, v);
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

std::string format_config(const ConfigFile& cfg) {
  const KeyValues kv = to_key_values(cfg);
  std::string out;
  for (const char* section : {"model", "train"}) {
    out += std::string("[") + section + "]\n";
    const std::string prefix = std::string(section) + ".";
    for (const auto& [k, v] : kv)
      if (k.rfind(prefix, 0) == 0) out += k.substr(prefix.size()) + " = " + v + "\n";
    if (std::string(section) == "model") out += "\n";
  }
  return out;
}

}  // namespace tcnet
