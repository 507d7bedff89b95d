#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace tcnet {

enum class Readout { kTensorChannel, kPainn };

std::string to_string(Readout r);
Readout readout_from_string(const std::string& s);

struct ModelConfig {
  int scalar_channels = 32;
  int vector_channels = 8;
  int tensor_channels = 8;
  int layers = 3;
  double cutoff = 10.0;  // Angstrom
  int rbf_count = 20;
  int hidden = 32;  // width of every two-layer MLP
  // Every neighbor sum is divided by this constant (typical neighbor count).
  double avg_neighbors = 8.0;

  bool branch_rr = false;
  bool branch_rv = false;
  bool branch_vv = true;
  bool use_sym = true;
  bool use_tl = true;
  bool use_lora = true;
  int lora_rank = 8;
  // Feeds r_hat . u_j (the trace of the raw RV basis) into the scalar message.
  bool rv_trace_feedback = false;

  Readout readout = Readout::kTensorChannel;

  bool has_tensor_channel() const { return readout == Readout::kTensorChannel; }
  int branch_count() const { return int(branch_rr) + int(branch_rv) + int(branch_vv); }

  // Throws ConfigError.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 5e-4;
  int warmup_steps = 1000;
  double ema_decay = 0.999;
  std::uint64_t seed = 42;
  int checkpoint_every = 1;  // epochs; 0 disables periodic checkpoints
  int workers = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// Flat "key = value" file with [model] / [train] section headers. '#' starts
// a comment. Overrides take the form "section.key=value" and win over the
// file contents.
struct ConfigFile {
  ModelConfig model;
  TrainConfig train;
};

using KeyValues = std::map<std::string, std::string>;

// Throws ConfigError for unknown keys or malformed values.
ConfigFile parse_config_text(const std::string& text, const std::vector<std::string>& overrides = {});
ConfigFile load_config(const std::string& path, const std::vector<std::string>& overrides = {});
std::string format_config(const ConfigFile& cfg);

// Flattened "section.key" -> value view, used by the checkpoint header.
KeyValues to_key_values(const ConfigFile& cfg);
ConfigFile from_key_values(const KeyValues& kv);

}  // namespace tcnet
