#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "tcnet/config.hpp"
#include "tcnet/model.hpp"
#include "tcnet/parameters.hpp"

namespace tcnet {

// ||pred - target||_F
double frob_loss(const Mat3& pred, const Mat3& target);
template <class T>
ad::Var frob_loss(ad::Tape<T>& tape, ad::Var pred, const Mat3& target);

// Linear warmup base * (s + 1) / warmup for s < warmup, then a half cosine
// from base (exactly, at s = warmup) to zero at s = total_steps.
double learning_rate(const TrainConfig& cfg, std::int64_t step, std::int64_t total_steps);

struct AdamState {
  Parameters<float> m;
  Parameters<float> v;
  std::int64_t step = 0;
};

AdamState make_adam_state(const ParamLayout& layout);

// One bias-corrected Adam step with decoupled weight decay.
void adam_step(Parameters<float>& params, const Parameters<float>& grad, AdamState& state, double lr,
               const TrainConfig& cfg);

// shadow = decay * shadow + (1 - decay) * params
void ema_update(Parameters<float>& shadow, const Parameters<float>& params, double decay);

struct EpochRecord {
  int epoch = 0;  // 1-based
  std::int64_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_frob_mae = 0.0;
  double wall_seconds = 0.0;
};

std::string to_json_line(const EpochRecord& r);

// 1-based epoch with the lowest validation Frobenius MAE; ties go to the
// earlier epoch. Throws EmptyDataset for an empty history.
int select_best(const std::vector<double>& val_frob_mae);
int select_best(const std::vector<EpochRecord>& history);

struct TrainState {
  ModelConfig model;
  TrainConfig train;
  Parameters<float> params;
  AdamState adam;
  Parameters<float> ema;
  int epoch = 0;  // completed epochs
  std::vector<EpochRecord> history;
};

// Binary container, see docs/checkpoint_format.md. Throws CheckpointError.
void save_checkpoint(const std::string& path, const TrainState& state);
TrainState load_checkpoint(const std::string& path);

// Mean loss and summed gradient of a batch. Molecules are split into
// `workers` contiguous chunks whose gradient sums are added in chunk order.
struct BatchGradient {
  double loss_sum = 0.0;
  Parameters<float> grad;
};
BatchGradient batch_gradient(const Model<float>& model, const Parameters<float>& params,
                             const std::vector<const Molecule*>& batch, int workers);

// Parallel inference in dataset order.
std::vector<Mat3> predict_all(const Model<float>& model, const Parameters<float>& params,
                              const std::vector<Molecule>& mols, int workers);

struct TrainOptions {
  std::string output_dir;       // checkpoints and train_log.jsonl; empty for none
  std::ostream* log = nullptr;  // receives the JSON log lines as well
  const TrainState* resume = nullptr;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  TrainState last;
  TrainState best;  // state at the selected epoch; evaluate its EMA weights
};

// Throws EmptyDataset for empty splits and DivergenceDetected when a loss
// turns non-finite (the last finished epoch is then saved as
// checkpoint_last.tcn when an output directory is set).
TrainResult train(const std::vector<Molecule>& train_set, const std::vector<Molecule>& val_set,
                  const ModelConfig& model_cfg, const TrainConfig& train_cfg, const TrainOptions& opt = {});

// Fresh state with initialized parameters (kInit stream of the train seed).
TrainState initial_state(const ModelConfig& model_cfg, const TrainConfig& train_cfg);

}  // namespace tcnet
