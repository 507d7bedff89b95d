#pragma once

// Tensor-channel message passing network for rank-2 molecular response
// tensors.
//
// Every atom carries scalar (s: C_s), vector (v: C_v x 3) and tensor
// (t: C_t x 3 x 3) features. One interaction block updates them in the order
// scalar -> vector -> tensor, each with a residual connection:
//
//   s_i' = s_i + phi_upd(s_i || n^-1 sum_j env_ij * phi_s(s_i || s_j || rbf_ij || psi_ij))
//   v_i' = v_i + gate_v(s_i) * n^-1 sum_j g_ij (a_ij rhat_ij + c_ij (W_mix v)_j)
//   t_i' = t_i + gate_t(s_i) * M( n^-1 sum_j env_ij sum_X k^X_ij P(B^X_ij) )
//
// with bases B^RR = rhat (x) rhat, B^RV = rhat (x) u_j, B^VV = u_j (x) w_j where
// u = W_u v and w = W_w v, P the traceless / symmetric projection, M the
// optional low-rank channel mixing x -> x + x A B, n the constant
// avg_neighbors and sigmoid node gates.
//
// The readout sums per-atom tensors, either
//   alpha_i = iso(s_i) I + sym(sum_c gate_c(s_i) t_ic)          (tensor channel)
//   alpha_i = iso(s_i) I + sym(nu_i (x) (x_i - centroid))         (PaiNN-style)

#include <cstdint>
#include <span>
#include <vector>

#include "tcnet/autodiff.hpp"
#include "tcnet/config.hpp"
#include "tcnet/graph.hpp"
#include "tcnet/molecule.hpp"
#include "tcnet/parameters.hpp"

namespace tcnet {

struct MlpIds {
  ParamLayout::Linear in;
  ParamLayout::Linear out;
};

struct LayerIds {
  MlpIds phi_s;    // scalar message
  MlpIds phi_upd;  // scalar residual update
  MlpIds edge_v;   // [a | mix coefficient | gate logit] per vector channel
  MlpIds v_gate;
  int w_mix = -1;
  int w_u = -1;
  int w_w = -1;
  MlpIds edge_t;  // one coefficient per enabled branch and tensor channel
  MlpIds t_gate;
  int lora_a = -1;
  int lora_b = -1;
};

struct ModelLayout {
  ParamLayout params;
  int embedding = -1;
  std::vector<LayerIds> layers;
  ParamLayout::Linear iso_head;
  MlpIds readout_gate;  // tensor-channel readout
  int w_nu = -1;        // PaiNN-style readout

  int psi_width = 0;
  int scalar_message_in = 0;
  int edge_in = 0;
};

// Throws ConfigError for invalid configurations.
ModelLayout make_layout(const ModelConfig& cfg);
std::int64_t param_count(const ModelConfig& cfg);

// Smallest-error MLP width so that param_count(cfg) is closest to `target`.
int match_hidden_width(ModelConfig cfg, std::int64_t target, int max_hidden = 4096);

// Per-molecule constants on a tape.
struct GraphInputs {
  int n_atoms = 0;
  int n_edges = 0;
  std::vector<int> src;
  std::vector<int> dst;
  std::vector<int> pool;  // all zeros, length n_atoms
  std::vector<int> z_index;
  ad::Var rbf;      // E x K
  ad::Var env;      // E x 1
  ad::Var rhat;     // 3E x 1
  ad::Var rel_pos;  // 3N x 1, positions relative to the centroid
};

struct AtomState {
  ad::Var s;  // N x C_s
  ad::Var v;  // 3N x C_v
  ad::Var t;  // 9N x C_t, invalid for the PaiNN-style readout
};

struct TensorBases {
  ad::Var rr;  // 9E x 1
  ad::Var rv;  // 9E x C_t
  ad::Var vv;  // 9E x C_t
};

struct ForwardResult {
  ad::Var alpha;                  // 9 x 1, row-major molecular tensor
  std::vector<AtomState> states;  // state after embedding and after each block
};

template <class T>
class Model {
 public:
  using Params = std::span<const ad::Var>;

  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  const ModelLayout& layout() const { return layout_; }

  GraphInputs prepare(ad::Tape<T>& tape, const Molecule& mol) const;

  // s = embedding row, v = 0, t = 0. Throws UnknownElement.
  AtomState embed(ad::Tape<T>& tape, Params p, const GraphInputs& g) const;

  // E x psi_width: |v_i|, |v_j|, <v_i, v_j>, |t_i|_F, |t_j|_F, tr t_i, tr t_j
  // per channel (tensor slots only with a tensor channel).
  ad::Var invariant_summaries(ad::Tape<T>& tape, const GraphInputs& g, const AtomState& st) const;

  ad::Var scalar_messages(ad::Tape<T>& tape, Params p, int layer, const GraphInputs& g,
                          const AtomState& st) const;
  ad::Var scalar_update(ad::Tape<T>& tape, Params p, int layer, const GraphInputs& g, const AtomState& st) const;

  ad::Var vector_messages(ad::Tape<T>& tape, Params p, int layer, const GraphInputs& g,
                          const AtomState& st) const;
  ad::Var vector_update(ad::Tape<T>& tape, Params p, int layer, const GraphInputs& g, const AtomState& st) const;

  // Projected bases of the enabled branches (disabled ones are invalid Vars).
  TensorBases tensor_bases(ad::Tape<T>& tape, Params p, int layer, const GraphInputs& g,
                           const AtomState& st) const;
  ad::Var tensor_update(ad::Tape<T>& tape, Params p, int layer, const GraphInputs& g, const AtomState& st) const;

  ad::Var readout(ad::Tape<T>& tape, Params p, const GraphInputs& g, const AtomState& st) const;

  ForwardResult forward(ad::Tape<T>& tape, Params p, const Molecule& mol, bool keep_states = false) const;

  // Inference without recording.
  Mat3 predict(const Parameters<T>& params, const Molecule& mol) const;

 private:
  ad::Var mlp(ad::Tape<T>& tape, Params p, const MlpIds& ids, ad::Var x) const;
  ad::Var linear(ad::Tape<T>& tape, Params p, const ParamLayout::Linear& ids, ad::Var x) const;
  ad::Var project(ad::Tape<T>& tape, ad::Var basis) const;
  ad::Var edge_inputs(ad::Tape<T>& tape, const GraphInputs& g, ad::Var s) const;
  T inv_neighbors() const { return static_cast<T>(1.0 / cfg_.avg_neighbors); }

  ModelConfig cfg_;
  ModelLayout layout_;
};

extern template class Model<float>;
extern template class Model<double>;

Mat3 to_mat3(std::span<const double> nine);
Mat3 to_mat3(std::span<const float> nine);

}  // namespace tcnet
