#include "tcnet/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "tcnet/errors.hpp"

namespace tcnet {

namespace {

MlpIds add_mlp(ParamLayout& layout, const std::string& name, int in, int hidden, int out,
               InitKind out_init = InitKind::kFanIn) {
  MlpIds ids;
  ids.in = layout.add_linear(name + ".0", in, hidden, true);
  ids.out = layout.add_linear(name + ".1", hidden, out, true, out_init);
  return ids;
}

template <class T>
constexpr std::array<T, 9> kIdentity9{1, 0, 0, 0, 1, 0, 0, 0, 1};

template <class T>
constexpr std::array<T, 3> kOnes3{1, 1, 1};

}  // namespace

ModelLayout make_layout(const ModelConfig& cfg) {
  cfg.validate();
  const int cs = cfg.scalar_channels;
  const int cv = cfg.vector_channels;
  const int ct = cfg.has_tensor_channel() ? cfg.tensor_channels : 0;
  const int h = cfg.hidden;

  ModelLayout L;
  L.psi_width = 3 * cv + 4 * ct;
  L.scalar_message_in = 2 * cs + cfg.rbf_count + L.psi_width + (cfg.rv_trace_feedback ? ct : 0);
  L.edge_in = 2 * cs + cfg.rbf_count;

  L.embedding = L.params.add("embedding", static_cast<int>(kSupportedElements.size()), cs, InitKind::kEmbedding);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    LayerIds ids;
    ids.phi_s = add_mlp(L.params, pre + "phi_s", L.scalar_message_in, h, cs);
    ids.phi_upd = add_mlp(L.params, pre + "phi_upd", 2 * cs, h, cs);
    ids.edge_v = add_mlp(L.params, pre + "edge_v", L.edge_in, h, 3 * cv);
    ids.w_mix = L.params.add(pre + "w_mix", cv, cv, InitKind::kFanIn);
    ids.v_gate = add_mlp(L.params, pre + "v_gate", cs, h, cv);
    if (ct > 0) {
      if (cfg.branch_rv || cfg.branch_vv) ids.w_u = L.params.add(pre + "w_u", cv, ct, InitKind::kFanIn);
      if (cfg.branch_vv) ids.w_w = L.params.add(pre + "w_w", cv, ct, InitKind::kFanIn);
      ids.edge_t = add_mlp(L.params, pre + "edge_t", L.edge_in, h, cfg.branch_count() * ct);
      if (cfg.use_lora) {
        ids.lora_a = L.params.add(pre + "lora_a", ct, cfg.lora_rank, InitKind::kFanIn);
        ids.lora_b = L.params.add(pre + "lora_b", cfg.lora_rank, ct, InitKind::kFanIn);
      }
      ids.t_gate = add_mlp(L.params, pre + "t_gate", cs, h, ct);
    }
    L.layers.push_back(ids);
  }
  L.iso_head = L.params.add_linear("readout.iso", cs, 1, true, InitKind::kHead);
  if (ct > 0)
    L.readout_gate = add_mlp(L.params, "readout.gate", cs, h, ct, InitKind::kHead);
  else
    L.w_nu = L.params.add("readout.w_nu", cv, 1, InitKind::kHead);
  return L;
}

std::int64_t param_count(const ModelConfig& cfg) { return make_layout(cfg).params.count(); }

int match_hidden_width(ModelConfig cfg, std::int64_t target, int max_hidden) {
  cfg.hidden = 1;
  const std::int64_t c1 = param_count(cfg);
  cfg.hidden = 2;
  const std::int64_t slope = param_count(cfg) - c1;
  if (slope <= 0) return 1;
  const double h = 1.0 + double(target - c1) / double(slope);
  return std::clamp(static_cast<int>(std::lround(h)), 1, max_hidden);
}

Mat3 to_mat3(std::span<const double> nine) {
  if (nine.size() != 9) throw ShapeMismatch("to_mat3: expected 9 values");
  Mat3 m;
  std::copy(nine.begin(), nine.end(), m.m.begin());
  return m;
}

Mat3 to_mat3(std::span<const float> nine) {
  if (nine.size() != 9) throw ShapeMismatch("to_mat3: expected 9 values");
  Mat3 m;
  for (std::size_t k = 0; k < 9; ++k) m.m[k] = nine[k];
  return m;
}

template <class T>
Model<T>::Model(const ModelConfig& cfg) : cfg_(cfg), layout_(make_layout(cfg)) {}

template <class T>
ad::Var Model<T>::linear(ad::Tape<T>& tape, Params p, const ParamLayout::Linear& ids, ad::Var x) const {
  ad::Var y = tape.matmul(x, p[ids.weight]);
  if (ids.bias >= 0) y = tape.add(y, p[ids.bias]);
  return y;
}

template <class T>
ad::Var Model<T>::mlp(ad::Tape<T>& tape, Params p, const MlpIds& ids, ad::Var x) const {
  return linear(tape, p, ids.out, tape.silu(linear(tape, p, ids.in, x)));
}

template <class T>
ad::Var Model<T>::project(ad::Tape<T>& tape, ad::Var basis) const {
  if (cfg_.use_tl) return tape.traceless3(basis);
  if (cfg_.use_sym) return tape.sym3(basis);
  return basis;
}

template <class T>
ad::Var Model<T>::edge_inputs(ad::Tape<T>& tape, const GraphInputs& g, ad::Var s) const {
  const std::array<ad::Var, 3> parts{tape.gather_rows(s, g.dst, 1), tape.gather_rows(s, g.src, 1), g.rbf};
  return tape.concat_cols(parts);
}

template <class T>
GraphInputs Model<T>::prepare(ad::Tape<T>& tape, const Molecule& mol) const {
  validate(mol);
  const MolecularGraph graph = build_graph(mol, cfg_.cutoff, cfg_.rbf_count);
  GraphInputs g;
  g.n_atoms = graph.n_atoms;
  g.n_edges = static_cast<int>(graph.edges.size());
  const int k = cfg_.rbf_count;
  ad::Matrix<T> rbf(g.n_edges, k), env(g.n_edges, 1), rhat(3 * g.n_edges, 1);
  for (int e = 0; e < g.n_edges; ++e) {
    const EdgeFeatures& ef = graph.edges[e];
    g.src.push_back(ef.src);
    g.dst.push_back(ef.dst);
    for (int q = 0; q < k; ++q) rbf(e, q) = static_cast<T>(ef.rbf[q]);
    env(e, 0) = static_cast<T>(ef.envelope);
    for (int a = 0; a < 3; ++a) rhat(3 * e + a, 0) = static_cast<T>(ef.rhat[a]);
  }
  Vec3 centroid{0, 0, 0};
  for (const Vec3& x : mol.positions)
    for (int a = 0; a < 3; ++a) centroid[a] += x[a] / static_cast<double>(g.n_atoms);
  ad::Matrix<T> rel(3 * g.n_atoms, 1);
  for (int i = 0; i < g.n_atoms; ++i)
    for (int a = 0; a < 3; ++a) rel(3 * i + a, 0) = static_cast<T>(mol.positions[i][a] - centroid[a]);
  g.pool.assign(static_cast<std::size_t>(g.n_atoms), 0);
  for (int z : mol.atomic_numbers) g.z_index.push_back(element_index(z));
  g.rbf = tape.constant(std::move(rbf));
  g.env = tape.constant(std::move(env));
  g.rhat = tape.constant(std::move(rhat));
  g.rel_pos = tape.constant(std::move(rel));
  return g;
}

template <class T>
AtomState Model<T>::embed(ad::Tape<T>& tape, Params p, const GraphInputs& g) const {
  AtomState st;
  st.s = tape.gather_rows(p[layout_.embedding], g.z_index, 1);
  st.v = tape.constant(ad::Matrix<T>(3 * g.n_atoms, cfg_.vector_channels));
  if (cfg_.has_tensor_channel()) st.t = tape.constant(ad::Matrix<T>(9 * g.n_atoms, cfg_.tensor_channels));
  return st;
}

template <class T>
ad::Var Model<T>::invariant_summaries(ad::Tape<T>& tape, const GraphInputs& g, const AtomState& st) const {
  std::vector<ad::Var> parts;
  const ad::Var nv = tape.block_norm(st.v, 3);
  parts.push_back(tape.gather_rows(nv, g.dst, 1));
  parts.push_back(tape.gather_rows(nv, g.src, 1));
  const ad::Var vi = tape.gather_rows(st.v, g.dst, 3);
  const ad::Var vj = tape.gather_rows(st.v, g.src, 3);
  parts.push_back(tape.block_map(tape.mul(vi, vj), 3, 1, kOnes3<T>));
  if (cfg_.has_tensor_channel()) {
    const ad::Var nt = tape.block_norm(st.t, 9);
    const ad::Var tr = tape.trace3(st.t);
    parts.push_back(tape.gather_rows(nt, g.dst, 1));
    parts.push_back(tape.gather_rows(nt, g.src, 1));
    parts.push_back(tape.gather_rows(tr, g.dst, 1));
    parts.push_back(tape.gather_rows(tr, g.src, 1));
  }
  return tape.concat_cols(parts);
}

template <class T>
ad::Var Model<T>::scalar_messages(ad::Tape<T>& tape, Params p, int layer, const GraphInputs& g,
                                  const AtomState& st) const {
  const LayerIds& ids = layout_.layers.at(layer);
  std::vector<ad::Var> parts{tape.gather_rows(st.s, g.dst, 1), tape.gather_rows(st.s, g.src, 1), g.rbf,
                             invariant_summaries(tape, g, st)};
  if (cfg_.rv_trace_feedback) {
    // tr(rhat (x) u_j) = rhat . u_j
    const ad::Var uj = tape.gather_rows(tape.matmul(st.v, p[ids.w_u]), g.src, 3);
    parts.push_back(tape.block_map(tape.mul(uj, g.rhat), 3, 1, kOnes3<T>));
  }
  return tape.mul(mlp(tape, p, ids.phi_s, tape.concat_cols(parts)), g.env);
}

template <class T>
ad::Var Model<T>::scalar_update(ad::Tape<T>& tape, Params p, int layer, const GraphInputs& g,
                                const AtomState& st) const {
  const LayerIds& ids = layout_.layers.at(layer);
  const ad::Var agg = tape.scale(tape.scatter_add_rows(scalar_messages(tape, p, layer, g, st), g.dst, g.n_atoms, 1),
                                 inv_neighbors());
  const std::array<ad::Var, 2> in{st.s, agg};
  return tape.add(st.s, mlp(tape, p, ids.phi_upd, tape.concat_cols(in)));
}

template <class T>
ad::Var Model<T>::vector_messages(ad::Tape<T>& tape, Params p, int layer, const GraphInputs& g,
                                  const AtomState& st) const {
  const LayerIds& ids = layout_.layers.at(layer);
  const int cv = cfg_.vector_channels;
  const ad::Var o = mlp(tape, p, ids.edge_v, edge_inputs(tape, g, st.s));
  const ad::Var a = tape.slice_cols(o, 0, cv);
  const ad::Var c = tape.slice_cols(o, cv, 2 * cv);
  const ad::Var gate = tape.mul(tape.sigmoid(tape.slice_cols(o, 2 * cv, 3 * cv)), g.env);
  const ad::Var dir = tape.mul(tape.repeat_rows(a, 3), g.rhat);
  const ad::Var vj = tape.gather_rows(tape.matmul(st.v, p[ids.w_mix]), g.src, 3);
  const ad::Var mix = tape.mul(tape.repeat_rows(c, 3), vj);
  return tape.mul(tape.add(dir, mix), tape.repeat_rows(gate, 3));
}

template <class T>
ad::Var Model<T>::vector_update(ad::Tape<T>& tape, Params p, int layer, const GraphInputs& g,
                                const AtomState& st) const {
  const LayerIds& ids = layout_.layers.at(layer);
  const ad::Var agg = tape.scale(tape.scatter_add_rows(vector_messages(tape, p, layer, g, st), g.dst, g.n_atoms, 3),
                                 inv_neighbors());
  const ad::Var gate = tape.repeat_rows(tape.sigmoid(mlp(tape, p, ids.v_gate, st.s)), 3);
  return tape.add(st.v, tape.mul(agg, gate));
}

template <class T>
TensorBases Model<T>::tensor_bases(ad::Tape<T>& tape, Params p, int layer, const GraphInputs& g,
                                   const AtomState& st) const {
  const LayerIds& ids = layout_.layers.at(layer);
  TensorBases b;
  if (cfg_.branch_rr) b.rr = project(tape, tape.dyadic(g.rhat, g.rhat));
  if (cfg_.branch_rv || cfg_.branch_vv) {
    const ad::Var uj = tape.gather_rows(tape.matmul(st.v, p[ids.w_u]), g.src, 3);
    if (cfg_.branch_rv) b.rv = project(tape, tape.dyadic(g.rhat, uj));
    if (cfg_.branch_vv) {
      const ad::Var wj = tape.gather_rows(tape.matmul(st.v, p[ids.w_w]), g.src, 3);
      b.vv = project(tape, tape.dyadic(uj, wj));
    }
  }
  return b;
}

template <class T>
ad::Var Model<T>::tensor_update(ad::Tape<T>& tape, Params p, int layer, const GraphInputs& g,
                                const AtomState& st) const {
  const LayerIds& ids = layout_.layers.at(layer);
  const int ct = cfg_.tensor_channels;
  const ad::Var coef = tape.mul(mlp(tape, p, ids.edge_t, edge_inputs(tape, g, st.s)), g.env);
  const TensorBases bases = tensor_bases(tape, p, layer, g, st);
  ad::Var msg;
  int slot = 0;
  for (const ad::Var basis : {bases.rr, bases.rv, bases.vv}) {
    if (!basis.valid()) continue;
    const ad::Var c = tape.repeat_rows(tape.slice_cols(coef, slot * ct, (slot + 1) * ct), 9);
    const ad::Var m = tape.mul(c, basis);
    msg = msg.valid() ? tape.add(msg, m) : m;
    ++slot;
  }
  ad::Var agg = tape.scale(tape.scatter_add_rows(msg, g.dst, g.n_atoms, 9), inv_neighbors());
  if (cfg_.use_lora) agg = tape.add(agg, tape.matmul(tape.matmul(agg, p[ids.lora_a]), p[ids.lora_b]));
  const ad::Var gate = tape.repeat_rows(tape.sigmoid(mlp(tape, p, ids.t_gate, st.s)), 9);
  return tape.add(st.t, tape.mul(agg, gate));
}

template <class T>
ad::Var Model<T>::readout(ad::Tape<T>& tape, Params p, const GraphInputs& g, const AtomState& st) const {
  const ad::Var iso = tape.block_map(linear(tape, p, layout_.iso_head, st.s), 1, 9, kIdentity9<T>);
  ad::Var aniso;
  if (cfg_.has_tensor_channel()) {
    const ad::Var gates = tape.repeat_rows(mlp(tape, p, layout_.readout_gate, st.s), 9);
    aniso = tape.sym3(tape.sum_cols(tape.mul(st.t, gates)));
  } else {
    const ad::Var nu = tape.matmul(st.v, p[layout_.w_nu]);
    aniso = tape.sym3(tape.dyadic(nu, g.rel_pos));
  }
  return tape.scatter_add_rows(tape.add(iso, aniso), g.pool, 1, 9);
}

template <class T>
ForwardResult Model<T>::forward(ad::Tape<T>& tape, Params p, const Molecule& mol, bool keep_states) const {
  if (p.size() != layout_.params.size())
    throw ShapeMismatch("forward: expected " + std::to_string(layout_.params.size()) + " parameter blocks, got " +
                        std::to_string(p.size()));
  const GraphInputs g = prepare(tape, mol);
  AtomState st = embed(tape, p, g);
  ForwardResult out;
  if (keep_states) out.states.push_back(st);
  for (int l = 0; l < cfg_.layers; ++l) {
    st.s = scalar_update(tape, p, l, g, st);
    st.v = vector_update(tape, p, l, g, st);
    if (cfg_.has_tensor_channel()) st.t = tensor_update(tape, p, l, g, st);
    if (keep_states) out.states.push_back(st);
  }
  out.alpha = readout(tape, p, g, st);
  return out;
}

template <class T>
Mat3 Model<T>::predict(const Parameters<T>& params, const Molecule& mol) const {
  ad::Tape<T> tape(false);
  const std::vector<ad::Var> vars = bind_parameters(tape, params);
  const ForwardResult r = forward(tape, vars, mol);
  return to_mat3(std::span<const T>(tape.value(r.alpha).data));
}

template class Model<float>;
template class Model<double>;

}  // namespace tcnet
