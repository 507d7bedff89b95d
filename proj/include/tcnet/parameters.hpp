#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcnet/autodiff.hpp"
#include "tcnet/rng.hpp"

namespace tcnet {

enum class InitKind {
  kZero,       // biases
  kFanIn,      // U(-sqrt(3/fan_in), sqrt(3/fan_in))
  kHead,       // kFanIn scaled by 0.1, for the final readout maps
  kEmbedding,  // U(-sqrt(3), sqrt(3))
};

struct ParamSpec {
  std::string name;
  int rows = 0;
  int cols = 0;
  InitKind init = InitKind::kFanIn;

  std::int64_t size() const { return std::int64_t(rows) * cols; }
};

// Ordered list of named parameter blocks.
class ParamLayout {
 public:
  int add(std::string name, int rows, int cols, InitKind init);

  struct Linear {
    int weight = -1;
    int bias = -1;
  };
  // in x out weight, plus a 1 x out bias when `bias`.
  Linear add_linear(const std::string& name, int in, int out, bool bias, InitKind init = InitKind::kFanIn);

  const std::vector<ParamSpec>& specs() const { return specs_; }
  const ParamSpec& spec(int id) const { return specs_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return specs_.size(); }
  // Number of trainable scalars.
  std::int64_t count() const;
  // -1 when absent.
  int find(const std::string& name) const;

 private:
  std::vector<ParamSpec> specs_;
};

// One matrix per layout entry.
template <class T>
struct Parameters {
  std::vector<ad::Matrix<T>> tensors;

  std::size_t size() const { return tensors.size(); }
};

Parameters<float> init_parameters(const ParamLayout& layout, Rng& rng);

template <class T>
Parameters<T> zeros_like(const ParamLayout& layout) {
  Parameters<T> p;
  for (const ParamSpec& s : layout.specs()) p.tensors.emplace_back(s.rows, s.cols);
  return p;
}

template <class To, class From>
Parameters<To> cast_parameters(const Parameters<From>& p) {
  Parameters<To> out;
  out.tensors.reserve(p.tensors.size());
  for (const auto& m : p.tensors) {
    ad::Matrix<To> c(m.rows, m.cols);
    for (std::size_t k = 0; k < m.data.size(); ++k) c.data[k] = static_cast<To>(m.data[k]);
    out.tensors.push_back(std::move(c));
  }
  return out;
}

// Parameters as tape leaves (or plain constants when the tape is not recording).
template <class T>
std::vector<ad::Var> bind_parameters(ad::Tape<T>& tape, const Parameters<T>& p) {
  std::vector<ad::Var> vars;
  vars.reserve(p.tensors.size());
  for (const auto& m : p.tensors) vars.push_back(tape.recording() ? tape.leaf(m) : tape.constant(m));
  return vars;
}

// Adds the adjoints of `vars` into `grads` (entries off the loss path add nothing).
template <class T>
void accumulate_gradients(const ad::Tape<T>& tape, const std::vector<ad::Var>& vars, Parameters<T>& grads) {
  for (std::size_t k = 0; k < vars.size(); ++k) {
    const ad::Matrix<T>& g = tape.grad(vars[k]);
    if (g.empty()) continue;
    auto& dst = grads.tensors[k].data;
    for (std::size_t q = 0; q < dst.size(); ++q) dst[q] += g.data[q];
  }
}

}  // namespace tcnet
