#include "tcnet/parameters.hpp"

#include <cmath>

#include "tcnet/errors.hpp"

namespace tcnet {

int ParamLayout::add(std::string name, int rows, int cols, InitKind init) {
  if (rows < 1 || cols < 1) throw ConfigError("parameter '" + name + "' has an empty shape");
  if (find(name) >= 0) throw ConfigError("duplicate parameter name '" + name + "'");
  specs_.push_back({std::move(name), rows, cols, init});
  return static_cast<int>(specs_.size()) - 1;
}

ParamLayout::Linear ParamLayout::add_linear(const std::string& name, int in, int out, bool bias, InitKind init) {
  Linear l;
  l.weight = add(name + ".weight", in, out, init);
  if (bias) l.bias = add(name + ".bias", 1, out, InitKind::kZero);
  return l;
}

std::int64_t ParamLayout::count() const {
  std::int64_t n = 0;
  for (const ParamSpec& s : specs_) n += s.size();
  return n;
}

int ParamLayout::find(const std::string& name) const {
  for (std::size_t k = 0; k < specs_.size(); ++k)
    if (specs_[k].name == name) return static_cast<int>(k);
  return -1;
}

Parameters<float> init_parameters(const ParamLayout& layout, Rng& rng) {
  Parameters<float> p;
  for (const ParamSpec& s : layout.specs()) {
    ad::Matrix<float> m(s.rows, s.cols);
    double bound = 0.0;
    switch (s.init) {
      case InitKind::kZero: break;
      case InitKind::kFanIn: bound = std::sqrt(3.0 / s.rows); break;
      case InitKind::kHead: bound = 0.1 * std::sqrt(3.0 / s.rows); break;
      case InitKind::kEmbedding: bound = std::sqrt(3.0); break;
    }
    if (bound > 0.0)
      for (float& x : m.data) x = static_cast<float>(rng.uniform(-bound, bound));
    p.tensors.push_back(std::move(m));
  }
  return p;
}

}  // namespace tcnet
