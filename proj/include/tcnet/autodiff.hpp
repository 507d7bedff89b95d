#pragma once

// Reverse-mode differentiation over dense row-major matrices.
//
// Every op computes its value eagerly and, when the tape is recording,
// appends a closure that pushes the node's adjoint to its parents. Vector
// and tensor features are stored as row blocks: a set of B 3-vectors with C
// channels is a (3B x C) matrix, a set of B 3x3 tensors is (9B x C) with the
// nine components of each tensor in row-major order.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "tcnet/errors.hpp"

namespace tcnet::ad {

template <class T>
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(int r, int c, T fill = T(0))
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

  T& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  T operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <class T>
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Leaf that never receives an adjoint.
  Var constant(Matrix<T> value);
  // Leaf whose adjoint is accumulated (a trainable parameter).
  Var leaf(Matrix<T> value);

  const Matrix<T>& value(Var v) const { return nodes_.at(v.id).value; }
  // Adjoint after backward(); empty matrix when the node is off the loss path.
  const Matrix<T>& grad(Var v) const { return nodes_.at(v.id).grad; }
  int rows(Var v) const { return value(v).rows; }
  int cols(Var v) const { return value(v).cols; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Requires a 1x1 loss; throws NonScalarLoss otherwise.
  void backward(Var loss);

  // Elementwise ops broadcast the second operand along any axis of extent 1.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, T s);
  Var matmul(Var a, Var b);
  Var transpose(Var a);

  Var silu(Var a);
  Var sigmoid(Var a);
  Var softplus(Var a);

  Var concat_cols(std::span<const Var> parts);
  Var slice_cols(Var a, int begin, int end);

  Var sum_cols(Var a);  // rows x 1
  Var sum_all(Var a);   // 1 x 1

  // out block k = a block index[k]; blocks are `block` consecutive rows.
  Var gather_rows(Var a, std::span<const int> index, int block);
  // out block index[k] += a block k, with n_out output blocks.
  Var scatter_add_rows(Var a, std::span<const int> index, int n_out, int block);
  // Each row repeated `times` consecutively.
  Var repeat_rows(Var a, int times);

  // Linear map inside row blocks: out[b*ob + o] = sum_i m[o*ib + i] * a[b*ib + i].
  Var block_map(Var a, int in_block, int out_block, std::span<const T> m);
  // Euclidean norm of every (block x 1) column segment; zero adjoint at zero norm.
  Var block_norm(Var a, int block);
  // Per 3-row block: out[9b + 3i + j] = u[3b + i] * w[3b + j]; a 1-column operand
  // is broadcast across the other's columns.
  Var dyadic(Var u, Var w);
  // Frobenius norm of the whole matrix; zero adjoint at zero.
  Var frob_norm(Var a);

  // 3x3 conveniences over 9-row blocks.
  Var trace3(Var a);
  Var transpose3(Var a);
  Var sym3(Var a);
  Var traceless3(Var a);

 private:
  using Backward = std::function<void(Tape&, int)>;
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    Backward backward;
    bool requires_grad = false;
  };

  Var push(Matrix<T> value, std::initializer_list<Var> parents, Backward fn);
  Matrix<T>& grad_ref(int id);
  bool needs(Var v) const { return nodes_[v.id].requires_grad; }
  const Matrix<T>& val(int id) const { return nodes_[id].value; }
  const Matrix<T>& g(int id) const { return nodes_[id].grad; }
  void check(Var v) const;

  bool record_;
  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace tcnet::ad
