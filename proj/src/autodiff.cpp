#include "tcnet/autodiff.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>

namespace tcnet::ad {

namespace {

std::string shape_str(int r, int c) { return std::to_string(r) + "x" + std::to_string(c); }

template <class T>
T sigmoid_of(T x) {
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <class T>
T softplus_of(T x) {
  if (x > T(20)) return x;
  if (x < T(-20)) return std::exp(x);
  return std::log1p(std::exp(x));
}

// Second operand broadcast along axes of extent 1.
struct Broadcast {
  int rows, cols;
  bool row_bcast, col_bcast;
};

template <class T>
Broadcast broadcast_shape(const Matrix<T>& a, const Matrix<T>& b, const char* op) {
  const bool rb = b.rows == 1 && a.rows != 1;
  const bool cb = b.cols == 1 && a.cols != 1;
  if ((b.rows != a.rows && !rb) || (b.cols != a.cols && !cb))
    throw ShapeMismatch(std::string(op) + ": cannot broadcast " + shape_str(b.rows, b.cols) +
                        " onto " + shape_str(a.rows, a.cols));
  return {a.rows, a.cols, rb, cb};
}

// True when `a` has an extent-1 axis where `b` does not (empty matrices included).
template <class T>
bool broadcasts_onto(const Matrix<T>& a, const Matrix<T>& b) {
  return (a.rows == 1 && b.rows != 1) || (a.cols == 1 && b.cols != 1);
}

template <class T>
void reduce_into(Matrix<T>& dst, const Matrix<T>& src, const Broadcast& bc, T sign) {
  if (!bc.row_bcast && !bc.col_bcast) {
    for (std::size_t k = 0; k < src.data.size(); ++k) dst.data[k] += sign * src.data[k];
    return;
  }
  for (int r = 0; r < src.rows; ++r)
    for (int c = 0; c < src.cols; ++c)
      dst(bc.row_bcast ? 0 : r, bc.col_bcast ? 0 : c) += sign * src(r, c);
}

}  // namespace

template <class T>
void Tape<T>::check(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw ShapeMismatch("variable does not belong to this tape");
}

template <class T>
Var Tape<T>::push(Matrix<T> value, std::initializer_list<Var> parents, Backward fn) {
  bool req = false;
  if (record_)
    for (Var p : parents) req = req || nodes_[p.id].requires_grad;
  Node n;
  n.value = std::move(value);
  n.requires_grad = req;
  if (req) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <class T>
Matrix<T>& Tape<T>::grad_ref(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix<T>(n.value.rows, n.value.cols);
  return n.grad;
}

template <class T>
Var Tape<T>::constant(Matrix<T> value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <class T>
Var Tape<T>::leaf(Matrix<T> value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = record_;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <class T>
void Tape<T>::backward(Var loss) {
  check(loss);
  const Matrix<T>& lv = nodes_[loss.id].value;
  if (lv.rows != 1 || lv.cols != 1)
    throw NonScalarLoss("backward: loss has shape " + shape_str(lv.rows, lv.cols));
  for (Node& n : nodes_) n.grad = Matrix<T>();
  if (!nodes_[loss.id].requires_grad) return;
  grad_ref(loss.id).data[0] = T(1);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.backward && !n.grad.empty()) n.backward(*this, id);
  }
}

template <class T>
Var Tape<T>::add(Var a, Var b) {
  check(a);
  check(b);
  if (broadcasts_onto(val(a.id), val(b.id))) std::swap(a, b);
  const Matrix<T>& A = val(a.id);
  const Matrix<T>& B = val(b.id);
  const Broadcast bc = broadcast_shape(A, B, "add");
  Matrix<T> out = A;
  if (!bc.row_bcast && !bc.col_bcast) {
    for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] += B.data[k];
  } else {
    for (int r = 0; r < out.rows; ++r)
      for (int c = 0; c < out.cols; ++c)
        out(r, c) += B(bc.row_bcast ? 0 : r, bc.col_bcast ? 0 : c);
  }
  return push(std::move(out), {a, b}, [a, b, bc](Tape& t, int self) {
    const Matrix<T>& G = t.g(self);
    if (t.needs(a)) reduce_into(t.grad_ref(a.id), G, Broadcast{G.rows, G.cols, false, false}, T(1));
    if (t.needs(b)) reduce_into(t.grad_ref(b.id), G, bc, T(1));
  });
}

template <class T>
Var Tape<T>::sub(Var a, Var b) {
  check(a);
  check(b);
  const Matrix<T>& A = val(a.id);
  const Matrix<T>& B = val(b.id);
  const Broadcast bc = broadcast_shape(A, B, "sub");
  Matrix<T> out = A;
  for (int r = 0; r < out.rows; ++r)
    for (int c = 0; c < out.cols; ++c) out(r, c) -= B(bc.row_bcast ? 0 : r, bc.col_bcast ? 0 : c);
  return push(std::move(out), {a, b}, [a, b, bc](Tape& t, int self) {
    const Matrix<T>& G = t.g(self);
    if (t.needs(a)) reduce_into(t.grad_ref(a.id), G, Broadcast{G.rows, G.cols, false, false}, T(1));
    if (t.needs(b)) reduce_into(t.grad_ref(b.id), G, bc, T(-1));
  });
}

template <class T>
Var Tape<T>::mul(Var a, Var b) {
  check(a);
  check(b);
  if (broadcasts_onto(val(a.id), val(b.id))) std::swap(a, b);
  const Matrix<T>& A = val(a.id);
  const Matrix<T>& B = val(b.id);
  const Broadcast bc = broadcast_shape(A, B, "mul");
  Matrix<T> out(A.rows, A.cols);
  if (!bc.row_bcast && !bc.col_bcast) {
    for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] = A.data[k] * B.data[k];
  } else if (bc.col_bcast && !bc.row_bcast) {
    for (int r = 0; r < out.rows; ++r) {
      const T s = B.data[r];
      const T* ar = &A.data[static_cast<std::size_t>(r) * A.cols];
      T* orow = &out.data[static_cast<std::size_t>(r) * A.cols];
      for (int c = 0; c < out.cols; ++c) orow[c] = ar[c] * s;
    }
  } else {
    for (int r = 0; r < out.rows; ++r)
      for (int c = 0; c < out.cols; ++c)
        out(r, c) = A(r, c) * B(bc.row_bcast ? 0 : r, bc.col_bcast ? 0 : c);
  }
  return push(std::move(out), {a, b}, [a, b, bc](Tape& t, int self) {
    const Matrix<T>& G = t.g(self);
    const Matrix<T>& A = t.val(a.id);
    const Matrix<T>& B = t.val(b.id);
    const bool plain = !bc.row_bcast && !bc.col_bcast;
    if (t.needs(a)) {
      Matrix<T>& GA = t.grad_ref(a.id);
      if (plain) {
        for (std::size_t k = 0; k < G.data.size(); ++k) GA.data[k] += G.data[k] * B.data[k];
      } else {
        for (int r = 0; r < G.rows; ++r)
          for (int c = 0; c < G.cols; ++c)
            GA(r, c) += G(r, c) * B(bc.row_bcast ? 0 : r, bc.col_bcast ? 0 : c);
      }
    }
    if (t.needs(b)) {
      Matrix<T>& GB = t.grad_ref(b.id);
      if (plain) {
        for (std::size_t k = 0; k < G.data.size(); ++k) GB.data[k] += G.data[k] * A.data[k];
      } else {
        for (int r = 0; r < G.rows; ++r)
          for (int c = 0; c < G.cols; ++c)
            GB(bc.row_bcast ? 0 : r, bc.col_bcast ? 0 : c) += G(r, c) * A(r, c);
      }
    }
  });
}

template <class T>
Var Tape<T>::scale(Var a, T s) {
  check(a);
  Matrix<T> out = val(a.id);
  for (T& x : out.data) x *= s;
  return push(std::move(out), {a}, [a, s](Tape& t, int self) {
    const Matrix<T>& G = t.g(self);
    Matrix<T>& GA = t.grad_ref(a.id);
    for (std::size_t k = 0; k < G.data.size(); ++k) GA.data[k] += s * G.data[k];
  });
}

template <class T>
Var Tape<T>::matmul(Var a, Var b) {
  check(a);
  check(b);
  const Matrix<T>& A = val(a.id);
  const Matrix<T>& B = val(b.id);
  if (A.cols != B.rows)
    throw ShapeMismatch("matmul: " + shape_str(A.rows, A.cols) + " * " + shape_str(B.rows, B.cols));
  const int m = A.rows, k = A.cols, n = B.cols;
  Matrix<T> out(m, n);
  for (int i = 0; i < m; ++i) {
    T* orow = &out.data[static_cast<std::size_t>(i) * n];
    const T* arow = &A.data[static_cast<std::size_t>(i) * k];
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      const T* brow = &B.data[static_cast<std::size_t>(p) * n];
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return push(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, int self) {
    const Matrix<T>& G = t.g(self);
    const Matrix<T>& A = t.val(a.id);
    const Matrix<T>& B = t.val(b.id);
    if (t.needs(a)) {
      Matrix<T>& GA = t.grad_ref(a.id);
      for (int i = 0; i < m; ++i) {
        const T* grow = &G.data[static_cast<std::size_t>(i) * n];
        T* garow = &GA.data[static_cast<std::size_t>(i) * k];
        for (int p = 0; p < k; ++p) {
          const T* brow = &B.data[static_cast<std::size_t>(p) * n];
          T acc = T(0);
          for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
          garow[p] += acc;
        }
      }
    }
    if (t.needs(b)) {
      Matrix<T>& GB = t.grad_ref(b.id);
      for (int i = 0; i < m; ++i) {
        const T* grow = &G.data[static_cast<std::size_t>(i) * n];
        const T* arow = &A.data[static_cast<std::size_t>(i) * k];
        for (int p = 0; p < k; ++p) {
          const T av = arow[p];
          if (av == T(0)) continue;
          T* gbrow = &GB.data[static_cast<std::size_t>(p) * n];
          for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

template <class T>
Var Tape<T>::transpose(Var a) {
  check(a);
  const Matrix<T>& A = val(a.id);
  Matrix<T> out(A.cols, A.rows);
  for (int r = 0; r < A.rows; ++r)
    for (int c = 0; c < A.cols; ++c) out(c, r) = A(r, c);
  return push(std::move(out), {a}, [a](Tape& t, int self) {
    const Matrix<T>& G = t.g(self);
    Matrix<T>& GA = t.grad_ref(a.id);
    for (int r = 0; r < GA.rows; ++r)
      for (int c = 0; c < GA.cols; ++c) GA(r, c) += G(c, r);
  });
}

template <class T>
Var Tape<T>::silu(Var a) {
  check(a);
  Matrix<T> out = val(a.id);
  for (T& x : out.data) x = x * sigmoid_of(x);
  return push(std::move(out), {a}, [a](Tape& t, int self) {
    const Matrix<T>& G = t.g(self);
    const Matrix<T>& A = t.val(a.id);
    Matrix<T>& GA = t.grad_ref(a.id);
    for (std::size_t k = 0; k < G.data.size(); ++k) {
      const T x = A.data[k];
      const T s = sigmoid_of(x);
      GA.data[k] += G.data[k] * s * (T(1) + x * (T(1) - s));
    }
  });
}

template <class T>
Var Tape<T>::sigmoid(Var a) {
  check(a);
  Matrix<T> out = val(a.id);
  for (T& x : out.data) x = sigmoid_of(x);
  return push(std::move(out), {a}, [a](Tape& t, int self) {
    const Matrix<T>& G = t.g(self);
    const Matrix<T>& Y = t.val(self);
    Matrix<T>& GA = t.grad_ref(a.id);
    for (std::size_t k = 0; k < G.data.size(); ++k)
      GA.data[k] += G.data[k] * Y.data[k] * (T(1) - Y.data[k]);
  });
}

template <class T>
Var Tape<T>::softplus(Var a) {
  check(a);
  Matrix<T> out = val(a.id);
  for (T& x : out.data) x = softplus_of(x);
  return push(std::move(out), {a}, [a](Tape& t, int self) {
    const Matrix<T>& G = t.g(self);
    const Matrix<T>& A = t.val(a.id);
    Matrix<T>& GA = t.grad_ref(a.id);
    for (std::size_t k = 0; k < G.data.size(); ++k) GA.data[k] += G.data[k] * sigmoid_of(A.data[k]);
  });
}

template <class T>
Var Tape<T>::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols: no inputs");
  int rows = -1, cols = 0;
  std::vector<int> offsets;
  for (Var p : parts) {
    check(p);
    const Matrix<T>& P = val(p.id);
    if (rows >= 0 && P.rows != rows)
      throw ShapeMismatch("concat_cols: row mismatch " + std::to_string(P.rows) + " vs " +
                          std::to_string(rows));
    rows = P.rows;
    offsets.push_back(cols);
    cols += P.cols;
  }
  Matrix<T> out(rows, cols);
  for (std::size_t q = 0; q < parts.size(); ++q) {
    const Matrix<T>& P = val(parts[q].id);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < P.cols; ++c) out(r, offsets[q] + c) = P(r, c);
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  bool req = false;
  if (record_)
    for (Var p : ps) req = req || needs(p);
  Node n;
  n.value = std::move(out);
  n.requires_grad = req;
  if (req) {
    n.backward = [ps, offsets](Tape& t, int self) {
      const Matrix<T>& G = t.g(self);
      for (std::size_t q = 0; q < ps.size(); ++q) {
        if (!t.needs(ps[q])) continue;
        Matrix<T>& GP = t.grad_ref(ps[q].id);
        for (int r = 0; r < GP.rows; ++r)
          for (int c = 0; c < GP.cols; ++c) GP(r, c) += G(r, offsets[q] + c);
      }
    };
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <class T>
Var Tape<T>::slice_cols(Var a, int begin, int end) {
  check(a);
  const Matrix<T>& A = val(a.id);
  if (begin < 0 || end > A.cols || begin >= end)
    throw ShapeMismatch("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) +
                        ") outside " + std::to_string(A.cols) + " columns");
  Matrix<T> out(A.rows, end - begin);
  for (int r = 0; r < A.rows; ++r)
    for (int c = begin; c < end; ++c) out(r, c - begin) = A(r, c);
  return push(std::move(out), {a}, [a, begin](Tape& t, int self) {
    const Matrix<T>& G = t.g(self);
    Matrix<T>& GA = t.grad_ref(a.id);
    for (int r = 0; r < G.rows; ++r)
      for (int c = 0; c < G.cols; ++c) GA(r, begin + c) += G(r, c);
  });
}

template <class T>
Var Tape<T>::sum_cols(Var a) {
  check(a);
  const Matrix<T>& A = val(a.id);
  Matrix<T> out(A.rows, 1);
  for (int r = 0; r < A.rows; ++r) {
    T acc = T(0);
    for (int c = 0; c < A.cols; ++c) acc += A(r, c);
    out.data[r] = acc;
  }
  return push(std::move(out), {a}, [a](Tape& t, int self) {
    const Matrix<T>& G = t.g(self);
    Matrix<T>& GA = t.grad_ref(a.id);
    for (int r = 0; r < GA.rows; ++r)
      for (int c = 0; c < GA.cols; ++c) GA(r, c) += G.data[r];
  });
}

template <class T>
Var Tape<T>::sum_all(Var a) {
  check(a);
  T acc = T(0);
  for (T x : val(a.id).data) acc += x;
  return push(Matrix<T>(1, 1, acc), {a}, [a](Tape& t, int self) {
    const T g0 = t.g(self).data[0];
    for (T& x : t.grad_ref(a.id).data) x += g0;
  });
}

template <class T>
Var Tape<T>::gather_rows(Var a, std::span<const int> index, int block) {
  check(a);
  const Matrix<T>& A = val(a.id);
  if (block <= 0 || A.rows % block != 0) throw ShapeMismatch("gather_rows: bad block size");
  const int nblocks = A.rows / block;
  const int cols = A.cols;
  Matrix<T> out(static_cast<int>(index.size()) * block, cols);
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || index[k] >= nblocks) throw ShapeMismatch("gather_rows: index out of range");
    const T* src = &A.data[static_cast<std::size_t>(index[k]) * block * cols];
    std::copy(src, src + static_cast<std::size_t>(block) * cols,
              &out.data[k * static_cast<std::size_t>(block) * cols]);
  }
  std::vector<int> idx(index.begin(), index.end());
  return push(std::move(out), {a}, [a, idx = std::move(idx), block, cols](Tape& t, int self) {
    const Matrix<T>& G = t.g(self);
    Matrix<T>& GA = t.grad_ref(a.id);
    const std::size_t span = static_cast<std::size_t>(block) * cols;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const T* src = &G.data[k * span];
      T* dst = &GA.data[static_cast<std::size_t>(idx[k]) * span];
      for (std::size_t q = 0; q < span; ++q) dst[q] += src[q];
    }
  });
}

template <class T>
Var Tape<T>::scatter_add_rows(Var a, std::span<const int> index, int n_out, int block) {
  check(a);
  const Matrix<T>& A = val(a.id);
  if (block <= 0 || A.rows != static_cast<int>(index.size()) * block)
    throw ShapeMismatch("scatter_add_rows: rows " + std::to_string(A.rows) + " != " +
                        std::to_string(index.size()) + " x block " + std::to_string(block));
  const int cols = A.cols;
  const std::size_t span = static_cast<std::size_t>(block) * cols;
  Matrix<T> out(n_out * block, cols);
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (index[k] < 0 || index[k] >= n_out) throw ShapeMismatch("scatter_add_rows: index out of range");
    const T* src = &A.data[k * span];
    T* dst = &out.data[static_cast<std::size_t>(index[k]) * span];
    for (std::size_t q = 0; q < span; ++q) dst[q] += src[q];
  }
  std::vector<int> idx(index.begin(), index.end());
  return push(std::move(out), {a}, [a, idx = std::move(idx), span](Tape& t, int self) {
    const Matrix<T>& G = t.g(self);
    Matrix<T>& GA = t.grad_ref(a.id);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const T* src = &G.data[static_cast<std::size_t>(idx[k]) * span];
      T* dst = &GA.data[k * span];
      for (std::size_t q = 0; q < span; ++q) dst[q] += src[q];
    }
  });
}

template <class T>
Var Tape<T>::repeat_rows(Var a, int times) {
  check(a);
  if (times <= 0) throw ShapeMismatch("repeat_rows: times must be positive");
  const Matrix<T>& A = val(a.id);
  const int cols = A.cols;
  Matrix<T> out(A.rows * times, cols);
  for (int r = 0; r < A.rows; ++r) {
    const T* src = &A.data[static_cast<std::size_t>(r) * cols];
    for (int k = 0; k < times; ++k)
      std::copy(src, src + cols, &out.data[(static_cast<std::size_t>(r) * times + k) * cols]);
  }
  return push(std::move(out), {a}, [a, times, cols](Tape& t, int self) {
    const Matrix<T>& G = t.g(self);
    Matrix<T>& GA = t.grad_ref(a.id);
    for (int r = 0; r < GA.rows; ++r) {
      T* dst = &GA.data[static_cast<std::size_t>(r) * cols];
      for (int k = 0; k < times; ++k) {
        const T* src = &G.data[(static_cast<std::size_t>(r) * times + k) * cols];
        for (int c = 0; c < cols; ++c) dst[c] += src[c];
      }
    }
  });
}

template <class T>
Var Tape<T>::block_map(Var a, int in_block, int out_block, std::span<const T> m) {
  check(a);
  const Matrix<T>& A = val(a.id);
  if (in_block <= 0 || out_block <= 0 || A.rows % in_block != 0 ||
      m.size() != static_cast<std::size_t>(in_block) * out_block)
    throw ShapeMismatch("block_map: inconsistent block sizes");
  struct Entry {
    int o, i;
    T w;
  };
  std::vector<Entry> nz;
  for (int o = 0; o < out_block; ++o)
    for (int i = 0; i < in_block; ++i)
      if (m[static_cast<std::size_t>(o) * in_block + i] != T(0))
        nz.push_back({o, i, m[static_cast<std::size_t>(o) * in_block + i]});
  const int nb = A.rows / in_block;
  const int cols = A.cols;
  Matrix<T> out(nb * out_block, cols);
  for (int b = 0; b < nb; ++b)
    for (const Entry& e : nz) {
      const T* src = &A.data[(static_cast<std::size_t>(b) * in_block + e.i) * cols];
      T* dst = &out.data[(static_cast<std::size_t>(b) * out_block + e.o) * cols];
      for (int c = 0; c < cols; ++c) dst[c] += e.w * src[c];
    }
  return push(std::move(out), {a},
              [a, nz = std::move(nz), nb, in_block, out_block, cols](Tape& t, int self) {
                const Matrix<T>& G = t.g(self);
                Matrix<T>& GA = t.grad_ref(a.id);
                for (int b = 0; b < nb; ++b)
                  for (const Entry& e : nz) {
                    const T* src = &G.data[(static_cast<std::size_t>(b) * out_block + e.o) * cols];
                    T* dst = &GA.data[(static_cast<std::size_t>(b) * in_block + e.i) * cols];
                    for (int c = 0; c < cols; ++c) dst[c] += e.w * src[c];
                  }
              });
}

template <class T>
Var Tape<T>::block_norm(Var a, int block) {
  check(a);
  const Matrix<T>& A = val(a.id);
  if (block <= 0 || A.rows % block != 0) throw ShapeMismatch("block_norm: bad block size");
  const int nb = A.rows / block;
  const int cols = A.cols;
  Matrix<T> out(nb, cols);
  for (int b = 0; b < nb; ++b)
    for (int k = 0; k < block; ++k)
      for (int c = 0; c < cols; ++c) {
        const T x = A(b * block + k, c);
        out(b, c) += x * x;
      }
  for (T& x : out.data) x = std::sqrt(x);
  return push(std::move(out), {a}, [a, block, nb, cols](Tape& t, int self) {
    const Matrix<T>& G = t.g(self);
    const Matrix<T>& Y = t.val(self);
    const Matrix<T>& A = t.val(a.id);
    Matrix<T>& GA = t.grad_ref(a.id);
    for (int b = 0; b < nb; ++b)
      for (int c = 0; c < cols; ++c) {
        const T n = Y(b, c);
        if (n == T(0)) continue;
        const T s = G(b, c) / n;
        for (int k = 0; k < block; ++k) GA(b * block + k, c) += s * A(b * block + k, c);
      }
  });
}

template <class T>
Var Tape<T>::dyadic(Var u, Var w) {
  check(u);
  check(w);
  const Matrix<T>& U = val(u.id);
  const Matrix<T>& W = val(w.id);
  if (U.rows != W.rows || U.rows % 3 != 0)
    throw ShapeMismatch("dyadic: operands need equal row counts divisible by 3");
  if (U.cols != W.cols && U.cols != 1 && W.cols != 1)
    throw ShapeMismatch("dyadic: column counts " + std::to_string(U.cols) + " and " +
                        std::to_string(W.cols) + " do not broadcast");
  const int cols = std::max(U.cols, W.cols);
  const int nb = U.rows / 3;
  const bool ub = U.cols == 1 && cols != 1;
  const bool wb = W.cols == 1 && cols != 1;
  Matrix<T> out(nb * 9, cols);
  for (int b = 0; b < nb; ++b)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int c = 0; c < cols; ++c)
          out(9 * b + 3 * i + j, c) = U(3 * b + i, ub ? 0 : c) * W(3 * b + j, wb ? 0 : c);
  return push(std::move(out), {u, w}, [u, w, nb, cols, ub, wb](Tape& t, int self) {
    const Matrix<T>& G = t.g(self);
    const Matrix<T>& U = t.val(u.id);
    const Matrix<T>& W = t.val(w.id);
    if (t.needs(u)) {
      Matrix<T>& GU = t.grad_ref(u.id);
      for (int b = 0; b < nb; ++b)
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            for (int c = 0; c < cols; ++c)
              GU(3 * b + i, ub ? 0 : c) += G(9 * b + 3 * i + j, c) * W(3 * b + j, wb ? 0 : c);
    }
    if (t.needs(w)) {
      Matrix<T>& GW = t.grad_ref(w.id);
      for (int b = 0; b < nb; ++b)
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            for (int c = 0; c < cols; ++c)
              GW(3 * b + j, wb ? 0 : c) += G(9 * b + 3 * i + j, c) * U(3 * b + i, ub ? 0 : c);
    }
  });
}

template <class T>
Var Tape<T>::frob_norm(Var a) {
  check(a);
  T acc = T(0);
  for (T x : val(a.id).data) acc += x * x;
  return push(Matrix<T>(1, 1, std::sqrt(acc)), {a}, [a](Tape& t, int self) {
    const T n = t.val(self).data[0];
    if (n == T(0)) return;
    const T s = t.g(self).data[0] / n;
    const Matrix<T>& A = t.val(a.id);
    Matrix<T>& GA = t.grad_ref(a.id);
    for (std::size_t k = 0; k < A.data.size(); ++k) GA.data[k] += s * A.data[k];
  });
}

namespace {

template <class T>
constexpr std::array<T, 9> kTraceRow{1, 0, 0, 0, 1, 0, 0, 0, 1};

template <class T>
std::array<T, 81> transpose_map() {
  std::array<T, 81> m{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m[(3 * i + j) * 9 + (3 * j + i)] = T(1);
  return m;
}

template <class T>
std::array<T, 81> sym_map() {
  std::array<T, 81> m{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      m[(3 * i + j) * 9 + (3 * i + j)] += T(0.5);
      m[(3 * i + j) * 9 + (3 * j + i)] += T(0.5);
    }
  return m;
}

template <class T>
std::array<T, 81> traceless_map() {
  std::array<T, 81> m = sym_map<T>();
  for (int d = 0; d < 3; ++d)
    for (int e = 0; e < 3; ++e) m[(4 * d) * 9 + 4 * e] -= T(1) / T(3);
  return m;
}

}  // namespace

template <class T>
Var Tape<T>::trace3(Var a) {
  return block_map(a, 9, 1, kTraceRow<T>);
}

template <class T>
Var Tape<T>::transpose3(Var a) {
  static const std::array<T, 81> m = transpose_map<T>();
  return block_map(a, 9, 9, m);
}

template <class T>
Var Tape<T>::sym3(Var a) {
  static const std::array<T, 81> m = sym_map<T>();
  return block_map(a, 9, 9, m);
}

template <class T>
Var Tape<T>::traceless3(Var a) {
  static const std::array<T, 81> m = traceless_map<T>();
  return block_map(a, 9, 9, m);
}

template class Tape<float>;
template class Tape<double>;

}  // namespace tcnet::ad
