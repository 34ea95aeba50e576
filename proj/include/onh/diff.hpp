#pragma once

// Minimal reverse-mode differentiation over dense row-major f64 matrices.
//
// A Graph is a tape: every op appends a node holding its value and a
// closure that pushes the node's gradient to its inputs. Nodes are created
// in topological order, so backward() is a single reverse sweep. Parameter
// gradients are accumulated into a Gradients buffer aligned with the
// ParamStore, which lets several graphs (one per batch item) run
// independently and be reduced in a fixed order afterwards.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <type_traits>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "onh/error.hpp"

namespace onh::diff {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

template <typename Derived>
std::string shape_string(const Eigen::EigenBase<Derived>& m) {
  return "(" + std::to_string(m.rows()) + ", " + std::to_string(m.cols()) + ")";
}

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// Values are stored as a (shape[0], product(rest)) matrix; 1-D tensors are
// a single row.
struct Tensor {
  Shape shape;
  Matrix values;

  static Tensor zeros(Shape shape) {
    Tensor t;
    t.shape = std::move(shape);
    const auto [r, c] = storage_dims(t.shape);
    t.values = Matrix::Zero(r, c);
    return t;
  }

  static std::pair<Eigen::Index, Eigen::Index> storage_dims(const Shape& shape) {
    if (shape.empty()) return {1, 1};
    if (shape.size() == 1) return {1, static_cast<Eigen::Index>(shape[0])};
    std::size_t cols = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) cols *= shape[i];
    return {static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(cols)};
  }

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
};

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const std::string& what) {
  if (!m.allFinite()) throw NonFiniteError("non-finite value produced by " + what);
}

// Ordered named parameters; serialization order is registration order.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed), rng_(seed) {}

  std::uint64_t seed() const { return seed_; }

  // Weight of a (fan_in -> fan_out) layer, uniform in +-sqrt(6 / (fan_in + fan_out)).
  std::size_t add_glorot(const std::string& name, std::size_t fan_in, std::size_t fan_out) {
    Tensor t = Tensor::zeros({fan_in, fan_out});
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < t.values.size(); ++i) t.values.data()[i] = u(rng_);
    return add(name, std::move(t));
  }

  std::size_t add_zeros(const std::string& name, Shape shape) { return add(name, Tensor::zeros(std::move(shape))); }

  std::size_t add(const std::string& name, Tensor t) {
    if (index_.count(name)) throw ValidationError("parameter '" + name + "' registered twice");
    index_.emplace(name, entries_.size());
    entries_.push_back({name, std::move(t)});
    return entries_.size() - 1;
  }

  std::size_t size() const { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_[i].name; }
  Tensor& tensor(std::size_t i) { return entries_[i].tensor; }
  const Tensor& tensor(std::size_t i) const { return entries_[i].tensor; }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
  }

 private:
  struct Entry {
    std::string name;
    Tensor tensor;
  };
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename S>
using MatrixT = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Parameter values converted to the compute precision of a graph. The f64
// ParamStore stays the master copy.
template <typename S>
class ParamMirror {
 public:
  ParamMirror() = default;
  explicit ParamMirror(const ParamStore& store) { refresh(store); }

  void refresh(const ParamStore& store) {
    values_.resize(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) values_[i] = store.tensor(i).values.template cast<S>();
  }

  std::size_t size() const { return values_.size(); }
  const MatrixT<S>& value(std::size_t i) const { return values_[i]; }

 private:
  std::vector<MatrixT<S>> values_;
};

// One gradient matrix per parameter, same storage layout.
template <typename S>
class BasicGradients {
 public:
  BasicGradients() = default;
  explicit BasicGradients(const ParamStore& store) {
    grads_.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
      const auto& v = store.tensor(i).values;
      grads_.push_back(MatrixT<S>::Zero(v.rows(), v.cols()));
    }
  }

  std::size_t size() const { return grads_.size(); }
  MatrixT<S>& operator[](std::size_t i) { return grads_[i]; }
  const MatrixT<S>& operator[](std::size_t i) const { return grads_[i]; }

  void set_zero() {
    for (auto& g : grads_) g.setZero();
  }

  template <typename T>
  BasicGradients& operator+=(const BasicGradients<T>& o) {
    if (o.size() != grads_.size()) throw ValidationError("gradient buffers do not align");
    for (std::size_t i = 0; i < grads_.size(); ++i) grads_[i] += o[i].template cast<S>();
    return *this;
  }

 private:
  std::vector<MatrixT<S>> grads_;
};

using Gradients = BasicGradients<double>;

struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
};

namespace detail {

// Rows of A*B computed so that each output row depends only on the matching
// input row: Eigen's scalar tail path rounds differently from its packet
// path, so the row count is padded to a multiple of 16.
template <typename S>
MatrixT<S> row_stable_product(const MatrixT<S>& a, const MatrixT<S>& b) {
  constexpr Eigen::Index kPad = 16;
  const Eigen::Index n = a.rows();
  // A single row has no ordering to respect; Eigen takes its GEMV path.
  if (n == 1 || n % kPad == 0) return a * b;
  const Eigen::Index padded = (n / kPad + 1) * kPad;
  MatrixT<S> ap = MatrixT<S>::Zero(padded, a.cols());
  ap.topRows(n) = a;
  MatrixT<S> out = ap * b;
  return out.topRows(n);
}

// a^T * g for the weight gradient; depth-1 products go through the outer
// product path instead of a GEMM with a single inner step.
template <typename S>
MatrixT<S> transpose_times(const MatrixT<S>& a, const MatrixT<S>& g) {
  if (a.rows() == 1) return a.row(0).transpose() * g.row(0);
  return a.transpose() * g;
}

}  // namespace detail

template <typename S>
class BasicGraph {
 public:
  using Scalar = S;
  using Mat = MatrixT<S>;
  using Backward = std::function<void(BasicGraph&, std::size_t self)>;

  BasicGraph() = default;
  // f64 graphs may bind the master parameters directly.
  explicit BasicGraph(const ParamStore* store) : store_(store) {
    static_assert(std::is_same_v<S, double>, "bind a ParamMirror for reduced precision");
  }
  explicit BasicGraph(const ParamMirror<S>* mirror) : mirror_(mirror) {}

  const Mat& value(Var v) const { return node(v).get(); }
  const Mat& grad(Var v) const { return node(v).grad; }
  std::size_t node_count() const { return nodes_.size(); }

  // Leaf holding a copy of `m`; gradients are tracked when requested.
  Var constant(Mat m, bool requires_grad = false) {
    require_finite(m, "constant");
    Node n;
    n.own = std::move(m);
    n.requires_grad = requires_grad;
    return push(std::move(n));
  }

  Var variable(Mat m) { return constant(std::move(m), true); }

  // Leaf bound to parameter `index` (no copy). Repeated calls return the
  // same node.
  Var param(std::size_t index) {
    auto it = param_nodes_.find(index);
    if (it != param_nodes_.end()) return {it->second};
    Node n;
    n.ref = &param_value(index);
    n.requires_grad = true;
    n.param = static_cast<long>(index);
    Var v = push(std::move(n));
    param_nodes_.emplace(index, v.id);
    return v;
  }

  Var param(const std::string& name) {
    if (!store_) throw ValidationError("graph has no named parameter store");
    return param(store_->index_of(name));
  }

  // Generic op: callers supply the forward value and a closure receiving the
  // graph and the node id of the result. Values are not scanned for
  // non-finite entries here; backward() checks the loss.
  Var custom(const std::string& op, Mat value, std::vector<Var> inputs, Backward backward) {
    (void)op;
    Node n;
    n.own = std::move(value);
    n.backward = std::move(backward);
    for (auto in : inputs) n.requires_grad = n.requires_grad || node(in).requires_grad;
    return push(std::move(n));
  }

  // Adds `g` to the gradient of `v` (no-op when v does not need gradients).
  template <typename Expr>
  void accumulate(Var v, const Expr& g) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  bool requires_grad(Var v) const { return node(v).requires_grad; }
  const Mat& upstream(std::size_t self) const { return nodes_[self].grad; }

  // --- ops -----------------------------------------------------------------

  Var matmul(Var a, Var b) {
    const Mat& A = value(a);
    const Mat& B = value(b);
    if (A.cols() != B.rows()) mismatch("matmul", A, B);
    return custom("matmul", detail::row_stable_product(A, B), {a, b}, [a, b](BasicGraph& g, std::size_t self) {
      const Mat& G = g.upstream(self);
      if (g.requires_grad(a)) g.accumulate(a, G * g.value(b).transpose());
      if (g.requires_grad(b)) g.accumulate(b, detail::transpose_times(g.value(a), G));
    });
  }

  // x (n, in) * W (in, out) + b (1, out)
  Var dense(Var x, Var w, Var b) {
    const Mat& X = value(x);
    const Mat& W = value(w);
    const Mat& B = value(b);
    if (X.cols() != W.rows() || B.rows() != 1 || B.cols() != W.cols()) {
      throw ValidationError("dense: shape mismatch x" + shape_string(X) + " W" + shape_string(W) + " b" +
                            shape_string(B));
    }
    Mat out = detail::row_stable_product(X, W);
    out.rowwise() += B.row(0);
    return custom("dense", std::move(out), {x, w, b}, [x, w, b](BasicGraph& g, std::size_t self) {
      const Mat& G = g.upstream(self);
      if (g.requires_grad(x)) g.accumulate(x, G * g.value(w).transpose());
      if (g.requires_grad(w)) g.accumulate(w, detail::transpose_times(g.value(x), G));
      if (g.requires_grad(b)) g.accumulate(b, G.colwise().sum());
    });
  }

  Var relu(Var x) {
    Mat out = value(x).cwiseMax(S(0));
    return custom("relu", std::move(out), {x}, [x](BasicGraph& g, std::size_t self) {
      if (!g.requires_grad(x)) return;
      const Mat& Y = g.value(Var{self});
      g.accumulate(x, (Y.array() > S(0)).select(g.upstream(self).array(), S(0)).matrix());
    });
  }

  // Shift-stabilized softmax over each row.
  Var softmax(Var x) {
    const Mat& X = value(x);
    Mat out(X.rows(), X.cols());
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
      const S mx = X.row(r).maxCoeff();
      out.row(r) = (X.row(r).array() - mx).exp();
      out.row(r) /= out.row(r).sum();
    }
    return custom("softmax", std::move(out), {x}, [x](BasicGraph& g, std::size_t self) {
      if (!g.requires_grad(x)) return;
      const Mat& Y = g.value(Var{self});
      const Mat& G = g.upstream(self);
      Mat dx(Y.rows(), Y.cols());
      for (Eigen::Index r = 0; r < Y.rows(); ++r) {
        const S dot = Y.row(r).dot(G.row(r));
        dx.row(r) = Y.row(r).array() * (G.row(r).array() - dot);
      }
      g.accumulate(x, dx);
    });
  }

  // Column-wise max over rows: (n, d) -> (1, d). The gradient goes to the
  // first row attaining the max.
  Var max_over_set(Var x) {
    const Mat& X = value(x);
    if (X.rows() == 0) throw ValidationError("max_over_set: empty set");
    Mat out(1, X.cols());
    std::vector<Eigen::Index> arg(static_cast<std::size_t>(X.cols()), 0);
    out.row(0) = X.row(0);
    for (Eigen::Index r = 1; r < X.rows(); ++r) {
      for (Eigen::Index c = 0; c < X.cols(); ++c) {
        if (X(r, c) > out(0, c)) {
          out(0, c) = X(r, c);
          arg[static_cast<std::size_t>(c)] = r;
        }
      }
    }
    return custom("max_over_set", std::move(out), {x},
                  [x, arg = std::move(arg)](BasicGraph& g, std::size_t self) {
                    if (!g.requires_grad(x)) return;
                    const Mat& G = g.upstream(self);
                    const Mat& X = g.value(x);
                    Mat dx = Mat::Zero(X.rows(), X.cols());
                    for (Eigen::Index c = 0; c < X.cols(); ++c) dx(arg[static_cast<std::size_t>(c)], c) = G(0, c);
                    g.accumulate(x, dx);
                  });
  }

  Var concat_cols(Var a, Var b) {
    const Mat& A = value(a);
    const Mat& B = value(b);
    if (A.rows() != B.rows()) mismatch("concat_cols", A, B);
    Mat out(A.rows(), A.cols() + B.cols());
    out << A, B;
    const Eigen::Index ca = A.cols(), cb = B.cols();
    return custom("concat_cols", std::move(out), {a, b}, [a, b, ca, cb](BasicGraph& g, std::size_t self) {
      const Mat& G = g.upstream(self);
      if (g.requires_grad(a)) g.accumulate(a, G.leftCols(ca));
      if (g.requires_grad(b)) g.accumulate(b, G.rightCols(cb));
    });
  }

  // Stacks row blocks: [(n_i, d)] -> (sum n_i, d).
  Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ValidationError("concat_rows: no inputs");
    const Eigen::Index d = value(parts[0]).cols();
    Eigen::Index total = 0;
    for (auto p : parts) {
      if (value(p).cols() != d) mismatch("concat_rows", value(parts[0]), value(p));
      total += value(p).rows();
    }
    Mat out(total, d);
    std::vector<Eigen::Index> offsets;
    Eigen::Index r = 0;
    for (auto p : parts) {
      offsets.push_back(r);
      out.middleRows(r, value(p).rows()) = value(p);
      r += value(p).rows();
    }
    return custom("concat_rows", std::move(out), parts,
                  [parts, offsets = std::move(offsets)](BasicGraph& g, std::size_t self) {
                    const Mat& G = g.upstream(self);
                    for (std::size_t i = 0; i < parts.size(); ++i) {
                      if (g.requires_grad(parts[i]))
                        g.accumulate(parts[i], G.middleRows(offsets[i], g.value(parts[i]).rows()));
                    }
                  });
  }

  Var add(Var a, Var b) {
    const Mat& A = value(a);
    const Mat& B = value(b);
    if (A.rows() != B.rows() || A.cols() != B.cols()) mismatch("add", A, B);
    return custom("add", A + B, {a, b}, [a, b](BasicGraph& g, std::size_t self) {
      g.accumulate(a, g.upstream(self));
      g.accumulate(b, g.upstream(self));
    });
  }

  Var sub(Var a, Var b) {
    const Mat& A = value(a);
    const Mat& B = value(b);
    if (A.rows() != B.rows() || A.cols() != B.cols()) mismatch("sub", A, B);
    return custom("sub", A - B, {a, b}, [a, b](BasicGraph& g, std::size_t self) {
      g.accumulate(a, g.upstream(self));
      if (g.requires_grad(b)) g.accumulate(b, -g.upstream(self));
    });
  }

  // x (n, d) + row (1, d) broadcast over rows.
  Var add_row(Var x, Var row) {
    const Mat& X = value(x);
    const Mat& R = value(row);
    if (R.rows() != 1 || R.cols() != X.cols()) mismatch("add_row", X, R);
    Mat out = X;
    out.rowwise() += R.row(0);
    return custom("add_row", std::move(out), {x, row}, [x, row](BasicGraph& g, std::size_t self) {
      g.accumulate(x, g.upstream(self));
      if (g.requires_grad(row)) g.accumulate(row, g.upstream(self).colwise().sum());
    });
  }

  Var mul(Var a, Var b) {
    const Mat& A = value(a);
    const Mat& B = value(b);
    if (A.rows() != B.rows() || A.cols() != B.cols()) mismatch("mul", A, B);
    return custom("mul", A.cwiseProduct(B), {a, b}, [a, b](BasicGraph& g, std::size_t self) {
      const Mat& G = g.upstream(self);
      if (g.requires_grad(a)) g.accumulate(a, G.cwiseProduct(g.value(b)));
      if (g.requires_grad(b)) g.accumulate(b, G.cwiseProduct(g.value(a)));
    });
  }

  Var scale(Var x, double c) {
    const S cs = static_cast<S>(c);
    return custom("scale", value(x) * cs, {x}, [x, cs](BasicGraph& g, std::size_t self) {
      if (g.requires_grad(x)) g.accumulate(x, g.upstream(self) * cs);
    });
  }

  Var sum(Var x) {
    Mat out(1, 1);
    out(0, 0) = value(x).sum();
    return custom("sum", std::move(out), {x}, [x](BasicGraph& g, std::size_t self) {
      if (!g.requires_grad(x)) return;
      const Mat& X = g.value(x);
      g.accumulate(x, Mat::Constant(X.rows(), X.cols(), g.upstream(self)(0, 0)));
    });
  }

  Var mean(Var x) {
    const Mat& X = value(x);
    if (X.size() == 0) throw ValidationError("mean: empty input");
    const S n = static_cast<S>(X.size());
    Mat out(1, 1);
    out(0, 0) = X.sum() / n;
    return custom("mean", std::move(out), {x}, [x, n](BasicGraph& g, std::size_t self) {
      if (!g.requires_grad(x)) return;
      const Mat& X = g.value(x);
      g.accumulate(x, Mat::Constant(X.rows(), X.cols(), g.upstream(self)(0, 0) / n));
    });
  }

  Var sum_squares(Var x) {
    Mat out(1, 1);
    out(0, 0) = value(x).squaredNorm();
    return custom("sum_squares", std::move(out), {x}, [x](BasicGraph& g, std::size_t self) {
      if (g.requires_grad(x)) g.accumulate(x, g.value(x) * (S(2) * g.upstream(self)(0, 0)));
    });
  }

  // Row-major reinterpretation.
  Var reshape(Var x, Eigen::Index rows, Eigen::Index cols) {
    const Mat& X = value(x);
    if (rows * cols != X.size()) {
      throw ValidationError("reshape: cannot view " + shape_string(X) + " as (" + std::to_string(rows) +
                            ", " + std::to_string(cols) + ")");
    }
    Mat out = Eigen::Map<const Mat>(X.data(), rows, cols);
    const Eigen::Index r0 = X.rows(), c0 = X.cols();
    return custom("reshape", std::move(out), {x}, [x, r0, c0](BasicGraph& g, std::size_t self) {
      if (!g.requires_grad(x)) return;
      const Mat& G = g.upstream(self);
      g.accumulate(x, Eigen::Map<const Mat>(G.data(), r0, c0));
    });
  }

  Var transpose(Var x) {
    return custom("transpose", value(x).transpose(), {x}, [x](BasicGraph& g, std::size_t self) {
      if (g.requires_grad(x)) g.accumulate(x, g.upstream(self).transpose());
    });
  }

  // Reverse sweep from a scalar node; `seed` scales the root gradient.
  // Parameter gradients are added into `grads` when given.
  void backward(Var loss, BasicGradients<S>* grads = nullptr, double seed = 1.0) {
    Node& root = node(loss);
    if (root.get().rows() != 1 || root.get().cols() != 1) {
      throw ValidationError("backward: loss must be scalar, got " + shape_string(root.get()));
    }
    if (!std::isfinite(static_cast<double>(root.get()(0, 0)))) throw NonFiniteError("backward: non-finite loss");
    root.grad = Mat::Constant(1, 1, static_cast<S>(seed));
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param >= 0 && grads) (*grads)[static_cast<std::size_t>(n.param)] += n.grad;
    }
  }

 private:
  struct Node {
    const Mat* ref = nullptr;
    Mat own;
    Mat grad;
    Backward backward;
    bool requires_grad = false;
    long param = -1;
    const Mat& get() const { return ref ? *ref : own; }
  };

  const Mat& param_value(std::size_t index) const {
    if constexpr (std::is_same_v<S, double>) {
      if (store_) {
        if (index >= store_->size()) throw ValidationError("parameter index out of range");
        return store_->tensor(index).values;
      }
    }
    if (!mirror_) throw ValidationError("graph has no parameter store");
    if (index >= mirror_->size()) throw ValidationError("parameter index out of range");
    return mirror_->value(index);
  }

  Node& node(Var v) {
    if (v.id >= nodes_.size()) throw ValidationError("invalid graph variable");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw ValidationError("invalid graph variable");
    return nodes_[v.id];
  }

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return {nodes_.size() - 1};
  }

  [[noreturn]] static void mismatch(const std::string& op, const Mat& a, const Mat& b) {
    throw ValidationError(op + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  }

  const ParamStore* store_ = nullptr;
  const ParamMirror<S>* mirror_ = nullptr;
  std::vector<Node> nodes_;
  std::unordered_map<std::size_t, std::size_t> param_nodes_;
};

using Graph = BasicGraph<double>;

// --- ADAM ------------------------------------------------------------------

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t t = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;

  AdamState() = default;
  AdamState(const ParamStore& store, AdamConfig cfg) : config(cfg) {
    for (std::size_t i = 0; i < store.size(); ++i) {
      const auto& p = store.tensor(i).values;
      m.push_back(Matrix::Zero(p.rows(), p.cols()));
      v.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }
};

// One bias-corrected ADAM update; increments t once.
inline void adam_step(ParamStore& params, const Gradients& grads, AdamState& state) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw ValidationError("adam_step: gradient/state count does not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params.tensor(i).values;
    if (grads[i].rows() != p.rows() || grads[i].cols() != p.cols()) {
      throw ValidationError("adam_step: gradient shape " + shape_string(grads[i]) + " does not match " +
                            params.name(i) + shape_string(p));
    }
  }
  ++state.t;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params.tensor(i).values;
    const auto& g = grads[i];
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g.cwiseProduct(g);
    p.array() -= c.lr * (state.m[i].array() / bc1) / ((state.v[i].array() / bc2).sqrt() + c.eps);
    require_finite(p, "adam_step(" + params.name(i) + ")");
  }
}

}  // namespace onh::diff
