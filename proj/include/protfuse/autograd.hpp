#pragma once

// Reverse-mode differentiation over dense Eigen matrices.
//
// A Tape records every intermediate matrix together with a closure that maps
// the gradient of that node onto the gradients of its inputs. Var is a cheap
// handle (tape pointer + node index); the free functions below build new nodes
// and read like ordinary matrix expressions.

#include "protfuse/types.hpp"

#include <cmath>
#include <functional>
#include <initializer_list>
#include <numbers>
#include <utility>
#include <vector>

namespace protfuse {

template <typename Scalar>
class Tape;

template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix<Scalar>& value() const { return tape_->value(id_); }
  const Matrix<Scalar>& grad() const { return tape_->grad(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

  Tape<Scalar>* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using Backward = std::function<void(Tape&, const Mat& out_grad)>;

  explicit Tape(bool record_gradients = true) : record_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> constant(Mat value) { return push(std::move(value), false, {}); }

  Var<Scalar> variable(Mat value) { return push(std::move(value), record_, {}); }

  /// Appends a node whose gradient requirement is inherited from `inputs`.
  Var<Scalar> record(Mat value, std::initializer_list<Var<Scalar>> inputs, Backward fn) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || nodes_[in.id()].needs_grad;
    return push(std::move(value), needs, needs ? std::move(fn) : Backward{});
  }

  Var<Scalar> record_many(Mat value, const std::vector<Var<Scalar>>& inputs, Backward fn) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || nodes_[in.id()].needs_grad;
    return push(std::move(value), needs, needs ? std::move(fn) : Backward{});
  }

  const Mat& value(std::size_t id) const { return nodes_[id].value; }

  const Mat& grad(std::size_t id) const {
    const Node& n = nodes_[id];
    if (n.grad.size() == 0 && n.value.size() != 0) {
      n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    }
    return n.grad;
  }

  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  template <typename Derived>
  void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Seeds d(root)/d(root) = 1 and runs every recorded closure in reverse order.
  void backward(Var<Scalar> root) {
    if (root.rows() != 1 || root.cols() != 1) {
      throw ShapeError("backward() needs a 1x1 root");
    }
    nodes_[root.id()].grad = Mat::Ones(1, 1);
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || !n.backward || n.grad.size() == 0) continue;
      n.backward(*this, n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    mutable Mat grad;
    bool needs_grad = false;
    Backward backward;
  };

  Var<Scalar> push(Mat value, bool needs_grad, Backward fn) {
    nodes_.push_back(Node{std::move(value), Mat{}, needs_grad, std::move(fn)});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  bool record_;
};

namespace detail {

template <typename Scalar>
void require_same_shape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "add");
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() + b.value(), {a, b}, [ia, ib](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "sub");
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() - b.value(), {a, b}, [ia, ib](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, Scalar s) {
  const auto ia = a.id();
  return a.tape()->record(a.value() * s, {a}, [ia, s](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(ia, g * s);
  });
}

/// Adds a 1xC row to every row of `a`.
template <typename Scalar>
Var<Scalar> add_row(const Var<Scalar>& a, const Var<Scalar>& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw ShapeError("add_row: bias width mismatch");
  const auto ia = a.id(), ir = row.id();
  Matrix<Scalar> out = a.value().rowwise() + row.value().row(0);
  return a.tape()->record(std::move(out), {a, row}, [ia, ir](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(ia, g);
    t.accumulate(ir, g.colwise().sum());
  });
}

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.rows()));
  }
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() * b.value(), {a, b}, [ia, ib](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    if (t.needs_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.needs_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

/// a * b^T.
template <typename Scalar>
Var<Scalar> matmul_nt(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: width mismatch");
  const auto ia = a.id(), ib = b.id();
  return a.tape()->record(a.value() * b.value().transpose(), {a, b},
                          [ia, ib](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                            if (t.needs_grad(ia)) t.accumulate(ia, g * t.value(ib));
                            if (t.needs_grad(ib)) t.accumulate(ib, g.transpose() * t.value(ia));
                          });
}

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& a) {
  const auto ia = a.id();
  Matrix<Scalar> out = a.value().array().tanh().matrix();
  auto y = out;
  return a.tape()->record(std::move(out), {a}, [ia, y = std::move(y)](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(ia, (g.array() * (Scalar(1) - y.array().square())).matrix());
  });
}

/// GELU, tanh approximation.
template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& a) {
  const auto ia = a.id();
  const Scalar c = static_cast<Scalar>(std::sqrt(2.0 / std::numbers::pi));
  const Scalar k = static_cast<Scalar>(0.044715);
  const auto& x = a.value().array();
  Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic> th = (c * (x + k * x.cube())).tanh();
  Matrix<Scalar> out = (Scalar(0.5) * x * (Scalar(1) + th)).matrix();
  return a.tape()->record(std::move(out), {a}, [ia, c, k, th = std::move(th)](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    const auto& x = t.value(ia).array();
    auto d = Scalar(0.5) * (Scalar(1) + th) +
             Scalar(0.5) * x * (Scalar(1) - th.square()) * c * (Scalar(1) + Scalar(3) * k * x.square());
    t.accumulate(ia, (g.array() * d).matrix());
  });
}

/// Row-wise layer normalization with 1xC gain and bias.
template <typename Scalar>
Var<Scalar> layer_norm(const Var<Scalar>& x, const Var<Scalar>& gain, const Var<Scalar>& bias,
                       Scalar eps = Scalar(1e-5)) {
  const Eigen::Index n = x.cols();
  if (gain.cols() != n || bias.cols() != n || gain.rows() != 1 || bias.rows() != 1) {
    throw ShapeError("layer_norm: parameter width mismatch");
  }
  const Matrix<Scalar>& xv = x.value();
  Vector<Scalar> inv_std(xv.rows());
  Matrix<Scalar> xhat(xv.rows(), n);
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const Scalar mu = xv.row(r).mean();
    const Scalar var = (xv.row(r).array() - mu).square().mean();
    inv_std(r) = Scalar(1) / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * inv_std(r);
  }
  Matrix<Scalar> out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  const auto ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape()->record(std::move(out), {x, gain, bias},
                          [ix, ig, ib, n, inv_std = std::move(inv_std), xhat = std::move(xhat)](
                              Tape<Scalar>& t, const Matrix<Scalar>& g) {
                            if (t.needs_grad(ig)) t.accumulate(ig, (g.array() * xhat.array()).colwise().sum().matrix());
                            if (t.needs_grad(ib)) t.accumulate(ib, g.colwise().sum());
                            if (!t.needs_grad(ix)) return;
                            Matrix<Scalar> dxhat = (g.array().rowwise() * t.value(ig).row(0).array()).matrix();
                            Matrix<Scalar> dx(g.rows(), n);
                            const Scalar nn = static_cast<Scalar>(n);
                            for (Eigen::Index r = 0; r < g.rows(); ++r) {
                              const Scalar s1 = dxhat.row(r).sum();
                              const Scalar s2 = dxhat.row(r).dot(xhat.row(r));
                              dx.row(r) = (inv_std(r) / nn) *
                                          (nn * dxhat.row(r).array() - s1 - xhat.row(r).array() * s2).matrix();
                            }
                            t.accumulate(ix, dx);
                          });
}

/// Row-wise softmax. With `causal`, entry (i, j) is excluded (probability
/// exactly zero) whenever j > i + offset.
template <typename Scalar>
Var<Scalar> softmax_rows(const Var<Scalar>& x, bool causal = false, Eigen::Index offset = 0) {
  const Matrix<Scalar>& xv = x.value();
  Matrix<Scalar> p = Matrix<Scalar>::Zero(xv.rows(), xv.cols());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const Eigen::Index width = causal ? std::min<Eigen::Index>(xv.cols(), r + offset + 1) : xv.cols();
    if (width <= 0) continue;
    const Scalar mx = xv.row(r).head(width).maxCoeff();
    auto e = (xv.row(r).head(width).array() - mx).exp();
    p.row(r).head(width) = (e / e.sum()).matrix();
  }
  const auto ix = x.id();
  Matrix<Scalar> y = p;
  return x.tape()->record(std::move(p), {x}, [ix, y = std::move(y)](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    Vector<Scalar> dots = (g.array() * y.array()).rowwise().sum().matrix();
    Matrix<Scalar> dx = (y.array() * (g.colwise() - dots).array()).matrix();
    t.accumulate(ix, dx);
  });
}

/// out.row(i) = a.row(index[i]); gradient scatters back.
template <typename Scalar>
Var<Scalar> gather_rows(const Var<Scalar>& a, std::vector<Eigen::Index> index) {
  Matrix<Scalar> out(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= a.rows()) throw ShapeError("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(index[i]);
  }
  const auto ia = a.id();
  const auto rows = a.rows(), cols = a.cols();
  return a.tape()->record(std::move(out), {a},
                          [ia, rows, cols, index = std::move(index)](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                            Matrix<Scalar> da = Matrix<Scalar>::Zero(rows, cols);
                            for (std::size_t i = 0; i < index.size(); ++i) {
                              da.row(index[i]) += g.row(static_cast<Eigen::Index>(i));
                            }
                            t.accumulate(ia, da);
                          });
}

template <typename Scalar>
Var<Scalar> concat_cols(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix<Scalar> out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> spans;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    spans.emplace_back(p.id(), p.cols());
    at += p.cols();
  }
  return parts.front().tape()->record_many(std::move(out), parts,
                                           [spans = std::move(spans)](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                                             Eigen::Index at = 0;
                                             for (const auto& [id, w] : spans) {
                                               t.accumulate(id, g.middleCols(at, w));
                                               at += w;
                                             }
                                           });
}

template <typename Scalar>
Var<Scalar> concat_rows(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix<Scalar> out(rows, cols);
  std::vector<std::pair<std::size_t, Eigen::Index>> spans;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    spans.emplace_back(p.id(), p.rows());
    at += p.rows();
  }
  return parts.front().tape()->record_many(std::move(out), parts,
                                           [spans = std::move(spans)](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                                             Eigen::Index at = 0;
                                             for (const auto& [id, h] : spans) {
                                               t.accumulate(id, g.middleRows(at, h));
                                               at += h;
                                             }
                                           });
}

template <typename Scalar>
Var<Scalar> slice_cols(const Var<Scalar>& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("slice_cols: out of range");
  const auto ia = a.id();
  const auto rows = a.rows(), cols = a.cols();
  return a.tape()->record(a.value().middleCols(start, count), {a},
                          [ia, rows, cols, start, count](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                            Matrix<Scalar> da = Matrix<Scalar>::Zero(rows, cols);
                            da.middleCols(start, count) = g;
                            t.accumulate(ia, da);
                          });
}

template <typename Scalar>
Var<Scalar> slice_rows(const Var<Scalar>& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: out of range");
  const auto ia = a.id();
  const auto rows = a.rows(), cols = a.cols();
  return a.tape()->record(a.value().middleRows(start, count), {a},
                          [ia, rows, cols, start, count](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                            Matrix<Scalar> da = Matrix<Scalar>::Zero(rows, cols);
                            da.middleRows(start, count) = g;
                            t.accumulate(ia, da);
                          });
}

/// Multiplies row i of `a` by the constant weights(i).
template <typename Scalar>
Var<Scalar> scale_rows(const Var<Scalar>& a, Vector<Scalar> weights) {
  if (weights.size() != a.rows()) throw ShapeError("scale_rows: weight count mismatch");
  const auto ia = a.id();
  Matrix<Scalar> out = a.value().array().colwise() * weights.array();
  return a.tape()->record(std::move(out), {a},
                          [ia, weights = std::move(weights)](Tape<Scalar>& t, const Matrix<Scalar>& g) {
                            t.accumulate(ia, (g.array().colwise() * weights.array()).matrix());
                          });
}

/// Sum of all entries as a 1x1 node.
template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  const auto ia = a.id();
  const auto rows = a.rows(), cols = a.cols();
  Matrix<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->record(std::move(out), {a}, [ia, rows, cols](Tape<Scalar>& t, const Matrix<Scalar>& g) {
    t.accumulate(ia, Matrix<Scalar>::Constant(rows, cols, g(0, 0)));
  });
}

/// Σ_i weight_i · (−log softmax(logits_i)[target_i]) over rows with target ≥ 0.
template <typename Scalar>
Var<Scalar> weighted_cross_entropy(const Var<Scalar>& logits, std::vector<int> targets,
                                   std::vector<Scalar> weights) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows() || targets.size() != weights.size()) {
    throw ShapeError("weighted_cross_entropy: target count mismatch");
  }
  const Matrix<Scalar>& lv = logits.value();
  Matrix<Scalar> probs = Matrix<Scalar>::Zero(lv.rows(), lv.cols());
  Scalar total = 0;
  for (Eigen::Index r = 0; r < lv.rows(); ++r) {
    const int target = targets[static_cast<std::size_t>(r)];
    const Scalar w = weights[static_cast<std::size_t>(r)];
    if (target < 0 || w == Scalar(0)) continue;
    if (target >= lv.cols()) throw ShapeError("weighted_cross_entropy: target id out of range");
    const Scalar mx = lv.row(r).maxCoeff();
    auto e = (lv.row(r).array() - mx).exp();
    const Scalar z = e.sum();
    probs.row(r) = (e / z).matrix();
    total += w * (std::log(z) + mx - lv(r, target));
  }
  Matrix<Scalar> out(1, 1);
  out(0, 0) = total;
  const auto il = logits.id();
  return logits.tape()->record(
      std::move(out), {logits},
      [il, probs = std::move(probs), targets = std::move(targets), weights = std::move(weights)](
          Tape<Scalar>& t, const Matrix<Scalar>& g) {
        Matrix<Scalar> dl = probs;
        for (Eigen::Index r = 0; r < dl.rows(); ++r) {
          const int target = targets[static_cast<std::size_t>(r)];
          const Scalar w = weights[static_cast<std::size_t>(r)];
          if (target < 0 || w == Scalar(0)) continue;
          dl(r, target) -= Scalar(1);
          dl.row(r) *= w;
        }
        t.accumulate(il, dl * g(0, 0));
      });
}

}  // namespace protfuse
