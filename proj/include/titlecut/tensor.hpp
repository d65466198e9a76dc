#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "titlecut/error.hpp"

namespace titlecut {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // same length as value, zero until backward
  bool requires_grad = false;
};

// Dense tensor of doubles, rank 0..2, with reverse-mode gradient support.
// Cheap to copy: a Tensor is a shared handle to one TensorNode.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), 0.0, requires_grad);
  }

  static Tensor filled(Shape shape, double v, bool requires_grad = false) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value.assign(shape_numel(n->shape), v);
    n->grad.assign(n->value.size(), 0.0);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false) {
    if (shape_numel(shape) != values.size())
      throw DimensionError("tensor data length " + std::to_string(values.size()) +
                           " does not match shape " + shape_str(shape));
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->grad.assign(n->value.size(), 0.0);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const { return node_->shape.at(0); }
  std::size_t cols() const { return node_->shape.at(1); }
  bool is_scalar() const { return size() == 1; }

  std::vector<double>& value() { return node_->value; }
  const std::vector<double>& value() const { return node_->value; }
  std::vector<double>& grad() { return node_->grad; }
  const std::vector<double>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }

  double item() const {
    if (!is_scalar()) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->value[0];
  }

  double at(std::size_t i) const { return node_->value.at(i); }
  double at(std::size_t r, std::size_t c) const {
    return node_->value.at(r * cols() + c);
  }

  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

  std::shared_ptr<TensorNode> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}
  std::shared_ptr<TensorNode> node_;
};

// Define-by-run record of one forward pass. Nodes are appended in creation
// order, which is a topological order, so one reverse sweep propagates all
// gradients. The tape is rebuilt per pass; pass tape == nullptr to run any op
// without recording (inference).
class Tape {
 public:
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  void record(std::function<void()> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
  }

  // Seeds d(loss)/d(loss) = 1 and visits every node once, newest first.
  // Gradients accumulate additively into each tensor's grad buffer.
  void backward(const Tensor& loss) {
    if (!loss.is_scalar())
      throw ContractError("backward() requires a scalar loss, got " +
                          shape_str(loss.shape()));
    loss.node()->grad[0] += 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) nodes_[i]();
  }

 private:
  std::vector<std::function<void()>> nodes_;
};

namespace detail {

inline bool wants_grad(const Tensor& t) { return t.requires_grad(); }

inline Tensor make_out(Shape shape, bool requires_grad) {
  return Tensor::zeros(std::move(shape), requires_grad);
}

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

inline Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  bool rg = a.requires_grad() || b.requires_grad();
  Tensor out = detail::make_out(a.shape(), rg);
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out.value()[i] = a.at(i) + b.at(i);
  if (tape && rg) {
    auto an = a.node(), bn = b.node(), on = out.node();
    tape->record([an, bn, on] {
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        if (an->requires_grad) an->grad[i] += on->grad[i];
        if (bn->requires_grad) bn->grad[i] += on->grad[i];
      }
    });
  }
  return out;
}

inline Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  bool rg = a.requires_grad() || b.requires_grad();
  Tensor out = detail::make_out(a.shape(), rg);
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out.value()[i] = a.at(i) * b.at(i);
  if (tape && rg) {
    auto an = a.node(), bn = b.node(), on = out.node();
    tape->record([an, bn, on] {
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        if (an->requires_grad) an->grad[i] += on->grad[i] * bn->value[i];
        if (bn->requires_grad) bn->grad[i] += on->grad[i] * an->value[i];
      }
    });
  }
  return out;
}

inline Tensor scale(Tape* tape, const Tensor& a, double c) {
  bool rg = a.requires_grad();
  Tensor out = detail::make_out(a.shape(), rg);
  for (std::size_t i = 0; i < a.size(); ++i) out.value()[i] = a.at(i) * c;
  if (tape && rg) {
    auto an = a.node();
    auto on = out.node();
    tape->record([an, on, c] {
      for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * c;
    });
  }
  return out;
}

inline Tensor tanh(Tape* tape, const Tensor& a) {
  bool rg = a.requires_grad();
  Tensor out = detail::make_out(a.shape(), rg);
  for (std::size_t i = 0; i < a.size(); ++i) out.value()[i] = std::tanh(a.at(i));
  if (tape && rg) {
    auto an = a.node();
    auto on = out.node();
    tape->record([an, on] {
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        double y = on->value[i];
        an->grad[i] += on->grad[i] * (1.0 - y * y);
      }
    });
  }
  return out;
}

inline Tensor sigmoid(Tape* tape, const Tensor& a) {
  bool rg = a.requires_grad();
  Tensor out = detail::make_out(a.shape(), rg);
  for (std::size_t i = 0; i < a.size(); ++i) {
    double x = a.at(i);
    // split on sign for stability
    out.value()[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                            : std::exp(x) / (1.0 + std::exp(x));
  }
  if (tape && rg) {
    auto an = a.node();
    auto on = out.node();
    tape->record([an, on] {
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        double y = on->value[i];
        an->grad[i] += on->grad[i] * y * (1.0 - y);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

// Standard matrix product [m x k] * [k x n] -> [m x n].
// Backward: dA += G * B^T, dB += A^T * G.
inline Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  bool rg = a.requires_grad() || b.requires_grad();
  Tensor out = detail::make_out({m, n}, rg);
  {
    const double* av = a.value().data();
    const double* bv = b.value().data();
    double* ov = out.value().data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = av[i * k + p];
        if (aip == 0.0) continue;
        const double* brow = bv + p * n;
        double* orow = ov + i * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
      }
  }
  if (tape && rg) {
    auto an = a.node(), bn = b.node(), on = out.node();
    tape->record([an, bn, on, m, k, n] {
      const double* g = on->grad.data();
      if (an->requires_grad) {
        double* ga = an->grad.data();
        const double* bv = bn->value.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0;
            const double* grow = g + i * n;
            const double* brow = bv + p * n;
            for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
            ga[i * k + p] += s;
          }
      }
      if (bn->requires_grad) {
        double* gb = bn->grad.data();
        const double* av = an->value.data();
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g + i * n;
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            if (aip == 0.0) continue;
            double* gbrow = gb + p * n;
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
          }
        }
      }
    });
  }
  return out;
}

// A[m x n] * x[n] -> [m]
inline Tensor matvec(Tape* tape, const Tensor& a, const Tensor& x) {
  if (a.rank() != 2 || x.rank() != 1 || a.cols() != x.size())
    throw DimensionError("matvec: incompatible shapes " + shape_str(a.shape()) +
                         " and " + shape_str(x.shape()));
  const std::size_t m = a.rows(), n = a.cols();
  bool rg = a.requires_grad() || x.requires_grad();
  Tensor out = detail::make_out({m}, rg);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0;
    const double* arow = a.value().data() + i * n;
    const double* xv = x.value().data();
    for (std::size_t j = 0; j < n; ++j) s += arow[j] * xv[j];
    out.value()[i] = s;
  }
  if (tape && rg) {
    auto an = a.node(), xn = x.node(), on = out.node();
    tape->record([an, xn, on, m, n] {
      for (std::size_t i = 0; i < m; ++i) {
        const double g = on->grad[i];
        if (g == 0.0) continue;
        if (an->requires_grad) {
          double* garow = an->grad.data() + i * n;
          const double* xv = xn->value.data();
          for (std::size_t j = 0; j < n; ++j) garow[j] += g * xv[j];
        }
        if (xn->requires_grad) {
          const double* arow = an->value.data() + i * n;
          double* gx = xn->grad.data();
          for (std::size_t j = 0; j < n; ++j) gx[j] += g * arow[j];
        }
      }
    });
  }
  return out;
}

// x[m] * A[m x n] -> [n]  (A^T x; used for attention-weighted context sums)
inline Tensor vecmat(Tape* tape, const Tensor& x, const Tensor& a) {
  if (a.rank() != 2 || x.rank() != 1 || a.rows() != x.size())
    throw DimensionError("vecmat: incompatible shapes " + shape_str(x.shape()) +
                         " and " + shape_str(a.shape()));
  const std::size_t m = a.rows(), n = a.cols();
  bool rg = a.requires_grad() || x.requires_grad();
  Tensor out = detail::make_out({n}, rg);
  for (std::size_t i = 0; i < m; ++i) {
    const double xi = x.at(i);
    if (xi == 0.0) continue;
    const double* arow = a.value().data() + i * n;
    for (std::size_t j = 0; j < n; ++j) out.value()[j] += xi * arow[j];
  }
  if (tape && rg) {
    auto an = a.node(), xn = x.node(), on = out.node();
    tape->record([an, xn, on, m, n] {
      const double* g = on->grad.data();
      for (std::size_t i = 0; i < m; ++i) {
        if (xn->requires_grad) {
          double s = 0;
          const double* arow = an->value.data() + i * n;
          for (std::size_t j = 0; j < n; ++j) s += g[j] * arow[j];
          xn->grad[i] += s;
        }
        if (an->requires_grad) {
          const double xi = xn->value[i];
          if (xi == 0.0) continue;
          double* garow = an->grad.data() + i * n;
          for (std::size_t j = 0; j < n; ++j) garow[j] += xi * g[j];
        }
      }
    });
  }
  return out;
}

inline Tensor transpose(Tape* tape, const Tensor& a) {
  if (a.rank() != 2)
    throw DimensionError("transpose: expected rank-2, got " + shape_str(a.shape()));
  const std::size_t m = a.rows(), n = a.cols();
  bool rg = a.requires_grad();
  Tensor out = detail::make_out({n, m}, rg);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.value()[j * m + i] = a.at(i, j);
  if (tape && rg) {
    auto an = a.node();
    auto on = out.node();
    tape->record([an, on, m, n] {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
          an->grad[i * n + j] += on->grad[j * m + i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax / reductions
// ---------------------------------------------------------------------------

namespace detail {
inline void softmax_fill(const double* in, double* out, std::size_t n) {
  double mx = in[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
  double sum = 0;
  for (std::size_t j = 0; j < n; ++j) {
    out[j] = std::exp(in[j] - mx);
    sum += out[j];
  }
  for (std::size_t j = 0; j < n; ++j) out[j] /= sum;
}
}  // namespace detail

// Row-wise softmax with max-subtraction. Also accepts a rank-1 tensor,
// treated as a single row.
inline Tensor softmax_rows(Tape* tape, const Tensor& a) {
  if (a.rank() < 1 || a.rank() > 2)
    throw DimensionError("softmax_rows: expected rank 1 or 2, got " +
                         shape_str(a.shape()));
  for (double v : a.value())
    if (std::isnan(v)) throw NumericError("softmax_rows: NaN in input");
  const std::size_t rows = a.rank() == 2 ? a.rows() : 1;
  const std::size_t n = a.rank() == 2 ? a.cols() : a.size();
  if (n == 0) throw DimensionError("softmax_rows: empty rows");
  bool rg = a.requires_grad();
  Tensor out = detail::make_out(a.shape(), rg);
  for (std::size_t r = 0; r < rows; ++r)
    detail::softmax_fill(a.value().data() + r * n, out.value().data() + r * n, n);
  if (tape && rg) {
    auto an = a.node();
    auto on = out.node();
    tape->record([an, on, rows, n] {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = on->value.data() + r * n;
        const double* g = on->grad.data() + r * n;
        double dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
        double* ga = an->grad.data() + r * n;
        for (std::size_t j = 0; j < n; ++j) ga[j] += y[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

inline Tensor sum(Tape* tape, const Tensor& a) {
  bool rg = a.requires_grad();
  Tensor out = detail::make_out({1}, rg);
  double s = 0;
  for (double v : a.value()) s += v;
  out.value()[0] = s;
  if (tape && rg) {
    auto an = a.node();
    auto on = out.node();
    tape->record([an, on] {
      const double g = on->grad[0];
      for (double& gv : an->grad) gv += g;
    });
  }
  return out;
}

// Column-wise max over the rows of a [r x M] matrix -> [M]. Backward routes
// each column's gradient to its lowest-index argmax row.
inline Tensor max_pool_rows(Tape* tape, const Tensor& a) {
  if (a.rank() != 2 || a.rows() == 0 || a.cols() == 0)
    throw DimensionError("max_pool_rows: expected non-empty rank-2, got " +
                         shape_str(a.shape()));
  const std::size_t r = a.rows(), m = a.cols();
  bool rg = a.requires_grad();
  Tensor out = detail::make_out({m}, rg);
  std::vector<std::size_t> arg(m, 0);
  for (std::size_t j = 0; j < m; ++j) {
    double best = a.at(0, j);
    std::size_t bi = 0;
    for (std::size_t i = 1; i < r; ++i)
      if (a.at(i, j) > best) {
        best = a.at(i, j);
        bi = i;
      }
    out.value()[j] = best;
    arg[j] = bi;
  }
  if (tape && rg) {
    auto an = a.node();
    auto on = out.node();
    tape->record([an, on, arg, m] {
      for (std::size_t j = 0; j < m; ++j)
        an->grad[arg[j] * m + j] += on->grad[j];
    });
  }
  return out;
}

// KL(p || q) = sum_i p_i * (log p_i - log max(q_i, eps)), 0*log(0/q) = 0.
// Both inputs must be distributions: nonnegative, sums within 1e-8 of 1.
inline Tensor kl_divergence(Tape* tape, const Tensor& p, const Tensor& q,
                            double eps = 1e-10) {
  if (p.rank() != 1 || q.rank() != 1 || p.size() != q.size())
    throw DimensionError("kl_divergence: incompatible shapes " +
                         shape_str(p.shape()) + " and " + shape_str(q.shape()));
  double sp = 0, sq = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.at(i) < 0 || q.at(i) < 0)
      throw ContractError("kl_divergence: negative probability");
    sp += p.at(i);
    sq += q.at(i);
  }
  if (std::abs(sp - 1.0) > 1e-8 || std::abs(sq - 1.0) > 1e-8)
    throw ContractError("kl_divergence: inputs must sum to 1 (got " +
                        std::to_string(sp) + ", " + std::to_string(sq) + ")");
  bool rg = p.requires_grad() || q.requires_grad();
  Tensor out = detail::make_out({1}, rg);
  double acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = p.at(i);
    if (pi == 0.0) continue;
    acc += pi * (std::log(pi) - std::log(std::max(q.at(i), eps)));
  }
  out.value()[0] = acc;
  if (tape && rg) {
    auto pn = p.node(), qn = q.node(), on = out.node();
    tape->record([pn, qn, on, eps] {
      const double g = on->grad[0];
      if (g == 0.0) return;
      for (std::size_t i = 0; i < pn->value.size(); ++i) {
        const double pi = pn->value[i];
        const double qi = std::max(qn->value[i], eps);
        if (pn->requires_grad && pi > 0.0)
          pn->grad[i] += g * (std::log(pi) - std::log(qi) + 1.0);
        if (qn->requires_grad && qn->value[i] > eps && pi > 0.0)
          qn->grad[i] += g * (-pi / qi);
      }
    });
  }
  return out;
}

// x / sum(x) -> probability vector. sum(x) must be positive.
inline Tensor normalize(Tape* tape, const Tensor& x) {
  if (x.rank() != 1)
    throw DimensionError("normalize: expected rank-1, got " + shape_str(x.shape()));
  double s = 0;
  for (double v : x.value()) s += v;
  if (!(s > 0)) throw ContractError("normalize: sum must be positive");
  bool rg = x.requires_grad();
  Tensor out = detail::make_out(x.shape(), rg);
  for (std::size_t i = 0; i < x.size(); ++i) out.value()[i] = x.at(i) / s;
  if (tape && rg) {
    auto xn = x.node();
    auto on = out.node();
    tape->record([xn, on, s] {
      double dot = 0;
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        dot += on->grad[i] * on->value[i];
      for (std::size_t i = 0; i < on->grad.size(); ++i)
        xn->grad[i] += (on->grad[i] - dot) / s;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// structural ops
// ---------------------------------------------------------------------------

inline Tensor concat(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1)
    throw DimensionError("concat: expected rank-1 inputs");
  bool rg = a.requires_grad() || b.requires_grad();
  Tensor out = detail::make_out({a.size() + b.size()}, rg);
  std::copy(a.value().begin(), a.value().end(), out.value().begin());
  std::copy(b.value().begin(), b.value().end(), out.value().begin() + a.size());
  if (tape && rg) {
    auto an = a.node(), bn = b.node(), on = out.node();
    const std::size_t na = a.size();
    tape->record([an, bn, on, na] {
      if (an->requires_grad)
        for (std::size_t i = 0; i < na; ++i) an->grad[i] += on->grad[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < bn->grad.size(); ++i)
          bn->grad[i] += on->grad[na + i];
    });
  }
  return out;
}

inline Tensor slice(Tape* tape, const Tensor& a, std::size_t offset,
                    std::size_t len) {
  if (a.rank() != 1 || offset + len > a.size())
    throw DimensionError("slice: range [" + std::to_string(offset) + ", " +
                         std::to_string(offset + len) + ") out of " +
                         shape_str(a.shape()));
  bool rg = a.requires_grad();
  Tensor out = detail::make_out({len}, rg);
  std::copy(a.value().begin() + offset, a.value().begin() + offset + len,
            out.value().begin());
  if (tape && rg) {
    auto an = a.node();
    auto on = out.node();
    tape->record([an, on, offset, len] {
      for (std::size_t i = 0; i < len; ++i) an->grad[offset + i] += on->grad[i];
    });
  }
  return out;
}

// Stacks equal-length rank-1 tensors into the rows of a matrix.
inline Tensor stack_rows(Tape* tape, const std::vector<Tensor>& rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no rows");
  const std::size_t n = rows[0].size();
  bool rg = false;
  for (const Tensor& r : rows) {
    if (r.rank() != 1 || r.size() != n)
      throw DimensionError("stack_rows: inconsistent row shapes");
    rg = rg || r.requires_grad();
  }
  Tensor out = detail::make_out({rows.size(), n}, rg);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].value().begin(), rows[i].value().end(),
              out.value().begin() + i * n);
  if (tape && rg) {
    std::vector<std::shared_ptr<TensorNode>> rn;
    rn.reserve(rows.size());
    for (const Tensor& r : rows) rn.push_back(r.node());
    auto on = out.node();
    tape->record([rn, on, n] {
      for (std::size_t i = 0; i < rn.size(); ++i) {
        if (!rn[i]->requires_grad) continue;
        for (std::size_t j = 0; j < n; ++j)
          rn[i]->grad[j] += on->grad[i * n + j];
      }
    });
  }
  return out;
}

// Vertical concatenation of two matrices with equal column counts.
inline Tensor concat_rows(Tape* tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols())
    throw DimensionError("concat_rows: incompatible shapes " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  bool rg = a.requires_grad() || b.requires_grad();
  Tensor out = detail::make_out({a.rows() + b.rows(), a.cols()}, rg);
  std::copy(a.value().begin(), a.value().end(), out.value().begin());
  std::copy(b.value().begin(), b.value().end(),
            out.value().begin() + a.size());
  if (tape && rg) {
    auto an = a.node(), bn = b.node(), on = out.node();
    const std::size_t na = a.size();
    tape->record([an, bn, on, na] {
      if (an->requires_grad)
        for (std::size_t i = 0; i < na; ++i) an->grad[i] += on->grad[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < bn->grad.size(); ++i)
          bn->grad[i] += on->grad[na + i];
    });
  }
  return out;
}

// A[m x n] + x[n] broadcast over rows.
inline Tensor add_row_broadcast(Tape* tape, const Tensor& a, const Tensor& x) {
  if (a.rank() != 2 || x.rank() != 1 || a.cols() != x.size())
    throw DimensionError("add_row_broadcast: incompatible shapes " +
                         shape_str(a.shape()) + " and " + shape_str(x.shape()));
  const std::size_t m = a.rows(), n = a.cols();
  bool rg = a.requires_grad() || x.requires_grad();
  Tensor out = detail::make_out({m, n}, rg);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.value()[i * n + j] = a.at(i, j) + x.at(j);
  if (tape && rg) {
    auto an = a.node(), xn = x.node(), on = out.node();
    tape->record([an, xn, on, m, n] {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double g = on->grad[i * n + j];
          if (an->requires_grad) an->grad[i * n + j] += g;
          if (xn->requires_grad) xn->grad[j] += g;
        }
    });
  }
  return out;
}

// Rows of `table` selected by id -> [ids.size() x dim]. Backward scatters
// into the selected rows, accumulating across repeats.
inline Tensor gather_rows(Tape* tape, const Tensor& table,
                          const std::vector<std::size_t>& ids) {
  if (table.rank() != 2)
    throw DimensionError("gather_rows: table must be rank-2");
  const std::size_t dim = table.cols();
  for (std::size_t id : ids)
    if (id >= table.rows())
      throw VocabError("gather_rows: id " + std::to_string(id) +
                       " out of range (table has " +
                       std::to_string(table.rows()) + " rows)");
  bool rg = table.requires_grad();
  Tensor out = detail::make_out({ids.size(), dim}, rg);
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy(table.value().begin() + ids[i] * dim,
              table.value().begin() + (ids[i] + 1) * dim,
              out.value().begin() + i * dim);
  if (tape && rg) {
    auto tn = table.node();
    auto on = out.node();
    tape->record([tn, on, ids, dim] {
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < dim; ++j)
          tn->grad[ids[i] * dim + j] += on->grad[i * dim + j];
    });
  }
  return out;
}

inline Tensor row(Tape* tape, const Tensor& a, std::size_t i) {
  if (a.rank() != 2 || i >= a.rows())
    throw DimensionError("row: index " + std::to_string(i) + " out of " +
                         shape_str(a.shape()));
  const std::size_t n = a.cols();
  bool rg = a.requires_grad();
  Tensor out = detail::make_out({n}, rg);
  std::copy(a.value().begin() + i * n, a.value().begin() + (i + 1) * n,
            out.value().begin());
  if (tape && rg) {
    auto an = a.node();
    auto on = out.node();
    tape->record([an, on, i, n] {
      for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += on->grad[j];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// loss building blocks
// ---------------------------------------------------------------------------

// Sum of the entries of x at the given indices (repeats accumulate).
inline Tensor gather_sum(Tape* tape, const Tensor& x,
                         const std::vector<std::size_t>& idx) {
  if (x.rank() != 1) throw DimensionError("gather_sum: expected rank-1");
  for (std::size_t i : idx)
    if (i >= x.size())
      throw DimensionError("gather_sum: index " + std::to_string(i) +
                           " out of " + shape_str(x.shape()));
  bool rg = x.requires_grad();
  Tensor out = detail::make_out({1}, rg);
  double s = 0;
  for (std::size_t i : idx) s += x.at(i);
  out.value()[0] = s;
  if (tape && rg) {
    auto xn = x.node();
    auto on = out.node();
    tape->record([xn, on, idx] {
      for (std::size_t i : idx) xn->grad[i] += on->grad[0];
    });
  }
  return out;
}

// log(max(x, floor)) on a scalar; zero gradient in the floored region.
inline Tensor log_floored(Tape* tape, const Tensor& x, double floor_val = 1e-10) {
  if (!x.is_scalar()) throw ContractError("log_floored: expected scalar");
  bool rg = x.requires_grad();
  const double v = x.at(0);
  Tensor out = detail::make_out({1}, rg);
  out.value()[0] = std::log(std::max(v, floor_val));
  if (tape && rg) {
    auto xn = x.node();
    auto on = out.node();
    tape->record([xn, on, floor_val] {
      if (xn->value[0] > floor_val) xn->grad[0] += on->grad[0] / xn->value[0];
    });
  }
  return out;
}

// Cross-entropy of a full-vocabulary softmax against one target id, fused
// for stability: logsumexp(logits) - logits[target].
inline Tensor cross_entropy_logits(Tape* tape, const Tensor& logits,
                                   std::size_t target) {
  if (logits.rank() != 1)
    throw DimensionError("cross_entropy_logits: logits must be rank-1");
  if (target >= logits.size())
    throw VocabError("cross_entropy_logits: target " + std::to_string(target) +
                     " out of vocabulary size " + std::to_string(logits.size()));
  const std::size_t n = logits.size();
  double mx = logits.at(0);
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits.at(i));
  double se = 0;
  for (std::size_t i = 0; i < n; ++i) se += std::exp(logits.at(i) - mx);
  const double lse = mx + std::log(se);
  bool rg = logits.requires_grad();
  Tensor out = detail::make_out({1}, rg);
  out.value()[0] = lse - logits.at(target);
  if (tape && rg) {
    auto ln = logits.node();
    auto on = out.node();
    tape->record([ln, on, target, mx, se, n] {
      const double g = on->grad[0];
      if (g == 0.0) return;
      for (std::size_t i = 0; i < n; ++i) {
        double p = std::exp(ln->value[i] - mx) / se;
        ln->grad[i] += g * (p - (i == target ? 1.0 : 0.0));
      }
    });
  }
  return out;
}

}  // namespace titlecut
