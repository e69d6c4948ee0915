#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mrgrp/errors.hpp"

namespace mrgrp {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

class Tape;

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  const Tape* tape = nullptr;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

/// Dense row-major 64-bit tensor. Copies share the underlying node, so a
/// Tensor behaves like a handle; use clone() for a deep copy.
///
/// Rank-1 tensors of length n act as 1 x n row vectors wherever a matrix is
/// expected.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    if (shape_size(shape) != values.size()) {
      throw DimensionError("shape " + shape_string(shape) + " does not hold " +
                           std::to_string(values.size()) + " values");
    }
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    if (requires_grad) n->ensure_grad();
    return Tensor(std::move(n));
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto size = shape_size(shape);
    return from(std::move(shape), std::vector<double>(size, 0.0), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const { return rank() >= 2 ? node_->shape[0] : 1; }
  std::size_t cols() const { return node_->shape.empty() ? 1 : node_->shape.back(); }

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  double operator[](std::size_t i) const { return node_->value[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
  double item() const {
    if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) {
    node_->requires_grad = on;
    if (on) node_->ensure_grad();
  }

  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::span<const double> grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  std::span<double> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

  Tensor clone() const {
    auto t = from(shape(), node_->value, requires_grad());
    return t;
  }

  TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode>& shared() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

/// GeLU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
struct GeluConstants {
  static constexpr double kSqrt2OverPi = 0.7978845608028654;
  static constexpr double kCubic = 0.044715;
};

inline double gelu_value(double x) {
  const double u = GeluConstants::kSqrt2OverPi * (x + GeluConstants::kCubic * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

inline double gelu_derivative(double x) {
  const double u = GeluConstants::kSqrt2OverPi * (x + GeluConstants::kCubic * x * x * x);
  const double t = std::tanh(u);
  const double du = GeluConstants::kSqrt2OverPi * (1.0 + 3.0 * GeluConstants::kCubic * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

/// Records operations for reverse-mode differentiation (define-by-run).
///
/// A tape is single-owner. Leaves created outside the tape (parameters) are
/// never recorded; their grads are accumulated during backward(). With
/// grad disabled the tape records nothing and builds no closures, which
/// makes concurrent inference over shared parameters safe.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  Tensor constant(Shape shape, std::vector<double> values) const {
    return Tensor::from(std::move(shape), std::move(values), false);
  }

  /// Populates grads of every requires_grad tensor reachable from `out`.
  void backward(const Tensor& out) {
    if (out.size() != 1) {
      throw DimensionError("backward() needs a scalar output, got " + shape_string(out.shape()));
    }
    if (!out.requires_grad()) return;
    if (out.node()->tape != this) throw Error("backward() output was not recorded on this tape");
    out.node()->ensure_grad();
    out.node()->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      TensorNode& n = **it;
      if (n.backward && n.grad.size() == n.value.size()) n.backward(n);
    }
  }

  // --- linear algebra -----------------------------------------------------

  Tensor matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k || a.rank() > 2 || b.rank() > 2) {
      throw DimensionError("matmul shape mismatch: " + shape_string(a.shape()) + " x " +
                           shape_string(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    const double* A = a.values().data();
    const double* B = b.values().data();
    for (std::size_t i = 0; i < m; ++i) {
      double* row = out.data() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A[i * k + p];
        if (aip == 0.0) continue;
        const double* brow = B + p * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
      }
    }
    Shape shape = a.rank() == 1 ? Shape{n} : Shape{m, n};
    return record(std::move(shape), std::move(out), {a, b}, [m, k, n](TensorNode& o) {
      TensorNode& na = *o.parents[0];
      TensorNode& nb = *o.parents[1];
      const double* G = o.grad.data();
      if (na.requires_grad) {
        na.ensure_grad();
        const double* Bv = nb.value.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            const double* grow = G + i * n;
            const double* brow = Bv + p * n;
            for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
            na.grad[i * k + p] += s;
          }
      }
      if (nb.requires_grad) {
        nb.ensure_grad();
        const double* Av = na.value.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = Av[i * k + p];
            if (aip == 0.0) continue;
            double* gb = nb.grad.data() + p * n;
            const double* grow = G + i * n;
            for (std::size_t j = 0; j < n; ++j) gb[j] += aip * grow[j];
          }
      }
    });
  }

  Tensor transpose(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.values()[i * n + j];
    return record({n, m}, std::move(out), {a}, [m, n](TensorNode& o) {
      TensorNode& p = *o.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) p.grad[i * n + j] += o.grad[j * m + i];
    });
  }

  // --- elementwise ----------------------------------------------------------

  Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, 1.0, 1.0); }
  Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, 1.0, -1.0); }

  Tensor mul(const Tensor& a, const Tensor& b) {
    require_same(a, b, "mul");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    return record(a.shape(), std::move(out), {a, b}, [](TensorNode& o) {
      TensorNode& na = *o.parents[0];
      TensorNode& nb = *o.parents[1];
      if (na.requires_grad) {
        na.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) na.grad[i] += o.grad[i] * nb.value[i];
      }
      if (nb.requires_grad) {
        nb.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) nb.grad[i] += o.grad[i] * na.value[i];
      }
    });
  }

  /// x (rows x d) + bias (d), broadcast over rows.
  Tensor add_bias(const Tensor& x, const Tensor& bias) {
    const std::size_t r = x.rows(), d = x.cols();
    if (bias.size() != d) {
      throw DimensionError("add_bias shape mismatch: " + shape_string(x.shape()) + " + " +
                           shape_string(bias.shape()));
    }
    std::vector<double> out(x.values().begin(), x.values().end());
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] += bias[j];
    return record(x.shape(), std::move(out), {x, bias}, [r, d](TensorNode& o) {
      TensorNode& nx = *o.parents[0];
      TensorNode& nb = *o.parents[1];
      if (nx.requires_grad) {
        nx.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) nx.grad[i] += o.grad[i];
      }
      if (nb.requires_grad) {
        nb.ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < d; ++j) nb.grad[j] += o.grad[i * d + j];
      }
    });
  }

  Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
    return record(a.shape(), std::move(out), {a}, [s](TensorNode& o) {
      TensorNode& p = *o.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += s * o.grad[i];
    });
  }

  Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + s;
    return record(a.shape(), std::move(out), {a}, passthrough_backward());
  }

  Tensor gelu(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_value(a[i]);
    return record(a.shape(), std::move(out), {a}, [](TensorNode& o) {
      TensorNode& p = *o.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += o.grad[i] * gelu_derivative(p.value[i]);
    });
  }

  Tensor sigmoid(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a[i]));
    return record(a.shape(), std::move(out), {a}, [](TensorNode& o) {
      TensorNode& p = *o.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        const double y = o.value[i];
        p.grad[i] += o.grad[i] * y * (1.0 - y);
      }
    });
  }

  Tensor tanh(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a[i]);
    return record(a.shape(), std::move(out), {a}, [](TensorNode& o) {
      TensorNode& p = *o.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        const double y = o.value[i];
        p.grad[i] += o.grad[i] * (1.0 - y * y);
      }
    });
  }

  Tensor log(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a[i]);
    return record(a.shape(), std::move(out), {a}, [](TensorNode& o) {
      TensorNode& p = *o.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += o.grad[i] / p.value[i];
    });
  }

  /// Elementwise max; ties route the gradient to `a`.
  Tensor maximum(const Tensor& a, const Tensor& b) {
    require_same(a, b, "maximum");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] >= b[i] ? a[i] : b[i];
    return record(a.shape(), std::move(out), {a, b}, [](TensorNode& o) {
      TensorNode& na = *o.parents[0];
      TensorNode& nb = *o.parents[1];
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        TensorNode& target = na.value[i] >= nb.value[i] ? na : nb;
        if (!target.requires_grad) continue;
        target.ensure_grad();
        target.grad[i] += o.grad[i];
      }
    });
  }

  /// Pinball term on residual x = prediction - truth:
  /// (1 - gamma) x for x >= 0, -gamma x otherwise.
  Tensor pinball(const Tensor& x, double gamma) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = x[i] >= 0.0 ? (1.0 - gamma) * x[i] : -gamma * x[i];
    return record(x.shape(), std::move(out), {x}, [gamma](TensorNode& o) {
      TensorNode& p = *o.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        p.grad[i] += o.grad[i] * (p.value[i] >= 0.0 ? 1.0 - gamma : -gamma);
    });
  }

  // --- reductions -----------------------------------------------------------

  Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    return record({1}, {s}, {a}, [](TensorNode& o) {
      TensorNode& p = *o.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (double& g : p.grad) g += o.grad[0];
    });
  }

  Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

  /// Scalar element a[index].
  Tensor pick(const Tensor& a, std::size_t index) {
    if (index >= a.size()) throw DimensionError("pick index out of range");
    return record({1}, {a[index]}, {a}, [index](TensorNode& o) {
      TensorNode& p = *o.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      p.grad[index] += o.grad[0];
    });
  }

  // --- softmax family -------------------------------------------------------

  /// Softmax over unmasked entries (mask true = excluded). Masked outputs
  /// are exactly zero.
  Tensor softmax_masked(const Tensor& logits, const std::vector<bool>& mask) {
    const std::size_t n = logits.size();
    if (mask.size() != n) throw DimensionError("softmax_masked: mask length differs from logits");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
      if (!mask[i]) mx = std::max(mx, logits[i]);
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw EmptyCandidateError("softmax_masked: every entry is masked");
    }
    std::vector<double> out(n, 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (!mask[i]) z += (out[i] = std::exp(logits[i] - mx));
    for (std::size_t i = 0; i < n; ++i) out[i] /= z;
    return record(logits.shape(), std::move(out), {logits}, [](TensorNode& o) {
      TensorNode& p = *o.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      double dot = 0.0;
      for (std::size_t i = 0; i < o.value.size(); ++i) dot += o.grad[i] * o.value[i];
      for (std::size_t i = 0; i < o.value.size(); ++i)
        if (o.value[i] != 0.0) p.grad[i] += o.value[i] * (o.grad[i] - dot);
    });
  }

  /// -log softmax_masked(logits)[target], computed via log-sum-exp.
  Tensor cross_entropy_masked(const Tensor& logits, const std::vector<bool>& mask,
                              std::size_t target) {
    const std::size_t n = logits.size();
    if (mask.size() != n || target >= n) throw DimensionError("cross_entropy_masked: bad target/mask");
    if (mask[target]) throw ConsistencyError("cross_entropy_masked: target entry is masked");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
      if (!mask[i]) mx = std::max(mx, logits[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (!mask[i]) z += std::exp(logits[i] - mx);
    const double lse = mx + std::log(z);
    return record({1}, {lse - logits[target]}, {logits},
                  [mask, target, lse](TensorNode& o) {
                    TensorNode& p = *o.parents[0];
                    if (!p.requires_grad) return;
                    p.ensure_grad();
                    for (std::size_t i = 0; i < p.value.size(); ++i) {
                      if (mask[i]) continue;
                      const double s = std::exp(p.value[i] - lse);
                      p.grad[i] += o.grad[0] * (s - (i == target ? 1.0 : 0.0));
                    }
                  });
  }

  /// Row-wise softmax of a matrix.
  Tensor softmax_rows(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < r; ++i) {
      const double* x = a.values().data() + i * c;
      double* y = out.data() + i * c;
      const double mx = *std::max_element(x, x + c);
      double z = 0.0;
      for (std::size_t j = 0; j < c; ++j) z += (y[j] = std::exp(x[j] - mx));
      for (std::size_t j = 0; j < c; ++j) y[j] /= z;
    }
    return record(a.shape(), std::move(out), {a}, [r, c](TensorNode& o) {
      TensorNode& p = *o.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (std::size_t i = 0; i < r; ++i) {
        const double* y = o.value.data() + i * c;
        const double* g = o.grad.data() + i * c;
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += g[j] * y[j];
        for (std::size_t j = 0; j < c; ++j) p.grad[i * c + j] += y[j] * (g[j] - dot);
      }
    });
  }

  /// Row-wise layer normalisation with learned gain and bias (length d).
  Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-5) {
    const std::size_t r = x.rows(), d = x.cols();
    if (gain.size() != d || bias.size() != d) throw DimensionError("layer_norm_rows: gain/bias size");
    std::vector<double> out(x.size());
    std::vector<double> xhat(x.size());
    std::vector<double> inv_std(r);
    for (std::size_t i = 0; i < r; ++i) {
      const double* xi = x.values().data() + i * d;
      double mu = 0.0;
      for (std::size_t j = 0; j < d; ++j) mu += xi[j];
      mu /= static_cast<double>(d);
      double var = 0.0;
      for (std::size_t j = 0; j < d; ++j) var += (xi[j] - mu) * (xi[j] - mu);
      var /= static_cast<double>(d);
      inv_std[i] = 1.0 / std::sqrt(var + eps);
      for (std::size_t j = 0; j < d; ++j) {
        xhat[i * d + j] = (xi[j] - mu) * inv_std[i];
        out[i * d + j] = xhat[i * d + j] * gain[j] + bias[j];
      }
    }
    return record(x.shape(), std::move(out), {x, gain, bias},
                  [r, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorNode& o) {
                    TensorNode& nx = *o.parents[0];
                    TensorNode& ng = *o.parents[1];
                    TensorNode& nb = *o.parents[2];
                    if (ng.requires_grad) ng.ensure_grad();
                    if (nb.requires_grad) nb.ensure_grad();
                    if (nx.requires_grad) nx.ensure_grad();
                    std::vector<double> dxhat(d);
                    for (std::size_t i = 0; i < r; ++i) {
                      const double* g = o.grad.data() + i * d;
                      const double* xh = xhat.data() + i * d;
                      double m1 = 0.0, m2 = 0.0;
                      for (std::size_t j = 0; j < d; ++j) {
                        if (ng.requires_grad) ng.grad[j] += g[j] * xh[j];
                        if (nb.requires_grad) nb.grad[j] += g[j];
                        dxhat[j] = g[j] * ng.value[j];
                        m1 += dxhat[j];
                        m2 += dxhat[j] * xh[j];
                      }
                      if (!nx.requires_grad) continue;
                      m1 /= static_cast<double>(d);
                      m2 /= static_cast<double>(d);
                      for (std::size_t j = 0; j < d; ++j)
                        nx.grad[i * d + j] += inv_std[i] * (dxhat[j] - m1 - xh[j] * m2);
                    }
                  });
  }

  // --- layout ---------------------------------------------------------------

  Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_size(shape) != a.size()) {
      throw DimensionError("reshape " + shape_string(a.shape()) + " -> " + shape_string(shape));
    }
    return record(std::move(shape), std::vector<double>(a.values().begin(), a.values().end()), {a},
                  passthrough_backward());
  }

  /// Horizontal concatenation of matrices with equal row counts.
  Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols of nothing");
    const std::size_t r = parts[0].rows();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
      if (p.rows() != r) {
        throw DimensionError("concat_cols row mismatch: " + shape_string(parts[0].shape()) + " vs " +
                             shape_string(p.shape()));
      }
      widths.push_back(p.cols());
      total += p.cols();
    }
    std::vector<double> out(r * total);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      for (std::size_t i = 0; i < r; ++i)
        std::copy_n(parts[k].values().data() + i * widths[k], widths[k], out.data() + i * total + offset);
      offset += widths[k];
    }
    Shape shape = (parts[0].rank() == 1) ? Shape{total} : Shape{r, total};
    return record(std::move(shape), std::move(out), parts, [r, total, widths](TensorNode& o) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < widths.size(); ++k) {
        TensorNode& p = *o.parents[k];
        if (p.requires_grad) {
          p.ensure_grad();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < widths[k]; ++j)
              p.grad[i * widths[k] + j] += o.grad[i * total + off + j];
        }
        off += widths[k];
      }
    });
  }

  Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len) {
    const std::size_t r = a.rows(), c = a.cols();
    if (start + len > c) throw DimensionError("slice_cols out of range on " + shape_string(a.shape()));
    std::vector<double> out(r * len);
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(a.values().data() + i * c + start, len, out.data() + i * len);
    Shape shape = a.rank() == 1 ? Shape{len} : Shape{r, len};
    return record(std::move(shape), std::move(out), {a}, [r, c, start, len](TensorNode& o) {
      TensorNode& p = *o.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < len; ++j) p.grad[i * c + start + j] += o.grad[i * len + j];
    });
  }

  /// Rows a[idx[0]], a[idx[1]], ... as a (len(idx) x cols) matrix.
  Tensor gather_rows(const Tensor& a, std::vector<std::size_t> idx) {
    const std::size_t c = a.cols();
    std::vector<double> out(idx.size() * c);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= a.rows()) throw DimensionError("gather_rows index out of range");
      std::copy_n(a.values().data() + idx[i] * c, c, out.data() + i * c);
    }
    Shape shape{idx.size(), c};
    return record(std::move(shape), std::move(out), {a}, [c, idx = std::move(idx)](TensorNode& o) {
      TensorNode& p = *o.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) p.grad[idx[i] * c + j] += o.grad[i * c + j];
    });
  }

  /// Row i of `a` as a 1 x cols matrix.
  Tensor row(const Tensor& a, std::size_t i) { return gather_rows(a, {i}); }

  /// out[idx[i]] += a[i] over rows, producing an (n x cols) matrix.
  Tensor scatter_add_rows(const Tensor& a, std::vector<std::size_t> idx, std::size_t n) {
    const std::size_t c = a.cols();
    if (idx.size() != a.rows()) throw DimensionError("scatter_add_rows: index count differs from rows");
    std::vector<double> out(n * c, 0.0);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= n) throw DimensionError("scatter_add_rows index out of range");
      for (std::size_t j = 0; j < c; ++j) out[idx[i] * c + j] += a.values()[i * c + j];
    }
    return record({n, c}, std::move(out), {a}, [c, idx = std::move(idx)](TensorNode& o) {
      TensorNode& p = *o.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) p.grad[i * c + j] += o.grad[idx[i] * c + j];
    });
  }

  /// Stack 1 x c row vectors into an (k x c) matrix.
  Tensor stack_rows(const std::vector<Tensor>& rows_in) {
    if (rows_in.empty()) throw DimensionError("stack_rows of nothing");
    const std::size_t c = rows_in[0].size();
    std::vector<double> out;
    out.reserve(rows_in.size() * c);
    for (const auto& r : rows_in) {
      if (r.size() != c) throw DimensionError("stack_rows: ragged rows");
      out.insert(out.end(), r.values().begin(), r.values().end());
    }
    return record({rows_in.size(), c}, std::move(out), rows_in, [c](TensorNode& o) {
      for (std::size_t k = 0; k < o.parents.size(); ++k) {
        TensorNode& p = *o.parents[k];
        if (!p.requires_grad) continue;
        p.ensure_grad();
        for (std::size_t j = 0; j < c; ++j) p.grad[j] += o.grad[k * c + j];
      }
    });
  }

 private:
  using BackwardFn = std::function<void(TensorNode&)>;

  static BackwardFn passthrough_backward() {
    return [](TensorNode& o) {
      TensorNode& p = *o.parents[0];
      if (!p.requires_grad) return;
      p.ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) p.grad[i] += o.grad[i];
    };
  }

  static void require_same(const Tensor& a, const Tensor& b, const char* op) {
    if (a.size() != b.size() || a.rows() != b.rows()) {
      throw DimensionError(std::string(op) + " shape mismatch: " + shape_string(a.shape()) + " vs " +
                           shape_string(b.shape()));
    }
  }

  Tensor binary(const Tensor& a, const Tensor& b, double sa, double sb) {
    require_same(a, b, sb > 0 ? "add" : "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sa * a[i] + sb * b[i];
    return record(a.shape(), std::move(out), {a, b}, [sa, sb](TensorNode& o) {
      TensorNode& na = *o.parents[0];
      TensorNode& nb = *o.parents[1];
      if (na.requires_grad) {
        na.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) na.grad[i] += sa * o.grad[i];
      }
      if (nb.requires_grad) {
        nb.ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) nb.grad[i] += sb * o.grad[i];
      }
    });
  }

  Tensor record(Shape shape, std::vector<double> values, const std::vector<Tensor>& parents,
                BackwardFn fn) {
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->tape = this;
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (grad_enabled_ && any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (const auto& p : parents) node->parents.push_back(p.shared());
      node->backward = std::move(fn);
      nodes_.push_back(node);
    }
    return Tensor(std::move(node));
  }

  bool grad_enabled_;
  std::vector<std::shared_ptr<TensorNode>> nodes_;
};

}  // namespace mrgrp
