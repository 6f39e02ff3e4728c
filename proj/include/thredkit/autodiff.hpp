#ifndef THREDKIT_AUTODIFF_HPP
#define THREDKIT_AUTODIFF_HPP

// Tape-free reverse-mode automatic differentiation over Tensor values.
//
// Every op returns a Var holding its value plus the parents and a closure that
// pushes the output gradient back into them. backward() walks the graph in
// reverse topological order. One backward pass per graph: intermediate nodes
// are not re-zeroed.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "thredkit/error.hpp"
#include "thredkit/rng.hpp"
#include "thredkit/tensor.hpp"

namespace thredkit::ad {

struct Node {
  Tensor value;
  std::vector<double> grad;  // empty until a gradient reaches this node
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

namespace detail {
inline thread_local bool grad_enabled = true;
}

/// Disables graph recording in the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Dims& dims() const { return node_->value.dims(); }
  std::size_t size() const { return node_->value.size(); }
  double item() const { return node_->value.item(); }
  double operator[](std::size_t i) const { return node_->value[i]; }
  bool requires_grad() const { return node_->requires_grad; }

  /// Gradient buffer; zeros if backward never reached this node.
  Tensor grad() const {
    if (node_->grad.empty()) return Tensor(node_->value.dims(), 0.0);
    return Tensor(node_->value.dims(), node_->grad);
  }
  std::vector<double>& grad_storage() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& shared() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Trainable leaf.
inline Var parameter(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var(std::move(n));
}

inline Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return Var(std::move(n));
}

namespace detail {

inline Var make_result(Tensor value, std::initializer_list<Var> parents,
                       std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (grad_enabled) {
    bool any = false;
    for (const Var& p : parents) any = any || p.requires_grad();
    if (any) {
      n->requires_grad = true;
      for (const Var& p : parents) n->parents.push_back(p.shared());
      n->backward = std::move(backward);
    }
  }
  return Var(std::move(n));
}

inline Var make_result(Tensor value, const std::vector<Var>& parents,
                       std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (grad_enabled) {
    bool any = false;
    for (const Var& p : parents) any = any || p.requires_grad();
    if (any) {
      n->requires_grad = true;
      for (const Var& p : parents) n->parents.push_back(p.shared());
      n->backward = std::move(backward);
    }
  }
  return Var(std::move(n));
}

// Gradient buffer of parent i, or nullptr when it does not need one.
inline double* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

inline void require_same(const char* op, const Var& a, const Var& b) {
  if (a.dims() != b.dims()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.dims()) + " vs " +
                     shape_string(b.dims()));
  }
}

template <typename F, typename DF>
Var unary(const Var& a, F f, DF df) {
  Tensor out(a.dims());
  const auto& x = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  return make_result(std::move(out), {a}, [df](Node& self) {
    double* ga = parent_grad(self, 0);
    if (!ga) return;
    const auto& x = self.parents[0]->value;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      ga[i] += self.grad[i] * df(x[i], self.value[i]);
    }
  });
}

// Elementwise binary op; either operand may be a single element broadcast
// across the other.
template <typename F, typename DA, typename DB>
Var binary(const char* name, const Var& a, const Var& b, F f, DA da, DB db) {
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  Dims dims;
  if (a.dims() == b.dims()) {
    dims = a.dims();
  } else if (nb == 1) {
    dims = a.dims();
  } else if (na == 1) {
    dims = b.dims();
  } else {
    require_same(name, a, b);
  }
  Tensor out(dims);
  const auto& x = a.value();
  const auto& y = b.value();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(x[na == 1 ? 0 : i], y[nb == 1 ? 0 : i]);
  return make_result(std::move(out), {a, b}, [da, db, na, nb](Node& self) {
    const auto& x = self.parents[0]->value;
    const auto& y = self.parents[1]->value;
    double* ga = parent_grad(self, 0);
    double* gb = parent_grad(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double xi = x[na == 1 ? 0 : i];
      const double yi = y[nb == 1 ? 0 : i];
      if (ga) ga[na == 1 ? 0 : i] += self.grad[i] * da(xi, yi);
      if (gb) gb[nb == 1 ? 0 : i] += self.grad[i] * db(xi, yi);
    }
  });
}

inline double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace detail

// ---- elementwise ---------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
  return detail::binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Var sub(const Var& a, const Var& b) {
  return detail::binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Var mul(const Var& a, const Var& b) {
  return detail::binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

inline Var div(const Var& a, const Var& b) {
  return detail::binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

inline Var scale(const Var& a, double s) {
  return detail::unary(
      a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Var add_scalar(const Var& a, double s) {
  return detail::unary(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

inline Var neg(const Var& a) { return scale(a, -1.0); }

inline Var tanh(const Var& a) {
  return detail::unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(const Var& a) {
  return detail::unary(a, detail::sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

inline Var exp(const Var& a) {
  return detail::unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(const Var& a) {
  return detail::unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var sqrt(const Var& a) {
  return detail::unary(
      a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

inline Var square(const Var& a) {
  return detail::unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

/// log(1 + e^x), computed without overflow.
inline Var softplus(const Var& a) {
  return detail::unary(a, detail::softplus_value,
                       [](double x, double) { return detail::sigmoid_value(x); });
}

// ---- reductions ----------------------------------------------------------

inline Var sum(const Var& a) {
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  return detail::make_result(Tensor::scalar(s), {a}, [](Node& self) {
    double* ga = detail::parent_grad(self, 0);
    if (!ga) return;
    const std::size_t n = self.parents[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[0];
  });
}

inline Var mean(const Var& a) {
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

// ---- linear algebra ------------------------------------------------------

/// (m x k)(k x n) -> (m x n); a rank-1 right operand is treated as a column
/// and yields a rank-1 result of length m.
inline Var matmul(const Var& a, const Var& b) {
  const auto& A = a.value();
  const auto& B = b.value();
  if (A.rank() != 2 || (B.rank() != 1 && B.rank() != 2) || A.dims()[1] != B.dims()[0]) {
    throw ShapeError("matmul: shape mismatch " + shape_string(A.dims()) + " vs " +
                     shape_string(B.dims()));
  }
  const std::size_t m = A.dims()[0];
  const std::size_t k = A.dims()[1];
  const std::size_t n = B.rank() == 1 ? 1 : B.dims()[1];
  Tensor out(B.rank() == 1 ? Dims{m} : Dims{m, n});
  const double* pa = A.data().data();
  const double* pb = B.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return detail::make_result(std::move(out), {a, b}, [m, k, n](Node& self) {
    const double* pa = self.parents[0]->value.data().data();
    const double* pb = self.parents[1]->value.data().data();
    const double* g = self.grad.data();
    if (double* ga = detail::parent_grad(self, 0)) {
      // dA = G B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * pb[p * n + j];
          ga[i * k + p] += s;
        }
      }
    }
    if (double* gb = detail::parent_grad(self, 1)) {
      // dB = A^T G
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = pa[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
      }
    }
  });
}

/// W x + b.
inline Var affine(const Var& w, const Var& x, const Var& b) { return add(matmul(w, x), b); }

// ---- softmax family (over the last axis) ---------------------------------

inline Var softmax(const Var& a) {
  const auto& x = a.value();
  if (x.size() == 0) throw ShapeError("softmax: empty tensor");
  const std::size_t width = x.dims().back();
  const std::size_t rows = x.size() / width;
  Tensor out(x.dims());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * width;
    double* o = out.data().data() + r * width;
    const double mx = *std::max_element(in, in + width);
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < width; ++j) o[j] /= z;
  }
  return detail::make_result(std::move(out), {a}, [rows, width](Node& self) {
    double* ga = detail::parent_grad(self, 0);
    if (!ga) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data().data() + r * width;
      const double* g = self.grad.data() + r * width;
      double dot = 0.0;
      for (std::size_t j = 0; j < width; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < width; ++j) ga[r * width + j] += y[j] * (g[j] - dot);
    }
  });
}

inline Var log_softmax(const Var& a) {
  const auto& x = a.value();
  if (x.size() == 0) throw ShapeError("log_softmax: empty tensor");
  const std::size_t width = x.dims().back();
  const std::size_t rows = x.size() / width;
  Tensor out(x.dims());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * width;
    double* o = out.data().data() + r * width;
    const double mx = *std::max_element(in, in + width);
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) z += std::exp(in[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < width; ++j) o[j] = in[j] - lse;
  }
  return detail::make_result(std::move(out), {a}, [rows, width](Node& self) {
    double* ga = detail::parent_grad(self, 0);
    if (!ga) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data().data() + r * width;
      const double* g = self.grad.data() + r * width;
      double total = 0.0;
      for (std::size_t j = 0; j < width; ++j) total += g[j];
      for (std::size_t j = 0; j < width; ++j) ga[r * width + j] += g[j] - std::exp(y[j]) * total;
    }
  });
}

// ---- structural ----------------------------------------------------------

/// Flat concatenation into a rank-1 tensor.
inline Var concat(const std::vector<Var>& parts) {
  std::size_t total = 0;
  for (const Var& p : parts) total += p.size();
  Tensor out({total});
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + off);
    off += p.size();
  }
  return detail::make_result(std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      const std::size_t n = self.parents[i]->value.size();
      if (double* g = detail::parent_grad(self, i)) {
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[off + j];
      }
      off += n;
    }
  });
}

/// Flat slice [offset, offset + length) as a rank-1 tensor.
inline Var slice(const Var& a, std::size_t offset, std::size_t length) {
  if (offset + length > a.size()) {
    throw ShapeError("slice: range [" + std::to_string(offset) + ", " +
                     std::to_string(offset + length) + ") outside " + shape_string(a.dims()));
  }
  Tensor out({length});
  std::copy_n(a.value().data().begin() + offset, length, out.data().begin());
  return detail::make_result(std::move(out), {a}, [offset, length](Node& self) {
    if (double* g = detail::parent_grad(self, 0)) {
      for (std::size_t j = 0; j < length; ++j) g[offset + j] += self.grad[j];
    }
  });
}

/// Row `row` of a matrix (embedding lookup).
inline Var gather_row(const Var& m, std::size_t row) {
  const auto& M = m.value();
  if (M.rank() != 2 || row >= M.dims()[0]) {
    throw ShapeError("gather_row: row " + std::to_string(row) + " outside " + shape_string(M.dims()));
  }
  const std::size_t cols = M.dims()[1];
  Tensor out({cols});
  std::copy_n(M.data().begin() + row * cols, cols, out.data().begin());
  return detail::make_result(std::move(out), {m}, [row, cols](Node& self) {
    if (double* g = detail::parent_grad(self, 0)) {
      for (std::size_t j = 0; j < cols; ++j) g[row * cols + j] += self.grad[j];
    }
  });
}

/// Single element as a scalar.
inline Var pick(const Var& a, std::size_t index) {
  if (index >= a.size()) {
    throw ShapeError("pick: index " + std::to_string(index) + " outside " + shape_string(a.dims()));
  }
  return detail::make_result(Tensor::scalar(a[index]), {a}, [index](Node& self) {
    if (double* g = detail::parent_grad(self, 0)) g[index] += self.grad[0];
  });
}

/// Fused LSTM cell. `gates` holds the input, forget, candidate and output
/// pre-activations (4H); returns [h ; c] of length 2H.
inline Var lstm_cell(const Var& gates, const Var& c_prev) {
  const std::size_t h = c_prev.size();
  if (gates.size() != 4 * h) {
    throw ShapeError("lstm_cell: shape mismatch " + shape_string(gates.dims()) + " vs " +
                     shape_string(c_prev.dims()));
  }
  const auto& gv = gates.value();
  const auto& cp = c_prev.value();
  Tensor out({2 * h});
  std::vector<double> act(5 * h);  // i, f, g, o, tanh(c)
  for (std::size_t j = 0; j < h; ++j) {
    const double i = detail::sigmoid_value(gv[j]);
    const double f = detail::sigmoid_value(gv[h + j]);
    const double g = std::tanh(gv[2 * h + j]);
    const double o = detail::sigmoid_value(gv[3 * h + j]);
    const double c = f * cp[j] + i * g;
    const double tc = std::tanh(c);
    act[j] = i;
    act[h + j] = f;
    act[2 * h + j] = g;
    act[3 * h + j] = o;
    act[4 * h + j] = tc;
    out[j] = o * tc;
    out[h + j] = c;
  }
  return detail::make_result(
      std::move(out), {gates, c_prev}, [h, act = std::move(act)](Node& self) {
        double* gg = detail::parent_grad(self, 0);
        double* gc = detail::parent_grad(self, 1);
        const auto& cp = self.parents[1]->value;
        for (std::size_t j = 0; j < h; ++j) {
          const double i = act[j], f = act[h + j], g = act[2 * h + j], o = act[3 * h + j];
          const double tc = act[4 * h + j];
          const double dh = self.grad[j];
          const double dc = self.grad[h + j] + dh * o * (1.0 - tc * tc);
          if (gg) {
            gg[j] += dc * g * i * (1.0 - i);
            gg[h + j] += dc * cp[j] * f * (1.0 - f);
            gg[2 * h + j] += dc * i * (1.0 - g * g);
            gg[3 * h + j] += dh * tc * o * (1.0 - o);
          }
          if (gc) gc[j] += dc * f;
        }
      });
}

// ---- sampling ------------------------------------------------------------

/// Reparameterized draw mu + sqrt(var) * eps with eps ~ N(0, I) from `rng`.
inline Var gaussian_sample(const Var& mu, const Var& var, Rng& rng) {
  detail::require_same("gaussian_sample", mu, var);
  const std::size_t n = mu.size();
  std::vector<double> eps(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(var[i] >= 0.0)) {
      throw DomainError("gaussian_sample: negative variance " + std::to_string(var[i]) +
                        " at index " + std::to_string(i));
    }
  }
  for (auto& e : eps) e = rng.normal();
  Tensor out(mu.dims());
  for (std::size_t i = 0; i < n; ++i) out[i] = var[i] == 0.0 ? mu[i] : mu[i] + std::sqrt(var[i]) * eps[i];
  return detail::make_result(std::move(out), {mu, var}, [eps = std::move(eps)](Node& self) {
    const auto& v = self.parents[1]->value;
    double* gm = detail::parent_grad(self, 0);
    double* gv = detail::parent_grad(self, 1);
    for (std::size_t i = 0; i < eps.size(); ++i) {
      if (gm) gm[i] += self.grad[i];
      // d/dv sqrt(v) is unbounded at v = 0; the sample does not move there.
      if (gv && v[i] > 0.0) gv[i] += self.grad[i] * eps[i] / (2.0 * std::sqrt(v[i]));
    }
  });
}

// ---- backward ------------------------------------------------------------

/// Populates gradients of every node reachable from a scalar `loss`.
inline void backward(const Var& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + shape_string(loss.dims()));
  }
  Node* root = loss.node();
  if (!root->requires_grad) return;

  // iterative post-order DFS
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

}  // namespace thredkit::ad

#endif  // THREDKIT_AUTODIFF_HPP
