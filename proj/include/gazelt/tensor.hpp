#ifndef GAZELT_TENSOR_HPP
#define GAZELT_TENSOR_HPP

// Dense n-dimensional tensors with a dynamic reverse-mode differentiation
// graph. Every op returns a new Tensor whose node remembers its inputs and a
// closure that pushes the output adjoint back into them. A graph is owned by
// the tensors that reference it and is confined to a single thread.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gazelt/error.hpp"

namespace gazelt::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

template <class Real>
struct Node {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;  // empty until an adjoint reaches this node
  bool requires_grad = false;
  bool is_leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), Real{0});
  }
};

template <class Real>
class Tensor {
 public:
  using value_type = Real;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<Real>> n) : node_(std::move(n)) {}

  static Tensor from(Shape shape, std::vector<Real> values, bool requires_grad = false) {
    if (shape.empty()) shape = {1};
    if (numel_of(shape) != values.size())
      throw ShapeError("tensor data size " + std::to_string(values.size()) +
                       " does not match shape " + to_string(shape));
    for (auto d : shape)
      if (d == 0) throw ShapeError("zero extent in shape " + to_string(shape));
    auto n = std::make_shared<Node<Real>>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor full(Shape shape, Real v, bool requires_grad = false) {
    auto count = numel_of(shape);
    return from(std::move(shape), std::vector<Real>(count, v), requires_grad);
  }
  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), Real{0}, requires_grad);
  }
  static Tensor scalar(Real v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const Real> data() const { return node_->value; }
  /// Direct write access; meant for leaves (parameters, inputs) only.
  std::span<Real> mutable_data() { return node_->value; }
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool has_grad() const { return !node_->grad.empty(); }

  Real item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
    return node_->value[0];
  }
  Real operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), Real{0});
  }

  /// Copy of the values with no graph linkage.
  Tensor detach() const { return from(shape(), node_->value, false); }

  const std::shared_ptr<Node<Real>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<Real>> node_;
};

namespace detail {

template <class Real, class Backward>
Tensor<Real> make_result(Shape shape, std::vector<Real> value,
                         std::initializer_list<const Tensor<Real>*> inputs,
                         Backward&& backward) {
  auto n = std::make_shared<Node<Real>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->is_leaf = false;
  bool any = false;
  for (const auto* t : inputs) any = any || t->requires_grad();
  if (any) {
    n->requires_grad = true;
    for (const auto* t : inputs) n->parents.push_back(t->node());
    n->backward_fn = std::forward<Backward>(backward);
  }
  return Tensor<Real>(std::move(n));
}

template <class Real>
Tensor<Real> make_result_list(Shape shape, std::vector<Real> value,
                              const std::vector<Tensor<Real>>& inputs,
                              std::function<void(Node<Real>&)> backward) {
  auto n = std::make_shared<Node<Real>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->is_leaf = false;
  bool any = std::any_of(inputs.begin(), inputs.end(),
                         [](const Tensor<Real>& t) { return t.requires_grad(); });
  if (any) {
    n->requires_grad = true;
    for (const auto& t : inputs) n->parents.push_back(t.node());
    n->backward_fn = std::move(backward);
  }
  return Tensor<Real>(std::move(n));
}

/// Gradient buffer of parent i, or null when that parent needs none.
template <class Real>
inline Real* grad_of(Node<Real>& self, std::size_t i) {
  auto& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

// C[m×n] += A[m×k] · B[k×n]
template <class Real>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c) {
  for (std::size_t i = 0; i < m; ++i) {
    Real* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = a[i * k + p];
      const Real* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[m×n] += A[k×m]ᵀ · B[k×n]
template <class Real>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const Real* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const Real av = a[p * m + i];
      Real* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[m×n] += A[m×k] · B[n×k]ᵀ
template <class Real>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const Real* a, const Real* b, Real* c) {
  std::vector<Real> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm_nn(m, n, k, a, bt.data(), c);
}

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("cannot broadcast shapes " + to_string(a) + " and " + to_string(b));
    out[i] = std::max(da, db);
  }
  return out;
}

/// Flat offsets into an operand for every element of the broadcast output.
inline std::vector<std::size_t> broadcast_offsets(const Shape& in, const Shape& out) {
  const std::size_t r = out.size();
  std::vector<std::size_t> stride(r, 0);
  std::size_t s = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    const std::size_t oi = i + (r - in.size());
    stride[oi] = in[i] == 1 ? 0 : s;
    s *= in[i];
  }
  const std::size_t total = numel_of(out);
  std::vector<std::size_t> offs(total);
  std::vector<std::size_t> idx(r, 0);
  std::size_t off = 0;
  for (std::size_t e = 0; e < total; ++e) {
    offs[e] = off;
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      off += stride[d];
      if (idx[d] < out[d]) break;
      off -= stride[d] * idx[d];
      idx[d] = 0;
    }
  }
  return offs;
}

enum class BinOp { add, sub, mul, div };

template <class Real>
Tensor<Real> binary(const Tensor<Real>& a, const Tensor<Real>& b, BinOp op) {
  auto apply = [op](Real x, Real y) -> Real {
    switch (op) {
      case BinOp::add: return x + y;
      case BinOp::sub: return x - y;
      case BinOp::mul: return x * y;
      case BinOp::div: return x / y;
    }
    return Real{0};
  };
  if (a.shape() == b.shape()) {
    const std::size_t n = a.numel();
    std::vector<Real> out(n);
    const Real* av = a.data().data();
    const Real* bv = b.data().data();
    for (std::size_t i = 0; i < n; ++i) out[i] = apply(av[i], bv[i]);
    return make_result<Real>(a.shape(), std::move(out), {&a, &b}, [op](Node<Real>& self) {
      const auto& A = self.parents[0]->value;
      const auto& B = self.parents[1]->value;
      const auto& g = self.grad;
      if (Real* ga = grad_of(self, 0)) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (op) {
            case BinOp::add: case BinOp::sub: ga[i] += g[i]; break;
            case BinOp::mul: ga[i] += g[i] * B[i]; break;
            case BinOp::div: ga[i] += g[i] / B[i]; break;
          }
        }
      }
      if (Real* gb = grad_of(self, 1)) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (op) {
            case BinOp::add: gb[i] += g[i]; break;
            case BinOp::sub: gb[i] -= g[i]; break;
            case BinOp::mul: gb[i] += g[i] * A[i]; break;
            case BinOp::div: gb[i] -= g[i] * A[i] / (B[i] * B[i]); break;
          }
        }
      }
    });
  }
  Shape out_shape = broadcast_shape(a.shape(), b.shape());
  auto oa = std::make_shared<std::vector<std::size_t>>(broadcast_offsets(a.shape(), out_shape));
  auto ob = std::make_shared<std::vector<std::size_t>>(broadcast_offsets(b.shape(), out_shape));
  const std::size_t n = oa->size();
  std::vector<Real> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = apply(a.data()[(*oa)[i]], b.data()[(*ob)[i]]);
  return make_result<Real>(std::move(out_shape), std::move(out), {&a, &b},
                           [op, oa, ob](Node<Real>& self) {
    const auto& A = self.parents[0]->value;
    const auto& B = self.parents[1]->value;
    const auto& g = self.grad;
    Real* ga = grad_of(self, 0);
    Real* gb = grad_of(self, 1);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::size_t ia = (*oa)[i], ib = (*ob)[i];
      switch (op) {
        case BinOp::add:
          if (ga) ga[ia] += g[i];
          if (gb) gb[ib] += g[i];
          break;
        case BinOp::sub:
          if (ga) ga[ia] += g[i];
          if (gb) gb[ib] -= g[i];
          break;
        case BinOp::mul:
          if (ga) ga[ia] += g[i] * B[ib];
          if (gb) gb[ib] += g[i] * A[ia];
          break;
        case BinOp::div:
          if (ga) ga[ia] += g[i] / B[ib];
          if (gb) gb[ib] -= g[i] * A[ia] / (B[ib] * B[ib]);
          break;
      }
    }
  });
}

/// Elementwise map with derivative expressed through input x and output y.
template <class Real, class F, class DF>
Tensor<Real> unary(const Tensor<Real>& x, F f, DF df) {
  const std::size_t n = x.numel();
  std::vector<Real> out(n);
  const Real* xv = x.data().data();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(xv[i]);
  return make_result<Real>(x.shape(), std::move(out), {&x}, [df](Node<Real>& self) {
    Real* gx = grad_of(self, 0);
    if (!gx) return;
    const auto& X = self.parents[0]->value;
    const auto& Y = self.value;
    for (std::size_t i = 0; i < Y.size(); ++i) gx[i] += self.grad[i] * df(X[i], Y[i]);
  });
}

/// Splits a shape around `axis` into (outer, axis length, inner).
inline std::tuple<std::size_t, std::size_t, std::size_t> axis_split(const Shape& s, std::size_t axis) {
  if (axis >= s.size())
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  return {outer, s[axis], inner};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic (numpy-style broadcasting, right-aligned axes)

template <class Real> Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) { return detail::binary(a, b, detail::BinOp::add); }
template <class Real> Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) { return detail::binary(a, b, detail::BinOp::sub); }
template <class Real> Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) { return detail::binary(a, b, detail::BinOp::mul); }
template <class Real> Tensor<Real> div(const Tensor<Real>& a, const Tensor<Real>& b) { return detail::binary(a, b, detail::BinOp::div); }

template <class Real> Tensor<Real> operator+(const Tensor<Real>& a, const Tensor<Real>& b) { return add(a, b); }
template <class Real> Tensor<Real> operator-(const Tensor<Real>& a, const Tensor<Real>& b) { return sub(a, b); }
template <class Real> Tensor<Real> operator*(const Tensor<Real>& a, const Tensor<Real>& b) { return mul(a, b); }
template <class Real> Tensor<Real> operator/(const Tensor<Real>& a, const Tensor<Real>& b) { return div(a, b); }

template <class Real>
Tensor<Real> scale(const Tensor<Real>& x, Real c) {
  return detail::unary(x, [c](Real v) { return c * v; }, [c](Real, Real) { return c; });
}
template <class Real>
Tensor<Real> add_scalar(const Tensor<Real>& x, Real c) {
  return detail::unary(x, [c](Real v) { return v + c; }, [](Real, Real) { return Real{1}; });
}
template <class Real>
Tensor<Real> neg(const Tensor<Real>& x) { return scale(x, Real{-1}); }
/// (x - mean) / sd; the identity transform is passed through untouched.
template <class Real>
Tensor<Real> standardize(const Tensor<Real>& x, double mean, double sd) {
  if (mean == 0.0 && sd == 1.0) return x;
  return scale(add_scalar(x, static_cast<Real>(-mean)), static_cast<Real>(1.0 / sd));
}

// Records which side of its kink every relu / clamp_min input falls on.
// grad_check installs one to find perturbations that cross a kink, where a
// central difference does not estimate the derivative.
struct KinkTrace {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  void add(bool above) { hash = (hash ^ (above ? 1u : 2u)) * 0x100000001b3ULL; }
};

namespace detail {
inline thread_local KinkTrace* kink_trace = nullptr;

template <class Real>
void trace_kinks(const Tensor<Real>& x, Real at) {
  if (!kink_trace) return;
  for (Real v : x.data()) kink_trace->add(v > at);
}
}  // namespace detail

template <class Real>
Tensor<Real> relu(const Tensor<Real>& x) {
  detail::trace_kinks(x, Real{0});
  return detail::unary(
      x, [](Real v) { return v > Real{0} ? v : Real{0}; },
      [](Real v, Real) { return v > Real{0} ? Real{1} : Real{0}; });
}

template <class Real>
Tensor<Real> sigmoid(const Tensor<Real>& x) {
  return detail::unary(
      x,
      [](Real v) {
        if (v >= 0) return Real{1} / (Real{1} + std::exp(-v));
        const Real e = std::exp(v);
        return e / (Real{1} + e);
      },
      [](Real, Real y) { return y * (Real{1} - y); });
}

template <class Real>
Tensor<Real> exp(const Tensor<Real>& x) {
  return detail::unary(x, [](Real v) { return std::exp(v); }, [](Real, Real y) { return y; });
}

template <class Real>
Tensor<Real> log(const Tensor<Real>& x) {
  return detail::unary(x, [](Real v) { return std::log(v); }, [](Real v, Real) { return Real{1} / v; });
}

/// The adjoint at 0 is taken as 0, the subgradient convention for norms.
template <class Real>
Tensor<Real> sqrt(const Tensor<Real>& x) {
  return detail::unary(x, [](Real v) { return std::sqrt(v); },
                       [](Real, Real y) { return y > Real{0} ? Real{0.5} / y : Real{0}; });
}

/// max(x, lo); the adjoint is zero wherever the clamp is active.
template <class Real>
Tensor<Real> clamp_min(const Tensor<Real>& x, Real lo) {
  detail::trace_kinks(x, lo);
  return detail::unary(
      x, [lo](Real v) { return v < lo ? lo : v; },
      [lo](Real v, Real) { return v < lo ? Real{0} : Real{1}; });
}

// ---------------------------------------------------------------------------
// Reductions

template <class Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  Real s{0};
  for (Real v : x.data()) s += v;
  return detail::make_result<Real>({1}, {s}, {&x}, [](Node<Real>& self) {
    if (Real* gx = detail::grad_of(self, 0)) {
      const Real g = self.grad[0];
      for (std::size_t i = 0; i < self.parents[0]->value.size(); ++i) gx[i] += g;
    }
  });
}

template <class Real>
Tensor<Real> mean(const Tensor<Real>& x) {
  return scale(sum(x), Real{1} / static_cast<Real>(x.numel()));
}

/// Sums over a set of axes, dropping them from the shape.
template <class Real>
Tensor<Real> sum(const Tensor<Real>& x, const std::vector<std::size_t>& axes) {
  const Shape& s = x.shape();
  std::vector<bool> reduce(s.size(), false);
  for (auto a : axes) {
    if (a >= s.size()) throw ShapeError("reduction axis out of range for shape " + to_string(s));
    reduce[a] = true;
  }
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (!reduce[i]) out_shape.push_back(s[i]);
  if (out_shape.empty()) out_shape = {1};
  // keep-dims shape used to compute output offsets through broadcasting
  Shape kept = s;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (reduce[i]) kept[i] = 1;
  auto offs = std::make_shared<std::vector<std::size_t>>(detail::broadcast_offsets(kept, s));
  std::vector<Real> out(numel_of(out_shape), Real{0});
  for (std::size_t i = 0; i < x.numel(); ++i) out[(*offs)[i]] += x.data()[i];
  return detail::make_result<Real>(std::move(out_shape), std::move(out), {&x},
                                   [offs](Node<Real>& self) {
    if (Real* gx = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < offs->size(); ++i) gx[i] += self.grad[(*offs)[i]];
  });
}

template <class Real>
Tensor<Real> mean(const Tensor<Real>& x, const std::vector<std::size_t>& axes) {
  std::size_t count = 1;
  for (auto a : axes) count *= x.shape().at(a);
  return scale(sum(x, axes), Real{1} / static_cast<Real>(count));
}

/// Euclidean norm over all elements.
template <class Real>
Tensor<Real> l2_norm(const Tensor<Real>& x) {
  return sqrt(sum(mul(x, x)));
}

/// Euclidean norm over a set of axes.
template <class Real>
Tensor<Real> l2_norm(const Tensor<Real>& x, const std::vector<std::size_t>& axes) {
  return sqrt(sum(mul(x, x), axes));
}

/// Selects one element by flat index; result has shape [1].
template <class Real>
Tensor<Real> pick(const Tensor<Real>& x, std::size_t index) {
  if (index >= x.numel())
    throw ContractError("pick index " + std::to_string(index) + " out of range for shape " +
                        to_string(x.shape()));
  return detail::make_result<Real>({1}, {x.data()[index]}, {&x}, [index](Node<Real>& self) {
    if (Real* gx = detail::grad_of(self, 0)) gx[index] += self.grad[0];
  });
}

// ---------------------------------------------------------------------------
// Softmax family

template <class Real>
Tensor<Real> softmax(const Tensor<Real>& x, std::size_t axis) {
  auto [outer, len, inner] = detail::axis_split(x.shape(), axis);
  std::vector<Real> y(x.numel());
  const Real* xv = x.data().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, xv[base + k * inner]);
      Real z{0};
      for (std::size_t k = 0; k < len; ++k) {
        y[base + k * inner] = std::exp(xv[base + k * inner] - mx);
        z += y[base + k * inner];
      }
      for (std::size_t k = 0; k < len; ++k) y[base + k * inner] /= z;
    }
  return detail::make_result<Real>(x.shape(), std::move(y), {&x},
                                   [outer, len, inner](Node<Real>& self) {
    Real* gx = detail::grad_of(self, 0);
    if (!gx) return;
    const auto& Y = self.value;
    const auto& G = self.grad;
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        Real dot{0};
        for (std::size_t k = 0; k < len; ++k) dot += G[base + k * inner] * Y[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t i = base + k * inner;
          gx[i] += Y[i] * (G[i] - dot);
        }
      }
  });
}

template <class Real>
Tensor<Real> log_softmax(const Tensor<Real>& x, std::size_t axis) {
  auto [outer, len, inner] = detail::axis_split(x.shape(), axis);
  std::vector<Real> y(x.numel());
  const Real* xv = x.data().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, xv[base + k * inner]);
      Real z{0};
      for (std::size_t k = 0; k < len; ++k) z += std::exp(xv[base + k * inner] - mx);
      const Real lse = mx + std::log(z);
      for (std::size_t k = 0; k < len; ++k) y[base + k * inner] = xv[base + k * inner] - lse;
    }
  return detail::make_result<Real>(x.shape(), std::move(y), {&x},
                                   [outer, len, inner](Node<Real>& self) {
    Real* gx = detail::grad_of(self, 0);
    if (!gx) return;
    const auto& Y = self.value;
    const auto& G = self.grad;
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        Real gs{0};
        for (std::size_t k = 0; k < len; ++k) gs += G[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t i = base + k * inner;
          gx[i] += G[i] - std::exp(Y[i]) * gs;
        }
      }
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <class Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape) {
  if (numel_of(shape) != x.numel())
    throw ShapeError("cannot reshape " + to_string(x.shape()) + " to " + to_string(shape));
  std::vector<Real> v(x.data().begin(), x.data().end());
  return detail::make_result<Real>(std::move(shape), std::move(v), {&x}, [](Node<Real>& self) {
    if (Real* gx = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
  });
}

/// Concatenates along `axis`; all other extents must agree.
template <class Real>
Tensor<Real> concat(const std::vector<Tensor<Real>>& xs, std::size_t axis) {
  if (xs.empty()) throw ContractError("concat of an empty list");
  const Shape& s0 = xs.front().shape();
  Shape out_shape = s0;
  out_shape.at(axis) = 0;
  for (const auto& t : xs) {
    const Shape& s = t.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == s0[i];
    if (!ok) throw ShapeError("concat shape mismatch: " + to_string(s0) + " vs " + to_string(s));
    out_shape[axis] += s[axis];
  }
  auto [outer, len, inner] = detail::axis_split(out_shape, axis);
  std::vector<Real> out(numel_of(out_shape));
  std::vector<std::size_t> lens;
  std::size_t start = 0;
  for (const auto& t : xs) {
    const std::size_t l = t.shape()[axis];
    lens.push_back(l);
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(t.data().data() + o * l * inner, l * inner,
                  out.data() + (o * len + start) * inner);
    start += l;
  }
  const std::size_t outer_c = outer, len_c = len, inner_c = inner;
  return detail::make_result_list<Real>(std::move(out_shape), std::move(out), xs,
                                        [lens, outer_c, len_c, inner_c](Node<Real>& self) {
    std::size_t st = 0;
    for (std::size_t p = 0; p < lens.size(); ++p) {
      if (Real* gp = detail::grad_of(self, p))
        for (std::size_t o = 0; o < outer_c; ++o)
          for (std::size_t i = 0; i < lens[p] * inner_c; ++i)
            gp[o * lens[p] * inner_c + i] += self.grad[(o * len_c + st) * inner_c + i];
      st += lens[p];
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra and spatial ops. Images are C×H×W, no batch axis.

template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul shape mismatch: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<Real> c(m * n, Real{0});
  detail::gemm_nn(m, n, k, a.data().data(), b.data().data(), c.data());
  return detail::make_result<Real>({m, n}, std::move(c), {&a, &b}, [m, n, k](Node<Real>& self) {
    const Real* A = self.parents[0]->value.data();
    const Real* B = self.parents[1]->value.data();
    const Real* G = self.grad.data();
    if (Real* ga = detail::grad_of(self, 0)) detail::gemm_nt(m, k, n, G, B, ga);
    if (Real* gb = detail::grad_of(self, 1)) detail::gemm_tn(k, n, m, A, G, gb);
  });
}

/// 3×3 convolution, zero padding 1, stride 1 or 2. x: Cin×H×W, w: Cout×Cin×3×3,
/// bias: Cout (optional, pass an undefined tensor to skip).
template <class Real>
Tensor<Real> conv2d(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& bias,
                    std::size_t stride = 1) {
  if (x.rank() != 3 || w.rank() != 4 || w.dim(2) != 3 || w.dim(3) != 3 || w.dim(1) != x.dim(0))
    throw ShapeError("conv2d shape mismatch: input " + to_string(x.shape()) + ", kernel " +
                     to_string(w.shape()));
  if (stride != 1 && stride != 2) throw ShapeError("conv2d stride must be 1 or 2");
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2), cout = w.dim(0);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout))
    throw ShapeError("conv2d bias shape " + to_string(bias.shape()) + " vs " + std::to_string(cout) +
                     " output channels");
  const std::size_t ho = (h - 1) / stride + 1, wo = (wd - 1) / stride + 1;
  const std::size_t kk = cin * 9, np = ho * wo;
  auto cols = std::make_shared<std::vector<Real>>(kk * np, Real{0});
  const Real* xv = x.data().data();
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t ky = 0; ky < 3; ++ky)
      for (std::size_t kx = 0; kx < 3; ++kx) {
        Real* row = cols->data() + ((c * 3 + ky) * 3 + kx) * np;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = static_cast<long>(oy * stride + ky) - 1;
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long ix = static_cast<long>(ox * stride + kx) - 1;
            if (ix < 0 || ix >= static_cast<long>(wd)) continue;
            row[oy * wo + ox] = xv[(c * h + iy) * wd + ix];
          }
        }
      }
  std::vector<Real> out(cout * np, Real{0});
  if (bias.defined())
    for (std::size_t o = 0; o < cout; ++o) std::fill_n(out.data() + o * np, np, bias.data()[o]);
  detail::gemm_nn(cout, np, kk, w.data().data(), cols->data(), out.data());
  const bool has_bias = bias.defined();
  auto backward = [=](Node<Real>& self) {
    const Real* G = self.grad.data();
    if (Real* gx = detail::grad_of(self, 0)) {
      std::vector<Real> dcols(kk * np, Real{0});
      detail::gemm_tn(kk, np, cout, self.parents[1]->value.data(), G, dcols.data());
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t ky = 0; ky < 3; ++ky)
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const Real* row = dcols.data() + ((c * 3 + ky) * 3 + kx) * np;
            for (std::size_t oy = 0; oy < ho; ++oy) {
              const long iy = static_cast<long>(oy * stride + ky) - 1;
              if (iy < 0 || iy >= static_cast<long>(h)) continue;
              for (std::size_t ox = 0; ox < wo; ++ox) {
                const long ix = static_cast<long>(ox * stride + kx) - 1;
                if (ix < 0 || ix >= static_cast<long>(wd)) continue;
                gx[(c * h + iy) * wd + ix] += row[oy * wo + ox];
              }
            }
          }
    }
    if (Real* gw = detail::grad_of(self, 1)) detail::gemm_nt(cout, kk, np, G, cols->data(), gw);
    if (has_bias)
      if (Real* gb = detail::grad_of(self, 2))
        for (std::size_t o = 0; o < cout; ++o)
          for (std::size_t p = 0; p < np; ++p) gb[o] += G[o * np + p];
  };
  if (has_bias)
    return detail::make_result<Real>({cout, ho, wo}, std::move(out), {&x, &w, &bias}, backward);
  return detail::make_result<Real>({cout, ho, wo}, std::move(out), {&x, &w}, backward);
}

/// k×k average pooling on C×H×W with the given stride. Stride 1 pads by k/2 so
/// the output keeps the input size; padded cells count toward the divisor.
template <class Real>
Tensor<Real> avg_pool2d(const Tensor<Real>& x, std::size_t k, std::size_t stride) {
  if (x.rank() != 3 || k == 0 || stride == 0)
    throw ShapeError("avg_pool2d expects C×H×W input, got " + to_string(x.shape()));
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t pad = stride == 1 ? k / 2 : 0;
  if (h + 2 * pad < k || w + 2 * pad < k)
    throw ShapeError("avg_pool2d window larger than input " + to_string(x.shape()));
  const std::size_t ho = (h + 2 * pad - k) / stride + 1, wo = (w + 2 * pad - k) / stride + 1;
  const Real inv = Real{1} / static_cast<Real>(k * k);
  std::vector<Real> out(c * ho * wo, Real{0});
  const Real* xv = x.data().data();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        Real s{0};
        for (std::size_t dy = 0; dy < k; ++dy) {
          const long iy = static_cast<long>(oy * stride + dy) - static_cast<long>(pad);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t dx = 0; dx < k; ++dx) {
            const long ix = static_cast<long>(ox * stride + dx) - static_cast<long>(pad);
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            s += xv[(ch * h + iy) * w + ix];
          }
        }
        out[(ch * ho + oy) * wo + ox] = s * inv;
      }
  return detail::make_result<Real>({c, ho, wo}, std::move(out), {&x}, [=](Node<Real>& self) {
    Real* gx = detail::grad_of(self, 0);
    if (!gx) return;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const Real g = self.grad[(ch * ho + oy) * wo + ox] * inv;
          for (std::size_t dy = 0; dy < k; ++dy) {
            const long iy = static_cast<long>(oy * stride + dy) - static_cast<long>(pad);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t dx = 0; dx < k; ++dx) {
              const long ix = static_cast<long>(ox * stride + dx) - static_cast<long>(pad);
              if (ix < 0 || ix >= static_cast<long>(w)) continue;
              gx[(ch * h + iy) * w + ix] += g;
            }
          }
        }
  });
}

/// C×H×W → C.
template <class Real>
Tensor<Real> global_avg_pool(const Tensor<Real>& x) {
  if (x.rank() != 3) throw ShapeError("global_avg_pool expects C×H×W, got " + to_string(x.shape()));
  return mean(x, {1, 2});
}

/// 1×1 convolution as a matrix product: w is Cout×Cin, bias Cout (optional).
template <class Real>
Tensor<Real> pointwise(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& bias) {
  if (x.rank() != 3) throw ShapeError("pointwise expects C×H×W, got " + to_string(x.shape()));
  const std::size_t h = x.dim(1), wd = x.dim(2);
  auto y = matmul(w, reshape(x, {x.dim(0), h * wd}));
  if (bias.defined()) y = add(y, reshape(bias, {bias.numel(), 1}));
  return reshape(y, {w.dim(0), h, wd});
}

/// Dense layer on a vector: w is Out×In.
template <class Real>
Tensor<Real> linear(const Tensor<Real>& x, const Tensor<Real>& w, const Tensor<Real>& bias) {
  auto y = reshape(matmul(w, reshape(x, {x.numel(), 1})), {w.dim(0)});
  return bias.defined() ? add(y, bias) : y;
}

// ---------------------------------------------------------------------------

/// Reverse sweep from a scalar. Gradients accumulate into every reachable node
/// that requires them; intermediate adjoints are released after use.
template <class Real>
void backward(const Tensor<Real>& loss) {
  if (loss.numel() != 1)
    throw ContractError("backward requires a scalar loss, got shape " + to_string(loss.shape()));
  if (!loss.requires_grad()) return;
  std::vector<Node<Real>*> order;
  std::unordered_set<Node<Real>*> seen;
  std::vector<std::pair<Node<Real>*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node<Real>* p = n->parents[i++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  Node<Real>& root = *loss.node();
  root.ensure_grad();
  root.grad[0] += Real{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Real>* n = *it;
    if (n->backward_fn && !n->grad.empty()) {
      n->backward_fn(*n);
      if (!n->is_leaf) std::vector<Real>().swap(n->grad);
    }
  }
}

}  // namespace gazelt::ad

#endif  // GAZELT_TENSOR_HPP
