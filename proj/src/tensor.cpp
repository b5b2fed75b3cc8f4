#include "bevodo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <Eigen/Core>

#include "bevodo/geometry.hpp"

namespace bevodo {

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;
};
}  // namespace detail

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    os << (i ? "," : "") << s[i];
  }
  os << ')';
  return os.str();
}

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

std::shared_ptr<detail::Node> make_node(Shape shape, std::vector<double> values, bool requires_grad) {
  require(shape_numel(shape) == values.size(),
          "tensor: " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return n;
}

// Layout helper for reductions along one axis: [outer, axis, inner].
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  require(axis < s.size(), "axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  AxisSplit a;
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  a.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

// Suffix broadcast: b.shape must equal a trailing slice of a.shape, or b is a
// single element.
std::size_t broadcast_period(const Shape& a, const Shape& b, const char* op) {
  const std::size_t nb = shape_numel(b);
  if (a == b || nb == 1) return nb;
  bool ok = b.size() <= a.size();
  for (std::size_t i = 0; ok && i < b.size(); ++i) {
    ok = b[b.size() - 1 - i] == a[a.size() - 1 - i];
  }
  require(ok, std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                  " are not broadcast-compatible");
  return nb;
}

template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F f, DA da, DB db) {
  const std::size_t period = broadcast_period(a.shape(), b.shape(), op);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i % period]);
  return Tensor::from_op(a.shape(), std::move(out), {a, b},
                         [a, b, period, da, db](std::span<const double> g) {
                           const auto av = a.values();
                           const auto bv = b.values();
                           if (a.requires_grad()) {
                             std::vector<double> ga(av.size());
                             for (std::size_t i = 0; i < av.size(); ++i)
                               ga[i] = g[i] * da(av[i], bv[i % period]);
                             a.accumulate_grad(ga);
                           }
                           if (b.requires_grad()) {
                             std::vector<double> gb(bv.size(), 0.0);
                             for (std::size_t i = 0; i < av.size(); ++i)
                               gb[i % period] += g[i] * db(av[i], bv[i % period]);
                             b.accumulate_grad(gb);
                           }
                         });
}

template <class F, class D>
Tensor unary(const Tensor& a, F f, D d) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return Tensor::from_op(a.shape(), out, {a}, [a, out, d](std::span<const double> g) {
    const auto av = a.values();
    std::vector<double> ga(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) ga[i] = g[i] * d(av[i], out[i]);
    a.accumulate_grad(ga);
  });
}

}  // namespace

// ---- Tensor ------------------------------------------------------------------

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return Tensor(make_node(std::move(shape), std::move(values), false));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  return Tensor(make_node(std::move(shape), std::move(values), true));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(make_node(std::move(shape), std::vector<double>(n, value), false));
}

Tensor Tensor::scalar(double value) { return constant({1}, {value}); }

const Shape& Tensor::shape() const {
  require(node_ != nullptr, "use of undefined tensor");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  require(axis < shape().size(), "dim: axis out of range for " + shape_str(shape()));
  return shape()[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::values() const {
  require(node_ != nullptr, "use of undefined tensor");
  return node_->value;
}

std::span<double> Tensor::mutable_values() {
  require(node_ != nullptr, "use of undefined tensor");
  return node_->value;
}

double Tensor::item() const {
  require(numel() == 1, "item: tensor of shape " + shape_str(shape()) + " is not a scalar");
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

std::span<const double> Tensor::grad() const {
  require(node_ != nullptr, "use of undefined tensor");
  return node_->grad;
}

std::vector<double> Tensor::grad_or_zeros() const {
  if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::accumulate_grad(std::span<const double> g) const {
  if (!requires_grad()) return;
  auto& buf = node_->grad;
  if (buf.empty()) buf.assign(node_->value.size(), 0.0);
  require(g.size() == buf.size(), "accumulate_grad: size mismatch");
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

void Tensor::accumulate_grad_at(std::size_t flat, double g) const {
  if (!requires_grad()) return;
  auto& buf = node_->grad;
  if (buf.empty()) buf.assign(node_->value.size(), 0.0);
  buf[flat] += g;
}

Tensor Tensor::from_op(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                       BackwardFn backward) {
  const bool needs =
      std::any_of(parents.begin(), parents.end(), [](const Tensor& p) { return p.requires_grad(); });
  auto n = make_node(std::move(shape), std::move(values), needs);
  if (needs) {
    for (auto& p : parents) {
      if (p.requires_grad()) n->parents.push_back(p.node_);
    }
    n->backward = std::move(backward);
  }
  return Tensor(std::move(n));
}

Tensor Tensor::detach() const { return constant(shape(), node_->value); }

std::size_t Tensor::backward() const {
  require(numel() == 1, "backward: loss of shape " + shape_str(shape()) + " is not a scalar");
  if (!requires_grad()) return 0;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<detail::Node*> order;
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* n : order) {
    if (n->backward) n->grad.assign(n->value.size(), 0.0);
  }
  if (node_->grad.empty()) node_->grad.assign(1, 0.0);
  node_->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward) n->backward(n->grad);
  }
  return order.size();
}

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.values()) {
    if (v == 0.0) throw DivisionByZero("div: divisor contains zero");
  }
  return binary(
      a, b, "div", [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double c) {
  return unary(
      a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary(
      a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.values()) {
    if (!(v > 0.0)) throw std::domain_error("log: non-positive argument");
  }
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor sin(const Tensor& a) {
  return unary(
      a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Tensor cos(const Tensor& a) {
  return unary(
      a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Tensor atan2(const Tensor& y, const Tensor& x) {
  require(y.shape() == x.shape(), "atan2: shapes " + shape_str(y.shape()) + " and " +
                                      shape_str(x.shape()) + " differ");
  return binary(
      y, x, "atan2", [](double yy, double xx) { return std::atan2(yy, xx); },
      [](double yy, double xx) { return xx / (xx * xx + yy * yy); },
      [](double yy, double xx) { return -yy / (xx * xx + yy * yy); });
}

Tensor wrap_angle(const Tensor& a) {
  return unary(
      a, [](double x) { return bevodo::wrap_angle(x); }, [](double, double) { return 1.0; });
}

// ---- shape -----------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  require(shape_numel(shape) == a.numel(),
          "reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  std::vector<double> v(a.values().begin(), a.values().end());
  return Tensor::from_op(std::move(shape), std::move(v), {a},
                         [a](std::span<const double> g) { a.accumulate_grad(g); });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  require(!parts.empty(), "concat: no inputs");
  Shape out_shape = parts.front().shape();
  require(axis < out_shape.size(), "concat: axis out of range");
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    require(s.size() == out_shape.size(), "concat: rank mismatch");
    total += s[axis];
    s[axis] = out_shape[axis];
    require(s == out_shape, "concat: incompatible shapes");
  }
  out_shape[axis] = total;
  const AxisSplit o = split_axis(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    const std::size_t len = p.shape()[axis];
    const auto pv = p.values();
    for (std::size_t i = 0; i < o.outer; ++i) {
      std::copy_n(pv.begin() + static_cast<long>(i * len * o.inner), len * o.inner,
                  out.begin() + static_cast<long>((i * o.len + offset) * o.inner));
    }
    offsets.push_back(offset);
    offset += len;
  }
  return Tensor::from_op(out_shape, std::move(out), parts,
                         [parts, offsets, o, axis](std::span<const double> g) {
                           for (std::size_t k = 0; k < parts.size(); ++k) {
                             if (!parts[k].requires_grad()) continue;
                             const std::size_t len = parts[k].shape()[axis];
                             std::vector<double> gp(parts[k].numel());
                             for (std::size_t i = 0; i < o.outer; ++i) {
                               std::copy_n(g.begin() + static_cast<long>((i * o.len + offsets[k]) * o.inner),
                                           len * o.inner,
                                           gp.begin() + static_cast<long>(i * len * o.inner));
                             }
                             parts[k].accumulate_grad(gp);
                           }
                         });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  const AxisSplit s = split_axis(a.shape(), axis);
  require(start + length <= s.len, "slice: range exceeds axis length");
  Shape out_shape = a.shape();
  out_shape[axis] = length;
  std::vector<double> out(shape_numel(out_shape));
  const auto av = a.values();
  for (std::size_t i = 0; i < s.outer; ++i) {
    std::copy_n(av.begin() + static_cast<long>((i * s.len + start) * s.inner), length * s.inner,
                out.begin() + static_cast<long>(i * length * s.inner));
  }
  return Tensor::from_op(out_shape, std::move(out), {a},
                         [a, s, start, length](std::span<const double> g) {
                           std::vector<double> ga(a.numel(), 0.0);
                           for (std::size_t i = 0; i < s.outer; ++i) {
                             std::copy_n(g.begin() + static_cast<long>(i * length * s.inner),
                                         length * s.inner,
                                         ga.begin() + static_cast<long>((i * s.len + start) * s.inner));
                           }
                           a.accumulate_grad(ga);
                         });
}

Tensor gather(const Tensor& a, std::vector<std::size_t> index, Shape shape) {
  require(shape_numel(shape) == index.size(), "gather: index count does not match output shape");
  const auto av = a.values();
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] < av.size(), "gather: index out of range");
    out[i] = av[index[i]];
  }
  return Tensor::from_op(std::move(shape), std::move(out), {a},
                         [a, index = std::move(index)](std::span<const double> g) {
                           std::vector<double> ga(a.numel(), 0.0);
                           for (std::size_t i = 0; i < index.size(); ++i) ga[index[i]] += g[i];
                           a.accumulate_grad(ga);
                         });
}

Tensor transpose(const Tensor& a) {
  require(a.ndim() == 2, "transpose: expected a matrix, got " + shape_str(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  const auto av = a.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return Tensor::from_op({c, r}, std::move(out), {a}, [a, r, c](std::span<const double> g) {
    std::vector<double> ga(r * c);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] = g[j * r + i];
    a.accumulate_grad(ga);
  });
}

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return Tensor::from_op({1}, {s}, {a}, [a](std::span<const double> g) {
    a.accumulate_grad(std::vector<double>(a.numel(), g[0]));
  });
}

Tensor sum(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_axis(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<long>(axis));
  if (out_shape.empty()) out_shape = {1};
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto av = a.values();
  for (std::size_t i = 0; i < s.outer; ++i)
    for (std::size_t k = 0; k < s.len; ++k)
      for (std::size_t j = 0; j < s.inner; ++j)
        out[i * s.inner + j] += av[(i * s.len + k) * s.inner + j];
  return Tensor::from_op(out_shape, std::move(out), {a}, [a, s](std::span<const double> g) {
    std::vector<double> ga(a.numel());
    for (std::size_t i = 0; i < s.outer; ++i)
      for (std::size_t k = 0; k < s.len; ++k)
        for (std::size_t j = 0; j < s.inner; ++j)
          ga[(i * s.len + k) * s.inner + j] = g[i * s.inner + j];
    a.accumulate_grad(ga);
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor mean(const Tensor& a, std::size_t axis) {
  return scale(sum(a, axis), 1.0 / static_cast<double>(a.dim(axis)));
}

Tensor l2_normalize(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_axis(a.shape(), axis);
  const auto av = a.values();
  std::vector<double> norms(s.outer * s.inner, 0.0);
  for (std::size_t i = 0; i < s.outer; ++i)
    for (std::size_t k = 0; k < s.len; ++k)
      for (std::size_t j = 0; j < s.inner; ++j) {
        const double v = av[(i * s.len + k) * s.inner + j];
        norms[i * s.inner + j] += v * v;
      }
  for (double& n : norms) n = std::sqrt(n + 1e-24);
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < s.outer; ++i)
    for (std::size_t k = 0; k < s.len; ++k)
      for (std::size_t j = 0; j < s.inner; ++j) {
        const std::size_t f = (i * s.len + k) * s.inner + j;
        out[f] = av[f] / norms[i * s.inner + j];
      }
  return Tensor::from_op(a.shape(), out, {a}, [a, s, out, norms](std::span<const double> g) {
    std::vector<double> ga(out.size());
    for (std::size_t i = 0; i < s.outer; ++i)
      for (std::size_t j = 0; j < s.inner; ++j) {
        double dot = 0.0;
        for (std::size_t k = 0; k < s.len; ++k) {
          const std::size_t f = (i * s.len + k) * s.inner + j;
          dot += out[f] * g[f];
        }
        const double n = norms[i * s.inner + j];
        for (std::size_t k = 0; k < s.len; ++k) {
          const std::size_t f = (i * s.len + k) * s.inner + j;
          ga[f] = (g[f] - out[f] * dot) / n;
        }
      }
    a.accumulate_grad(ga);
  });
}

// ---- linear algebra / image ops -------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.ndim() == 2 && b.ndim() == 2 && a.dim(1) == b.dim(0),
          "matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  const auto ai = static_cast<Eigen::Index>(m), ki = static_cast<Eigen::Index>(k),
             ni = static_cast<Eigen::Index>(n);
  MatMap(out.data(), ai, ni).noalias() =
      ConstMatMap(a.values().data(), ai, ki) * ConstMatMap(b.values().data(), ki, ni);
  return Tensor::from_op({m, n}, std::move(out), {a, b}, [a, b, ai, ki, ni](std::span<const double> g) {
    ConstMatMap gm(g.data(), ai, ni);
    if (a.requires_grad()) {
      std::vector<double> ga(static_cast<std::size_t>(ai * ki));
      MatMap(ga.data(), ai, ki).noalias() = gm * ConstMatMap(b.values().data(), ki, ni).transpose();
      a.accumulate_grad(ga);
    }
    if (b.requires_grad()) {
      std::vector<double> gb(static_cast<std::size_t>(ki * ni));
      MatMap(gb.data(), ki, ni).noalias() = ConstMatMap(a.values().data(), ai, ki).transpose() * gm;
      b.accumulate_grad(gb);
    }
  });
}

namespace {

struct ConvGeom {
  std::size_t c, h, w, k, stride, pad, oh, ow;
};

void im2col(std::span<const double> in, const ConvGeom& g, std::vector<double>& col) {
  const std::size_t l = g.oh * g.ow;
  col.assign(g.c * g.k * g.k * l, 0.0);
  for (std::size_t ch = 0; ch < g.c; ++ch)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        double* row = col.data() + ((ch * g.k + ki) * g.k + kj) * l;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          const double* src = in.data() + (ch * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            row[oy * g.ow + ox] = src[ix];
          }
        }
      }
}

void col2im(const std::vector<double>& col, const ConvGeom& g, std::vector<double>& out) {
  const std::size_t l = g.oh * g.ow;
  out.assign(g.c * g.h * g.w, 0.0);
  for (std::size_t ch = 0; ch < g.c; ++ch)
    for (std::size_t ki = 0; ki < g.k; ++ki)
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const double* row = col.data() + ((ch * g.k + ki) * g.k + kj) * l;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          double* dst = out.data() + (ch * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            dst[ix] += row[oy * g.ow + ox];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  require(input.ndim() == 3, "conv2d: input must be CxHxW, got " + shape_str(input.shape()));
  require(weight.ndim() == 4 && weight.dim(1) == input.dim(0) && weight.dim(2) == weight.dim(3),
          "conv2d: weight " + shape_str(weight.shape()) + " incompatible with input " +
              shape_str(input.shape()));
  require(stride >= 1, "conv2d: stride must be >= 1");
  const std::size_t o = weight.dim(0);
  if (bias.defined()) require(bias.numel() == o, "conv2d: bias size mismatch");
  ConvGeom g{input.dim(0), input.dim(1), input.dim(2), weight.dim(2), stride, padding, 0, 0};
  require(g.h + 2 * padding >= g.k && g.w + 2 * padding >= g.k, "conv2d: kernel larger than input");
  g.oh = (g.h + 2 * padding - g.k) / stride + 1;
  g.ow = (g.w + 2 * padding - g.k) / stride + 1;
  const std::size_t l = g.oh * g.ow;
  const std::size_t ckk = g.c * g.k * g.k;

  auto col = std::make_shared<std::vector<double>>();
  im2col(input.values(), g, *col);
  std::vector<double> out(o * l);
  const auto oi = static_cast<Eigen::Index>(o), ci = static_cast<Eigen::Index>(ckk),
             li = static_cast<Eigen::Index>(l);
  MatMap om(out.data(), oi, li);
  om.noalias() = ConstMatMap(weight.values().data(), oi, ci) * ConstMatMap(col->data(), ci, li);
  if (bias.defined()) {
    const auto bv = bias.values();
    for (std::size_t r = 0; r < o; ++r)
      for (std::size_t j = 0; j < l; ++j) out[r * l + j] += bv[r];
  }
  std::vector<Tensor> parents{input, weight};
  if (bias.defined()) parents.push_back(bias);
  return Tensor::from_op(
      {o, g.oh, g.ow}, std::move(out), parents,
      [input, weight, bias, g, col, oi, ci, li](std::span<const double> grad) {
        ConstMatMap gm(grad.data(), oi, li);
        if (weight.requires_grad()) {
          std::vector<double> gw(static_cast<std::size_t>(oi * ci));
          MatMap(gw.data(), oi, ci).noalias() = gm * ConstMatMap(col->data(), ci, li).transpose();
          weight.accumulate_grad(gw);
        }
        if (bias.defined() && bias.requires_grad()) {
          std::vector<double> gb(static_cast<std::size_t>(oi), 0.0);
          for (Eigen::Index r = 0; r < oi; ++r)
            for (Eigen::Index j = 0; j < li; ++j) gb[static_cast<std::size_t>(r)] += gm(r, j);
          bias.accumulate_grad(gb);
        }
        if (input.requires_grad()) {
          std::vector<double> gcol(static_cast<std::size_t>(ci * li));
          MatMap(gcol.data(), ci, li).noalias() =
              ConstMatMap(weight.values().data(), oi, ci).transpose() * gm;
          std::vector<double> gin;
          col2im(gcol, g, gin);
          input.accumulate_grad(gin);
        }
      });
}

Tensor max_pool2d(const Tensor& input, std::size_t window) {
  require(input.ndim() == 3, "max_pool2d: input must be CxHxW");
  require(window >= 1, "max_pool2d: window must be >= 1");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  require(h % window == 0 && w % window == 0, "max_pool2d: " + shape_str(input.shape()) +
                                                  " not divisible by window " + std::to_string(window));
  const std::size_t oh = h / window, ow = w / window;
  const auto iv = input.values();
  std::vector<double> out(c * oh * ow);
  std::vector<std::size_t> arg(out.size());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t best = (ch * h + y * window) * w + x * window;
        for (std::size_t dy = 0; dy < window; ++dy)
          for (std::size_t dx = 0; dx < window; ++dx) {
            const std::size_t f = (ch * h + y * window + dy) * w + x * window + dx;
            if (iv[f] > iv[best]) best = f;
          }
        const std::size_t o = (ch * oh + y) * ow + x;
        out[o] = iv[best];
        arg[o] = best;
      }
  return Tensor::from_op({c, oh, ow}, std::move(out), {input},
                         [input, arg](std::span<const double> g) {
                           std::vector<double> gi(input.numel(), 0.0);
                           for (std::size_t i = 0; i < arg.size(); ++i) gi[arg[i]] += g[i];
                           input.accumulate_grad(gi);
                         });
}

namespace {

// 1-D interpolation taps for an integer-factor upsample.
struct Taps {
  std::vector<std::size_t> i0, i1;
  std::vector<double> w1;  // weight of i1; weight of i0 is 1 - w1
};

Taps make_taps(std::size_t in, std::size_t factor, UpsampleMode mode) {
  Taps t;
  const std::size_t out = in * factor;
  t.i0.resize(out);
  t.i1.resize(out);
  t.w1.resize(out);
  for (std::size_t o = 0; o < out; ++o) {
    if (mode == UpsampleMode::kNearest) {
      t.i0[o] = t.i1[o] = o / factor;
      t.w1[o] = 0.0;
      continue;
    }
    double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    src = std::max(src, 0.0);
    auto lo = static_cast<std::size_t>(std::floor(src));
    lo = std::min(lo, in - 1);
    t.i0[o] = lo;
    t.i1[o] = std::min(lo + 1, in - 1);
    t.w1[o] = t.i1[o] == lo ? 0.0 : src - static_cast<double>(lo);
  }
  return t;
}

}  // namespace

Tensor upsample(const Tensor& input, std::size_t factor, UpsampleMode mode) {
  require(input.ndim() == 3, "upsample: input must be CxHxW");
  require(factor >= 1, "upsample: factor must be >= 1");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t oh = h * factor, ow = w * factor;
  auto ty = std::make_shared<Taps>(make_taps(h, factor, mode));
  auto tx = std::make_shared<Taps>(make_taps(w, factor, mode));
  const auto iv = input.values();
  std::vector<double> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* src = iv.data() + ch * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      const double wy = ty->w1[y];
      const double* r0 = src + ty->i0[y] * w;
      const double* r1 = src + ty->i1[y] * w;
      for (std::size_t x = 0; x < ow; ++x) {
        const double wx = tx->w1[x];
        const std::size_t x0 = tx->i0[x], x1 = tx->i1[x];
        out[(ch * oh + y) * ow + x] = (1 - wy) * ((1 - wx) * r0[x0] + wx * r0[x1]) +
                                      wy * ((1 - wx) * r1[x0] + wx * r1[x1]);
      }
    }
  }
  return Tensor::from_op({c, oh, ow}, std::move(out), {input},
                         [input, ty, tx, c, h, w, oh, ow](std::span<const double> g) {
                           std::vector<double> gi(c * h * w, 0.0);
                           for (std::size_t ch = 0; ch < c; ++ch) {
                             double* dst = gi.data() + ch * h * w;
                             for (std::size_t y = 0; y < oh; ++y) {
                               const double wy = ty->w1[y];
                               double* r0 = dst + ty->i0[y] * w;
                               double* r1 = dst + ty->i1[y] * w;
                               for (std::size_t x = 0; x < ow; ++x) {
                                 const double gv = g[(ch * oh + y) * ow + x];
                                 const double wx = tx->w1[x];
                                 const std::size_t x0 = tx->i0[x], x1 = tx->i1[x];
                                 r0[x0] += gv * (1 - wy) * (1 - wx);
                                 r0[x1] += gv * (1 - wy) * wx;
                                 r1[x0] += gv * wy * (1 - wx);
                                 r1[x1] += gv * wy * wx;
                               }
                             }
                           }
                           input.accumulate_grad(gi);
                         });
}

// ---- probabilistic / sampling ---------------------------------------------

Tensor softmax_temperature(const Tensor& logits, double tau, std::size_t axis,
                           const std::vector<bool>* mask) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw std::invalid_argument("softmax_temperature: tau must be positive");
  }
  const AxisSplit s = split_axis(logits.shape(), axis);
  if (mask) require(mask->size() == logits.numel(), "softmax_temperature: mask size mismatch");
  const auto zv = logits.values();
  std::vector<double> out(zv.size(), 0.0);
  for (std::size_t i = 0; i < s.outer; ++i)
    for (std::size_t j = 0; j < s.inner; ++j) {
      auto at = [&](std::size_t k) { return (i * s.len + k) * s.inner + j; };
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < s.len; ++k)
        if (!mask || (*mask)[at(k)]) mx = std::max(mx, zv[at(k)]);
      if (mx == -std::numeric_limits<double>::infinity()) {
        throw std::invalid_argument("softmax_temperature: row has no unmasked entries");
      }
      double z = 0.0;
      for (std::size_t k = 0; k < s.len; ++k) {
        if (mask && !(*mask)[at(k)]) continue;
        const double e = std::exp((zv[at(k)] - mx) / tau);
        out[at(k)] = e;
        z += e;
      }
      for (std::size_t k = 0; k < s.len; ++k) out[at(k)] /= z;
    }
  return Tensor::from_op(logits.shape(), out, {logits},
                         [logits, out, s, tau](std::span<const double> g) {
                           std::vector<double> gz(out.size());
                           for (std::size_t i = 0; i < s.outer; ++i)
                             for (std::size_t j = 0; j < s.inner; ++j) {
                               double dot = 0.0;
                               for (std::size_t k = 0; k < s.len; ++k) {
                                 const std::size_t f = (i * s.len + k) * s.inner + j;
                                 dot += out[f] * g[f];
                               }
                               for (std::size_t k = 0; k < s.len; ++k) {
                                 const std::size_t f = (i * s.len + k) * s.inner + j;
                                 gz[f] = out[f] * (g[f] - dot) / tau;
                               }
                             }
                           logits.accumulate_grad(gz);
                         });
}

namespace {

struct BilinearTap {
  std::size_t r0, r1, c0, c1;
  double fr, fc;
  bool clamp_r, clamp_c;
};

BilinearTap bilinear_tap(double row, double col, std::size_t h, std::size_t w) {
  BilinearTap t{};
  const double rmax = static_cast<double>(h - 1), cmax = static_cast<double>(w - 1);
  t.clamp_r = row < 0.0 || row > rmax;
  t.clamp_c = col < 0.0 || col > cmax;
  const double r = std::clamp(row, 0.0, rmax);
  const double c = std::clamp(col, 0.0, cmax);
  t.r0 = std::min(static_cast<std::size_t>(std::floor(r)), h - 1);
  t.c0 = std::min(static_cast<std::size_t>(std::floor(c)), w - 1);
  t.r1 = std::min(t.r0 + 1, h - 1);
  t.c1 = std::min(t.c0 + 1, w - 1);
  t.fr = r - static_cast<double>(t.r0);
  t.fc = c - static_cast<double>(t.c0);
  return t;
}

void check_coords(const Tensor& coords, const char* op) {
  require(coords.ndim() == 2 && coords.dim(1) == 2,
          std::string(op) + ": coords must be Nx2, got " + shape_str(coords.shape()));
  for (double v : coords.values()) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(op) + ": non-finite coordinate");
  }
}

}  // namespace

Tensor bilinear_sample(const Tensor& map, const Tensor& coords) {
  require(map.ndim() == 3, "bilinear_sample: map must be CxHxW, got " + shape_str(map.shape()));
  check_coords(coords, "bilinear_sample");
  const std::size_t c = map.dim(0), h = map.dim(1), w = map.dim(2), n = coords.dim(0);
  const auto mv = map.values();
  const auto cv = coords.values();
  std::vector<BilinearTap> taps(n);
  std::vector<double> out(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    const BilinearTap t = taps[i] = bilinear_tap(cv[2 * i], cv[2 * i + 1], h, w);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* m = mv.data() + ch * h * w;
      out[i * c + ch] = (1 - t.fr) * ((1 - t.fc) * m[t.r0 * w + t.c0] + t.fc * m[t.r0 * w + t.c1]) +
                        t.fr * ((1 - t.fc) * m[t.r1 * w + t.c0] + t.fc * m[t.r1 * w + t.c1]);
    }
  }
  return Tensor::from_op({n, c}, std::move(out), {map, coords},
                         [map, coords, taps, c, h, w, n](std::span<const double> g) {
                           const auto mv = map.values();
                           std::vector<double> gm(map.requires_grad() ? map.numel() : 0, 0.0);
                           std::vector<double> gc(2 * n, 0.0);
                           for (std::size_t i = 0; i < n; ++i) {
                             const BilinearTap& t = taps[i];
                             for (std::size_t ch = 0; ch < c; ++ch) {
                               const double gv = g[i * c + ch];
                               const std::size_t base = ch * h * w;
                               if (!gm.empty()) {
                                 gm[base + t.r0 * w + t.c0] += gv * (1 - t.fr) * (1 - t.fc);
                                 gm[base + t.r0 * w + t.c1] += gv * (1 - t.fr) * t.fc;
                                 gm[base + t.r1 * w + t.c0] += gv * t.fr * (1 - t.fc);
                                 gm[base + t.r1 * w + t.c1] += gv * t.fr * t.fc;
                               }
                               const double* m = mv.data() + base;
                               const double v00 = m[t.r0 * w + t.c0], v01 = m[t.r0 * w + t.c1];
                               const double v10 = m[t.r1 * w + t.c0], v11 = m[t.r1 * w + t.c1];
                               if (!t.clamp_r && t.r1 != t.r0)
                                 gc[2 * i] += gv * ((1 - t.fc) * (v10 - v00) + t.fc * (v11 - v01));
                               if (!t.clamp_c && t.c1 != t.c0)
                                 gc[2 * i + 1] += gv * ((1 - t.fr) * (v01 - v00) + t.fr * (v11 - v10));
                             }
                           }
                           if (!gm.empty()) map.accumulate_grad(gm);
                           coords.accumulate_grad(gc);
                         });
}

Tensor bilinear_sample_each(const Tensor& maps, const Tensor& coords) {
  require(maps.ndim() == 3, "bilinear_sample_each: maps must be NxHxW");
  check_coords(coords, "bilinear_sample_each");
  const std::size_t n = maps.dim(0), h = maps.dim(1), w = maps.dim(2);
  require(coords.dim(0) == n, "bilinear_sample_each: coordinate count must match map count");
  const auto mv = maps.values();
  const auto cv = coords.values();
  std::vector<BilinearTap> taps(n);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const BilinearTap t = taps[i] = bilinear_tap(cv[2 * i], cv[2 * i + 1], h, w);
    const double* m = mv.data() + i * h * w;
    out[i] = (1 - t.fr) * ((1 - t.fc) * m[t.r0 * w + t.c0] + t.fc * m[t.r0 * w + t.c1]) +
             t.fr * ((1 - t.fc) * m[t.r1 * w + t.c0] + t.fc * m[t.r1 * w + t.c1]);
  }
  return Tensor::from_op({n}, std::move(out), {maps, coords},
                         [maps, coords, taps, h, w, n](std::span<const double> g) {
                           const auto mv = maps.values();
                           std::vector<double> gm(maps.requires_grad() ? maps.numel() : 0, 0.0);
                           std::vector<double> gc(2 * n, 0.0);
                           for (std::size_t i = 0; i < n; ++i) {
                             const BilinearTap& t = taps[i];
                             const double gv = g[i];
                             const std::size_t base = i * h * w;
                             if (!gm.empty()) {
                               gm[base + t.r0 * w + t.c0] += gv * (1 - t.fr) * (1 - t.fc);
                               gm[base + t.r0 * w + t.c1] += gv * (1 - t.fr) * t.fc;
                               gm[base + t.r1 * w + t.c0] += gv * t.fr * (1 - t.fc);
                               gm[base + t.r1 * w + t.c1] += gv * t.fr * t.fc;
                             }
                             const double* m = mv.data() + base;
                             const double v00 = m[t.r0 * w + t.c0], v01 = m[t.r0 * w + t.c1];
                             const double v10 = m[t.r1 * w + t.c0], v11 = m[t.r1 * w + t.c1];
                             if (!t.clamp_r && t.r1 != t.r0)
                               gc[2 * i] = gv * ((1 - t.fc) * (v10 - v00) + t.fc * (v11 - v01));
                             if (!t.clamp_c && t.c1 != t.c0)
                               gc[2 * i + 1] = gv * ((1 - t.fr) * (v01 - v00) + t.fr * (v11 - v10));
                           }
                           if (!gm.empty()) maps.accumulate_grad(gm);
                           coords.accumulate_grad(gc);
                         });
}

Tensor scatter_add_pool(const Tensor& values, const std::vector<long>& target_cells,
                        std::size_t height, std::size_t width) {
  require(values.ndim() == 2, "scatter_add_pool: values must be NxC");
  const std::size_t n = values.dim(0), c = values.dim(1), cells = height * width;
  require(target_cells.size() == n, "scatter_add_pool: one target per row required");
  // Bucket rows by cell, then sum each (cell, channel) in ascending value order
  // so the result does not depend on how the inputs were ordered.
  std::vector<std::vector<std::size_t>> bucket(cells);
  for (std::size_t i = 0; i < n; ++i) {
    const long t = target_cells[i];
    if (t < 0) continue;
    require(static_cast<std::size_t>(t) < cells, "scatter_add_pool: target cell out of range");
    bucket[static_cast<std::size_t>(t)].push_back(i);
  }
  const auto vv = values.values();
  std::vector<double> out(c * cells, 0.0);
  std::vector<double> scratch;
  for (std::size_t cell = 0; cell < cells; ++cell) {
    const auto& rows = bucket[cell];
    if (rows.empty()) continue;
    for (std::size_t ch = 0; ch < c; ++ch) {
      scratch.clear();
      for (std::size_t r : rows) scratch.push_back(vv[r * c + ch]);
      std::sort(scratch.begin(), scratch.end());
      double acc = 0.0;
      for (double v : scratch) acc += v;
      out[ch * cells + cell] = acc;
    }
  }
  return Tensor::from_op({c, height, width}, std::move(out), {values},
                         [values, target_cells, c, cells](std::span<const double> g) {
                           std::vector<double> gv(values.numel(), 0.0);
                           for (std::size_t i = 0; i < target_cells.size(); ++i) {
                             const long t = target_cells[i];
                             if (t < 0) continue;
                             for (std::size_t ch = 0; ch < c; ++ch)
                               gv[i * c + ch] = g[ch * cells + static_cast<std::size_t>(t)];
                           }
                           values.accumulate_grad(gv);
                         });
}

}  // namespace bevodo
