#pragma once

// Minimal reverse-mode automatic differentiation over dense float64 arrays.
//
// A Tensor is a cheap handle to a graph node. Operations record a backward
// closure on the node they produce; Tensor::backward() on a scalar walks the
// graph once in reverse topological order and accumulates gradients into every
// node that requires them. Leaves (parameters) keep accumulating across calls
// until zero_grad(); intermediate gradients are reset at the start of each
// backward pass.
//
// Broadcasting is limited to suffix expansion: the right operand of a binary
// elementwise op may have a shape equal to a trailing slice of the left
// operand's shape (a scalar is the empty slice).

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bevodo {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DivisionByZero : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

namespace detail {
struct Node;
}

class Tensor;

/// Receives the output gradient and must accumulate into the parents'
/// gradient buffers (via Tensor::accumulate_grad).
using BackwardFn = std::function<void(std::span<const double> out_grad)>;

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor parameter(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const double> values() const;
  /// Writable view of the values; only meaningful on leaves.
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t flat) const { return values()[flat]; }

  bool requires_grad() const;
  /// Empty span until a backward pass has touched this node.
  std::span<const double> grad() const;
  std::vector<double> grad_or_zeros() const;
  void zero_grad();
  /// Adds `g` into this node's gradient buffer (allocating it if needed).
  void accumulate_grad(std::span<const double> g) const;
  void accumulate_grad_at(std::size_t flat, double g) const;

  /// Backpropagates from this scalar. Returns the number of graph nodes visited.
  std::size_t backward() const;

  /// Same values, cut from the graph.
  Tensor detach() const;

  /// Builds a node from precomputed values and a backward rule. The rule is
  /// only recorded when at least one parent requires a gradient.
  static Tensor from_op(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                        BackwardFn backward);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// ---- elementwise -----------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Throws DivisionByZero if any divisor entry is exactly zero.
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
/// Throws std::domain_error for non-positive entries.
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor atan2(const Tensor& y, const Tensor& x);
/// Wraps values into (-pi, pi]; the gradient passes through unchanged.
Tensor wrap_angle(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---- shape -----------------------------------------------------------------
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
/// out[i] = a.flat[index[i]]; output shape is `shape` (numel must match index count).
Tensor gather(const Tensor& a, std::vector<std::size_t> index, Shape shape);
Tensor transpose(const Tensor& a);

// ---- reductions ------------------------------------------------------------
Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, std::size_t axis);
/// Divides by sqrt(sum of squares + 1e-24) along `axis`.
Tensor l2_normalize(const Tensor& a, std::size_t axis);

// ---- linear algebra / image ops -------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
/// Cross-correlation of a C×H×W input with an O×C×k×k kernel plus optional bias O.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);
Tensor max_pool2d(const Tensor& input, std::size_t window);

enum class UpsampleMode { kNearest, kBilinear };
/// Integer-factor upsampling of C×H×W. Bilinear uses half-pixel centers with
/// edge clamping.
Tensor upsample(const Tensor& input, std::size_t factor, UpsampleMode mode);

// ---- probabilistic / sampling ---------------------------------------------
/// softmax(logits / tau) along `axis` in log-sum-exp form. Entries where
/// `mask` is false get probability exactly zero and take no part in the
/// normalization. Throws std::invalid_argument for tau <= 0 or a fully
/// masked row.
Tensor softmax_temperature(const Tensor& logits, double tau, std::size_t axis,
                           const std::vector<bool>* mask = nullptr);

/// Samples a C×H×W map at N continuous (row, col) coordinates → N×C.
/// Coordinates are clamped to the grid.
Tensor bilinear_sample(const Tensor& map, const Tensor& coords);
/// Samples map n (of N×H×W) at coordinate n → N.
Tensor bilinear_sample_each(const Tensor& maps, const Tensor& coords);

/// Sums rows of an N×C tensor into a C×H×W grid. Entries with a negative
/// target are dropped. Accumulation runs in input order.
Tensor scatter_add_pool(const Tensor& values, const std::vector<long>& target_cells,
                        std::size_t height, std::size_t width);

}  // namespace bevodo
