#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <vector>

#include "bevodo/geometry.hpp"
#include "bevodo/matcher.hpp"
#include "bevodo/tensor.hpp"

namespace bevodo {

class DegenerateWeights : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateGeometry : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kWeightFloor = 1e-12;

using Point2 = std::array<double, 2>;
using Mat2 = std::array<double, 4>;  // row-major

/// Weighted 2-D point pairs in meters.
struct Correspondences {
  std::vector<Point2> src;
  std::vector<Point2> dst;
  std::vector<double> weights;

  /// Throws std::invalid_argument for size mismatch, N < 2, negative or
  /// non-finite entries.
  void validate() const;
};

struct Centroids {
  Point2 src{};
  Point2 dst{};
};

Centroids weighted_centroids(const Correspondences& c);
/// Σ w (src - s̄)(dst - d̄)ᵀ / Σ w.
Mat2 weighted_covariance(const Correspondences& c, const Centroids& centroids);
/// Nearest proper rotation U·diag(1, det(UVᵀ))·Vᵀ of W = U S Vᵀ. Forward only.
Mat2 solve_svd(const Mat2& w_cov);

/// The solver estimates the rigid transform T with dst ≈ R(θ)·src + t.
Pose2 solve_pose_svd(const Correspondences& c);
Pose2 solve_closed_form(const Correspondences& c);

/// Differentiable pose; each member is a scalar tensor.
struct PoseTensor {
  Tensor x, y, theta;
  Pose2 value() const;
};

/// Closed-form weighted Procrustes on tensors: src, dst N x 2, weights N.
/// When translation_rotation is set, t = d̄ - R(translation_rotation)·s̄ while
/// θ still comes from the data.
PoseTensor solve_closed_form(const Tensor& src, const Tensor& dst, const Tensor& weights,
                             std::optional<double> translation_rotation = std::nullopt);

/// Converts cell coordinates (N x 2) to metric (x, y) on the grid.
Tensor cells_to_meters(const Tensor& cells, const GridSpec& grid);

/// Pose from a match set with pair scores as weights.
PoseTensor solve_pose(const MatchSet& matches, const GridSpec& grid,
                      std::optional<double> translation_rotation = std::nullopt);

}  // namespace bevodo
