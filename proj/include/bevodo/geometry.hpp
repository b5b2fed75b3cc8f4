#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>

namespace bevodo {

inline constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle into (-pi, pi]. Throws std::invalid_argument on non-finite input.
double wrap_angle(double theta);

/// Planar rigid transform (x, y, yaw). The heading is always stored wrapped.
class Pose2 {
 public:
  constexpr Pose2() = default;
  Pose2(double x, double y, double theta);

  static Pose2 identity() { return Pose2{}; }

  double x() const { return x_; }
  double y() const { return y_; }
  double theta() const { return theta_; }

  Pose2 inverse() const;
  /// Maps a point expressed in this pose's frame into the parent frame.
  std::array<double, 2> transform_point(double px, double py) const;

 private:
  double x_ = 0.0;
  double y_ = 0.0;
  double theta_ = 0.0;
};

/// Returns a ∘ b: apply b in a's frame.
Pose2 pose2_compose(const Pose2& a, const Pose2& b);
inline Pose2 operator*(const Pose2& a, const Pose2& b) { return pose2_compose(a, b); }

/// Continuous cell coordinate on a BEV grid: row grows toward vehicle-forward
/// (+x), column toward vehicle-left (+y).
struct CellCoord {
  double row = 0.0;
  double col = 0.0;
};

struct MetricPoint {
  double x = 0.0;
  double y = 0.0;
};

/// BEV grid geometry. The vehicle sits at cell (H/2, W/2); integer coordinates
/// address cell centers.
class GridSpec {
 public:
  GridSpec(std::size_t height_cells, std::size_t width_cells, double resolution);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t cells() const { return height_ * width_; }
  double resolution() const { return resolution_; }
  CellCoord origin() const {
    return {static_cast<double>(height_ / 2), static_cast<double>(width_ / 2)};
  }

  MetricPoint pixel_to_metric(CellCoord c) const;
  CellCoord metric_to_pixel(MetricPoint p) const;
  bool contains(CellCoord c) const;

 private:
  std::size_t height_;
  std::size_t width_;
  double resolution_;
};

class BlockSpec {
 public:
  /// Throws std::invalid_argument unless the grid divides evenly into blocks.
  BlockSpec(const GridSpec& grid, std::size_t blocks_h, std::size_t blocks_w);

  std::size_t blocks_h() const { return blocks_h_; }
  std::size_t blocks_w() const { return blocks_w_; }
  std::size_t count() const { return blocks_h_ * blocks_w_; }
  std::size_t block_rows() const { return block_rows_; }
  std::size_t block_cols() const { return block_cols_; }

 private:
  std::size_t blocks_h_;
  std::size_t blocks_w_;
  std::size_t block_rows_;
  std::size_t block_cols_;
};

}  // namespace bevodo
