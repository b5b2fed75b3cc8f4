#include "bevodo/geometry.hpp"

#include <cmath>
#include <string>

namespace bevodo {

double wrap_angle(double theta) {
  if (!std::isfinite(theta)) {
    throw std::invalid_argument("wrap_angle: non-finite angle");
  }
  constexpr double two_pi = 2.0 * kPi;
  double r = std::fmod(theta, two_pi);  // (-2pi, 2pi)
  if (r > kPi) {
    r -= two_pi;
  } else if (r <= -kPi) {
    r += two_pi;
  }
  return r;
}

Pose2::Pose2(double x, double y, double theta) : x_(x), y_(y), theta_(wrap_angle(theta)) {}

Pose2 Pose2::inverse() const {
  const double c = std::cos(theta_);
  const double s = std::sin(theta_);
  return Pose2(-(c * x_ + s * y_), -(-s * x_ + c * y_), -theta_);
}

std::array<double, 2> Pose2::transform_point(double px, double py) const {
  const double c = std::cos(theta_);
  const double s = std::sin(theta_);
  return {c * px - s * py + x_, s * px + c * py + y_};
}

Pose2 pose2_compose(const Pose2& a, const Pose2& b) {
  const auto t = a.transform_point(b.x(), b.y());
  return Pose2(t[0], t[1], a.theta() + b.theta());
}

GridSpec::GridSpec(std::size_t height_cells, std::size_t width_cells, double resolution)
    : height_(height_cells), width_(width_cells), resolution_(resolution) {
  if (height_ == 0 || width_ == 0) {
    throw std::invalid_argument("GridSpec: grid dimensions must be positive");
  }
  if (!(resolution_ > 0.0) || !std::isfinite(resolution_)) {
    throw std::invalid_argument("GridSpec: resolution must be positive");
  }
}

MetricPoint GridSpec::pixel_to_metric(CellCoord c) const {
  const CellCoord o = origin();
  return {(c.row - o.row) * resolution_, (c.col - o.col) * resolution_};
}

CellCoord GridSpec::metric_to_pixel(MetricPoint p) const {
  const CellCoord o = origin();
  return {p.x / resolution_ + o.row, p.y / resolution_ + o.col};
}

bool GridSpec::contains(CellCoord c) const {
  return c.row >= 0.0 && c.col >= 0.0 && c.row <= static_cast<double>(height_ - 1) &&
         c.col <= static_cast<double>(width_ - 1);
}

BlockSpec::BlockSpec(const GridSpec& grid, std::size_t blocks_h, std::size_t blocks_w)
    : blocks_h_(blocks_h), blocks_w_(blocks_w) {
  if (blocks_h == 0 || blocks_w == 0 || grid.height() % blocks_h != 0 ||
      grid.width() % blocks_w != 0) {
    throw std::invalid_argument("BlockSpec: grid " + std::to_string(grid.height()) + "x" +
                                std::to_string(grid.width()) + " is not divisible into " +
                                std::to_string(blocks_h) + "x" + std::to_string(blocks_w) +
                                " blocks");
  }
  block_rows_ = grid.height() / blocks_h;
  block_cols_ = grid.width() / blocks_w;
}

}  // namespace bevodo
