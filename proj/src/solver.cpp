#include "bevodo/solver.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

namespace bevodo {

void Correspondences::validate() const {
  if (src.size() != dst.size() || src.size() != weights.size()) {
    throw std::invalid_argument("Correspondences: src, dst and weights differ in length");
  }
  if (src.size() < 2) throw std::invalid_argument("Correspondences: need at least 2 pairs");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!std::isfinite(src[i][0]) || !std::isfinite(src[i][1]) || !std::isfinite(dst[i][0]) ||
        !std::isfinite(dst[i][1]) || !std::isfinite(weights[i]) || weights[i] < 0.0) {
      throw std::invalid_argument("Correspondences: entry " + std::to_string(i) + " is not finite or has negative weight");
    }
  }
}

Centroids weighted_centroids(const Correspondences& c) {
  c.validate();
  double total = 0.0;
  for (double w : c.weights) total += w;
  if (!(total >= kWeightFloor)) throw DegenerateWeights("weighted_centroids: weight sum below floor");
  Centroids out;
  for (std::size_t i = 0; i < c.src.size(); ++i) {
    const double w = c.weights[i] / total;
    out.src[0] += w * c.src[i][0];
    out.src[1] += w * c.src[i][1];
    out.dst[0] += w * c.dst[i][0];
    out.dst[1] += w * c.dst[i][1];
  }
  return out;
}

Mat2 weighted_covariance(const Correspondences& c, const Centroids& m) {
  double total = 0.0;
  for (double w : c.weights) total += w;
  if (!(total >= kWeightFloor)) throw DegenerateWeights("weighted_covariance: weight sum below floor");
  Mat2 cov{};
  for (std::size_t i = 0; i < c.src.size(); ++i) {
    const double w = c.weights[i] / total;
    const double sx = c.src[i][0] - m.src[0], sy = c.src[i][1] - m.src[1];
    const double dx = c.dst[i][0] - m.dst[0], dy = c.dst[i][1] - m.dst[1];
    cov[0] += w * sx * dx;
    cov[1] += w * sx * dy;
    cov[2] += w * sy * dx;
    cov[3] += w * sy * dy;
  }
  return cov;
}

Mat2 solve_svd(const Mat2& w_cov) {
  for (double v : w_cov) {
    if (!std::isfinite(v)) throw std::invalid_argument("solve_svd: non-finite covariance");
  }
  Eigen::Matrix2d w;
  w << w_cov[0], w_cov[1], w_cov[2], w_cov[3];
  Eigen::JacobiSVD<Eigen::Matrix2d> svd(w, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()(0) < 1e-12) throw DegenerateGeometry("solve_svd: covariance is numerically zero");
  const Eigen::Matrix2d& u = svd.matrixU();
  const Eigen::Matrix2d& v = svd.matrixV();
  Eigen::Matrix2d d = Eigen::Matrix2d::Identity();
  d(1, 1) = (u * v.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Eigen::Matrix2d r = u * d * v.transpose();
  return {r(0, 0), r(0, 1), r(1, 0), r(1, 1)};
}

Pose2 solve_pose_svd(const Correspondences& c) {
  const Centroids m = weighted_centroids(c);
  const Mat2 cov = weighted_covariance(c, m);
  // W_cov = C·Rᵀ for dst = R·src, so the nearest rotation to its transpose is R.
  const Mat2 r = solve_svd({cov[0], cov[2], cov[1], cov[3]});
  const double theta = std::atan2(r[2], r[0]);
  return {m.dst[0] - (r[0] * m.src[0] + r[1] * m.src[1]), m.dst[1] - (r[2] * m.src[0] + r[3] * m.src[1]),
          theta};
}

Pose2 solve_closed_form(const Correspondences& c) {
  c.validate();
  const std::size_t n = c.src.size();
  std::vector<double> s(2 * n), d(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    s[2 * i] = c.src[i][0];
    s[2 * i + 1] = c.src[i][1];
    d[2 * i] = c.dst[i][0];
    d[2 * i + 1] = c.dst[i][1];
  }
  return solve_closed_form(Tensor::constant({n, 2}, std::move(s)), Tensor::constant({n, 2}, std::move(d)),
                           Tensor::constant({n}, c.weights))
      .value();
}

Pose2 PoseTensor::value() const { return {x.item(), y.item(), theta.item()}; }

PoseTensor solve_closed_form(const Tensor& src, const Tensor& dst, const Tensor& weights,
                             std::optional<double> translation_rotation) {
  if (src.ndim() != 2 || src.dim(1) != 2 || src.shape() != dst.shape() || weights.ndim() != 1 ||
      weights.dim(0) != src.dim(0)) {
    throw ShapeError("solve_closed_form: expected N x 2 points and N weights, got " + shape_str(src.shape()) +
                     ", " + shape_str(dst.shape()) + ", " + shape_str(weights.shape()));
  }
  const std::size_t n = src.dim(0);
  const Tensor total = sum(weights);
  if (!(total.item() >= kWeightFloor)) throw DegenerateWeights("solve_closed_form: weight sum below floor");
  const Tensor wn = div(weights, total);
  const Tensor row = reshape(wn, {1, n});
  const Tensor s_bar = reshape(matmul(row, src), {2});
  const Tensor d_bar = reshape(matmul(row, dst), {2});
  const Tensor sc = sub(src, s_bar);
  const Tensor dc = sub(dst, d_bar);
  std::vector<std::size_t> swap_idx(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    swap_idx[2 * i] = 2 * i + 1;
    swap_idx[2 * i + 1] = 2 * i;
  }
  const Tensor dc_swapped = gather(dc, std::move(swap_idx), {n, 2});
  const Tensor a = sum(mul(wn, sum(mul(sc, dc), 1)));
  const Tensor b = sum(mul(wn, sum(mul(mul(sc, dc_swapped), Tensor::constant({2}, {1.0, -1.0})), 1)));
  if (std::abs(a.item()) < 1e-12 && std::abs(b.item()) < 1e-12) {
    throw DegenerateGeometry("solve_closed_form: correspondences have no spatial extent");
  }
  PoseTensor out;
  out.theta = atan2(b, a);
  Tensor cos_t, sin_t;
  if (translation_rotation) {
    cos_t = Tensor::scalar(std::cos(*translation_rotation));
    sin_t = Tensor::scalar(std::sin(*translation_rotation));
  } else {
    cos_t = cos(out.theta);
    sin_t = sin(out.theta);
  }
  const Tensor sx = reshape(slice(s_bar, 0, 0, 1), {}), sy = reshape(slice(s_bar, 0, 1, 1), {});
  const Tensor dx = reshape(slice(d_bar, 0, 0, 1), {}), dy = reshape(slice(d_bar, 0, 1, 1), {});
  out.x = sub(dx, sub(mul(cos_t, sx), mul(sin_t, sy)));
  out.y = sub(dy, add(mul(sin_t, sx), mul(cos_t, sy)));
  return out;
}

Tensor cells_to_meters(const Tensor& cells, const GridSpec& grid) {
  const CellCoord o = grid.origin();
  return scale(add(cells, Tensor::constant({2}, {-o.row, -o.col})), grid.resolution());
}

PoseTensor solve_pose(const MatchSet& m, const GridSpec& grid, std::optional<double> translation_rotation) {
  return solve_closed_form(cells_to_meters(m.p_candidate, grid), cells_to_meters(m.p_match, grid), m.pair_score,
                           translation_rotation);
}

}  // namespace bevodo
