#include "bevodo/liftsplat.hpp"

#include <cmath>
#include <stdexcept>

namespace bevodo {

std::vector<double> DepthBins::centers() const {
  std::vector<double> c(count);
  for (std::size_t i = 0; i < count; ++i) {
    c[i] = count == 1 ? min_m
                      : min_m + (max_m - min_m) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  return c;
}

CameraModel::CameraModel(Intrinsics intrinsics, Extrinsics extrinsics, std::size_t image_height,
                         std::size_t image_width, DepthBins bins)
    : intrinsics_(intrinsics),
      extrinsics_(extrinsics),
      image_h_(image_height),
      image_w_(image_width),
      bins_(bins) {
  if (!(intrinsics_.fx > 0.0) || !(intrinsics_.fy > 0.0)) {
    throw std::invalid_argument("CameraModel: focal lengths must be positive");
  }
  if (image_h_ == 0 || image_w_ == 0) throw std::invalid_argument("CameraModel: empty image");
  if (bins_.count == 0 || !(bins_.min_m > 0.0) || (bins_.count > 1 && !(bins_.max_m > bins_.min_m))) {
    throw std::invalid_argument("CameraModel: depth bins must be positive and strictly increasing");
  }
  const double cy = std::cos(extrinsics_.yaw), sy = std::sin(extrinsics_.yaw);
  const double cp = std::cos(extrinsics_.pitch), sp = std::sin(extrinsics_.pitch);
  const double cr = std::cos(extrinsics_.roll), sr = std::sin(extrinsics_.roll);
  // Rz(yaw) * Ry(pitch) * Rx(roll)
  const double r[9] = {cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
                       sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
                       -sp,     cp * sr,                cp * cr};
  // Optical axes (x right, y down, z forward) expressed in an unrotated
  // vehicle-aligned frame.
  const double base[9] = {0, 0, 1, -1, 0, 0, 0, -1, 0};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += r[i * 3 + k] * base[k * 3 + j];
      rot_[static_cast<std::size_t>(i * 3 + j)] = s;
    }
}

CameraModel CameraModel::desk_default() {
  return CameraModel({16.0, 16.0, 15.5, 11.5}, {{0.0, 0.0, 1.5}, 0.0, 0.0, 0.0}, 24, 32,
                     {1.0, 20.0, 8});
}

std::array<double, 3> CameraModel::unproject(double row, double col, double depth) const {
  const double p[3] = {(col - intrinsics_.cx) / intrinsics_.fx * depth,
                       (row - intrinsics_.cy) / intrinsics_.fy * depth, depth};
  std::array<double, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) {
    out[i] = rot_[i * 3] * p[0] + rot_[i * 3 + 1] * p[1] + rot_[i * 3 + 2] * p[2] +
             extrinsics_.translation[i];
  }
  return out;
}

std::optional<PixelHit> CameraModel::project(const std::array<double, 3>& p_vehicle) const {
  double d[3];
  for (std::size_t i = 0; i < 3; ++i) d[i] = p_vehicle[i] - extrinsics_.translation[i];
  double q[3];
  for (std::size_t j = 0; j < 3; ++j) q[j] = rot_[j] * d[0] + rot_[3 + j] * d[1] + rot_[6 + j] * d[2];
  if (q[2] <= 1e-9) return std::nullopt;
  return PixelHit{intrinsics_.fy * q[1] / q[2] + intrinsics_.cy,
                  intrinsics_.fx * q[0] / q[2] + intrinsics_.cx, q[2]};
}

FrustumGeometry::FrustumGeometry(const CameraModel& cam, const GridSpec& grid, HeightBand band)
    : grid_(grid), depth_(cam.depth_bins().count), h_(cam.image_height()), w_(cam.image_width()) {
  const auto depths = cam.depth_bins().centers();
  cells_.assign(depth_ * h_ * w_, -1);
  for (std::size_t d = 0; d < depth_; ++d)
    for (std::size_t r = 0; r < h_; ++r)
      for (std::size_t c = 0; c < w_; ++c) {
        const auto p = cam.unproject(static_cast<double>(r), static_cast<double>(c), depths[d]);
        if (p[2] < band.min_z || p[2] > band.max_z) continue;
        const CellCoord cc = grid.metric_to_pixel({p[0], p[1]});
        const double row = std::floor(cc.row + 0.5), col = std::floor(cc.col + 0.5);
        if (row < 0.0 || col < 0.0 || row >= static_cast<double>(grid.height()) ||
            col >= static_cast<double>(grid.width())) {
          continue;
        }
        cells_[(d * h_ + r) * w_ + c] =
            static_cast<long>(row) * static_cast<long>(grid.width()) + static_cast<long>(col);
      }
}

Tensor lift(const PVFeature& pv) {
  const Tensor& ctx = pv.context;
  const Tensor& logits = pv.depth_logits;
  if (ctx.ndim() != 3 || logits.ndim() != 3 || ctx.dim(1) != logits.dim(1) ||
      ctx.dim(2) != logits.dim(2)) {
    throw ShapeError("lift: context " + shape_str(ctx.shape()) + " and depth logits " +
                     shape_str(logits.shape()) + " disagree");
  }
  const std::size_t c = ctx.dim(0), d = logits.dim(0), hw = ctx.dim(1) * ctx.dim(2);
  const Tensor depth = softmax_temperature(logits, 1.0, 0);
  std::vector<std::size_t> ci(c * d * hw), di(c * d * hw);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t p = 0; p < hw; ++p) {
        const std::size_t f = (ch * d + k) * hw + p;
        ci[f] = ch * hw + p;
        di[f] = k * hw + p;
      }
  const Shape out{c, d, ctx.dim(1), ctx.dim(2)};
  return mul(gather(ctx, std::move(ci), out), gather(depth, std::move(di), out));
}

BevFeatureMap splat(const Tensor& lifted, const FrustumGeometry& frustum) {
  if (lifted.ndim() != 4 || lifted.dim(1) != frustum.depth_bins() ||
      lifted.dim(2) != frustum.image_height() || lifted.dim(3) != frustum.image_width()) {
    throw ShapeError("splat: lifted tensor " + shape_str(lifted.shape()) +
                     " does not match the frustum geometry");
  }
  const std::size_t c = lifted.dim(0);
  const std::size_t points = frustum.cells().size();
  // Rearrange C x (D*H*W) into (D*H*W) x C rows, one per frustum point.
  std::vector<std::size_t> idx(points * c);
  for (std::size_t p = 0; p < points; ++p)
    for (std::size_t ch = 0; ch < c; ++ch) idx[p * c + ch] = ch * points + p;
  const Tensor rows = gather(lifted, std::move(idx), {points, c});
  const GridSpec& g = frustum.grid();
  return {scatter_add_pool(rows, frustum.cells(), g.height(), g.width()), g};
}

BevFeatureMap splat(const Tensor& lifted, const CameraModel& cam, const GridSpec& grid, HeightBand band) {
  return splat(lifted, FrustumGeometry(cam, grid, band));
}

PvEncoder::PvEncoder(PvEncoderConfig cfg, std::size_t depth_bins, ParamStore& store,
                     std::mt19937_64& rng, const std::string& prefix)
    : cfg_(cfg), depth_bins_(depth_bins) {
  const std::size_t in = cfg.image_channels, hid = cfg.hidden_channels;
  const std::size_t out = cfg.context_channels + depth_bins;
  w0_ = store.add_uniform(prefix + ".conv0.weight", {hid, in, 3, 3}, in * 9, rng);
  b0_ = store.add_uniform(prefix + ".conv0.bias", {hid}, in * 9, rng);
  w1_ = store.add_uniform(prefix + ".conv1.weight", {out, hid, 1, 1}, hid, rng);
  b1_ = store.add_uniform(prefix + ".conv1.bias", {out}, hid, rng);
}

PVFeature PvEncoder::forward(const Tensor& image) const {
  const Tensor h = relu(conv2d(image, w0_, b0_, 1, 1));
  const Tensor y = conv2d(h, w1_, b1_, 1, 0);
  return {slice(y, 0, 0, cfg_.context_channels), slice(y, 0, cfg_.context_channels, depth_bins_)};
}

}  // namespace bevodo
