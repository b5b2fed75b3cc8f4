#pragma once

// Perspective-to-BEV projection: per-pixel depth distributions are combined
// with context features by an outer product, every (pixel, depth bin) becomes a
// 3-D frustum point in the vehicle frame, and the features are pooled into the
// BEV cell beneath each point.

#include <array>
#include <cstddef>
#include <optional>
#include <random>
#include <vector>

#include "bevodo/geometry.hpp"
#include "bevodo/params.hpp"
#include "bevodo/tensor.hpp"

namespace bevodo {

struct DepthBins {
  double min_m = 1.0;
  double max_m = 20.0;
  std::size_t count = 8;

  /// Evenly spaced bin centers from min_m to max_m inclusive.
  std::vector<double> centers() const;
};

struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
};

/// Camera pose in the vehicle frame (x forward, y left, z up). Yaw turns
/// left, pitch tilts the optical axis down, roll turns about the optical axis.
struct Extrinsics {
  std::array<double, 3> translation{0.0, 0.0, 0.0};
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
};

struct PixelHit {
  double row = 0.0;
  double col = 0.0;
  double depth = 0.0;  // along the optical axis, meters
};

class CameraModel {
 public:
  /// Throws std::invalid_argument for non-positive focal lengths, an empty
  /// image or invalid depth bins.
  CameraModel(Intrinsics intrinsics, Extrinsics extrinsics, std::size_t image_height,
              std::size_t image_width, DepthBins bins);

  /// Desk-scale default: 24x32 image, 8 bins over 1-20 m, camera 1.5 m above
  /// the vehicle origin looking forward.
  static CameraModel desk_default();

  const Intrinsics& intrinsics() const { return intrinsics_; }
  const Extrinsics& extrinsics() const { return extrinsics_; }
  std::size_t image_height() const { return image_h_; }
  std::size_t image_width() const { return image_w_; }
  const DepthBins& depth_bins() const { return bins_; }

  /// Vehicle-frame point seen at pixel (row, col) at the given optical depth.
  std::array<double, 3> unproject(double row, double col, double depth) const;
  /// Projects a vehicle-frame point; nullopt when it lies behind the camera.
  std::optional<PixelHit> project(const std::array<double, 3>& p_vehicle) const;

 private:
  Intrinsics intrinsics_;
  Extrinsics extrinsics_;
  std::size_t image_h_;
  std::size_t image_w_;
  DepthBins bins_;
  std::array<double, 9> rot_{};  // vehicle <- optical, row-major
};

/// Vertical band kept before the height axis is collapsed.
struct HeightBand {
  double min_z = -2.0;
  double max_z = 3.0;
};

/// Frustum point → BEV cell assignment, computed once per camera and grid.
class FrustumGeometry {
 public:
  FrustumGeometry(const CameraModel& cam, const GridSpec& grid, HeightBand band = {});

  /// Flat BEV cell for each (depth bin, row, col), or -1 when dropped.
  const std::vector<long>& cells() const { return cells_; }
  const GridSpec& grid() const { return grid_; }
  std::size_t depth_bins() const { return depth_; }
  std::size_t image_height() const { return h_; }
  std::size_t image_width() const { return w_; }

 private:
  GridSpec grid_;
  std::size_t depth_;
  std::size_t h_;
  std::size_t w_;
  std::vector<long> cells_;
};

struct PVFeature {
  Tensor context;       // C_pv x H_pv x W_pv
  Tensor depth_logits;  // D_pv x H_pv x W_pv, raw
};

struct BevFeatureMap {
  Tensor features;  // C x H x W
  GridSpec grid;
};

/// Outer product of context and the depth softmax → C x D x H_pv x W_pv.
Tensor lift(const PVFeature& pv);
/// Pools lifted features into the BEV grid along the precomputed frustum.
BevFeatureMap splat(const Tensor& lifted, const FrustumGeometry& frustum);
BevFeatureMap splat(const Tensor& lifted, const CameraModel& cam, const GridSpec& grid,
                    HeightBand band = {});

struct PvEncoderConfig {
  std::size_t image_channels = 8;
  std::size_t hidden_channels = 16;
  std::size_t context_channels = 8;
};

/// Small convolution stack standing in for an image backbone: one 3x3 layer
/// followed by a 1x1 layer split into context features and depth logits.
class PvEncoder {
 public:
  PvEncoder(PvEncoderConfig cfg, std::size_t depth_bins, ParamStore& store, std::mt19937_64& rng,
            const std::string& prefix = "pv");
  PVFeature forward(const Tensor& image) const;
  const PvEncoderConfig& config() const { return cfg_; }

 private:
  PvEncoderConfig cfg_;
  std::size_t depth_bins_;
  Tensor w0_, b0_, w1_, b1_;
};

}  // namespace bevodo
