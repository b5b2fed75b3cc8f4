#pragma once

// Procedural landmark world with exact ground truth. Landmarks are points on
// the ground plane carrying a random unit appearance vector; BEV observations
// splat each visible landmark as a Gaussian footprint into the vehicle-frame
// grid, perspective observations project them through a pinhole camera.

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "bevodo/geometry.hpp"
#include "bevodo/liftsplat.hpp"
#include "bevodo/tensor.hpp"

namespace bevodo {

struct Landmark {
  std::array<double, 2> position{};  // world frame, meters
  std::vector<double> appearance;    // unit vector
  double radius = 1.0;               // footprint radius, meters
  double height = 0.0;               // top of the landmark above ground, meters
};

struct WorldConfig {
  double extent_m = 200.0;  // square [-extent/2, extent/2]^2
  double density_per_m2 = 0.15;
  double footprint_radius_m = 1.0;
  std::size_t appearance_dim = 8;
  double min_height_m = 0.5;
  double max_height_m = 2.5;
  std::uint64_t seed = 1;

  void validate() const;
};

class WorldMap {
 public:
  WorldMap(std::vector<Landmark> landmarks, double extent_m, std::size_t appearance_dim);
  static WorldMap generate(const WorldConfig& cfg);

  const std::vector<Landmark>& landmarks() const { return landmarks_; }
  double extent() const { return extent_; }
  std::size_t appearance_dim() const { return dim_; }
  bool inside(double x, double y) const;
  /// Indices of landmarks within `radius` of (x, y), in ascending order.
  std::vector<std::size_t> query(double x, double y, double radius) const;

 private:
  long bucket_key(long bx, long by) const { return bx * 1000003L + by; }

  std::vector<Landmark> landmarks_;
  double extent_;
  std::size_t dim_;
  double bucket_ = 4.0;
  std::unordered_map<long, std::vector<std::size_t>> buckets_;
};

struct NoiseConfig {
  double sigma = 0.05;   // i.i.d. Gaussian per cell/pixel and channel
  double jitter = 0.10;  // global intensity factor drawn from [1 - jitter, 1 + jitter]
};

/// BEV observation: appearance_dim x H x W in the vehicle frame at `pose`.
Tensor render_bev(const WorldMap& map, const Pose2& pose, const GridSpec& grid, const NoiseConfig& noise,
                  std::uint64_t noise_seed);

struct PvRenderOptions {
  bool occlusion = true;  // nearest landmark wins a pixel; off sums all contributions
};

/// Perspective observation: appearance_dim x H_pv x W_pv.
Tensor render_pv(const WorldMap& map, const Pose2& pose, const CameraModel& cam, const NoiseConfig& noise,
                 std::uint64_t noise_seed, PvRenderOptions opts = {});

enum class ObservationKind { kBev, kPerspective };

/// What a frame looks like to the model.
struct ObservationModel {
  ObservationKind kind = ObservationKind::kBev;
  GridSpec grid{32, 32, 0.5};
  std::optional<CameraModel> camera;  // required for kPerspective
  NoiseConfig noise{};
  PvRenderOptions pv{};

  Tensor render(const WorldMap& map, const Pose2& pose, std::uint64_t noise_seed) const;
  Shape shape(std::size_t appearance_dim) const;
};

struct MotionModel {
  double min_translation_m = 0.2;
  double max_translation_m = 4.0;
  double heading_sigma = 0.35;  // spread of the translation direction around vehicle-forward
  double p_rot = 0.4;
  double small_rot_max = 0.1;
  double large_rot_min = 0.1;
  double large_rot_max = 0.5;
  double min_overlap = 0.25;  // fraction of blocks that must keep a landmark in view
  std::size_t max_attempts = 200;

  void validate() const;
};

/// Relative motion (frame-2 pose in frame-1 coordinates).
Pose2 sample_motion(const MotionModel& motion, std::mt19937_64& rng);

struct FramePair {
  Tensor obs1, obs2;
  Pose2 gt_rel;  // frame-2 pose expressed in frame-1 coordinates
  Pose2 pose1;   // world pose of frame 1
};

/// Fraction of the blocks of frame 1 that contain a landmark center which is
/// also inside the grid of frame 2.
double shared_block_fraction(const WorldMap& map, const Pose2& pose1, const Pose2& pose2, const GridSpec& grid,
                             const BlockSpec& blocks);

class SamplingFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Draws a frame pair whose shared-block fraction meets motion.min_overlap
/// (resampling up to max_attempts times).
FramePair sample_pair(const WorldMap& map, const MotionModel& motion, const ObservationModel& obs,
                      const BlockSpec& blocks, std::mt19937_64& rng);

enum class PathKind { kRandomWalk, kStraight, kCircle };

struct SequenceSpec {
  PathKind kind = PathKind::kRandomWalk;
  double spacing_m = 2.0;
  double length_m = 500.0;
  double radius_m = 20.0;          // circle
  double max_curvature = 0.08;     // random walk, 1/m
  double curvature_step = 0.02;    // random walk curvature change per step, 1/m
  double dt_s = 0.1;               // timestamp spacing
  Pose2 start{};
  std::uint64_t seed = 1;

  void validate() const;
};

class PathOutOfExtent : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ground-truth world poses at fixed arc-length spacing; floor(length/spacing)+1 poses.
std::vector<Pose2> gen_path(const WorldMap& map, const SequenceSpec& spec);

struct Sequence {
  std::vector<double> timestamps;
  std::vector<Pose2> poses;
  std::vector<Tensor> observations;
};

Sequence gen_sequence(const WorldMap& map, const SequenceSpec& spec, const ObservationModel& obs);

}  // namespace bevodo
