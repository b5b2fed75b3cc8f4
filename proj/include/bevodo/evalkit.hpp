#pragma once

#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "bevodo/geometry.hpp"

namespace bevodo {

class TrajectoryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

Eigen::Isometry3d to_isometry(const Pose2& p);

/// Timestamped 3D poses. Planar trajectories keep z = 0 and a yaw-only rotation.
struct Trajectory {
  std::vector<double> timestamps;
  std::vector<Eigen::Isometry3d> poses;

  static Trajectory from_pose2(const std::vector<Pose2>& poses, const std::vector<double>& timestamps);

  std::size_t size() const { return poses.size(); }
  Eigen::Vector3d position(std::size_t i) const { return poses[i].translation(); }
  /// True when every pose lies in z = 0 with a rotation about z only.
  bool planar() const;
  /// Cumulative arc length of the positions, starting at 0.
  std::vector<double> arc_length() const;
  /// Throws TrajectoryError unless timestamps are strictly increasing and sizes agree.
  void validate() const;
};

/// T_k = T_{k-1} ∘ ΔT_k with T_0 = identity; timestamps k·dt.
Trajectory accumulate(const std::vector<Pose2>& rel_poses, double dt = 0.1);
/// Consecutive relative motions T_{k-1}^{-1} T_k of a planar pose list.
std::vector<Pose2> relative_poses(const std::vector<Pose2>& poses);

struct AlignmentResult {
  Eigen::MatrixXd rotation;  // d x d, d = 2 for planar pairs, otherwise 3
  Eigen::VectorXd translation;
  double scale = 1.0;
  double rmse = 0.0;  // after alignment

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const;
};

/// Least-squares fit of s·R·p_est + t to p_gt (s fixed to 1 unless with_scale).
AlignmentResult umeyama_align(const Trajectory& est, const Trajectory& gt, bool with_scale);

enum class Alignment { kNone, kSE, kSim };

/// Mean Euclidean position error after the given alignment.
double ate(const Trajectory& est, const Trajectory& gt, Alignment alignment);

std::vector<double> default_segment_lengths();  // 10, 20, ..., 80 m

struct RelativeErrors {
  double rte_percent = 0.0;
  double rre_deg_per_100m = 0.0;
  std::size_t segments = 0;
  std::vector<std::string> warnings;
};

/// KITTI-style segment errors over every start index and length.
RelativeErrors rte_rre(const Trajectory& est, const Trajectory& gt, const std::vector<double>& segment_lengths);

struct ScaleDrift {
  double value = 0.0;
  std::size_t windows = 0;
  std::vector<std::string> warnings;
};

/// Mean |log2(d_est / d_gt)| over consecutive windows of gt arc length.
ScaleDrift scale_drift(const Trajectory& est, const Trajectory& gt, double window_m = 10.0);

/// log2(ate_se / ate_sim).
double composite_metric(double ate_se, double ate_sim);

struct PrefixScale {
  Trajectory scaled;
  double scale = 1.0;
};

/// Rescales est about its first position so its arc length matches gt over
/// the prefix where gt first reaches prefix_m.
PrefixScale first10m_scale(const Trajectory& est, const Trajectory& gt, double prefix_m = 10.0);

struct MetricReport {
  double ate_se = 0.0;
  double ate_sim = 0.0;
  double rte_percent = 0.0;
  double rre_deg_per_100m = 0.0;
  double scale_drift = 0.0;
  double composite = 0.0;  // 0 when both ATEs vanish
  std::size_t frames = 0;
  std::vector<std::string> warnings;
};

MetricReport evaluate(const Trajectory& est, const Trajectory& gt, const std::vector<double>& segment_lengths,
                      double window_m = 10.0);

std::string report_csv(const MetricReport& r);
std::string report_table(const MetricReport& r);

}  // namespace bevodo
