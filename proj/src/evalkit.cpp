#include "bevodo/evalkit.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace bevodo {

Eigen::Isometry3d to_isometry(const Pose2& p) {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.linear() = Eigen::AngleAxisd(p.theta(), Eigen::Vector3d::UnitZ()).toRotationMatrix();
  t.translation() = Eigen::Vector3d(p.x(), p.y(), 0.0);
  return t;
}

Trajectory Trajectory::from_pose2(const std::vector<Pose2>& poses, const std::vector<double>& timestamps) {
  if (poses.size() != timestamps.size()) throw TrajectoryError("Trajectory: pose/timestamp count mismatch");
  Trajectory t;
  t.timestamps = timestamps;
  t.poses.reserve(poses.size());
  for (const auto& p : poses) t.poses.push_back(to_isometry(p));
  return t;
}

bool Trajectory::planar() const {
  for (const auto& p : poses) {
    if (p.translation().z() != 0.0) return false;
    const auto& r = p.linear();
    if (r(2, 0) != 0.0 || r(2, 1) != 0.0 || r(0, 2) != 0.0 || r(1, 2) != 0.0) return false;
  }
  return true;
}

std::vector<double> Trajectory::arc_length() const {
  std::vector<double> d(poses.size(), 0.0);
  for (std::size_t i = 1; i < poses.size(); ++i) d[i] = d[i - 1] + (position(i) - position(i - 1)).norm();
  return d;
}

void Trajectory::validate() const {
  if (timestamps.size() != poses.size()) throw TrajectoryError("Trajectory: pose/timestamp count mismatch");
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    if (!(timestamps[i] > timestamps[i - 1])) throw TrajectoryError("Trajectory: timestamps must strictly increase");
  }
}

Trajectory accumulate(const std::vector<Pose2>& rel_poses, double dt) {
  std::vector<Pose2> poses{Pose2::identity()};
  std::vector<double> ts{0.0};
  for (std::size_t k = 0; k < rel_poses.size(); ++k) {
    poses.push_back(poses.back() * rel_poses[k]);
    ts.push_back(static_cast<double>(k + 1) * dt);
  }
  return Trajectory::from_pose2(poses, ts);
}

std::vector<Pose2> relative_poses(const std::vector<Pose2>& poses) {
  std::vector<Pose2> out;
  for (std::size_t i = 1; i < poses.size(); ++i) out.push_back(poses[i - 1].inverse() * poses[i]);
  return out;
}

namespace {

void check_pair(const Trajectory& est, const Trajectory& gt, std::size_t min_size) {
  if (est.size() != gt.size()) throw TrajectoryError("trajectory length mismatch");
  if (est.size() < min_size) throw TrajectoryError("trajectory has too few poses");
}

Eigen::MatrixXd positions(const Trajectory& t, int dim) {
  Eigen::MatrixXd m(dim, static_cast<Eigen::Index>(t.size()));
  for (std::size_t i = 0; i < t.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = t.position(i).head(dim);
  return m;
}

}  // namespace

Eigen::Vector3d AlignmentResult::apply(const Eigen::Vector3d& p) const {
  const auto d = rotation.rows();
  Eigen::Vector3d out = p;
  out.head(d) = scale * rotation * p.head(d) + translation;
  return out;
}

AlignmentResult umeyama_align(const Trajectory& est, const Trajectory& gt, bool with_scale) {
  check_pair(est, gt, 2);
  const int dim = est.planar() && gt.planar() ? 2 : 3;
  const Eigen::MatrixXd src = positions(est, dim);
  const Eigen::MatrixXd dst = positions(gt, dim);
  if (with_scale) {
    const Eigen::VectorXd mean = src.rowwise().mean();
    if ((src.colwise() - mean).squaredNorm() < 1e-24) {
      throw TrajectoryError("umeyama_align: estimate has zero variance");
    }
  }
  const Eigen::MatrixXd h = Eigen::umeyama(src, dst, with_scale);
  AlignmentResult r;
  const Eigen::MatrixXd sr = h.topLeftCorner(dim, dim);
  r.scale = with_scale ? std::pow(std::abs(sr.determinant()), 1.0 / dim) : 1.0;
  r.rotation = sr / r.scale;
  r.translation = h.topRightCorner(dim, 1);
  double sq = 0.0;
  for (Eigen::Index i = 0; i < src.cols(); ++i) {
    sq += (r.scale * r.rotation * src.col(i) + r.translation - dst.col(i)).squaredNorm();
  }
  r.rmse = std::sqrt(sq / static_cast<double>(src.cols()));
  return r;
}

double ate(const Trajectory& est, const Trajectory& gt, Alignment alignment) {
  check_pair(est, gt, 1);
  AlignmentResult a;
  a.rotation = Eigen::Matrix3d::Identity();
  a.translation = Eigen::Vector3d::Zero();
  if (alignment != Alignment::kNone) a = umeyama_align(est, gt, alignment == Alignment::kSim);
  double total = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) total += (a.apply(est.position(i)) - gt.position(i)).norm();
  return total / static_cast<double>(est.size());
}

std::vector<double> default_segment_lengths() { return {10, 20, 30, 40, 50, 60, 70, 80}; }

namespace {

double rotation_angle(const Eigen::Matrix3d& r) {
  const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Eigen::Vector3d s(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  return std::atan2(0.5 * s.norm(), c);
}

}  // namespace

RelativeErrors rte_rre(const Trajectory& est, const Trajectory& gt, const std::vector<double>& segment_lengths) {
  check_pair(est, gt, 2);
  const auto dist = gt.arc_length();
  RelativeErrors out;
  double t_sum = 0.0, r_sum = 0.0;
  for (double len : segment_lengths) {
    if (!(len > 0.0)) throw TrajectoryError("rte_rre: segment lengths must be positive");
    if (dist.back() + 1e-9 < len) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "segment length %g m exceeds the path length; skipped", len);
      out.warnings.emplace_back(buf);
      continue;
    }
    std::size_t last = 0;
    for (std::size_t first = 0; first < gt.size(); ++first) {
      last = std::max(last, first);
      while (last < gt.size() && dist[last] < dist[first] + len - 1e-9) ++last;
      if (last >= gt.size()) break;
      const Eigen::Isometry3d dg = gt.poses[first].inverse() * gt.poses[last];
      const Eigen::Isometry3d de = est.poses[first].inverse() * est.poses[last];
      const Eigen::Isometry3d err = de.inverse() * dg;
      t_sum += err.translation().norm() / len;
      r_sum += rotation_angle(err.linear()) / len;
      ++out.segments;
    }
  }
  if (out.segments > 0) {
    const double n = static_cast<double>(out.segments);
    out.rte_percent = 100.0 * t_sum / n;
    out.rre_deg_per_100m = 100.0 * (180.0 / kPi) * r_sum / n;
  }
  return out;
}

ScaleDrift scale_drift(const Trajectory& est, const Trajectory& gt, double window_m) {
  check_pair(est, gt, 2);
  if (!(window_m > 0.0)) throw TrajectoryError("scale_drift: window must be positive");
  const auto dist = gt.arc_length();
  std::vector<std::size_t> bounds{0};
  for (std::size_t i = 1; i < gt.size(); ++i) {
    if (dist[i] >= static_cast<double>(bounds.size()) * window_m - 1e-9) bounds.push_back(i);
  }
  ScaleDrift out;
  double sum = 0.0;
  for (std::size_t w = 0; w + 1 < bounds.size(); ++w) {
    const double dg = (gt.position(bounds[w + 1]) - gt.position(bounds[w])).norm();
    const double de = (est.position(bounds[w + 1]) - est.position(bounds[w])).norm();
    if (dg < 1e-12) {
      out.warnings.push_back("window " + std::to_string(w) + " has zero ground-truth displacement; skipped");
      continue;
    }
    sum += de > 0.0 ? std::abs(std::log2(de / dg)) : std::numeric_limits<double>::infinity();
    ++out.windows;
  }
  if (out.windows == 0) {
    out.warnings.emplace_back("no complete scale-drift window");
  } else {
    out.value = sum / static_cast<double>(out.windows);
  }
  return out;
}

double composite_metric(double ate_se, double ate_sim) {
  if (!(ate_se > 0.0) || !(ate_sim > 0.0)) throw std::invalid_argument("composite_metric: ATEs must be positive");
  return std::log2(ate_se / ate_sim);
}

PrefixScale first10m_scale(const Trajectory& est, const Trajectory& gt, double prefix_m) {
  check_pair(est, gt, 2);
  const auto dg = gt.arc_length();
  const auto de = est.arc_length();
  std::size_t k = 0;
  while (k < dg.size() && dg[k] < prefix_m - 1e-9) ++k;
  if (k == dg.size()) throw TrajectoryError("first10m_scale: ground truth is shorter than the prefix");
  if (!(de[k] > 0.0)) throw TrajectoryError("first10m_scale: estimate prefix has zero length");
  PrefixScale out;
  out.scale = dg[k] / de[k];
  out.scaled = est;
  const Eigen::Vector3d p0 = est.position(0);
  for (auto& p : out.scaled.poses) p.translation() = p0 + out.scale * (p.translation() - p0);
  return out;
}

MetricReport evaluate(const Trajectory& est, const Trajectory& gt, const std::vector<double>& segment_lengths,
                      double window_m) {
  check_pair(est, gt, 2);
  MetricReport r;
  r.frames = est.size();
  r.ate_se = ate(est, gt, Alignment::kSE);
  r.ate_sim = ate(est, gt, Alignment::kSim);
  const auto rel = rte_rre(est, gt, segment_lengths);
  r.rte_percent = rel.rte_percent;
  r.rre_deg_per_100m = rel.rre_deg_per_100m;
  const auto sd = scale_drift(est, gt, window_m);
  r.scale_drift = sd.value;
  constexpr double kFloor = 1e-12;
  if (r.ate_se > kFloor || r.ate_sim > kFloor) {
    r.composite = composite_metric(std::max(r.ate_se, kFloor), std::max(r.ate_sim, kFloor));
  }
  r.warnings = rel.warnings;
  r.warnings.insert(r.warnings.end(), sd.warnings.begin(), sd.warnings.end());
  return r;
}

std::string report_csv(const MetricReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "metric,value\nframes,%zu\nate_se_m,%.9f\nate_sim_m,%.9f\nrte_percent,%.9f\nrre_deg_per_100m,%.9f\n"
                "scale_drift,%.9f\ncomposite_log2_se_sim,%.9f\n",
                r.frames, r.ate_se, r.ate_sim, r.rte_percent, r.rre_deg_per_100m, r.scale_drift, r.composite);
  return buf;
}

std::string report_table(const MetricReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "frames                 %zu\n"
                "ATE (SE)               %.4f m\n"
                "ATE (Sim)              %.4f m\n"
                "RTE                    %.3f %%\n"
                "RRE                    %.3f deg/100m\n"
                "D_scale                %.4f\n"
                "log2(SE/Sim)           %.4f\n",
                r.frames, r.ate_se, r.ate_sim, r.rte_percent, r.rre_deg_per_100m, r.scale_drift, r.composite);
  std::string s = buf;
  for (const auto& w : r.warnings) s += "warning: " + w + "\n";
  return s;
}

}  // namespace bevodo
