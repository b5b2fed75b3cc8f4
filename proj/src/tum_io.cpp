#include "bevodo/tum_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace bevodo {

Trajectory parse_tum(const std::string& text) {
  Trajectory t;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    double v[8];
    std::size_t k = 0;
    std::string tok;
    while (ls >> tok) {
      if (k == 8) throw TumParseError(n, "expected 8 fields");
      try {
        std::size_t used = 0;
        v[k] = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw TumParseError(n, "not a number: '" + tok + "'");
      }
      if (!std::isfinite(v[k])) throw TumParseError(n, "non-finite value");
      ++k;
    }
    if (k == 0) continue;
    if (k != 8) throw TumParseError(n, "expected 8 fields, found " + std::to_string(k));
    Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (q.norm() < 1e-9) throw TumParseError(n, "zero quaternion");
    q.normalize();
    Eigen::Isometry3d p = Eigen::Isometry3d::Identity();
    p.linear() = q.toRotationMatrix();
    p.translation() = Eigen::Vector3d(v[1], v[2], v[3]);
    if (!t.timestamps.empty() && !(v[0] > t.timestamps.back())) {
      throw TumParseError(n, "timestamps must strictly increase");
    }
    t.timestamps.push_back(v[0]);
    t.poses.push_back(p);
  }
  return t;
}

Trajectory read_tum(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open trajectory file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_tum(ss.str());
}

std::string format_tum(const Trajectory& t) {
  t.validate();
  std::string out = "# timestamp tx ty tz qx qy qz qw\n";
  char buf[256];
  for (std::size_t i = 0; i < t.size(); ++i) {
    const Eigen::Quaterniond q(t.poses[i].linear());
    const auto p = t.poses[i].translation();
    std::snprintf(buf, sizeof buf, "%.6f %.9f %.9f %.9f %.9f %.9f %.9f %.9f\n", t.timestamps[i], p.x(), p.y(), p.z(),
                  q.x(), q.y(), q.z(), q.w());
    out += buf;
  }
  return out;
}

void write_tum(const std::string& path, const Trajectory& t) {
  const std::string text = format_tum(t);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write trajectory file " + path);
  f << text;
  if (!f) throw std::runtime_error("failed writing trajectory file " + path);
}

std::pair<Trajectory, Trajectory> associate(const Trajectory& est, const Trajectory& gt, double max_dt) {
  est.validate();
  gt.validate();
  std::pair<Trajectory, Trajectory> out;
  std::size_t j = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double ts = est.timestamps[i];
    while (j + 1 < gt.size() && std::abs(gt.timestamps[j + 1] - ts) <= std::abs(gt.timestamps[j] - ts)) ++j;
    if (j >= gt.size() || std::abs(gt.timestamps[j] - ts) > max_dt) continue;
    if (!out.second.timestamps.empty() && out.second.timestamps.back() == gt.timestamps[j]) continue;
    out.first.timestamps.push_back(ts);
    out.first.poses.push_back(est.poses[i]);
    out.second.timestamps.push_back(gt.timestamps[j]);
    out.second.poses.push_back(gt.poses[j]);
  }
  return out;
}

}  // namespace bevodo
