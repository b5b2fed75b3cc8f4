#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bevodo/app.hpp"
#include "bevodo/audit.hpp"
#include "bevodo/config.hpp"
#include "bevodo/evalkit.hpp"
#include "bevodo/solver.hpp"
#include "bevodo/synthworld.hpp"

namespace py = pybind11;
using namespace bevodo;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<Pose2> poses_from(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw std::invalid_argument("expected an (N, 3) array of x, y, theta");
  std::vector<Pose2> out;
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < r.shape(0); ++i) out.emplace_back(r(i, 0), r(i, 1), r(i, 2));
  return out;
}

std::vector<Point2> points_from(const Array& a) {
  if (a.ndim() != 2 || a.shape(1) != 2) throw std::invalid_argument("expected an (N, 2) array");
  std::vector<Point2> out;
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < r.shape(0); ++i) out.push_back({r(i, 0), r(i, 1)});
  return out;
}

Trajectory trajectory_from(const Array& poses) {
  const auto p = poses_from(poses);
  std::vector<double> ts(p.size());
  for (std::size_t i = 0; i < ts.size(); ++i) ts[i] = static_cast<double>(i);
  return Trajectory::from_pose2(p, ts);
}

Array positions_of(const Trajectory& t) {
  Array out({static_cast<py::ssize_t>(t.size()), py::ssize_t{3}});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto& m = t.poses[i];
    w(i, 0) = m.translation().x();
    w(i, 1) = m.translation().y();
    w(i, 2) = std::atan2(m.linear()(1, 0), m.linear()(0, 0));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_bevodo, m) {
  m.doc() = "BEV keypoint odometry core";

  m.def(
      "solve_pose",
      [](const Array& src, const Array& dst, const Array& weights) {
        Correspondences c{points_from(src), points_from(dst), {}};
        auto w = weights.unchecked<1>();
        for (py::ssize_t i = 0; i < w.shape(0); ++i) c.weights.push_back(w(i));
        const Pose2 p = solve_closed_form(c);
        return py::make_tuple(p.x(), p.y(), p.theta());
      },
      py::arg("src"), py::arg("dst"), py::arg("weights"),
      "Weighted rigid fit dst ~ R src + t; returns (x, y, theta).");

  m.def(
      "accumulate",
      [](const Array& rel) { return positions_of(accumulate(poses_from(rel))); }, py::arg("rel_poses"),
      "Chain (N, 3) relative poses from the identity; returns (N + 1, 3).");

  m.def(
      "evaluate",
      [](const Array& est, const Array& gt, std::vector<double> segments, double window) {
        if (segments.empty()) segments = default_segment_lengths();
        const auto r = evaluate(trajectory_from(est), trajectory_from(gt), segments, window);
        py::dict d;
        d["ate_se"] = r.ate_se;
        d["ate_sim"] = r.ate_sim;
        d["rte_percent"] = r.rte_percent;
        d["rre_deg_per_100m"] = r.rre_deg_per_100m;
        d["scale_drift"] = r.scale_drift;
        d["composite"] = r.composite;
        d["warnings"] = r.warnings;
        return d;
      },
      py::arg("est"), py::arg("gt"), py::arg("segment_lengths") = std::vector<double>{},
      py::arg("window_m") = 10.0, "Trajectory metrics for two (N, 3) pose arrays.");

  m.def(
      "umeyama_scale",
      [](const Array& est, const Array& gt) {
        const auto a = umeyama_align(trajectory_from(est), trajectory_from(gt), true);
        return py::make_tuple(a.scale, a.rmse);
      },
      py::arg("est"), py::arg("gt"));

  m.def(
      "render_bev",
      [](double x, double y, double theta, std::uint64_t world_seed, std::uint64_t noise_seed) {
        WorldConfig wc;
        wc.seed = world_seed;
        const auto map = WorldMap::generate(wc);
        const auto t = render_bev(map, Pose2{x, y, theta}, GridSpec(32, 32, 0.5), {}, noise_seed);
        std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
        Array out(shape);
        std::copy(t.values().begin(), t.values().end(), out.mutable_data());
        return out;
      },
      py::arg("x"), py::arg("y"), py::arg("theta"), py::arg("world_seed") = 1, py::arg("noise_seed") = 0,
      "Desk-default BEV observation (channels, 32, 32) of the default world.");

  m.def(
      "validate_config", [](const std::string& text) { return dump_config(parse_config(text)); }, py::arg("json_text"),
      "Strictly parses a run configuration and returns its normalized form.");

  m.def(
      "gradcheck",
      [](unsigned seed) {
        AuditConfig c;
        c.seed = seed;
        const auto r = run_gradcheck_audit(c);
        py::list rows;
        for (const auto& e : r.entries) rows.append(py::make_tuple(e.name, e.max_rel_error, e.passed));
        return py::make_tuple(r.all_passed, rows);
      },
      py::arg("seed") = 1);

  m.def(
      "run_cli", [](const std::vector<std::string>& args) { return run_cli(args); }, py::arg("args"),
      "Runs a bevodo subcommand in-process and returns its exit status.");

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DegenerateWeights>(m, "DegenerateWeights", PyExc_ValueError);
  py::register_exception<DegenerateGeometry>(m, "DegenerateGeometry", PyExc_ValueError);
}
