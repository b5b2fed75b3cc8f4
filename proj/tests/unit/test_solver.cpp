#include <doctest.h>

#include <cmath>
#include <random>

#include "bevodo/gradcheck.hpp"
#include "bevodo/solver.hpp"

using namespace bevodo;

namespace {

Correspondences random_rigid(std::mt19937_64& rng, std::size_t n, const Pose2& motion, double noise = 0.0) {
  std::uniform_real_distribution<double> u(-5, 5), wu(0.1, 2.0);
  std::normal_distribution<double> g(0.0, noise > 0 ? noise : 1.0);
  Correspondences c;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 s{u(rng), u(rng)};
    auto d = motion.transform_point(s[0], s[1]);
    if (noise > 0) {
      d[0] += g(rng);
      d[1] += g(rng);
    }
    c.src.push_back(s);
    c.dst.push_back({d[0], d[1]});
    c.weights.push_back(wu(rng));
  }
  return c;
}

double cost(const Correspondences& c, double th, double tx, double ty) {
  double s = 0.0;
  for (std::size_t i = 0; i < c.src.size(); ++i) {
    const double px = std::cos(th) * c.src[i][0] - std::sin(th) * c.src[i][1] + tx - c.dst[i][0];
    const double py = std::sin(th) * c.src[i][0] + std::cos(th) * c.src[i][1] + ty - c.dst[i][1];
    s += c.weights[i] * (px * px + py * py);
  }
  return s;
}

double angle_diff(double a, double b) { return std::abs(wrap_angle(a - b)); }

}  // namespace

TEST_CASE("weighted centroids") {
  Correspondences c{{{0, 0}, {2, 0}, {4, 6}}, {{1, 1}, {3, 1}, {5, 7}}, {1, 1, 1}};
  auto m = weighted_centroids(c);
  CHECK(m.src[0] == doctest::Approx(2.0));
  CHECK(m.src[1] == doctest::Approx(2.0));
  CHECK(m.dst[0] == doctest::Approx(3.0));
  c.weights = {0, 1, 0};
  m = weighted_centroids(c);
  CHECK(m.src[0] == 2.0);
  CHECK(m.src[1] == 0.0);
  CHECK(m.dst[0] == 3.0);
  CHECK(m.dst[1] == 1.0);

  std::mt19937_64 rng(20);
  const auto r = random_rigid(rng, 17, {0.3, -1, 0.4}, 0.2);
  m = weighted_centroids(r);
  double sw = 0, sx = 0, sy = 0, dx = 0, dy = 0;
  for (std::size_t i = 0; i < 17; ++i) {
    sw += r.weights[i];
    sx += r.weights[i] * r.src[i][0];
    sy += r.weights[i] * r.src[i][1];
    dx += r.weights[i] * r.dst[i][0];
    dy += r.weights[i] * r.dst[i][1];
  }
  CHECK(std::abs(m.src[0] - sx / sw) < 1e-12);
  CHECK(std::abs(m.src[1] - sy / sw) < 1e-12);
  CHECK(std::abs(m.dst[0] - dx / sw) < 1e-12);
  CHECK(std::abs(m.dst[1] - dy / sw) < 1e-12);

  c.weights = {0, 0, 0};
  CHECK_THROWS_AS(weighted_centroids(c), DegenerateWeights);
  c.weights = {1, -1, 1};
  CHECK_THROWS_AS(weighted_centroids(c), std::invalid_argument);
}

TEST_CASE("weighted covariance") {
  std::mt19937_64 rng(21);
  auto id = random_rigid(rng, 9, {});
  auto cov = weighted_covariance(id, weighted_centroids(id));
  CHECK(cov[1] == doctest::Approx(cov[2]).epsilon(1e-12));
  CHECK(cov[0] >= 0.0);
  CHECK(cov[0] * cov[3] - cov[1] * cov[2] >= -1e-12);

  // dst = R(90°) src with uniform weights: W = C·Rᵀ with C the source scatter.
  Correspondences rot;
  for (const auto& s : id.src) {
    rot.src.push_back(s);
    rot.dst.push_back({-s[1], s[0]});
    rot.weights.push_back(1.0);
  }
  const auto m = weighted_centroids(rot);
  cov = weighted_covariance(rot, m);
  double cxx = 0, cxy = 0, cyy = 0;
  for (const auto& s : rot.src) {
    const double x = s[0] - m.src[0], y = s[1] - m.src[1];
    cxx += x * x / 9;
    cxy += x * y / 9;
    cyy += y * y / 9;
  }
  // C·Rᵀ with Rᵀ = [[0, 1], [-1, 0]].
  CHECK(std::abs(cov[0] - (-cxy)) < 1e-12);
  CHECK(std::abs(cov[1] - cxx) < 1e-12);
  CHECK(std::abs(cov[2] - (-cyy)) < 1e-12);
  CHECK(std::abs(cov[3] - cxy) < 1e-12);

  Correspondences same{{{1, 2}, {1, 2}, {1, 2}}, {{3, 4}, {3, 4}, {3, 4}}, {1, 2, 3}};
  cov = weighted_covariance(same, weighted_centroids(same));
  for (double v : cov) CHECK(v == 0.0);
  CHECK_THROWS_AS(solve_closed_form(same), DegenerateGeometry);
  CHECK_THROWS_AS(solve_pose_svd(same), DegenerateGeometry);
}

TEST_CASE("solve_svd examples") {
  auto r = solve_svd({1, 0, 0, 1});
  CHECK(r[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(r[1]) < 1e-14);
  CHECK(std::abs(r[2]) < 1e-14);
  CHECK(r[3] == doctest::Approx(1.0).epsilon(1e-14));

  r = solve_svd({0, -1, 1, 0});
  CHECK(std::abs(r[0]) < 1e-14);
  CHECK(r[1] == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(r[2] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(r[3]) < 1e-14);

  // Mirrored point set: dst = reflect(src) gives det(W) < 0.
  Correspondences mirror{{{1, 0}, {0, 2}, {-1, -1}, {3, 1}}, {{1, 0}, {0, -2}, {-1, 1}, {3, -1}}, {1, 1, 1, 1}};
  const auto cov = weighted_covariance(mirror, weighted_centroids(mirror));
  CHECK(cov[0] * cov[3] - cov[1] * cov[2] < 0.0);
  r = solve_svd(cov);
  CHECK(std::abs(r[0] * r[3] - r[1] * r[2] - 1.0) < 1e-10);
  CHECK(std::abs(r[0] * r[0] + r[2] * r[2] - 1.0) < 1e-10);
  CHECK(std::abs(r[0] * r[1] + r[2] * r[3]) < 1e-10);

  CHECK_THROWS_AS(solve_svd({0, 0, 0, 1e-14}), DegenerateGeometry);
}

TEST_CASE("closed form examples") {
  std::mt19937_64 rng(22);
  auto id = random_rigid(rng, 6, {});
  const auto p0 = solve_closed_form(id);
  CHECK(std::abs(p0.x()) < 1e-12);
  CHECK(std::abs(p0.y()) < 1e-12);
  CHECK(std::abs(p0.theta()) < 1e-12);

  auto moved = random_rigid(rng, 8, {1.0, -2.0, 0.3});
  const auto p1 = solve_closed_form(moved);
  CHECK(std::abs(p1.x() - 1.0) < 1e-10);
  CHECK(std::abs(p1.y() + 2.0) < 1e-10);
  CHECK(std::abs(p1.theta() - 0.3) < 1e-10);

  // Gross outliers with negligible weight.
  auto inliers = random_rigid(rng, 10, {0.5, 0.7, -0.8}, 0.05);
  auto mixed = inliers;
  std::uniform_real_distribution<double> far(-50, 50);
  for (int i = 0; i < 5; ++i) {
    mixed.src.push_back({far(rng), far(rng)});
    mixed.dst.push_back({far(rng), far(rng)});
    mixed.weights.push_back(1e-9);
  }
  const auto pi = solve_closed_form(inliers), pm = solve_closed_form(mixed);
  CHECK(std::abs(pi.x() - pm.x()) < 1e-6);
  CHECK(std::abs(pi.y() - pm.y()) < 1e-6);
  CHECK(angle_diff(pi.theta(), pm.theta()) < 1e-6);
}

TEST_CASE("SVD path and closed form agree on 1000 random problems") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> th(-3.1, 3.1), t(-5, 5);
  std::uniform_int_distribution<std::size_t> n(2, 30);
  double worst_angle = 0.0, worst_t = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const auto c = random_rigid(rng, n(rng), {t(rng), t(rng), th(rng)}, 0.3);
    const auto a = solve_closed_form(c), b = solve_pose_svd(c);
    worst_angle = std::max(worst_angle, angle_diff(a.theta(), b.theta()));
    worst_t = std::max({worst_t, std::abs(a.x() - b.x()), std::abs(a.y() - b.y())});
  }
  CHECK(worst_angle < 1e-9);
  CHECK(worst_t < 1e-9);
}

TEST_CASE("exact recovery, weight invariance and equivariance") {
  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> th(-3.1, 3.1), t(-5, 5), sc(1e-3, 1e3);
  for (int k = 0; k < 50; ++k) {
    const Pose2 g{t(rng), t(rng), th(rng)};
    auto c = random_rigid(rng, 7, g);
    const auto p = solve_closed_form(c);
    CHECK(std::abs(p.x() - g.x()) < 1e-10);
    CHECK(std::abs(p.y() - g.y()) < 1e-10);
    CHECK(angle_diff(p.theta(), g.theta()) < 1e-10);

    auto noisy = random_rigid(rng, 7, g, 0.5);
    const auto base = solve_closed_form(noisy);
    auto scaled = noisy;
    const double s = sc(rng);
    for (double& w : scaled.weights) w *= s;
    const auto ps = solve_closed_form(scaled);
    CHECK(std::abs(ps.x() - base.x()) < 1e-12);
    CHECK(std::abs(ps.y() - base.y()) < 1e-12);
    CHECK(angle_diff(ps.theta(), base.theta()) < 1e-12);

    // Rotating both point sets by Q keeps θ and rotates t by Q.
    const double q = th(rng);
    const Pose2 rq{0, 0, q};
    auto rotated = noisy;
    for (std::size_t i = 0; i < rotated.src.size(); ++i) {
      const auto a = rq.transform_point(noisy.src[i][0], noisy.src[i][1]);
      const auto b = rq.transform_point(noisy.dst[i][0], noisy.dst[i][1]);
      rotated.src[i] = {a[0], a[1]};
      rotated.dst[i] = {b[0], b[1]};
    }
    const auto pr = solve_closed_form(rotated);
    const auto tq = rq.transform_point(base.x(), base.y());
    CHECK(angle_diff(pr.theta(), base.theta()) < 1e-10);
    CHECK(std::abs(pr.x() - tq[0]) < 1e-10);
    CHECK(std::abs(pr.y() - tq[1]) < 1e-10);
  }
}

TEST_CASE("closed form beats random and grid search on the weighted cost") {
  std::mt19937_64 rng(25);
  std::uniform_real_distribution<double> th(-kPi, kPi), t(-8, 8);
  for (int trial = 0; trial < 5; ++trial) {
    const auto c = random_rigid(rng, 5, {t(rng) / 4, t(rng) / 4, th(rng)}, 1.0);
    const auto p = solve_closed_form(c);
    const double best = cost(c, p.theta(), p.x(), p.y());
    for (int k = 0; k < 10000; ++k) CHECK(best <= cost(c, th(rng), t(rng), t(rng)) + 1e-12);
    double sw = 0;
    for (double w : c.weights) sw += w;
    for (int k = 0; k < 3600; ++k) {
      const double a = -kPi + 2 * kPi * k / 3600.0;
      // Optimal t for fixed θ: weighted mean residual.
      double tx = 0, ty = 0;
      for (std::size_t i = 0; i < 5; ++i) {
        tx += c.weights[i] * (c.dst[i][0] - (std::cos(a) * c.src[i][0] - std::sin(a) * c.src[i][1]));
        ty += c.weights[i] * (c.dst[i][1] - (std::sin(a) * c.src[i][0] + std::cos(a) * c.src[i][1]));
      }
      CHECK(best <= cost(c, a, tx / sw, ty / sw) + 1e-12);
    }
  }
}

TEST_CASE("solve_pose on match sets") {
  const GridSpec grid(32, 32, 0.5);
  std::mt19937_64 rng(26);
  std::uniform_real_distribution<double> cell(4, 28);
  const std::size_t n = 12;
  std::vector<double> pc(2 * n);
  for (double& v : pc) v = cell(rng);
  auto cand = Tensor::constant({n, 2}, pc);
  MatchSet same{cand, cand, Tensor::full({n}, 0.7)};
  const auto p0 = solve_pose(same, grid).value();
  CHECK(std::abs(p0.x()) < 1e-6);
  CHECK(std::abs(p0.y()) < 1e-6);
  CHECK(std::abs(p0.theta()) < 1e-6);

  // Encode a known metric motion into the matched cell coordinates.
  const Pose2 g{0.8, -0.4, 0.15};
  std::vector<double> pm(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto m = grid.pixel_to_metric({pc[2 * i], pc[2 * i + 1]});
    const auto d = g.transform_point(m.x, m.y);
    const auto q = grid.metric_to_pixel({d[0], d[1]});
    pm[2 * i] = q.row;
    pm[2 * i + 1] = q.col;
  }
  std::uniform_real_distribution<double> wu(0.05, 1.0);
  std::vector<double> ws(n);
  for (double& w : ws) w = wu(rng);
  MatchSet known{cand, Tensor::constant({n, 2}, pm), Tensor::constant({n}, ws)};
  const auto p1 = solve_pose(known, grid).value();
  CHECK(std::abs(p1.x() - g.x()) < 1e-9);
  CHECK(std::abs(p1.y() - g.y()) < 1e-9);
  CHECK(std::abs(p1.theta() - g.theta()) < 1e-9);

  // Guided translation with the true rotation gives the same answer on exact data.
  const auto pg = solve_pose(known, grid, g.theta()).value();
  CHECK(std::abs(pg.x() - g.x()) < 1e-9);
  CHECK(std::abs(pg.y() - g.y()) < 1e-9);

  std::vector<double> noisy = pm;
  std::normal_distribution<double> e(0, 0.3);
  for (double& v : noisy) v += e(rng);
  auto pcand = Tensor::parameter({n, 2}, pc);
  auto pmatch = Tensor::parameter({n, 2}, noisy);
  auto score = Tensor::parameter({n}, ws);
  auto f = [&](const std::vector<Tensor>& in) {
    const auto p = solve_pose({in[0], in[1], in[2]}, grid);
    return add(add(scale(p.x, 0.7), scale(p.y, -1.3)), scale(p.theta, 2.1));
  };
  CHECK(grad_check(f, {pcand, pmatch, score}).max_rel_error < 1e-4);
  auto fg = [&](const std::vector<Tensor>& in) {
    const auto p = solve_pose({in[0], in[1], in[2]}, grid, 0.2);
    return add(add(scale(p.x, 0.7), scale(p.y, -1.3)), scale(p.theta, 2.1));
  };
  CHECK(grad_check(fg, {pcand, pmatch, score}).max_rel_error < 1e-4);

  MatchSet zero{cand, cand, Tensor::zeros({n})};
  CHECK_THROWS_AS(solve_pose(zero, grid), DegenerateWeights);
}
