#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "bevodo/gradcheck.hpp"
#include "bevodo/liftsplat.hpp"

using namespace bevodo;

namespace {

std::vector<double> random_values(std::size_t n, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// 12x16 image, 6 bins at 1..6 m, camera at the vehicle origin looking along +x.
CameraModel small_camera() {
  return CameraModel({8.0, 8.0, 7.5, 5.5}, {}, 12, 16, {1.0, 6.0, 6});
}

Tensor one_hot_depth(std::size_t bins, std::size_t h, std::size_t w, std::size_t bin) {
  std::vector<double> v(bins * h * w, -1000.0);
  for (std::size_t p = 0; p < h * w; ++p) v[bin * h * w + p] = 0.0;
  return Tensor::constant({bins, h, w}, v);
}

}  // namespace

TEST_CASE("lift with one-hot and uniform depth") {
  std::mt19937_64 rng(3);
  auto ctx = Tensor::constant({3, 2, 4}, random_values(24, rng));
  auto out = lift({ctx, one_hot_depth(5, 2, 4, 2)});
  REQUIRE(out.shape() == Shape{3, 5, 2, 4});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t d = 0; d < 5; ++d)
      for (std::size_t p = 0; p < 8; ++p) {
        const double v = out.values()[(c * 5 + d) * 8 + p];
        CHECK(v == (d == 2 ? ctx.values()[c * 8 + p] : 0.0));
      }

  auto uniform = lift({ctx, Tensor::zeros({5, 2, 4})});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t d = 0; d < 5; ++d)
      for (std::size_t p = 0; p < 8; ++p) {
        CHECK(uniform.values()[(c * 5 + d) * 8 + p] == doctest::Approx(ctx.values()[c * 8 + p] / 5).epsilon(1e-14));
      }
}

TEST_CASE("lift marginalizes back to the context") {
  std::mt19937_64 rng(4);
  auto ctx = Tensor::constant({4, 3, 5}, random_values(60, rng, -3, 3));
  auto logits = Tensor::constant({7, 3, 5}, random_values(105, rng, -4, 4));
  auto out = lift({ctx, logits});
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t p = 0; p < 15; ++p) {
      double s = 0.0;
      for (std::size_t d = 0; d < 7; ++d) s += out.values()[(c * 7 + d) * 15 + p];
      CHECK(std::abs(s - ctx.values()[c * 15 + p]) < 1e-12);
    }
  CHECK_THROWS_AS(lift({ctx, Tensor::zeros({7, 3, 4})}), ShapeError);
}

TEST_CASE("camera model validation and projection round trip") {
  CHECK_THROWS_AS(CameraModel({0.0, 8.0, 7.5, 5.5}, {}, 12, 16, {1.0, 6.0, 6}), std::invalid_argument);
  CHECK_THROWS_AS(CameraModel({8.0, 8.0, 7.5, 5.5}, {}, 12, 16, {3.0, 2.0, 6}), std::invalid_argument);
  Extrinsics ex{{0.3, -0.2, 1.5}, 0.1, 0.05, -0.02};
  CameraModel cam({10, 11, 7.5, 5.5}, ex, 12, 16, {1.0, 6.0, 6});
  const auto p = cam.unproject(3.25, 9.5, 4.0);
  const auto hit = cam.project(p);
  REQUIRE(hit.has_value());
  CHECK(hit->row == doctest::Approx(3.25).epsilon(1e-12));
  CHECK(hit->col == doctest::Approx(9.5).epsilon(1e-12));
  CHECK(hit->depth == doctest::Approx(4.0).epsilon(1e-12));
  CHECK_FALSE(small_camera().project({-1.0, 0.0, 0.0}).has_value());
}

TEST_CASE("splat places a single frustum point in the hand-computed cell") {
  const auto cam = small_camera();
  const GridSpec grid(16, 16, 0.5);
  // Pixel (row 3, col 10), bin 2 -> depth 3 m.
  // Optical: X = (10 - 7.5) / 8 * 3 = 0.9375, Y = (3 - 5.5) / 8 * 3 = -0.9375, Z = 3.
  // Vehicle: x = Z = 3, y = -X = -0.9375, z = -Y = 0.9375 (inside the height band).
  // Grid: row = 3 / 0.5 + 8 = 14, col = -0.9375 / 0.5 + 8 = 6.125 -> nearest cell 6.
  const std::size_t expected_cell = 14 * 16 + 6;

  std::vector<double> ctx(2 * 12 * 16, 0.0);
  ctx[0 * 192 + 3 * 16 + 10] = 2.5;
  ctx[1 * 192 + 3 * 16 + 10] = -1.0;
  auto lifted = lift({Tensor::constant({2, 12, 16}, ctx), one_hot_depth(6, 12, 16, 2)});
  auto bev = splat(lifted, cam, grid);
  REQUIRE(bev.features.shape() == Shape{2, 16, 16});
  for (std::size_t k = 0; k < 256; ++k) {
    CHECK(bev.features.values()[k] == (k == expected_cell ? 2.5 : 0.0));
    CHECK(bev.features.values()[256 + k] == (k == expected_cell ? -1.0 : 0.0));
  }
}

TEST_CASE("splat drops mass beyond the grid") {
  const auto cam = small_camera();
  const GridSpec grid(16, 16, 0.5);  // covers x in [-4, 4)
  std::mt19937_64 rng(5);
  auto ctx = Tensor::constant({2, 12, 16}, random_values(384, rng));
  auto bev = splat(lift({ctx, one_hot_depth(6, 12, 16, 5)}), cam, grid);
  for (double v : bev.features.values()) CHECK(v == 0.0);
}

TEST_CASE("splat pools pixels sharing a cell additively") {
  const auto cam = small_camera();
  const GridSpec grid(16, 16, 0.5);
  const FrustumGeometry fr(cam, grid);
  std::map<long, std::vector<std::size_t>> by_cell;
  for (std::size_t i = 0; i < 192; ++i) {  // bin 0 only
    if (fr.cells()[i] >= 0) by_cell[fr.cells()[i]].push_back(i);
  }
  const std::vector<std::size_t>* pair = nullptr;
  long cell = -1;
  for (const auto& [c, v] : by_cell) {
    if (v.size() >= 2) {
      pair = &v;
      cell = c;
      break;
    }
  }
  REQUIRE(pair != nullptr);
  std::vector<double> ctx(192, 0.0);
  ctx[(*pair)[0]] = 0.75;
  ctx[(*pair)[1]] = 1.5;
  auto bev = splat(lift({Tensor::constant({1, 12, 16}, ctx), one_hot_depth(6, 12, 16, 0)}), fr);
  CHECK(bev.features.values()[static_cast<std::size_t>(cell)] == 2.25);
}

TEST_CASE("splat conserves the mass that is not dropped") {
  const auto cam = small_camera();
  const GridSpec grid(16, 16, 0.5);
  const FrustumGeometry fr(cam, grid);
  std::mt19937_64 rng(6);
  auto ctx = Tensor::constant({3, 12, 16}, random_values(3 * 192, rng, 0, 2));
  auto logits = Tensor::constant({6, 12, 16}, random_values(6 * 192, rng, -2, 2));
  auto lifted = lift({ctx, logits});
  auto bev = splat(lifted, fr);
  const std::size_t points = 6 * 192;
  for (std::size_t c = 0; c < 3; ++c) {
    double kept = 0.0, total = 0.0;
    for (std::size_t p = 0; p < points; ++p) {
      const double v = lifted.values()[c * points + p];
      total += v;
      if (fr.cells()[p] >= 0) kept += v;
    }
    double pooled = 0.0;
    for (std::size_t k = 0; k < 256; ++k) pooled += bev.features.values()[c * 256 + k];
    CHECK(std::abs(pooled - kept) < 1e-9);
    CHECK(kept < total);
  }
}

TEST_CASE("height band filter removes points outside the band") {
  const auto cam = small_camera();
  const GridSpec grid(32, 32, 0.5);
  const FrustumGeometry wide(cam, grid, {-10.0, 10.0});
  const FrustumGeometry narrow(cam, grid, {-0.1, 0.1});
  std::size_t n_wide = 0, n_narrow = 0;
  for (long c : wide.cells()) n_wide += c >= 0;
  for (long c : narrow.cells()) n_narrow += c >= 0;
  CHECK(n_narrow < n_wide);
  CHECK(n_narrow > 0);
}

TEST_CASE("grad_check through lift and splat") {
  const auto cam = small_camera();
  const GridSpec grid(16, 16, 0.5);
  const FrustumGeometry fr(cam, grid, {-10.0, 10.0});
  std::mt19937_64 rng(7);
  auto ctx = Tensor::parameter({2, 12, 16}, random_values(384, rng));
  auto logits = Tensor::parameter({6, 12, 16}, random_values(6 * 192, rng, -2, 2));
  auto readout = Tensor::constant({2, 16, 16}, random_values(512, rng));
  auto f = [&](const std::vector<Tensor>& in) {
    return sum(mul(splat(lift({in[0], in[1]}), fr).features, readout));
  };
  const auto report = grad_check(f, {ctx, logits});
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("pv encoder output shapes") {
  ParamStore store;
  std::mt19937_64 rng(8);
  PvEncoder enc({3, 8, 4}, 6, store, rng);
  auto image = Tensor::constant({3, 12, 16}, random_values(3 * 192, rng));
  auto pv = enc.forward(image);
  CHECK(pv.context.shape() == Shape{4, 12, 16});
  CHECK(pv.depth_logits.shape() == Shape{6, 12, 16});
}
