#include <doctest.h>

#include <cmath>
#include <random>

#include "bevodo/synthworld.hpp"
#include "bevodo/trainer.hpp"

using namespace bevodo;

namespace {

ModelConfig small_model() {
  ModelConfig mc;
  mc.heads.base_channels = 4;
  mc.heads.descriptor_channels = 6;
  return mc;
}

std::vector<TrainingPair> make_pairs(std::size_t n, std::uint64_t seed) {
  static const WorldMap map = WorldMap::generate({});
  ObservationModel obs;
  const BlockSpec blocks(obs.grid, 8, 8);
  std::mt19937_64 rng(seed);
  std::vector<TrainingPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto p = sample_pair(map, {}, obs, blocks, rng);
    out.push_back({p.obs1, p.obs2, p.gt_rel});
  }
  return out;
}

PoseTensor pose_tensor(double x, double y, double th) {
  return {Tensor::parameter({}, {x}), Tensor::parameter({}, {y}), Tensor::parameter({}, {th})};
}

}  // namespace

TEST_CASE("pose loss examples") {
  CHECK(pose_loss(Pose2{1.0, 0.5, 0.0}, Pose2{0.0, 0.0, 0.02}, 10.0) == doctest::Approx(1.7));
  CHECK(pose_loss(Pose2{2.0, -1.0, 0.3}, Pose2{2.0, -1.0, 0.3}, 10.0) == 0.0);
  // Heading error wraps across ±π.
  CHECK(pose_loss(Pose2{0, 0, kPi - 0.01}, Pose2{0, 0, -kPi + 0.01}, 1.0) == doctest::Approx(0.02));
  auto p = pose_tensor(1.0, 0.5, 0.0);
  auto l = pose_loss(p, Pose2{0.0, 0.0, 0.02}, 10.0);
  CHECK(l.item() == doctest::Approx(1.7));
  l.backward();
  CHECK(p.x.grad()[0] == 1.0);
  CHECK(p.y.grad()[0] == 1.0);
  CHECK(p.theta.grad()[0] == -10.0);
}

TEST_CASE("adam reference values") {
  // Scalar reference implementation of the bias-corrected update.
  struct Ref {
    double w, m = 0, v = 0;
    int t = 0;
    void step(double g, double lr) {
      ++t;
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      w -= lr * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    }
  };
  std::vector<double> w{1.0, -2.0};
  Ref r0{1.0}, r1{-2.0};
  AdamState s;
  const double g[3][2] = {{0.5, -4.0}, {0.5, 0.0}, {-1.0, 2.0}};
  for (const auto& gi : g) {
    adam_update(w, std::vector<double>{gi[0], gi[1]}, s, 0.1);
    r0.step(gi[0], 0.1);
    r1.step(gi[1], 0.1);
    CHECK(w[0] == doctest::Approx(r0.w).epsilon(1e-14));
    CHECK(w[1] == doctest::Approx(r1.w).epsilon(1e-14));
  }
  CHECK(s.t == 3);
  // The first step moves each weight by about lr in the direction of -sign(g).
  std::vector<double> u{0.0};
  AdamState s2;
  adam_update(u, std::vector<double>{123.0}, s2, 0.01);
  CHECK(u[0] == doctest::Approx(-0.01).epsilon(1e-8));
  CHECK_THROWS_AS(adam_update(u, std::vector<double>{1.0, 2.0}, s2, 0.1), std::invalid_argument);
}

TEST_CASE("config validation") {
  TrainConfig c;
  c.warmup_epochs = 30;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.alpha = -1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("GKP leaves the validity branch without gradient") {
  OdometryModel model(small_model());
  TrainConfig tc;
  tc.epochs = 2;
  tc.warmup_epochs = 1;
  Trainer tr(model, tc);
  REQUIRE(tr.gkp_active());
  const auto pairs = make_pairs(2, 3);
  tr.train_step(pairs);
  for (const auto& name : model.validity_parameter_names()) {
    const auto g = model.params().get(name).grad();
    for (double v : g) CHECK(v == 0.0);
  }
  // Other parameters do receive gradient.
  double total = 0.0;
  for (double v : model.params().get("heads.pos.out.weight").grad()) total += std::abs(v);
  CHECK(total > 0.0);
}

TEST_CASE("GCT uses the target rotation for the translation") {
  const auto pairs = make_pairs(1, 4);
  const auto& p = pairs[0];
  OdometryModel model(small_model());
  const Pose2 target = p.gt_rel.inverse();
  const auto h1 = model.heads(p.obs1, true);
  const auto h2 = model.heads(p.obs2, true);
  const auto guided = model.forward_pair(h1, h2, true, target.theta());
  const auto free = model.forward_pair(h1, h2, true);
  // Scalar oracle: t = d̄ − R(θ_gt)·s̄ from the match set.
  const auto& m = guided.matches;
  const auto pc = m.p_candidate.values();
  const auto pm = m.p_match.values();
  const auto w = m.pair_score.values();
  const auto o = model.config().grid.origin();
  const double res = model.config().grid.resolution();
  double ws = 0, sx = 0, sy = 0, dx = 0, dy = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    ws += w[i];
    sx += w[i] * (pc[2 * i] - o.row) * res;
    sy += w[i] * (pc[2 * i + 1] - o.col) * res;
    dx += w[i] * (pm[2 * i] - o.row) * res;
    dy += w[i] * (pm[2 * i + 1] - o.col) * res;
  }
  sx /= ws, sy /= ws, dx /= ws, dy /= ws;
  const double c = std::cos(target.theta()), s = std::sin(target.theta());
  CHECK(guided.transform.x.item() == doctest::Approx(dx - (c * sx - s * sy)).epsilon(1e-9));
  CHECK(guided.transform.y.item() == doctest::Approx(dy - (s * sx + c * sy)).epsilon(1e-9));
  // Rotation output is unchanged by the guide.
  CHECK(guided.transform.theta.item() == doctest::Approx(free.transform.theta.item()).epsilon(1e-12));
}

TEST_CASE("training is deterministic and reduces the loss") {
  const auto data = make_pairs(32, 5);
  TrainConfig tc;
  tc.epochs = 4;
  tc.warmup_epochs = 1;
  tc.learning_rate = 3e-3;
  tc.batch_size = 8;
  std::vector<double> first_run;
  for (int run = 0; run < 2; ++run) {
    OdometryModel model(small_model());
    Trainer tr(model, tc);
    std::vector<double> losses;
    for (std::size_t e = 0; e < tc.epochs; ++e) losses.push_back(tr.train_epoch(data).mean_loss);
    if (run == 0) {
      first_run = losses;
      CHECK(losses.back() < losses.front());
    } else {
      for (std::size_t i = 0; i < losses.size(); ++i) CHECK(losses[i] == first_run[i]);
    }
  }
}

TEST_CASE("warmup 0 equals all strategies off") {
  const auto data = make_pairs(8, 6);
  TrainConfig a;
  a.epochs = 1;
  a.warmup_epochs = 0;
  TrainConfig b = a;
  b.global_keypoint_pretraining = false;
  b.guided_convergence_translation = false;
  OdometryModel ma(small_model()), mb(small_model());
  Trainer ta(ma, a), tb(mb, b);
  ta.train_epoch(data);
  tb.train_epoch(data);
  CHECK(ma.params().flat_values() == mb.params().flat_values());
}

TEST_CASE("epoch log rows and lr decay") {
  const auto data = make_pairs(10, 7);
  OdometryModel model(small_model());
  TrainConfig tc;
  tc.epochs = 2;
  tc.warmup_epochs = 0;
  tc.batch_size = 4;
  Trainer tr(model, tc);
  std::vector<LogRow> rows;
  tr.train_epoch(data, [&](const LogRow& r) { rows.push_back(r); });
  CHECK(rows.size() == 3);
  CHECK(rows.back().step == 3);
  CHECK(tr.current_lr() == doctest::Approx(1e-4 * 0.95));
}
