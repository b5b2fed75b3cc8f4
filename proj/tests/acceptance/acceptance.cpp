// Acceptance checks 1-9. Prints one PASS/FAIL line per criterion and exits
// non-zero when any selected criterion fails.

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bevodo/app.hpp"
#include "bevodo/audit.hpp"
#include "bevodo/evalkit.hpp"
#include "bevodo/liftsplat.hpp"
#include "bevodo/matcher.hpp"
#include "bevodo/solver.hpp"
#include "bevodo/synthworld.hpp"
#include "bevodo/tum_io.hpp"

namespace fs = std::filesystem;
using namespace bevodo;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double wrap(double a) { return std::atan2(std::sin(a), std::cos(a)); }

// ---- 1 --------------------------------------------------------------------

Outcome solver_exactness() {
  std::mt19937_64 rng(1001);
  std::uniform_real_distribution<double> pos(-10.0, 10.0), ang(-kPi, kPi), wt(0.05, 2.0);
  double err_t = 0.0, err_r = 0.0, agree = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 1000; ++trial) {
    const double th = ang(rng), tx = pos(rng), ty = pos(rng);
    const double c = std::cos(th), s = std::sin(th);
    Correspondences k;
    for (int i = 0; i < 32; ++i) {
      const double x = pos(rng), y = pos(rng);
      k.src.push_back({x, y});
      k.dst.push_back({c * x - s * y + tx, s * x + c * y + ty});
      k.weights.push_back(wt(rng));
    }
    const Pose2 a = solve_closed_form(k);
    const Pose2 b = solve_pose_svd(k);
    err_t = std::max({err_t, std::hypot(a.x() - tx, a.y() - ty), std::hypot(b.x() - tx, b.y() - ty)});
    err_r = std::max({err_r, std::abs(wrap(a.theta() - th)), std::abs(wrap(b.theta() - th))});
    agree = std::max({agree, std::abs(a.x() - b.x()), std::abs(a.y() - b.y()), std::abs(wrap(a.theta() - b.theta()))});
  }
  const double secs = seconds_since(t0);
  return {err_t < 1e-10 && err_r < 1e-10 && agree < 1e-9 && secs < 5.0,
          fmt("max err %.2e m / %.2e rad, svd vs closed form %.2e, %.3f s", err_t, err_r, agree, secs)};
}

// ---- 2 --------------------------------------------------------------------

double weighted_cost(const Correspondences& k, double th, double tx, double ty) {
  const double c = std::cos(th), s = std::sin(th);
  double e = 0.0;
  for (std::size_t i = 0; i < k.src.size(); ++i) {
    const double dx = c * k.src[i][0] - s * k.src[i][1] + tx - k.dst[i][0];
    const double dy = s * k.src[i][0] + c * k.src[i][1] + ty - k.dst[i][1];
    e += k.weights[i] * (dx * dx + dy * dy);
  }
  return e;
}

double grid_search_cost(const Correspondences& k) {
  double ws = 0, sx = 0, sy = 0, dx = 0, dy = 0;
  for (std::size_t i = 0; i < k.src.size(); ++i) {
    ws += k.weights[i];
    sx += k.weights[i] * k.src[i][0];
    sy += k.weights[i] * k.src[i][1];
    dx += k.weights[i] * k.dst[i][0];
    dy += k.weights[i] * k.dst[i][1];
  }
  sx /= ws, sy /= ws, dx /= ws, dy /= ws;
  double best = std::numeric_limits<double>::infinity();
  for (int j = 0; j < 4096; ++j) {
    const double th = -kPi + 2.0 * kPi * j / 4096.0;
    const double c = std::cos(th), s = std::sin(th);
    best = std::min(best, weighted_cost(k, th, dx - (c * sx - s * sy), dy - (s * sx + c * sy)));
  }
  return best;
}

Outcome solver_optimality() {
  std::mt19937_64 rng(2002);
  std::normal_distribution<double> g(0.0, 3.0);
  std::uniform_real_distribution<double> wt(0.05, 2.0);
  double worst = -std::numeric_limits<double>::infinity();
  int bad = 0;
  for (int trial = 0; trial < 200; ++trial) {
    Correspondences k;
    for (int i = 0; i < 5; ++i) {
      k.src.push_back({g(rng), g(rng)});
      k.dst.push_back({g(rng), g(rng)});
      k.weights.push_back(wt(rng));
    }
    const Pose2 a = solve_closed_form(k);
    const Pose2 b = solve_pose_svd(k);
    const double grid = grid_search_cost(k);
    const double gap = std::max(weighted_cost(k, a.theta(), a.x(), a.y()), weighted_cost(k, b.theta(), b.x(), b.y())) - grid;
    worst = std::max(worst, gap);
    bad += gap > 1e-9;
  }
  return {bad == 0, fmt("max(solver - grid) = %.2e over 200 problems, %d above 1e-9", worst, bad)};
}

// ---- 3 --------------------------------------------------------------------

Outcome gradcheck_audit() {
  const auto r = run_gradcheck_audit();
  double prim = 0.0, comp = 0.0;
  std::size_t failed = 0;
  for (const auto& e : r.entries) {
    double& worst = e.name.rfind("composite", 0) == 0 ? comp : prim;
    worst = std::max(worst, e.max_rel_error);
    failed += !e.passed;
  }
  return {r.all_passed && r.seconds < 120.0,
          fmt("%zu checks, %zu failed, worst primitive %.2e, worst composite %.2e, %.1f s", r.entries.size(), failed,
              prim, comp, r.seconds)};
}

// ---- 4 --------------------------------------------------------------------

// Patch descriptor: the (2r+1)^2 neighbourhood of every appearance channel.
Tensor patch_descriptor(const Tensor& obs, int r) {
  const auto C = obs.dim(0), H = obs.dim(1), W = obs.dim(2);
  const int k = 2 * r + 1;
  std::vector<double> out(C * k * k * H * W, 0.0);
  const auto v = obs.values();
  for (std::size_t c = 0; c < C; ++c) {
    for (int dr = -r; dr <= r; ++dr) {
      for (int dc = -r; dc <= r; ++dc) {
        const std::size_t ch = (c * k + static_cast<std::size_t>(dr + r)) * k + static_cast<std::size_t>(dc + r);
        for (long i = 0; i < static_cast<long>(H); ++i) {
          for (long j = 0; j < static_cast<long>(W); ++j) {
            const long ii = i + dr, jj = j + dc;
            if (ii < 0 || jj < 0 || ii >= static_cast<long>(H) || jj >= static_cast<long>(W)) continue;
            out[(ch * H + static_cast<std::size_t>(i)) * W + static_cast<std::size_t>(j)] =
                v[(c * H + static_cast<std::size_t>(ii)) * W + static_cast<std::size_t>(jj)];
          }
        }
      }
    }
  }
  return Tensor::constant({C * k * k, H, W}, std::move(out));
}

// Keypoint logits: gain times the squared appearance norm per cell.
Tensor energy_logits(const Tensor& obs, double gain) {
  const auto C = obs.dim(0), HW = obs.dim(1) * obs.dim(2);
  std::vector<double> out(HW, 0.0);
  const auto v = obs.values();
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < HW; ++i) out[i] += gain * v[c * HW + i] * v[c * HW + i];
  }
  return Tensor::constant({1, obs.dim(1), obs.dim(2)}, std::move(out));
}

Outcome matching_fidelity() {
  WorldConfig wc;
  wc.seed = 4004;
  const auto map = WorldMap::generate(wc);
  const GridSpec grid(32, 32, 0.5);
  const BlockSpec blocks(grid, 8, 8);
  const MatcherConfig mc{0.01, MaskSpec{8}};
  std::mt19937_64 rng(4005);
  std::uniform_real_distribution<double> u(-0.3 * wc.extent_m, 0.3 * wc.extent_m), a(-kPi, kPi);
  std::uniform_int_distribution<int> shift(-3, 3);
  std::size_t total = 0, ok = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const Pose2 p1{u(rng), u(rng), a(rng)};
    const int dr = shift(rng), dc = shift(rng);
    const Pose2 p2 = p1 * Pose2{-dr * grid.resolution(), -dc * grid.resolution(), 0.0};
    const auto o1 = render_bev(map, p1, grid, {}, 2 * trial + 1);
    const auto o2 = render_bev(map, p2, grid, {}, 2 * trial + 2);
    const HeadOutputs h1{energy_logits(o1, 100.0), Tensor(), patch_descriptor(o1, 3)};
    const HeadOutputs h2{energy_logits(o2, 100.0), Tensor(), patch_descriptor(o2, 3)};
    const auto m = match_frames(h1, h2, blocks, mc, false);
    const auto pc = m.p_candidate.values();
    const auto pm = m.p_match.values();

    std::vector<bool> has(blocks.count(), false);
    const Pose2 inv = p1.inverse();
    const double reach = 0.75 * grid.resolution() * static_cast<double>(grid.height());
    for (auto idx : map.query(p1.x(), p1.y(), reach)) {
      const auto& lm = map.landmarks()[idx];
      const auto q = inv.transform_point(lm.position[0], lm.position[1]);
      const auto cell = grid.metric_to_pixel({q[0], q[1]});
      const long r = std::lround(cell.row), c = std::lround(cell.col);
      if (r < 0 || c < 0 || r >= static_cast<long>(grid.height()) || c >= static_cast<long>(grid.width())) continue;
      has[static_cast<std::size_t>(r) / blocks.block_rows() * blocks.blocks_w() +
          static_cast<std::size_t>(c) / blocks.block_cols()] = true;
    }
    for (std::size_t b = 0; b < blocks.count(); ++b) {
      const double gr = pc[2 * b] + dr, gc = pc[2 * b + 1] + dc;
      if (!has[b] || !grid.contains({gr, gc})) continue;
      ++total;
      ok += std::hypot(pm[2 * b] - gr, pm[2 * b + 1] - gc) < 0.5;
    }
  }
  const double frac = total ? static_cast<double>(ok) / static_cast<double>(total) : 0.0;
  return {total > 0 && frac >= 0.95,
          fmt("%zu of %zu landmark blocks within 0.5 cells (%.2f%%), tau 0.01, 60 pairs", ok, total, 100.0 * frac)};
}

// ---- 5 --------------------------------------------------------------------

Outcome liftsplat_conservation() {
  const auto cam = CameraModel::desk_default();
  const GridSpec grid(32, 32, 0.5);
  const FrustumGeometry frustum(cam, grid);
  WorldConfig wc;
  wc.seed = 5005;
  const auto map = WorldMap::generate(wc);
  ParamStore store;
  std::mt19937_64 rng(5006);
  PvEncoder enc({}, cam.depth_bins().count, store, rng);

  double mass_err = 0.0, marg_err = 0.0, dropped_frac = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const auto img = render_pv(map, Pose2{3.0 * trial, -2.0 * trial, 0.4 * trial}, cam, {}, 50 + trial);
    const auto pv = enc.forward(img);
    const auto lifted = lift(pv);
    const auto bev = splat(lifted, frustum);

    const std::size_t C = lifted.dim(0), D = lifted.dim(1), HW = lifted.dim(2) * lifted.dim(3);
    const auto lv = lifted.values();
    const auto ctx = pv.context.values();
    const auto fv = bev.features.values();
    const auto& cells = frustum.cells();
    const std::size_t G = grid.cells();
    for (std::size_t c = 0; c < C; ++c) {
      double in = 0.0, dropped = 0.0, pooled = 0.0, scale = 0.0;
      for (std::size_t d = 0; d < D; ++d) {
        for (std::size_t p = 0; p < HW; ++p) {
          const double x = lv[(c * D + d) * HW + p];
          in += x;
          scale += std::abs(x);
          if (cells[d * HW + p] < 0) dropped += x;
        }
      }
      for (std::size_t g = 0; g < G; ++g) pooled += fv[c * G + g];
      mass_err = std::max(mass_err, std::abs(in - pooled - dropped) / std::max(1.0, scale));
      for (std::size_t p = 0; p < HW; ++p) {
        double s = 0.0;
        for (std::size_t d = 0; d < D; ++d) s += lv[(c * D + d) * HW + p];
        marg_err = std::max(marg_err, std::abs(s - ctx[c * HW + p]));
      }
    }
    std::size_t drop = 0;
    for (long cell : cells) drop += cell < 0;
    dropped_frac = static_cast<double>(drop) / static_cast<double>(cells.size());
  }
  return {mass_err < 1e-9 && marg_err < 1e-12 && dropped_frac > 0.0 && dropped_frac < 1.0,
          fmt("mass residual %.2e, depth marginal residual %.2e, %.1f%% of frustum points dropped", mass_err,
              marg_err, 100.0 * dropped_frac)};
}

// ---- 6, 7, 9 (CLI pipeline) -------------------------------------------------

struct Ctx {
  fs::path work;
  fs::path configs;
};

void cli(std::vector<std::string> args) {
  std::string line = "bevodo ";
  for (const auto& a : args) line += a + " ";
  std::ostringstream sink;
  auto* saved = std::cout.rdbuf(sink.rdbuf());
  const int rc = run_cli(args);
  std::cout.rdbuf(saved);
  if (rc != 0) throw std::runtime_error("command failed: " + line);
}

std::map<std::string, double> read_metrics(const fs::path& csv) {
  std::ifstream in(csv);
  std::map<std::string, double> m;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    m[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
  }
  return m;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

struct SequenceMetrics {
  std::string name;
  double rte = 0.0;
  double scale_drift = 0.0;
};

std::vector<SequenceMetrics> infer_and_eval(const fs::path& model_dir, const fs::path& data, const fs::path& out) {
  cli({"infer", "--checkpoint", (model_dir / "model.ckpt").string(), "--data", data.string(), "--out", out.string()});
  std::vector<SequenceMetrics> seqs;
  const auto summary = read_json(out / "infer_summary.json");
  for (const auto& s : summary.at("sequences")) {
    const std::string name = s["name"];
    const fs::path ev = out / ("eval_" + name);
    cli({"eval", "--config", (model_dir / "model.config.json").string(), "--est",
         (out / (name + ".est.tum")).string(), "--gt", (out / (name + ".gt.tum")).string(), "--out", ev.string()});
    const auto m = read_metrics(ev / "metrics.csv");
    seqs.push_back({name, m.at("rte_percent"), m.at("scale_drift")});
  }
  return seqs;
}

struct DeskRun {
  bool ok = false;
  std::string error;
  double train_seconds = 0.0;
  double median_t = 0.0, median_r = 0.0;
  std::vector<SequenceMetrics> seqs;
};

DeskRun desk_run(const Ctx& ctx, bool validity) {
  DeskRun r;
  try {
    const fs::path data = ctx.work / "desk_data";
    const fs::path model = ctx.work / (validity ? "desk_model" : "desk_model_no_validity");
    const fs::path infer = ctx.work / (validity ? "desk_infer" : "desk_infer_no_validity");
    const auto config = (ctx.configs / "desk.json").string();
    const auto t0 = std::chrono::steady_clock::now();
    if (!fs::exists(data / "manifest.json") || fs::exists(data / "PARTIAL")) {
      cli({"synth", "--config", config, "--out", data.string()});
    }
    std::vector<std::string> train{"train", "--config", config, "--data", data.string(), "--out", model.string()};
    if (!validity) train.push_back("--no-validity");
    cli(train);
    r.train_seconds = seconds_since(t0);
    r.seqs = infer_and_eval(model, data, infer);
    const auto s = read_json(infer / "infer_summary.json");
    r.median_t = s["test_pairs"]["median_translation_error_m"];
    r.median_r = s["test_pairs"]["median_rotation_error_rad"];
    r.ok = true;
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

double mean_rte(const DeskRun& r) {
  double s = 0.0;
  for (const auto& q : r.seqs) s += q.rte;
  return r.seqs.empty() ? 0.0 : s / static_cast<double>(r.seqs.size());
}

Outcome end_to_end(const DeskRun& r) {
  if (!r.ok) return {false, "pipeline error: " + r.error};
  bool seq_ok = !r.seqs.empty();
  std::string seq_text;
  for (const auto& q : r.seqs) {
    seq_ok = seq_ok && q.rte < 5.0 && q.scale_drift < 0.15;
    seq_text += fmt(", %s RTE %.2f%% D_scale %.3f", q.name.c_str(), q.rte, q.scale_drift);
  }
  const bool pass = r.train_seconds <= 45.0 * 60.0 && r.median_t < 0.2 && r.median_r < 0.02 && seq_ok;
  return {pass, fmt("synth+train %.0f s, held-out median %.3f m / %.4f rad", r.train_seconds, r.median_t,
                    r.median_r) + seq_text};
}

Outcome ablation(const DeskRun& full, const DeskRun& off) {
  if (!full.ok || !off.ok) return {false, "pipeline error: " + (full.ok ? off.error : full.error)};
  const double a = mean_rte(full), b = mean_rte(off);
  return {b > a, fmt("mean RTE with validity weights %.3f%%, without %.3f%% (median %.3f vs %.3f m)", a, b,
                     full.median_t, off.median_t)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism(const Ctx& ctx) {
  try {
    const auto config = (ctx.configs / "smoke.json").string();
    std::vector<fs::path> roots;
    for (int run = 0; run < 2; ++run) {
      const fs::path root = ctx.work / ("determinism_" + std::to_string(run));
      fs::remove_all(root);
      cli({"synth", "--config", config, "--out", (root / "data").string()});
      cli({"train", "--config", config, "--data", (root / "data").string(), "--out", (root / "model").string()});
      infer_and_eval(root / "model", root / "data", root / "infer");
      roots.push_back(root);
    }
    std::size_t compared = 0, differ = 0;
    for (const auto& e : fs::recursive_directory_iterator(roots[0])) {
      if (!e.is_regular_file()) continue;
      const auto rel = fs::relative(e.path(), roots[0]);
      ++compared;
      if (!fs::exists(roots[1] / rel) || slurp(e.path()) != slurp(roots[1] / rel)) ++differ;
    }
    std::size_t second = 0;
    for (const auto& e : fs::recursive_directory_iterator(roots[1])) second += e.is_regular_file();
    if (!fs::exists(roots[0] / "infer" / "eval_seq_000" / "metrics.csv")) return {false, "no metric report written"};
    return {differ == 0 && compared == second && compared > 0,
            fmt("%zu files compared byte for byte (data, checkpoint, trajectories, metrics), %zu differ", compared,
                differ)};
  } catch (const std::exception& e) {
    return {false, std::string("pipeline error: ") + e.what()};
  }
}

// ---- 8 --------------------------------------------------------------------

std::vector<double> stamps(std::size_t n) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = 0.1 * static_cast<double>(i);
  return t;
}

double sim_cost(const std::vector<Eigen::Vector2d>& p, const std::vector<Eigen::Vector2d>& q, double s, double th) {
  Eigen::Vector2d mp = Eigen::Vector2d::Zero(), mq = Eigen::Vector2d::Zero();
  for (std::size_t i = 0; i < p.size(); ++i) mp += p[i], mq += q[i];
  mp /= static_cast<double>(p.size());
  mq /= static_cast<double>(q.size());
  const Eigen::Matrix2d R = Eigen::Rotation2Dd(th).toRotationMatrix();
  const Eigen::Vector2d t = mq - s * R * mp;
  double e = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) e += (s * R * p[i] + t - q[i]).squaredNorm();
  return e;
}

Trajectory planar_walk(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> turn(-0.15, 0.15);
  std::vector<Pose2> poses{Pose2::identity()};
  for (std::size_t i = 1; i < n; ++i) poses.push_back(poses.back() * Pose2{2.0, 0.0, turn(rng)});
  return Trajectory::from_pose2(poses, stamps(n));
}

Outcome metric_oracles() {
  std::vector<std::string> notes;
  bool pass = true;

  std::mt19937_64 rng(8008);
  std::normal_distribution<double> g(0.0, 2.0), n01(0.0, 0.1);
  std::uniform_real_distribution<double> sc(0.5, 2.0), ang(-kPi, kPi);
  double worst = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<Eigen::Vector2d> p(5), q(5);
    std::vector<Pose2> pe, pg;
    const double s = sc(rng), th = ang(rng);
    const Eigen::Vector2d t(g(rng), g(rng));
    for (int i = 0; i < 5; ++i) {
      p[i] = {g(rng), g(rng)};
      q[i] = s * Eigen::Rotation2Dd(th).toRotationMatrix() * p[i] + t + Eigen::Vector2d(n01(rng), n01(rng));
      pe.emplace_back(p[i].x(), p[i].y(), 0.0);
      pg.emplace_back(q[i].x(), q[i].y(), 0.0);
    }
    const auto a = umeyama_align(Trajectory::from_pose2(pe, stamps(5)), Trajectory::from_pose2(pg, stamps(5)), true);
    const double cost = 5.0 * a.rmse * a.rmse;
    double best = std::numeric_limits<double>::infinity(), bs = 0.0, bth = 0.0;
    const double dth = 2.0 * kPi / 4096.0;
    for (int k = 0; k < 4096; ++k) {
      for (int j = 1; j <= 400; ++j) {
        const double e = sim_cost(p, q, 0.01 * j, -kPi + dth * k);
        if (e < best) best = e, bs = 0.01 * j, bth = -kPi + dth * k;
      }
    }
    const double cs = bs, cth = bth;
    for (int k = -200; k <= 200; ++k) {
      for (int j = -200; j <= 200; ++j) best = std::min(best, sim_cost(p, q, cs + 1e-4 * j, cth + 0.01 * dth * k));
    }
    worst = std::max(worst, std::abs(best - cost));
    pass = pass && cost <= best + 1e-9;
  }
  pass = pass && worst < 1e-3;
  notes.push_back(fmt("umeyama vs grid max |cost gap| %.2e", worst));

  const auto gt = planar_walk(251, 81);
  Trajectory twice = gt;
  for (auto& p : twice.poses) p.translation() *= 2.0;
  const double ds2 = scale_drift(twice, gt, 10.0).value;
  const double ds1 = scale_drift(gt, gt, 10.0).value;
  pass = pass && ds2 == 1.0 && ds1 == 0.0;
  notes.push_back(fmt("D_scale x2 = %.17g, identity = %.17g", ds2, ds1));

  const auto segs = default_segment_lengths();
  Trajectory rigid = gt;
  const Eigen::Isometry3d move = to_isometry(Pose2{12.0, -7.0, 0.8});
  for (auto& p : rigid.poses) p = move * p;
  const double c_rigid = evaluate(rigid, gt, segs).composite;
  Trajectory noisy = rigid;
  std::normal_distribution<double> jitter(0.0, 0.05);
  for (auto& p : noisy.poses) p.translation() += Eigen::Vector3d(jitter(rng), jitter(rng), 0.0);
  const double c_noisy = evaluate(noisy, gt, segs).composite;
  std::vector<Pose2> drift_rel = relative_poses([&] {
    std::vector<Pose2> v;
    for (const auto& p : gt.poses) v.push_back(Pose2{p.translation().x(), p.translation().y(),
                                                     std::atan2(p.linear()(1, 0), p.linear()(0, 0))});
    return v;
  }());
  for (std::size_t k = 0; k < drift_rel.size(); ++k) {
    const double f = 1.0 + 0.2 * static_cast<double>(k + 1) / static_cast<double>(drift_rel.size());
    drift_rel[k] = Pose2{f * drift_rel[k].x(), f * drift_rel[k].y(), drift_rel[k].theta()};
  }
  const double c_drift = evaluate(accumulate(drift_rel), gt, segs).composite;
  Trajectory big = gt;
  for (auto& p : big.poses) p.translation() *= 1.2;
  const double c_big = evaluate(big, gt, segs).composite;
  pass = pass && c_rigid == 0.0 && std::abs(c_noisy) < 0.1 && c_drift > 0.5 && c_big > 0.5;
  notes.push_back(fmt("log2(SE/Sim): rigid %.3g, rigid+noise %.3f, drift to x1.2 %.3f, x1.2 %.3f", c_rigid, c_noisy,
                      c_drift, c_big));

  std::string detail;
  for (const auto& s : notes) detail += (detail.empty() ? "" : "; ") + s;
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bevodo acceptance checks"};
  std::vector<int> only;
  std::string work = "acceptance_work";
  std::string configs = BEVODO_CONFIG_DIR;
  app.add_option("--only", only, "criteria to run (default: all)")->delimiter(',');
  app.add_option("--work", work, "scratch directory for pipeline runs");
  app.add_option("--configs", configs, "directory holding desk.json and smoke.json");
  CLI11_PARSE(app, argc, argv);

  if (!std::getenv("BEVODO_LOG")) setenv("BEVODO_LOG", "quiet", 1);
  const Ctx ctx{fs::absolute(work), fs::absolute(configs)};
  fs::create_directories(ctx.work);
  const std::set<int> want(only.begin(), only.end());
  const auto selected = [&](int c) { return want.empty() || want.count(c) > 0; };

  int failures = 0;
  const auto report = [&](int id, const char* title, const Outcome& o) {
    std::printf("criterion %d %s  %s: %s\n", id, o.pass ? "PASS" : "FAIL", title, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  };
  const auto run = [&](int id, const char* title, const std::function<Outcome()>& f) {
    if (!selected(id)) return;
    try {
      report(id, title, f());
    } catch (const std::exception& e) {
      report(id, title, {false, std::string("exception: ") + e.what()});
    }
  };

  run(1, "solver exactness", solver_exactness);
  run(2, "solver optimality", solver_optimality);
  run(3, "differentiability audit", gradcheck_audit);
  run(4, "matching fidelity", matching_fidelity);
  run(5, "lift-splat conservation", liftsplat_conservation);
  if (selected(6) || selected(7)) {
    const DeskRun full = desk_run(ctx, true);
    run(6, "end-to-end learning", [&] { return end_to_end(full); });
    if (selected(7)) {
      const DeskRun off = desk_run(ctx, false);
      run(7, "validity-weight ablation", [&] { return ablation(full, off); });
    }
  }
  run(8, "metric kit oracles", metric_oracles);
  run(9, "determinism", [&] { return determinism(ctx); });
  return failures == 0 ? 0 : 1;
}
