#include "bevodo/audit.hpp"

#include <chrono>
#include <cstdio>
#include <random>

#include "bevodo/gradcheck.hpp"
#include "bevodo/matcher.hpp"
#include "bevodo/solver.hpp"
#include "bevodo/trainer.hpp"

namespace bevodo {

namespace {

std::vector<double> uniform(std::size_t n, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

AuditEntry composite_entry(const AuditConfig& cfg) {
  const std::size_t h = cfg.composite_size, w = cfg.composite_size, c = 6;
  const GridSpec grid(h, w, 0.5);
  const BlockSpec blocks(grid, 4, 4);
  std::mt19937_64 rng(cfg.seed);
  auto wpos = Tensor::parameter({1, h, w}, uniform(h * w, rng, -3, 3));
  auto wv1 = Tensor::parameter({1, h, w}, uniform(h * w, rng, 0.1, 0.9));
  auto wv2 = Tensor::parameter({1, h, w}, uniform(h * w, rng, 0.1, 0.9));
  auto d1 = Tensor::parameter({c, h, w}, uniform(c * h * w, rng, -1, 1));
  auto d2 = Tensor::parameter({c, h, w}, uniform(c * h * w, rng, -1, 1));
  const Pose2 target{0.3, -0.2, 0.05};
  const MatcherConfig mc{cfg.composite_tau, {4}};
  auto f = [&](const std::vector<Tensor>& in) {
    const HeadOutputs a{in[0], in[1], in[3]};
    const HeadOutputs b{Tensor::zeros({1, h, w}), in[2], in[4]};
    const auto m = match_frames(a, b, blocks, mc, true);
    return pose_loss(solve_pose(m, grid), target, 10.0);
  };
  const auto rep = grad_check(f, {wpos, wv1, wv2, d1, d2}, 1e-5, 1e-8, 0.0, 1e-6);
  AuditEntry e;
  e.name = "composite extract>match>solve>loss " + std::to_string(h) + "x" + std::to_string(w);
  e.max_rel_error = rep.max_rel_error;
  e.tolerance = cfg.composite_tolerance;
  e.entries = rep.entries;
  e.kinks_skipped = rep.kinks_skipped;
  e.passed = rep.max_rel_error < cfg.composite_tolerance && rep.kinks_skipped * 100 <= rep.entries;
  return e;
}

}  // namespace

AuditReport run_gradcheck_audit(const AuditConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  AuditReport r;
  std::vector<AuditEntry> prim;
  for (std::size_t s = 0; s < cfg.primitive_seeds; ++s) {
    const auto cases = primitive_gradcheck_cases(cfg.seed + static_cast<unsigned>(s));
    if (prim.empty()) {
      for (const auto& c : cases) prim.push_back({c.name, 0.0, std::min(c.tolerance, cfg.primitive_tolerance)});
    }
    for (std::size_t i = 0; i < cases.size(); ++i) {
      const auto rep = grad_check(cases[i].f, cases[i].inputs);
      prim[i].max_rel_error = std::max(prim[i].max_rel_error, rep.max_rel_error);
      prim[i].entries += rep.entries;
    }
  }
  for (auto& e : prim) e.passed = e.max_rel_error < e.tolerance;
  r.entries = std::move(prim);
  r.entries.push_back(composite_entry(cfg));
  r.all_passed = true;
  for (const auto& e : r.entries) r.all_passed = r.all_passed && e.passed;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::string audit_csv(const AuditReport& r) {
  std::string s = "name,max_rel_error,tolerance,entries,kinks_skipped,passed\n";
  char buf[256];
  for (const auto& e : r.entries) {
    std::snprintf(buf, sizeof buf, "%s,%.3e,%.1e,%zu,%zu,%d\n", e.name.c_str(), e.max_rel_error, e.tolerance, e.entries,
                  e.kinks_skipped, e.passed ? 1 : 0);
    s += buf;
  }
  return s;
}

}  // namespace bevodo
