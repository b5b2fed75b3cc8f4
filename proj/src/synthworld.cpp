#include "bevodo/synthworld.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace bevodo {

void WorldConfig::validate() const {
  if (!(extent_m > 0.0)) throw std::invalid_argument("WorldConfig: extent must be positive");
  if (!(density_per_m2 >= 0.0)) throw std::invalid_argument("WorldConfig: density must be nonnegative");
  if (!(footprint_radius_m > 0.0)) throw std::invalid_argument("WorldConfig: footprint radius must be positive");
  if (appearance_dim == 0) throw std::invalid_argument("WorldConfig: appearance_dim must be positive");
  if (!(max_height_m >= min_height_m)) throw std::invalid_argument("WorldConfig: height range is empty");
}

WorldMap::WorldMap(std::vector<Landmark> landmarks, double extent_m, std::size_t appearance_dim)
    : landmarks_(std::move(landmarks)), extent_(extent_m), dim_(appearance_dim) {
  for (std::size_t i = 0; i < landmarks_.size(); ++i) {
    const auto& l = landmarks_[i];
    if (l.appearance.size() != dim_) throw std::invalid_argument("WorldMap: appearance dimension mismatch");
    const long bx = static_cast<long>(std::floor(l.position[0] / bucket_));
    const long by = static_cast<long>(std::floor(l.position[1] / bucket_));
    buckets_[bucket_key(bx, by)].push_back(i);
  }
}

WorldMap WorldMap::generate(const WorldConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const double half = cfg.extent_m / 2.0;
  std::poisson_distribution<std::size_t> count(cfg.density_per_m2 * cfg.extent_m * cfg.extent_m);
  const std::size_t n = count(rng);
  std::uniform_real_distribution<double> pos(-half, half), height(cfg.min_height_m, cfg.max_height_m);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Landmark> lms(n);
  for (auto& l : lms) {
    l.position = {pos(rng), pos(rng)};
    l.appearance.resize(cfg.appearance_dim);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& a : l.appearance) {
        a = g(rng);
        norm += a * a;
      }
    } while (norm < 1e-12);
    for (double& a : l.appearance) a /= std::sqrt(norm);
    l.radius = cfg.footprint_radius_m;
    l.height = height(rng);
  }
  return WorldMap(std::move(lms), cfg.extent_m, cfg.appearance_dim);
}

bool WorldMap::inside(double x, double y) const {
  const double half = extent_ / 2.0;
  return std::abs(x) <= half && std::abs(y) <= half;
}

std::vector<std::size_t> WorldMap::query(double x, double y, double radius) const {
  std::vector<std::size_t> out;
  const long x0 = static_cast<long>(std::floor((x - radius) / bucket_));
  const long x1 = static_cast<long>(std::floor((x + radius) / bucket_));
  const long y0 = static_cast<long>(std::floor((y - radius) / bucket_));
  const long y1 = static_cast<long>(std::floor((y + radius) / bucket_));
  for (long bx = x0; bx <= x1; ++bx)
    for (long by = y0; by <= y1; ++by) {
      const auto it = buckets_.find(bucket_key(bx, by));
      if (it == buckets_.end()) continue;
      for (std::size_t i : it->second) {
        const double dx = landmarks_[i].position[0] - x, dy = landmarks_[i].position[1] - y;
        if (dx * dx + dy * dy <= radius * radius) out.push_back(i);
      }
    }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

void apply_noise(std::vector<double>& v, const NoiseConfig& noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jit(1.0 - noise.jitter, 1.0 + noise.jitter);
  const double factor = noise.jitter > 0.0 ? jit(rng) : 1.0;
  std::normal_distribution<double> g(0.0, noise.sigma > 0.0 ? noise.sigma : 1.0);
  for (double& x : v) {
    x *= factor;
    if (noise.sigma > 0.0) x += g(rng);
  }
}

}  // namespace

Tensor render_bev(const WorldMap& map, const Pose2& pose, const GridSpec& grid, const NoiseConfig& noise,
                  std::uint64_t noise_seed) {
  const std::size_t k = map.appearance_dim(), h = grid.height(), w = grid.width();
  std::vector<double> v(k * h * w, 0.0);
  const CellCoord o = grid.origin();
  const double res = grid.resolution();
  double max_radius = 0.0;
  for (const auto& l : map.landmarks()) max_radius = std::max(max_radius, l.radius);
  const double reach = std::hypot(std::max(o.row, h - o.row), std::max(o.col, w - o.col)) * res + 1.5 * max_radius;
  const Pose2 inv = pose.inverse();
  for (std::size_t i : map.query(pose.x(), pose.y(), reach)) {
    const Landmark& l = map.landmarks()[i];
    const auto q = inv.transform_point(l.position[0], l.position[1]);
    const double sigma = l.radius / 2.0, cutoff = 1.5 * l.radius;
    const double cr = q[0] / res + o.row, cc = q[1] / res + o.col;
    const long r0 = std::max(0L, static_cast<long>(std::floor(cr - cutoff / res)));
    const long r1 = std::min(static_cast<long>(h) - 1, static_cast<long>(std::ceil(cr + cutoff / res)));
    const long c0 = std::max(0L, static_cast<long>(std::floor(cc - cutoff / res)));
    const long c1 = std::min(static_cast<long>(w) - 1, static_cast<long>(std::ceil(cc + cutoff / res)));
    for (long r = r0; r <= r1; ++r)
      for (long c = c0; c <= c1; ++c) {
        const double dx = (static_cast<double>(r) - cr) * res, dy = (static_cast<double>(c) - cc) * res;
        const double d2 = dx * dx + dy * dy;
        if (d2 > cutoff * cutoff) continue;
        const double wgt = std::exp(-d2 / (2.0 * sigma * sigma));
        const std::size_t cell = static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c);
        for (std::size_t ch = 0; ch < k; ++ch) v[ch * h * w + cell] += wgt * l.appearance[ch];
      }
  }
  apply_noise(v, noise, noise_seed);
  return Tensor::constant({k, h, w}, std::move(v));
}

Tensor render_pv(const WorldMap& map, const Pose2& pose, const CameraModel& cam, const NoiseConfig& noise,
                 std::uint64_t noise_seed, PvRenderOptions opts) {
  const std::size_t k = map.appearance_dim(), h = cam.image_height(), w = cam.image_width();
  std::vector<double> v(k * h * w, 0.0);
  std::vector<double> zbuf(h * w, std::numeric_limits<double>::infinity());
  std::vector<double> wbuf(h * w, 0.0);
  std::vector<std::size_t> owner(h * w, 0);
  const double fx = cam.intrinsics().fx;
  const double reach = cam.depth_bins().max_m * 1.5 + 5.0;
  const Pose2 inv = pose.inverse();
  for (std::size_t i : map.query(pose.x(), pose.y(), reach)) {
    const Landmark& l = map.landmarks()[i];
    const auto q = inv.transform_point(l.position[0], l.position[1]);
    const auto hit = cam.project({q[0], q[1], l.height / 2.0});
    if (!hit) continue;
    const double rad_px = fx * l.radius / hit->depth;
    const double s = std::max(rad_px / 2.0, 0.5), cutoff = 1.5 * rad_px + 0.5;
    const long r0 = std::max(0L, static_cast<long>(std::floor(hit->row - cutoff)));
    const long r1 = std::min(static_cast<long>(h) - 1, static_cast<long>(std::ceil(hit->row + cutoff)));
    const long c0 = std::max(0L, static_cast<long>(std::floor(hit->col - cutoff)));
    const long c1 = std::min(static_cast<long>(w) - 1, static_cast<long>(std::ceil(hit->col + cutoff)));
    for (long r = r0; r <= r1; ++r)
      for (long c = c0; c <= c1; ++c) {
        const double dr = static_cast<double>(r) - hit->row, dc = static_cast<double>(c) - hit->col;
        const double d2 = dr * dr + dc * dc;
        if (d2 > cutoff * cutoff) continue;
        const double wgt = std::exp(-d2 / (2.0 * s * s));
        const std::size_t px = static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c);
        if (opts.occlusion) {
          if (hit->depth < zbuf[px]) {
            zbuf[px] = hit->depth;
            wbuf[px] = wgt;
            owner[px] = i;
          }
        } else {
          for (std::size_t ch = 0; ch < k; ++ch) v[ch * h * w + px] += wgt * l.appearance[ch];
        }
      }
  }
  if (opts.occlusion) {
    for (std::size_t px = 0; px < h * w; ++px) {
      if (!std::isfinite(zbuf[px])) continue;
      const auto& a = map.landmarks()[owner[px]].appearance;
      for (std::size_t ch = 0; ch < k; ++ch) v[ch * h * w + px] = wbuf[px] * a[ch];
    }
  }
  apply_noise(v, noise, noise_seed);
  return Tensor::constant({k, h, w}, std::move(v));
}

Tensor ObservationModel::render(const WorldMap& map, const Pose2& pose, std::uint64_t noise_seed) const {
  if (kind == ObservationKind::kBev) return render_bev(map, pose, grid, noise, noise_seed);
  if (!camera) throw std::invalid_argument("ObservationModel: perspective observations need a camera");
  return render_pv(map, pose, *camera, noise, noise_seed, pv);
}

Shape ObservationModel::shape(std::size_t appearance_dim) const {
  if (kind == ObservationKind::kBev) return {appearance_dim, grid.height(), grid.width()};
  if (!camera) throw std::invalid_argument("ObservationModel: perspective observations need a camera");
  return {appearance_dim, camera->image_height(), camera->image_width()};
}

void MotionModel::validate() const {
  if (!(min_translation_m >= 0.0 && max_translation_m >= min_translation_m)) {
    throw std::invalid_argument("MotionModel: invalid translation range");
  }
  if (!(p_rot >= 0.0 && p_rot <= 1.0)) throw std::invalid_argument("MotionModel: p_rot must lie in [0, 1]");
  if (!(small_rot_max > 0.0 && large_rot_max >= large_rot_min && large_rot_min >= 0.0)) {
    throw std::invalid_argument("MotionModel: invalid rotation ranges");
  }
  if (max_attempts == 0) throw std::invalid_argument("MotionModel: max_attempts must be positive");
}

Pose2 sample_motion(const MotionModel& m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> mag(m.min_translation_m, m.max_translation_m);
  std::normal_distribution<double> dir(0.0, m.heading_sigma);
  std::bernoulli_distribution large(m.p_rot), sign(0.5);
  std::uniform_real_distribution<double> small_rot(0.0, m.small_rot_max), large_rot(m.large_rot_min, m.large_rot_max);
  const double t = mag(rng);
  const double a = dir(rng);
  const bool big = large(rng);
  double th = big ? large_rot(rng) : small_rot(rng);
  if (sign(rng)) th = -th;
  return {t * std::cos(a), t * std::sin(a), th};
}

double shared_block_fraction(const WorldMap& map, const Pose2& pose1, const Pose2& pose2, const GridSpec& grid,
                             const BlockSpec& blocks) {
  const CellCoord o = grid.origin();
  const double res = grid.resolution();
  const double reach = std::hypot(static_cast<double>(grid.height()), static_cast<double>(grid.width())) * res;
  const Pose2 inv1 = pose1.inverse(), inv2 = pose2.inverse();
  std::set<std::size_t> hit;
  for (std::size_t i : map.query(pose1.x(), pose1.y(), reach)) {
    const auto& p = map.landmarks()[i].position;
    const auto q1 = inv1.transform_point(p[0], p[1]);
    const auto q2 = inv2.transform_point(p[0], p[1]);
    const double r1 = std::floor(q1[0] / res + o.row + 0.5), c1 = std::floor(q1[1] / res + o.col + 0.5);
    const double r2 = std::floor(q2[0] / res + o.row + 0.5), c2 = std::floor(q2[1] / res + o.col + 0.5);
    const double hh = static_cast<double>(grid.height()), ww = static_cast<double>(grid.width());
    if (r1 < 0 || c1 < 0 || r1 >= hh || c1 >= ww) continue;
    if (r2 < 0 || c2 < 0 || r2 >= hh || c2 >= ww) continue;
    const auto bi = static_cast<std::size_t>(r1) / blocks.block_rows();
    const auto bj = static_cast<std::size_t>(c1) / blocks.block_cols();
    hit.insert(bi * blocks.blocks_w() + bj);
  }
  return static_cast<double>(hit.size()) / static_cast<double>(blocks.count());
}

FramePair sample_pair(const WorldMap& map, const MotionModel& motion, const ObservationModel& obs,
                      const BlockSpec& blocks, std::mt19937_64& rng) {
  motion.validate();
  const GridSpec& g = obs.grid;
  const double margin = std::hypot(static_cast<double>(g.height()), static_cast<double>(g.width())) *
                            g.resolution() / 2.0 + motion.max_translation_m;
  const double half = map.extent() / 2.0 - margin;
  if (half <= 0.0) throw SamplingFailure("sample_pair: world extent too small for the grid");
  std::uniform_real_distribution<double> pos(-half, half), heading(-kPi, kPi);
  for (std::size_t attempt = 0; attempt < motion.max_attempts; ++attempt) {
    const Pose2 pose1{pos(rng), pos(rng), heading(rng)};
    const Pose2 rel = sample_motion(motion, rng);
    const Pose2 pose2 = pose1 * rel;
    const std::uint64_t s1 = rng(), s2 = rng();
    if (shared_block_fraction(map, pose1, pose2, g, blocks) < motion.min_overlap) continue;
    return {obs.render(map, pose1, s1), obs.render(map, pose2, s2), rel, pose1};
  }
  throw SamplingFailure("sample_pair: no pair met the overlap requirement");
}

void SequenceSpec::validate() const {
  if (!(spacing_m > 0.0)) throw std::invalid_argument("SequenceSpec: spacing must be positive");
  if (!(length_m >= 0.0)) throw std::invalid_argument("SequenceSpec: length must be nonnegative");
  if (kind == PathKind::kCircle && !(radius_m > 0.0)) throw std::invalid_argument("SequenceSpec: radius must be positive");
  if (!(dt_s > 0.0)) throw std::invalid_argument("SequenceSpec: dt must be positive");
  if (!(max_curvature >= 0.0)) throw std::invalid_argument("SequenceSpec: max_curvature must be nonnegative");
}

namespace {

// Arc of length s at constant curvature k, in the frame of the start pose.
Pose2 arc_step(double k, double s) {
  if (std::abs(k) < 1e-12) return {s, 0.0, 0.0};
  return {std::sin(k * s) / k, (1.0 - std::cos(k * s)) / k, k * s};
}

}  // namespace

std::vector<Pose2> gen_path(const WorldMap& map, const SequenceSpec& spec) {
  spec.validate();
  const auto steps = static_cast<std::size_t>(std::floor(spec.length_m / spec.spacing_m + 1e-9));
  std::vector<Pose2> poses{spec.start};
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> dk(0.0, spec.curvature_step);
  double k = 0.0;
  const double half = map.extent() / 2.0;
  for (std::size_t i = 0; i < steps; ++i) {
    const Pose2& p = poses.back();
    switch (spec.kind) {
      case PathKind::kStraight: k = 0.0; break;
      case PathKind::kCircle: k = 1.0 / spec.radius_m; break;
      case PathKind::kRandomWalk: {
        k += dk(rng);
        const double dist = std::hypot(p.x(), p.y());
        if (dist > 0.5 * half) {
          // Steer back toward the world center, harder the further out.
          const double want = wrap_angle(std::atan2(-p.y(), -p.x()) - p.theta());
          const double urgency = std::min(1.0, (dist - 0.5 * half) / (0.25 * half));
          k = (1.0 - urgency) * k + urgency * want * spec.max_curvature;
        }
        k = std::clamp(k, -spec.max_curvature, spec.max_curvature);
        break;
      }
    }
    const Pose2 next = p * arc_step(k, spec.spacing_m);
    if (!map.inside(next.x(), next.y())) {
      throw PathOutOfExtent("gen_path: pose " + std::to_string(i + 1) + " leaves the world extent");
    }
    poses.push_back(next);
  }
  if (!map.inside(spec.start.x(), spec.start.y())) throw PathOutOfExtent("gen_path: start lies outside the world");
  return poses;
}

Sequence gen_sequence(const WorldMap& map, const SequenceSpec& spec, const ObservationModel& obs) {
  Sequence seq;
  seq.poses = gen_path(map, spec);
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  for (std::size_t i = 0; i < seq.poses.size(); ++i) {
    seq.timestamps.push_back(static_cast<double>(i) * spec.dt_s);
    seq.observations.push_back(obs.render(map, seq.poses[i], rng()));
  }
  return seq;
}

}  // namespace bevodo
