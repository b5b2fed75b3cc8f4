#include "bevodo/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace bevodo {

using nlohmann::json;

namespace {

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "must be an object");
  }

  ~Section() = default;

  /// Call after all get() calls; rejects keys that were never read.
  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown key '" + k + "' in " + (path_.empty() ? "config" : path_));
    }
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<long long>() < 0)) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError(where() + "'" + key + "' has the wrong type");
    }
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    return Section(j_.at(key), path_.empty() ? key : path_ + "." + key);
  }

 private:
  std::string where() const { return path_.empty() ? "config: " : path_ + ": "; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

PathKind path_kind(const std::string& s) {
  if (s == "random_walk") return PathKind::kRandomWalk;
  if (s == "straight") return PathKind::kStraight;
  if (s == "circle") return PathKind::kCircle;
  throw ConfigError("dataset.sequence.kind must be random_walk, straight or circle");
}

std::string path_kind_name(PathKind k) {
  switch (k) {
    case PathKind::kRandomWalk: return "random_walk";
    case PathKind::kStraight: return "straight";
    case PathKind::kCircle: return "circle";
  }
  return "random_walk";
}

}  // namespace

void RunConfig::finalize() {
  world.seed = train_world_seed();
  model.heads.init_seed = seed;
  model.pv_seed = seed + 1;
  train.seed = seed;
  if (model.variant == PipelineVariant::kDirectBev) {
    model.heads.input_channels = world.appearance_dim;
  } else {
    if (!model.camera) model.camera = CameraModel::desk_default();
    model.pv.image_channels = world.appearance_dim;
    model.heads.input_channels = model.pv.context_channels;
  }
  try {
    world.validate();
    motion.validate();
    dataset.sequence.validate();
    train.validate();
    model.validate();
    (void)BlockSpec(model.grid, model.blocks_h, model.blocks_w);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(noise.sigma >= 0.0) || !(noise.jitter >= 0.0 && noise.jitter < 1.0)) {
    throw ConfigError("noise: sigma must be >= 0 and jitter in [0, 1)");
  }
  if (dataset.train_pairs == 0) throw ConfigError("dataset.train_pairs must be positive");
  if (eval.segment_lengths.empty()) throw ConfigError("eval.segment_lengths must not be empty");
  for (double l : eval.segment_lengths) {
    if (!(l > 0.0)) throw ConfigError("eval.segment_lengths must be positive");
  }
  if (!(eval.scale_window_m > 0.0)) throw ConfigError("eval.scale_window_m must be positive");
}

ObservationModel RunConfig::observation_model() const {
  ObservationModel o;
  o.grid = model.grid;
  o.noise = noise;
  if (model.variant == PipelineVariant::kLiftSplat) {
    o.kind = ObservationKind::kPerspective;
    o.camera = model.camera;
  }
  return o;
}

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  Section root(j, "");
  int version = 0;
  if (!root.has("schema_version")) throw ConfigError("missing schema_version");
  root.get("schema_version", version);
  if (version != kSchemaVersion) {
    throw ConfigError("unsupported schema_version " + std::to_string(version) + " (expected " +
                      std::to_string(kSchemaVersion) + ")");
  }
  RunConfig c;
  root.get("seed", c.seed);
  if (root.has("variant")) {
    std::string v;
    root.get("variant", v);
    if (v == "direct_bev") {
      c.model.variant = PipelineVariant::kDirectBev;
    } else if (v == "liftsplat") {
      c.model.variant = PipelineVariant::kLiftSplat;
    } else {
      throw ConfigError("variant must be direct_bev or liftsplat");
    }
  }
  if (root.has("grid")) {
    auto s = root.child("grid");
    std::size_t h = c.model.grid.height(), w = c.model.grid.width();
    double r = c.model.grid.resolution();
    s.get("height", h);
    s.get("width", w);
    s.get("resolution", r);
    s.finish();
    try {
      c.model.grid = GridSpec(h, w, r);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("grid: ") + e.what());
    }
  }
  if (root.has("blocks")) {
    auto s = root.child("blocks");
    s.get("rows", c.model.blocks_h);
    s.get("cols", c.model.blocks_w);
    s.finish();
  }
  if (root.has("matcher")) {
    auto s = root.child("matcher");
    s.get("tau", c.model.matcher.tau);
    s.get("mask_radius", c.model.matcher.mask.radius);
    s.finish();
  }
  if (root.has("heads")) {
    auto s = root.child("heads");
    s.get("stages", c.model.heads.stages);
    s.get("base_channels", c.model.heads.base_channels);
    s.get("descriptor_channels", c.model.heads.descriptor_channels);
    s.finish();
  }
  if (root.has("camera")) {
    auto s = root.child("camera");
    const auto d = CameraModel::desk_default();
    Intrinsics in = d.intrinsics();
    Extrinsics ex = d.extrinsics();
    std::size_t ih = d.image_height(), iw = d.image_width();
    DepthBins bins = d.depth_bins();
    s.get("image_height", ih);
    s.get("image_width", iw);
    s.get("fx", in.fx);
    s.get("fy", in.fy);
    s.get("cx", in.cx);
    s.get("cy", in.cy);
    std::vector<double> t(ex.translation.begin(), ex.translation.end());
    s.get("translation", t);
    if (t.size() != 3) throw ConfigError("camera.translation must have 3 entries");
    std::copy(t.begin(), t.end(), ex.translation.begin());
    s.get("yaw", ex.yaw);
    s.get("pitch", ex.pitch);
    s.get("roll", ex.roll);
    s.get("depth_min", bins.min_m);
    s.get("depth_max", bins.max_m);
    s.get("depth_bins", bins.count);
    s.finish();
    try {
      c.model.camera = CameraModel(in, ex, ih, iw, bins);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("camera: ") + e.what());
    }
  }
  if (root.has("pv_encoder")) {
    auto s = root.child("pv_encoder");
    s.get("hidden_channels", c.model.pv.hidden_channels);
    s.get("context_channels", c.model.pv.context_channels);
    s.finish();
  }
  if (root.has("height_band")) {
    auto s = root.child("height_band");
    s.get("min_z", c.model.band.min_z);
    s.get("max_z", c.model.band.max_z);
    s.finish();
  }
  if (root.has("world")) {
    auto s = root.child("world");
    s.get("extent_m", c.world.extent_m);
    s.get("density_per_m2", c.world.density_per_m2);
    s.get("footprint_radius_m", c.world.footprint_radius_m);
    s.get("appearance_dim", c.world.appearance_dim);
    s.get("min_height_m", c.world.min_height_m);
    s.get("max_height_m", c.world.max_height_m);
    s.finish();
  }
  if (root.has("noise")) {
    auto s = root.child("noise");
    s.get("sigma", c.noise.sigma);
    s.get("jitter", c.noise.jitter);
    s.finish();
  }
  if (root.has("motion")) {
    auto s = root.child("motion");
    s.get("min_translation_m", c.motion.min_translation_m);
    s.get("max_translation_m", c.motion.max_translation_m);
    s.get("heading_sigma", c.motion.heading_sigma);
    s.get("p_rot", c.motion.p_rot);
    s.get("small_rot_max", c.motion.small_rot_max);
    s.get("large_rot_min", c.motion.large_rot_min);
    s.get("large_rot_max", c.motion.large_rot_max);
    s.get("min_overlap", c.motion.min_overlap);
    s.get("max_attempts", c.motion.max_attempts);
    s.finish();
  }
  if (root.has("dataset")) {
    auto s = root.child("dataset");
    s.get("train_pairs", c.dataset.train_pairs);
    s.get("test_pairs", c.dataset.test_pairs);
    s.get("sequences", c.dataset.sequences);
    if (s.has("sequence")) {
      auto q = s.child("sequence");
      if (q.has("kind")) {
        std::string k;
        q.get("kind", k);
        c.dataset.sequence.kind = path_kind(k);
      }
      q.get("length_m", c.dataset.sequence.length_m);
      q.get("spacing_m", c.dataset.sequence.spacing_m);
      q.get("radius_m", c.dataset.sequence.radius_m);
      q.get("max_curvature", c.dataset.sequence.max_curvature);
      q.get("curvature_step", c.dataset.sequence.curvature_step);
      q.get("dt_s", c.dataset.sequence.dt_s);
      q.finish();
    }
    s.finish();
  }
  if (root.has("train")) {
    auto s = root.child("train");
    s.get("alpha", c.train.alpha);
    s.get("epochs", c.train.epochs);
    s.get("warmup_epochs", c.train.warmup_epochs);
    s.get("learning_rate", c.train.learning_rate);
    s.get("lr_decay", c.train.lr_decay);
    s.get("batch_size", c.train.batch_size);
    s.get("use_validity_weights", c.train.use_validity_weights);
    s.get("global_keypoint_pretraining", c.train.global_keypoint_pretraining);
    s.get("guided_convergence_translation", c.train.guided_convergence_translation);
    s.get("grad_clip_norm", c.train.grad_clip_norm);
    s.finish();
  }
  if (root.has("eval")) {
    auto s = root.child("eval");
    s.get("segment_lengths", c.eval.segment_lengths);
    s.get("scale_window_m", c.eval.scale_window_m);
    s.finish();
  }
  root.finish();
  if (c.model.variant == PipelineVariant::kLiftSplat && !c.model.camera) {
    throw ConfigError("the liftsplat variant requires a camera section");
  }
  c.finalize();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const RunConfig& c) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = c.seed;
  j["variant"] = c.model.variant == PipelineVariant::kDirectBev ? "direct_bev" : "liftsplat";
  j["grid"] = {{"height", c.model.grid.height()},
               {"width", c.model.grid.width()},
               {"resolution", c.model.grid.resolution()}};
  j["blocks"] = {{"rows", c.model.blocks_h}, {"cols", c.model.blocks_w}};
  j["matcher"] = {{"tau", c.model.matcher.tau}, {"mask_radius", c.model.matcher.mask.radius}};
  j["heads"] = {{"stages", c.model.heads.stages},
                {"base_channels", c.model.heads.base_channels},
                {"descriptor_channels", c.model.heads.descriptor_channels}};
  if (c.model.variant == PipelineVariant::kLiftSplat && c.model.camera) {
    const auto& cam = *c.model.camera;
    const auto& ex = cam.extrinsics();
    j["camera"] = {{"image_height", cam.image_height()},
                   {"image_width", cam.image_width()},
                   {"fx", cam.intrinsics().fx},
                   {"fy", cam.intrinsics().fy},
                   {"cx", cam.intrinsics().cx},
                   {"cy", cam.intrinsics().cy},
                   {"translation", ex.translation},
                   {"yaw", ex.yaw},
                   {"pitch", ex.pitch},
                   {"roll", ex.roll},
                   {"depth_min", cam.depth_bins().min_m},
                   {"depth_max", cam.depth_bins().max_m},
                   {"depth_bins", cam.depth_bins().count}};
    j["pv_encoder"] = {{"hidden_channels", c.model.pv.hidden_channels},
                       {"context_channels", c.model.pv.context_channels}};
    j["height_band"] = {{"min_z", c.model.band.min_z}, {"max_z", c.model.band.max_z}};
  }
  j["world"] = {{"extent_m", c.world.extent_m},
                {"density_per_m2", c.world.density_per_m2},
                {"footprint_radius_m", c.world.footprint_radius_m},
                {"appearance_dim", c.world.appearance_dim},
                {"min_height_m", c.world.min_height_m},
                {"max_height_m", c.world.max_height_m}};
  j["noise"] = {{"sigma", c.noise.sigma}, {"jitter", c.noise.jitter}};
  j["motion"] = {{"min_translation_m", c.motion.min_translation_m},
                 {"max_translation_m", c.motion.max_translation_m},
                 {"heading_sigma", c.motion.heading_sigma},
                 {"p_rot", c.motion.p_rot},
                 {"small_rot_max", c.motion.small_rot_max},
                 {"large_rot_min", c.motion.large_rot_min},
                 {"large_rot_max", c.motion.large_rot_max},
                 {"min_overlap", c.motion.min_overlap},
                 {"max_attempts", c.motion.max_attempts}};
  const auto& q = c.dataset.sequence;
  j["dataset"] = {{"train_pairs", c.dataset.train_pairs},
                  {"test_pairs", c.dataset.test_pairs},
                  {"sequences", c.dataset.sequences},
                  {"sequence",
                   {{"kind", path_kind_name(q.kind)},
                    {"length_m", q.length_m},
                    {"spacing_m", q.spacing_m},
                    {"radius_m", q.radius_m},
                    {"max_curvature", q.max_curvature},
                    {"curvature_step", q.curvature_step},
                    {"dt_s", q.dt_s}}}};
  j["train"] = {{"alpha", c.train.alpha},
                {"epochs", c.train.epochs},
                {"warmup_epochs", c.train.warmup_epochs},
                {"learning_rate", c.train.learning_rate},
                {"lr_decay", c.train.lr_decay},
                {"batch_size", c.train.batch_size},
                {"use_validity_weights", c.train.use_validity_weights},
                {"global_keypoint_pretraining", c.train.global_keypoint_pretraining},
                {"guided_convergence_translation", c.train.guided_convergence_translation},
                {"grad_clip_norm", c.train.grad_clip_norm}};
  j["eval"] = {{"segment_lengths", c.eval.segment_lengths}, {"scale_window_m", c.eval.scale_window_m}};
  return j.dump(2) + "\n";
}

}  // namespace bevodo
