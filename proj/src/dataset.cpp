#include "bevodo/dataset.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>

#include "bevodo/tum_io.hpp"
#include "json.hpp"

namespace bevodo {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "blob I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'B', 'E', 'V', 'O', 'B', 'S', '0', '1'};

template <typename T>
void put(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::ifstream& f, const fs::path& path) {
  T v{};
  if (!f.read(reinterpret_cast<char*>(&v), sizeof v)) throw DatasetError("truncated blob " + path.string());
  return v;
}

std::string numbered(const std::string& prefix, std::size_t i, int width) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix.c_str(), width, i);
  return buf;
}

json pose_json(const Pose2& p) { return json::array({p.x(), p.y(), p.theta()}); }

}  // namespace

void write_blob(const fs::path& path, const std::vector<Tensor>& tensors) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DatasetError("cannot write " + path.string());
  f.write(kMagic, sizeof kMagic);
  put<std::uint64_t>(f, tensors.size());
  for (const auto& t : tensors) {
    put<std::uint64_t>(f, t.ndim());
    for (std::size_t d : t.shape()) put<std::uint64_t>(f, d);
    const auto v = t.values();
    f.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!f) throw DatasetError("failed writing " + path.string());
}

std::vector<Tensor> read_blob(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DatasetError("cannot open " + path.string());
  char magic[8];
  if (!f.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw DatasetError("bad blob header in " + path.string());
  }
  const auto count = take<std::uint64_t>(f, path);
  if (count > (1u << 24)) throw DatasetError("implausible tensor count in " + path.string());
  std::vector<Tensor> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto nd = take<std::uint64_t>(f, path);
    if (nd > 8) throw DatasetError("implausible rank in " + path.string());
    Shape shape;
    std::size_t numel = 1;
    for (std::uint64_t d = 0; d < nd; ++d) {
      shape.push_back(take<std::uint64_t>(f, path));
      numel *= shape.back();
    }
    if (numel > (std::size_t{1} << 30)) throw DatasetError("implausible tensor size in " + path.string());
    std::vector<double> v(numel);
    if (!f.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(numel * sizeof(double)))) {
      throw DatasetError("truncated blob " + path.string());
    }
    out.push_back(Tensor::constant(shape, std::move(v)));
  }
  return out;
}

void synthesize_dataset(const RunConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir / "pairs");
  fs::create_directories(dir / "sequences");
  const ObservationModel obs = cfg.observation_model();
  const BlockSpec blocks(cfg.model.grid, cfg.model.blocks_h, cfg.model.blocks_w);
  WorldConfig train_world = cfg.world;
  train_world.seed = cfg.train_world_seed();
  WorldConfig test_world = cfg.world;
  test_world.seed = cfg.test_world_seed();
  const auto map_train = WorldMap::generate(train_world);
  const auto map_test = WorldMap::generate(test_world);

  json manifest;
  manifest["format"] = "bevodo-dataset";
  manifest["schema_version"] = kSchemaVersion;
  manifest["seed"] = cfg.seed;
  manifest["observation_shape"] = obs.shape(cfg.world.appearance_dim);

  auto emit_pairs = [&](const WorldMap& map, std::size_t n, std::uint64_t seed, const std::string& split) {
    std::mt19937_64 rng(seed);
    json list = json::array();
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = sample_pair(map, cfg.motion, obs, blocks, rng);
      const std::string file = "pairs/" + numbered(split + "_", i, 6) + ".bin";
      write_blob(dir / file, {p.obs1, p.obs2});
      list.push_back({{"file", file}, {"gt_rel", pose_json(p.gt_rel)}});
    }
    manifest[split] = list;
  };
  emit_pairs(map_train, cfg.dataset.train_pairs, cfg.train_pair_seed(), "train");
  emit_pairs(map_test, cfg.dataset.test_pairs, cfg.test_pair_seed(), "test");

  json seqs = json::array();
  for (std::size_t s = 0; s < cfg.dataset.sequences; ++s) {
    SequenceSpec spec = cfg.dataset.sequence;
    spec.seed = cfg.sequence_seed(s);
    const auto seq = gen_sequence(map_test, spec, obs);
    const std::string name = numbered("seq_", s, 3);
    fs::create_directories(dir / "sequences" / name);
    write_blob(dir / "sequences" / name / "frames.bin", seq.observations);
    write_tum((dir / "sequences" / name / "gt.tum").string(), Trajectory::from_pose2(seq.poses, seq.timestamps));
    seqs.push_back({{"name", name},
                    {"frames", "sequences/" + name + "/frames.bin"},
                    {"gt", "sequences/" + name + "/gt.tum"},
                    {"count", seq.poses.size()}});
  }
  manifest["sequences"] = seqs;
  std::ofstream f(dir / "manifest.json", std::ios::binary);
  if (!f) throw DatasetError("cannot write manifest in " + dir.string());
  f << manifest.dump(2) << "\n";
}

Dataset load_dataset(const fs::path& dir) {
  std::ifstream f(dir / "manifest.json");
  if (!f) throw DatasetError("no manifest.json in " + dir.string());
  json m;
  try {
    m = json::parse(f);
  } catch (const json::exception& e) {
    throw DatasetError(std::string("invalid manifest: ") + e.what());
  }
  if (m.value("format", "") != "bevodo-dataset") throw DatasetError("manifest is not a bevodo dataset");
  Dataset d;
  try {
    for (const char* split : {"train", "test"}) {
      auto& out = std::string(split) == "train" ? d.train : d.test;
      for (const auto& e : m.at(split)) {
        auto blobs = read_blob(dir / e.at("file").get<std::string>());
        if (blobs.size() != 2) throw DatasetError("pair blob must hold two tensors");
        const auto g = e.at("gt_rel").get<std::vector<double>>();
        if (g.size() != 3) throw DatasetError("gt_rel must have 3 entries");
        out.push_back({blobs[0], blobs[1], Pose2{g[0], g[1], g[2]}});
      }
    }
    for (const auto& e : m.at("sequences")) {
      SequenceData s;
      s.name = e.at("name").get<std::string>();
      s.frames = read_blob(dir / e.at("frames").get<std::string>());
      s.gt = read_tum((dir / e.at("gt").get<std::string>()).string());
      if (s.frames.size() != s.gt.size()) throw DatasetError("sequence " + s.name + ": frame/pose count mismatch");
      d.sequences.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw DatasetError(std::string("malformed manifest: ") + e.what());
  }
  return d;
}

}  // namespace bevodo
