#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "bevodo/pipeline.hpp"
#include "bevodo/synthworld.hpp"
#include "bevodo/trainer.hpp"

namespace bevodo {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kSchemaVersion = 1;

struct DatasetConfig {
  std::size_t train_pairs = 2000;
  std::size_t test_pairs = 200;
  std::size_t sequences = 1;
  SequenceSpec sequence{};  // seed and start are derived per sequence
};

struct EvalConfig {
  std::vector<double> segment_lengths{10, 20, 30, 40, 50, 60, 70, 80};
  double scale_window_m = 10.0;
};

/// Everything one experiment needs. Subsystem seeds derive from `seed`.
struct RunConfig {
  std::uint64_t seed = 1;
  ModelConfig model{};
  TrainConfig train{};
  WorldConfig world{};
  NoiseConfig noise{};
  MotionModel motion{};
  DatasetConfig dataset{};
  EvalConfig eval{};

  /// Fills derived fields (channel counts, seeds) and validates.
  void finalize();
  ObservationModel observation_model() const;

  std::uint64_t train_world_seed() const { return seed; }
  std::uint64_t test_world_seed() const { return seed + 1000003; }
  std::uint64_t train_pair_seed() const { return seed * 2 + 11; }
  std::uint64_t test_pair_seed() const { return seed * 2 + 12; }
  std::uint64_t sequence_seed(std::size_t i) const { return seed * 1000 + 100 + i; }
};

/// Strict parse: unknown keys and type mismatches raise ConfigError.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);
std::string dump_config(const RunConfig& cfg);

}  // namespace bevodo
