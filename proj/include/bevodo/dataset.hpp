#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "bevodo/config.hpp"
#include "bevodo/evalkit.hpp"
#include "bevodo/trainer.hpp"

namespace bevodo {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Observation blob byte layout (little-endian):
//   8 bytes  magic "BEVOBS01"
//   u64      tensor count
//   per tensor: u64 ndim, ndim x u64 dims, numel x f64 values (row-major)
void write_blob(const std::filesystem::path& path, const std::vector<Tensor>& tensors);
std::vector<Tensor> read_blob(const std::filesystem::path& path);

struct SequenceData {
  std::string name;
  Trajectory gt;
  std::vector<Tensor> frames;
};

struct Dataset {
  std::vector<TrainingPair> train;
  std::vector<TrainingPair> test;
  std::vector<SequenceData> sequences;
};

/// Directory layout:
///   manifest.json              shapes, counts, per-pair gt_rel [x, y, theta], file names
///   pairs/train_NNNNNN.bin     blob {obs1, obs2}
///   pairs/test_NNNNNN.bin
///   sequences/seq_NNN/frames.bin   blob of all frames
///   sequences/seq_NNN/gt.tum
/// Training pairs come from the training world; test pairs and sequences
/// from a separate held-out world.
void synthesize_dataset(const RunConfig& cfg, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace bevodo
