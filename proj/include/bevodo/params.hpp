#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "bevodo/tensor.hpp"

namespace bevodo {

/// Ordered collection of named trainable tensors.
class ParamStore {
 public:
  /// Registers a parameter. Throws std::invalid_argument on duplicate names.
  Tensor add(const std::string& name, Shape shape, std::vector<double> init);
  /// Registers a parameter with uniform fan-in initialisation U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Tensor add_uniform(const std::string& name, Shape shape, std::size_t fan_in, std::mt19937_64& rng);

  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::size_t total_size() const;

  void zero_grad();
  std::vector<double> flat_values() const;
  std::vector<double> flat_grads() const;
  void set_flat_values(std::span<const double> values);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint byte layout (all integers and floats little-endian):
//   char[8]  magic "BEVODOCK"
//   u32      format version (1)
//   u32      tensor count T
//   T times: u32 name length, name bytes, u32 rank, rank x u64 dims
//   then, for each tensor in header order, numel x f64 values
void save_checkpoint(const std::filesystem::path& path, const ParamStore& store);
/// Loads values into an existing store; names and shapes must match exactly.
void load_checkpoint(const std::filesystem::path& path, ParamStore& store);
/// Reads every tensor of a checkpoint as constants.
std::vector<std::pair<std::string, Tensor>> read_checkpoint(const std::filesystem::path& path);

}  // namespace bevodo
