#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "bevodo/pipeline.hpp"

namespace bevodo {

struct TrainConfig {
  double alpha = 10.0;
  std::size_t epochs = 20;
  std::size_t warmup_epochs = 5;  // GKP / GCT are active while epoch < warmup_epochs
  double learning_rate = 1e-4;
  double lr_decay = 0.95;  // per epoch
  std::size_t batch_size = 8;
  std::uint64_t seed = 1;
  bool use_validity_weights = true;           // UKVW
  bool global_keypoint_pretraining = true;    // GKP
  bool guided_convergence_translation = true; // GCT
  double grad_clip_norm = 10.0;               // 0 disables clipping

  void validate() const;
};

/// |Δx| + |Δy| + α·|wrap(Δθ)|.
Tensor pose_loss(const PoseTensor& pred, const Pose2& target, double alpha);
double pose_loss(const Pose2& pred, const Pose2& target, double alpha);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t t = 0;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam step on a flat parameter vector.
void adam_update(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
                 const AdamConfig& cfg = {});

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(std::size_t pair_index, const std::string& what)
      : std::runtime_error(what), pair_index_(pair_index) {}
  std::size_t pair_index() const { return pair_index_; }

 private:
  std::size_t pair_index_;
};

struct TrainingPair {
  Tensor obs1, obs2;
  Pose2 gt_rel;  // frame-2 pose in frame-1 coordinates
};

struct StepResult {
  double loss = 0.0;  // mean over the pairs that were solved
  std::size_t used = 0;
  std::size_t skipped = 0;
  double grad_norm = 0.0;
};

struct EpochResult {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::size_t skipped = 0;
  double seconds = 0.0;
};

struct TrainState {
  std::size_t epoch = 0;
  std::size_t step = 0;
  AdamState adam;
  std::vector<double> loss_history;  // one entry per step
};

struct LogRow {
  std::size_t epoch, step;
  double loss;
  std::size_t skipped;
};

class Trainer {
 public:
  Trainer(OdometryModel& model, TrainConfig cfg);

  bool gkp_active() const { return cfg_.global_keypoint_pretraining && state_.epoch < cfg_.warmup_epochs; }
  bool gct_active() const { return cfg_.guided_convergence_translation && state_.epoch < cfg_.warmup_epochs; }
  bool validity_in_use() const { return cfg_.use_validity_weights && !gkp_active(); }
  double current_lr() const;

  /// Loss of one pair under the current strategy flags, as a graph.
  Tensor pair_loss(const TrainingPair& pair) const;

  /// Forward, backward and one Adam update over a batch. Pairs the solver
  /// rejects as degenerate are skipped; a non-finite loss throws NonFiniteLoss
  /// before any parameter changes.
  StepResult train_step(std::span<const TrainingPair> batch, std::size_t first_index = 0);

  /// One pass over the data in a seeded shuffled order, then lr decay.
  EpochResult train_epoch(const std::vector<TrainingPair>& data,
                          const std::function<void(const LogRow&)>& log = {});

  const TrainState& state() const { return state_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  OdometryModel& model_;
  TrainConfig cfg_;
  TrainState state_;
  std::mt19937_64 rng_;
};

struct PairError {
  double translation = 0.0;  // meters
  double rotation = 0.0;     // radians
};

/// Relative-motion error of the model on each pair (no gradients kept). A
/// degenerate solve counts as an infinite error.
std::vector<PairError> evaluate_pairs(const OdometryModel& model, const std::vector<TrainingPair>& pairs,
                                      bool use_validity = true);

}  // namespace bevodo
