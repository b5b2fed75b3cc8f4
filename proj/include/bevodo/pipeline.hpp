#pragma once

#include <memory>
#include <optional>

#include "bevodo/heads.hpp"
#include "bevodo/liftsplat.hpp"
#include "bevodo/matcher.hpp"
#include "bevodo/params.hpp"
#include "bevodo/solver.hpp"

namespace bevodo {

enum class PipelineVariant { kDirectBev, kLiftSplat };

struct ModelConfig {
  PipelineVariant variant = PipelineVariant::kDirectBev;
  GridSpec grid{32, 32, 0.5};
  std::size_t blocks_h = 8;
  std::size_t blocks_w = 8;
  MatcherConfig matcher{0.01, {8}};
  HeadNetConfig heads{};
  // Lift-splat variant only.
  PvEncoderConfig pv{};
  std::optional<CameraModel> camera;
  HeightBand band{};
  std::uint64_t pv_seed = 2;

  void validate() const;
};

/// Heads, matcher and solver wired together, owning the trainable parameters.
class OdometryModel {
 public:
  explicit OdometryModel(ModelConfig cfg);
  OdometryModel(const OdometryModel&) = delete;
  OdometryModel& operator=(const OdometryModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const BlockSpec& blocks() const { return blocks_; }
  const std::vector<std::string>& validity_parameter_names() const { return heads_->validity_parameter_names(); }

  /// Observation (BEV grid or perspective image) → BEV feature map.
  Tensor to_bev(const Tensor& observation) const;
  HeadOutputs heads(const Tensor& observation, bool need_validity = true) const;

  struct PairForward {
    MatchSet matches;
    PoseTensor transform;  // frame-1 BEV points → frame-2 BEV points
  };
  PairForward forward_pair(const HeadOutputs& h1, const HeadOutputs& h2, bool use_validity,
                           std::optional<double> translation_rotation = std::nullopt) const;

  /// Vehicle motion from frame 1 to frame 2 (the inverse of the point transform).
  Pose2 relative_motion(const HeadOutputs& h1, const HeadOutputs& h2, bool use_validity = true) const;

 private:
  ModelConfig cfg_;
  ParamStore store_;
  BlockSpec blocks_;
  std::unique_ptr<HeadNet> heads_;
  std::unique_ptr<PvEncoder> pv_;
  std::unique_ptr<FrustumGeometry> frustum_;
};

}  // namespace bevodo
