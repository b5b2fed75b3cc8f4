#include "bevodo/pipeline.hpp"

#include <random>
#include <stdexcept>

namespace bevodo {

void ModelConfig::validate() const {
  heads.validate();
  if (matcher.mask.radius < 1) throw std::invalid_argument("ModelConfig: mask radius must be >= 1");
  if (!(matcher.tau > 0.0)) throw std::invalid_argument("ModelConfig: tau must be positive");
  const std::size_t f = std::size_t{1} << heads.stages;
  if (grid.height() % f != 0 || grid.width() % f != 0) {
    throw std::invalid_argument("ModelConfig: grid must be divisible by 2^stages");
  }
  if (variant == PipelineVariant::kLiftSplat) {
    if (!camera) throw std::invalid_argument("ModelConfig: the lift-splat variant needs a camera");
    if (pv.context_channels != heads.input_channels) {
      throw std::invalid_argument("ModelConfig: PV context channels must equal the head input channels");
    }
  }
}

OdometryModel::OdometryModel(ModelConfig cfg)
    : cfg_(std::move(cfg)), blocks_((cfg_.validate(), BlockSpec(cfg_.grid, cfg_.blocks_h, cfg_.blocks_w))) {
  if (cfg_.variant == PipelineVariant::kLiftSplat) {
    std::mt19937_64 rng(cfg_.pv_seed);
    pv_ = std::make_unique<PvEncoder>(cfg_.pv, cfg_.camera->depth_bins().count, store_, rng);
    frustum_ = std::make_unique<FrustumGeometry>(*cfg_.camera, cfg_.grid, cfg_.band);
  }
  heads_ = std::make_unique<HeadNet>(cfg_.heads, store_);
}

Tensor OdometryModel::to_bev(const Tensor& observation) const {
  if (cfg_.variant == PipelineVariant::kDirectBev) return observation;
  return splat(lift(pv_->forward(observation)), *frustum_).features;
}

HeadOutputs OdometryModel::heads(const Tensor& observation, bool need_validity) const {
  return heads_->forward(to_bev(observation), need_validity);
}

OdometryModel::PairForward OdometryModel::forward_pair(const HeadOutputs& h1, const HeadOutputs& h2,
                                                       bool use_validity,
                                                       std::optional<double> translation_rotation) const {
  PairForward out;
  out.matches = match_frames(h1, h2, blocks_, cfg_.matcher, use_validity);
  out.transform = solve_pose(out.matches, cfg_.grid, translation_rotation);
  return out;
}

Pose2 OdometryModel::relative_motion(const HeadOutputs& h1, const HeadOutputs& h2, bool use_validity) const {
  return forward_pair(h1, h2, use_validity).transform.value().inverse();
}

}  // namespace bevodo
