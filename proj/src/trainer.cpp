#include "bevodo/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace bevodo {

void TrainConfig::validate() const {
  if (!(alpha > 0.0)) throw std::invalid_argument("TrainConfig: alpha must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw std::invalid_argument("TrainConfig: lr_decay must lie in (0, 1]");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be positive");
  if (warmup_epochs > epochs) throw std::invalid_argument("TrainConfig: warmup_epochs exceeds epochs");
  if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
  if (!(grad_clip_norm >= 0.0)) throw std::invalid_argument("TrainConfig: grad_clip_norm must be nonnegative");
}

Tensor pose_loss(const PoseTensor& pred, const Pose2& target, double alpha) {
  const Tensor dx = abs(add_scalar(pred.x, -target.x()));
  const Tensor dy = abs(add_scalar(pred.y, -target.y()));
  const Tensor dth = abs(wrap_angle(add_scalar(pred.theta, -target.theta())));
  return add(add(dx, dy), scale(dth, alpha));
}

double pose_loss(const Pose2& pred, const Pose2& target, double alpha) {
  return std::abs(pred.x() - target.x()) + std::abs(pred.y() - target.y()) +
         alpha * std::abs(wrap_angle(pred.theta() - target.theta()));
}

void adam_update(std::span<double> params, std::span<const double> grads, AdamState& s, double lr,
                 const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_update: size mismatch");
  if (s.m.empty()) {
    s.m.assign(params.size(), 0.0);
    s.v.assign(params.size(), 0.0);
  }
  if (s.m.size() != params.size()) throw std::invalid_argument("adam_update: state size mismatch");
  ++s.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = cfg.beta1 * s.m[i] + (1.0 - cfg.beta1) * grads[i];
    s.v[i] = cfg.beta2 * s.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    params[i] -= lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + cfg.eps);
  }
}

Trainer::Trainer(OdometryModel& model, TrainConfig cfg) : model_(model), cfg_(cfg), rng_(cfg.seed) {
  cfg_.validate();
}

double Trainer::current_lr() const {
  return cfg_.learning_rate * std::pow(cfg_.lr_decay, static_cast<double>(state_.epoch));
}

Tensor Trainer::pair_loss(const TrainingPair& pair) const {
  const bool validity = validity_in_use();
  const Pose2 target = pair.gt_rel.inverse();
  const auto h1 = model_.heads(pair.obs1, validity);
  const auto h2 = model_.heads(pair.obs2, validity);
  std::optional<double> guide;
  if (gct_active()) guide = target.theta();
  const auto fwd = model_.forward_pair(h1, h2, validity, guide);
  return pose_loss(fwd.transform, target, cfg_.alpha);
}

StepResult Trainer::train_step(std::span<const TrainingPair> batch, std::size_t first_index) {
  ParamStore& store = model_.params();
  store.zero_grad();
  StepResult r;
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Tensor loss;
    try {
      loss = pair_loss(batch[i]);
    } catch (const DegenerateWeights&) {
      ++r.skipped;
      continue;
    } catch (const DegenerateGeometry&) {
      ++r.skipped;
      continue;
    }
    if (!std::isfinite(loss.item())) {
      store.zero_grad();
      throw NonFiniteLoss(first_index + i, "non-finite loss on training pair " + std::to_string(first_index + i));
    }
    loss.backward();
    total += loss.item();
    ++r.used;
  }
  if (r.used == 0) return r;
  r.loss = total / static_cast<double>(r.used);
  std::vector<double> grads = store.flat_grads();
  const double inv = 1.0 / static_cast<double>(r.used);
  double sq = 0.0;
  for (double& g : grads) {
    g *= inv;
    sq += g * g;
  }
  r.grad_norm = std::sqrt(sq);
  if (!std::isfinite(r.grad_norm)) {
    store.zero_grad();
    throw NonFiniteLoss(first_index, "non-finite gradient in batch starting at pair " + std::to_string(first_index));
  }
  if (cfg_.grad_clip_norm > 0.0 && r.grad_norm > cfg_.grad_clip_norm) {
    const double f = cfg_.grad_clip_norm / r.grad_norm;
    for (double& g : grads) g *= f;
  }
  std::vector<double> params = store.flat_values();
  adam_update(params, grads, state_.adam, current_lr());
  for (double p : params) {
    if (!std::isfinite(p)) throw NonFiniteLoss(first_index, "parameter update produced a non-finite value");
  }
  store.set_flat_values(params);
  ++state_.step;
  state_.loss_history.push_back(r.loss);
  return r;
}

EpochResult Trainer::train_epoch(const std::vector<TrainingPair>& data, const std::function<void(const LogRow&)>& log) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);
  EpochResult e;
  e.epoch = state_.epoch;
  double total = 0.0;
  std::size_t used = 0;
  std::vector<TrainingPair> batch;
  for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
    batch.clear();
    const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
    for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
    const auto r = train_step(batch, start);
    total += r.loss * static_cast<double>(r.used);
    used += r.used;
    e.skipped += r.skipped;
    if (log) log({state_.epoch, state_.step, r.loss, r.skipped});
  }
  e.mean_loss = used > 0 ? total / static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN();
  e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ++state_.epoch;
  return e;
}

std::vector<PairError> evaluate_pairs(const OdometryModel& model, const std::vector<TrainingPair>& pairs,
                                      bool use_validity) {
  std::vector<PairError> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    try {
      const Pose2 est = model.relative_motion(model.heads(p.obs1, use_validity), model.heads(p.obs2, use_validity),
                                              use_validity);
      out.push_back({std::hypot(est.x() - p.gt_rel.x(), est.y() - p.gt_rel.y()),
                     std::abs(wrap_angle(est.theta() - p.gt_rel.theta()))});
    } catch (const DegenerateWeights&) {
      out.push_back({std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()});
    } catch (const DegenerateGeometry&) {
      out.push_back({std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()});
    }
  }
  return out;
}

}  // namespace bevodo
