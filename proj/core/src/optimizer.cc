#include "toxctx/optimizer.h"

#include <cmath>
#include <utility>

namespace toxctx {

AdamW::AdamW(const OptimizerConfig& config, Eigen::VectorXd decay_mask)
    : config_(config),
      decay_mask_(std::move(decay_mask)),
      m_(Eigen::VectorXd::Zero(decay_mask_.size())),
      v_(Eigen::VectorXd::Zero(decay_mask_.size())) {}

void AdamW::Step(Eigen::VectorXd& params, Eigen::VectorXd& grad,
                 double learning_rate) {
  if (config_.grad_clip > 0.0) {
    const double norm = grad.norm();
    if (norm > config_.grad_clip) grad *= config_.grad_clip / norm;
  }
  ++steps_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  params.array() -=
      learning_rate *
      ((m_.array() / bc1) / ((v_.array() / bc2).sqrt() + config_.eps) +
       config_.weight_decay * decay_mask_.array() * params.array());
}

}  // namespace toxctx
