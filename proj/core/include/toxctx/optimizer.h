#ifndef TOXCTX_OPTIMIZER_H_
#define TOXCTX_OPTIMIZER_H_

#include <cstddef>
#include <cstdint>

#include <Eigen/Core>

namespace toxctx {

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double grad_clip = 1.0;  // global L2 norm; <= 0 disables
};

// Adam with decoupled weight decay. `decay_mask` holds 1 for parameters that
// receive weight decay (weight matrices, embeddings) and 0 otherwise.
class AdamW {
 public:
  AdamW() = default;
  AdamW(const OptimizerConfig& config, Eigen::VectorXd decay_mask);

  // Clips `grad` in place, then updates `params`.
  void Step(Eigen::VectorXd& params, Eigen::VectorXd& grad,
            double learning_rate);

  std::int64_t steps() const { return steps_; }
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  Eigen::VectorXd decay_mask_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  std::int64_t steps_ = 0;
};

}  // namespace toxctx

#endif  // TOXCTX_OPTIMIZER_H_
