#pragma once

#include <cstdint>
#include <vector>

#include "signnet/autodiff.hpp"

namespace signnet {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  /// true: AdamW (decay applied to the parameter directly);
  /// false: classic Adam (decay folded into the gradient as an L2 term).
  bool decoupled = false;
};

/// First/second moment state for a fixed list of parameters.
class Adam {
 public:
  Adam(std::vector<ad::Tensor> params, AdamOptions options);

  /// Applies one update from the parameters' accumulated gradients.
  /// Parameters without a gradient are treated as having a zero gradient.
  void step();
  void zero_grad();

  void set_lr(double lr) { options_.lr = lr; }
  double lr() const { return options_.lr; }
  std::int64_t step_count() const { return step_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<ad::Tensor>& params() const { return params_; }

 private:
  std::vector<ad::Tensor> params_;
  std::vector<ad::Matrix> m_;
  std::vector<ad::Matrix> v_;
  AdamOptions options_;
  std::int64_t step_ = 0;
};

/// Linear interpolation from lr_start (step 0) to lr_end (step == total).
double lr_schedule(std::int64_t step, std::int64_t total_steps, double lr_start, double lr_end);

}  // namespace signnet
