#include "signnet/optim.hpp"

#include <algorithm>
#include <cmath>

namespace signnet {

Adam::Adam(std::vector<ad::Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.push_back(ad::Matrix::Zero(p.rows(), p.cols()));
    v_.push_back(ad::Matrix::Zero(p.rows(), p.cols()));
  }
}

void Adam::step() {
  ++step_;
  const double b1 = options_.beta1;
  const double b2 = options_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ad::Tensor& p = params_[i];
    ad::Matrix& value = p.mutable_value();
    ad::Matrix g = p.grad_or_zero();
    if (options_.weight_decay != 0.0) {
      if (options_.decoupled) {
        value *= 1.0 - options_.lr * options_.weight_decay;
      } else {
        g += options_.weight_decay * value;
      }
    }
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g.cwiseProduct(g);
    value.array() -= options_.lr * (m_[i].array() / bias1) /
                     ((v_[i].array() / bias2).sqrt() + options_.eps);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double lr_schedule(std::int64_t step, std::int64_t total_steps, double lr_start, double lr_end) {
  if (total_steps <= 0) return lr_start;
  const double t =
      std::clamp(static_cast<double>(step) / static_cast<double>(total_steps), 0.0, 1.0);
  return lr_start * (1.0 - t) + lr_end * t;
}

}  // namespace signnet
