// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "s3/common.hpp"

namespace s3 {

template <typename T>
struct AdamConfig {
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
};

// Standard bias-corrected Adam over a flat parameter vector.
template <typename T>
class Adam {
 public:
  explicit Adam(std::ptrdiff_t n, AdamConfig<T> cfg = {})
      : cfg_(cfg), m_(VecX<T>::Zero(n)), v_(VecX<T>::Zero(n)) {}

  void step(VecX<T>& params, const VecX<T>& grad, T lr) {
    if (params.size() != m_.size() || grad.size() != m_.size())
      throw std::invalid_argument("Adam::step: size mismatch");
    ++t_;
    m_ = cfg_.beta1 * m_ + (T(1) - cfg_.beta1) * grad;
    v_ = (cfg_.beta2 * v_.array() + (T(1) - cfg_.beta2) * grad.array().square()).matrix();
    const T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(t_));
    params.array() -=
        lr * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + cfg_.eps);
  }

  std::int64_t steps_taken() const { return t_; }

 private:
  AdamConfig<T> cfg_;
  VecX<T> m_, v_;
  std::int64_t t_ = 0;
};

// Exponential interpolation from lr_init to lr_final across the run.
template <typename T>
T exponential_lr(T lr_init, T lr_final, std::int64_t iter, std::int64_t total_iters) {
  if (total_iters <= 1) return lr_init;
  const T frac = static_cast<T>(iter) / static_cast<T>(total_iters - 1);
  return lr_init * std::pow(lr_final / lr_init, frac);
}

}  // namespace s3
