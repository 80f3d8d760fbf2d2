// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training losses with analytic gradients w.r.t. the rendered quantities.
// The trainer chains these through composite_backward and the field backward.

#pragma once

#include <stdexcept>

#include "s3/common.hpp"

namespace s3 {

template <typename T>
struct ReconLoss {
  T loss = T(0);
  Mat3X<T> d_color;  // per-ray gradient, 3 x B
};

// Mean over rays of the squared RGB error.
template <typename T>
ReconLoss<T> recon_loss(const Mat3X<T>& colors, const Mat3X<T>& targets) {
  const int B = static_cast<int>(colors.cols());
  if (B == 0) throw std::domain_error("recon_loss: empty batch");
  if (targets.cols() != B) throw std::invalid_argument("recon_loss: count mismatch");
  ReconLoss<T> out;
  Mat3X<T> diff = colors - targets;
  out.loss = diff.squaredNorm() / static_cast<T>(B);
  out.d_color = diff * (T(2) / static_cast<T>(B));
  return out;
}

// Cross-entropy of softmax(logits) against one target class, with the
// gradient w.r.t. the logits. Stable log-sum-exp formulation.
template <typename T>
T ce_logits(const Eigen::Ref<const VecX<T>>& logits, int target, VecX<T>& d_logits) {
  const int C = static_cast<int>(logits.size());
  if (target < 0 || target >= C)
    throw std::domain_error("ce_logits: target class out of range");
  const T m = logits.maxCoeff();
  T sum = T(0);
  for (int c = 0; c < C; ++c) sum += std::exp(logits[c] - m);
  const T lse = m + std::log(sum);
  d_logits.resize(C);
  for (int c = 0; c < C; ++c) d_logits[c] = std::exp(logits[c] - lse);
  d_logits[target] -= T(1);
  return lse - logits[target];
}

template <typename T>
struct SemanticLoss {
  T loss = T(0);
  MatX<T> d_logits;  // C x B
};

// Weighted cross-entropy over rays divided by a caller-supplied denominator.
// The denominator is the combined source + novel ray count, shared across
// both ray populations, so pass the same value for each population's call.
template <typename T>
SemanticLoss<T> semantic_loss(const MatX<T>& logits, const Eigen::VectorXi& targets,
                              const VecX<T>& weights, T denom) {
  const int C = static_cast<int>(logits.rows());
  const int B = static_cast<int>(logits.cols());
  if (targets.size() != B || weights.size() != B)
    throw std::invalid_argument("semantic_loss: count mismatch");
  if (!(denom > T(0))) throw std::invalid_argument("semantic_loss: bad denominator");
  SemanticLoss<T> out;
  out.d_logits = MatX<T>::Zero(C, B);
  VecX<T> d(C);
  for (int i = 0; i < B; ++i) {
    if (weights[i] == T(0)) {
      if (targets[i] < 0 || targets[i] >= C)
        throw std::domain_error("semantic_loss: target class out of range");
      continue;
    }
    out.loss += weights[i] * ce_logits<T>(logits.col(i), targets[i], d);
    out.d_logits.col(i) = (weights[i] / denom) * d;
  }
  out.loss /= denom;
  return out;
}

template <typename T>
struct MonoDepthLoss {
  T loss = T(0);
  VecX<T> d_depth;
  T scale = T(1), shift = T(0);  // the fitted alignment
  bool degenerate = false;       // constant rendered depth, shift-only fit
};

// Aligns rendered depth to the monocular target with a closed-form
// least-squares scale and shift, then penalizes the mean squared residual.
// The fitted parameters minimize the same objective, so by the envelope
// argument the gradient through them vanishes and d loss / d D_j reduces to
// 2 * scale * residual_j / n. A constant patch leaves the scale
// unidentifiable; it is pinned to 1 and only the shift is fitted.
template <typename T>
MonoDepthLoss<T> mono_depth_loss(const VecX<T>& rendered, const VecX<T>& mono) {
  const int n = static_cast<int>(rendered.size());
  if (n < 2) throw std::invalid_argument("mono_depth_loss: patch too small");
  if (mono.size() != n) throw std::invalid_argument("mono_depth_loss: count mismatch");
  MonoDepthLoss<T> out;
  const T mean_d = rendered.mean();
  const T mean_m = mono.mean();
  const VecX<T> cd = rendered.array() - mean_d;
  T var = cd.squaredNorm() / static_cast<T>(n);
  if (var < T(1e-12)) {
    out.degenerate = true;
    out.scale = T(1);
  } else {
    out.scale = cd.dot((mono.array() - mean_m).matrix()) / (var * static_cast<T>(n));
  }
  out.shift = mean_m - out.scale * mean_d;
  VecX<T> residual = (rendered.array() * out.scale + out.shift - mono.array()).matrix();
  out.loss = residual.squaredNorm() / static_cast<T>(n);
  out.d_depth = residual * (T(2) * out.scale / static_cast<T>(n));
  return out;
}

}  // namespace s3
