// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0
//
// Volume rendering on top of SemanticField: ray sampling, the alpha
// compositing forward pass, its hand-written backward pass (with the
// reconstruction/semantic gradient streams kept apart so the field can route
// them), and whole-view rendering.

#pragma once

#include "s3/field.hpp"
#include "s3/geometry.hpp"
#include "s3/image.hpp"

namespace s3 {

// Sample distances along [t_near, t_far]: bin midpoints, or uniform within
// each bin when stratified. delta_i = t_{i+1} - t_i with the last bin closed
// by t_far.
template <typename T>
void sample_along_ray(T t_near, T t_far, int n, bool stratified, Rng* rng,
                      VecX<T>& t, VecX<T>& delta) {
  if (n < 1 || !(t_far > t_near))
    throw std::invalid_argument("sample_along_ray: bad range or count");
  if (stratified && rng == nullptr)
    throw std::invalid_argument("sample_along_ray: stratified needs an rng");
  t.resize(n);
  delta.resize(n);
  const T bin = (t_far - t_near) / static_cast<T>(n);
  for (int i = 0; i < n; ++i) {
    const T u = stratified ? static_cast<T>(rng->uniform()) : T(0.5);
    t[i] = t_near + (static_cast<T>(i) + u) * bin;
  }
  for (int i = 0; i + 1 < n; ++i) delta[i] = t[i + 1] - t[i];
  delta[n - 1] = t_far - t[n - 1];
}

template <typename T>
struct CompositeResult {
  Vec3<T> color;
  T depth = T(0);
  VecX<T> logits;    // composited logits, empty when no logits were given
  T residual = T(0); // transmittance left after the last sample
  VecX<T> weights;   // per-sample compositing weights
};

// alpha_i = 1 - exp(-sigma_i delta_i); w_i = T_i alpha_i with T_i the product
// of (1 - alpha_j) over j < i. color/logits composite over samples only;
// depth gets a far-plane term residual * far_depth so that empty space reads
// as the far plane, matching the ground-truth sentinel.
template <typename T>
void composite(const VecX<T>& sigma, const Mat3X<T>& color, const MatX<T>& logits,
               const VecX<T>& z, const VecX<T>& delta, T far_depth,
               CompositeResult<T>& out) {
  const int n = static_cast<int>(sigma.size());
  out.weights.resize(n);
  T trans = T(1);
  for (int i = 0; i < n; ++i) {
    const T alpha = -std::expm1(-sigma[i] * delta[i]);
    out.weights[i] = trans * alpha;
    trans -= out.weights[i];
  }
  out.residual = trans;
  out.color.noalias() = color * out.weights;
  out.depth = z.dot(out.weights) + trans * far_depth;
  if (logits.rows() > 0)
    out.logits.noalias() = logits * out.weights;
  else
    out.logits.resize(0);
}

template <typename T>
struct CompositeGrad {
  VecX<T> d_sigma_recon;  // from the color/depth objective
  VecX<T> d_sigma_sem;    // from the logits objective
  Mat3X<T> d_color;       // per-sample color gradients
  MatX<T> d_logits;       // per-sample logit gradients
};

// Reverse pass of composite(). Densities receive two separate streams: the
// recon stream collects the color and depth terms (including the far-plane
// residual), the sem stream collects the logits term. Per-sample color and
// logit gradients are plain weight scalings.
//
// d sigma_k = delta_k * (T_{k+1} G_k - sum_{i>k} G_i w_i - R_term), with
// G_i the dot of the upstream gradient with sample i's composited value and
// R_term folding in the residual's dependence on alpha_k.
template <typename T>
void composite_backward(const CompositeResult<T>& res, const Mat3X<T>& color,
                        const MatX<T>& logits, const VecX<T>& z,
                        const VecX<T>& delta, T far_depth,
                        const Vec3<T>& d_color_up, T d_depth_up,
                        const VecX<T>& d_logits_up, CompositeGrad<T>& grad) {
  const int n = static_cast<int>(delta.size());
  const bool sem = d_logits_up.size() > 0 && logits.rows() > 0;
  grad.d_sigma_recon.resize(n);
  grad.d_sigma_sem = VecX<T>::Zero(n);
  grad.d_color.resize(3, n);
  grad.d_logits.resize(sem ? logits.rows() : 0, n);

  VecX<T> g_recon(n), g_sem = VecX<T>::Zero(n);
  for (int i = 0; i < n; ++i)
    g_recon[i] = d_color_up.dot(color.col(i)) + d_depth_up * z[i];
  if (sem)
    g_sem = logits.transpose() * d_logits_up;

  // transmittance before each sample, rebuilt from the weights
  VecX<T> trans(n + 1);
  trans[0] = T(1);
  for (int i = 0; i < n; ++i) trans[i + 1] = trans[i] - res.weights[i];

  T suffix_recon = d_depth_up * far_depth * res.residual;
  T suffix_sem = T(0);
  for (int k = n - 1; k >= 0; --k) {
    grad.d_sigma_recon[k] = delta[k] * (trans[k + 1] * g_recon[k] - suffix_recon);
    if (sem) grad.d_sigma_sem[k] = delta[k] * (trans[k + 1] * g_sem[k] - suffix_sem);
    suffix_recon += g_recon[k] * res.weights[k];
    if (sem) suffix_sem += g_sem[k] * res.weights[k];
  }
  for (int i = 0; i < n; ++i) {
    grad.d_color.col(i) = d_color_up * res.weights[i];
    if (sem) grad.d_logits.col(i) = d_logits_up * res.weights[i];
  }
}

// Scratch buffers reused across rays to keep per-ray allocation out of the
// hot loop.
template <typename T>
struct RenderWorkspace {
  VecX<T> t, delta, z;
  Mat3X<T> x, d;
  typename SemanticField<T>::Outputs out;
  typename SemanticField<T>::Cache cache;
  CompositeResult<T> result;
};

// Renders one ray. z-depth uses the camera forward axis; pass the ray
// direction itself to get distance-along-ray depth instead. A null rng means
// deterministic midpoint sampling. When `cache` rendering is wanted for a
// training step, pass keep_cache = true and read ws.cache afterwards.
template <typename T>
const CompositeResult<T>& render_ray(const SemanticField<T>& field, const Ray<T>& ray,
                                     const Vec3<T>& forward_axis, int n_samples,
                                     bool stratified, Rng* rng,
                                     RenderWorkspace<T>& ws, bool keep_cache = false) {
  sample_along_ray<T>(ray.t_near, ray.t_far, n_samples, stratified, rng, ws.t, ws.delta);
  const T cosang = ray.direction.dot(forward_axis);
  ws.z = ws.t * cosang;
  ws.x.resize(3, n_samples);
  ws.d.resize(3, n_samples);
  for (int i = 0; i < n_samples; ++i) {
    ws.x.col(i) = ray.origin + ws.t[i] * ray.direction;
    ws.d.col(i) = ray.direction;
  }
  field.forward(ws.x, ws.d, ws.out, keep_cache ? &ws.cache : nullptr);
  composite<T>(ws.out.sigma, ws.out.color, ws.out.logits, ws.z, ws.delta,
               ray.t_far * cosang, ws.result);
  return ws.result;
}

struct RenderedView {
  ColorImage color;
  GrayImage depth;
  LogitImage logits;
};

// Deterministic full-frame render; one ray per pixel through its center.
template <typename T>
RenderedView render_view(const SemanticField<T>& field, const Intrinsics<T>& intr,
                         const Pose<T>& pose, T t_near, T t_far, int n_samples) {
  RenderedView view;
  view.color.resize(intr.height, intr.width);
  view.depth.resize(intr.height, intr.width);
  view.logits = LogitImage(intr.height, intr.width, field.config().num_classes);
  const Vec3<T> forward = pose.forward();
  parallel_blocks(intr.height, 1, [&](std::ptrdiff_t row_begin, std::ptrdiff_t row_end) {
    RenderWorkspace<T> ws;
    for (std::ptrdiff_t v = row_begin; v < row_end; ++v) {
      for (int u = 0; u < intr.width; ++u) {
        Ray<T> ray = ray_for_pixel(intr, pose, Pixel<T>{static_cast<T>(u), static_cast<T>(v)},
                                   t_near, t_far);
        const CompositeResult<T>& res =
            render_ray<T>(field, ray, forward, n_samples, false, nullptr, ws);
        view.color.set(static_cast<int>(v), u, res.color.template cast<double>());
        view.depth(v, u) = static_cast<double>(res.depth);
        for (int c = 0; c < field.config().num_classes; ++c)
          view.logits.planes[c](v, u) = static_cast<double>(res.logits[c]);
      }
    }
  });
  return view;
}

}  // namespace s3
