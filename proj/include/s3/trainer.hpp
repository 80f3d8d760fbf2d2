// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0
//
// Batch assembly and the optimization loop.
//
// A batch mixes three ray populations:
//   - source rays: RGB target + ground-truth label, from the posed inputs;
//   - mono patches: 32x16 pixel blocks whose rendered depths are aligned to
//     the pseudo-monocular depth of the source view;
//   - novel rays: either a semantic target (teacher-rendered label, gated by
//     the validity mask) or, for the RGB-supervision ablations, a color
//     target from the teacher render / source warp.
//
// NovelTrainView only has slots for teacher-derived data; ground truth for
// novel poses cannot be expressed in a batch, which is what keeps the
// evaluation data quarantined from training by construction.
//
// Determinism: batches are drawn from a per-iteration seeded generator, each
// ray's stratified samples come from its own generator seeded by (seed, iter,
// stream, index), and gradients are accumulated into fixed-size blocks that
// are summed in block order, so results do not depend on thread scheduling.

#pragma once

#include <functional>
#include <vector>

#include "s3/adam.hpp"
#include "s3/bdv.hpp"
#include "s3/losses.hpp"
#include "s3/render.hpp"

namespace s3 {

template <typename T>
struct SourceTrainView {
  Pose<T> pose;
  ColorImage rgb;
  LabelImage labels;
  GrayImage mono;  // pseudo-monocular depth, same resolution
};

// What a novel pose contributes to training. labels/mask come from the
// teacher render + verification; rgb is only set for the RGB ablations.
template <typename T>
struct NovelTrainView {
  Pose<T> pose;
  LabelImage labels;
  ColorImage rgb;
  MaskImage mask;  // sampling support: validity, coverage, or all-ones
};

enum class NovelSignal { kNone, kSemantic, kRgb };

struct BatchConfig {
  int source_rays = 1024;
  int mono_patches = 2;  // patches of patch_w x patch_h rays each
  int patch_w = 32;
  int patch_h = 16;
  int novel_rays = 1024;
  NovelSignal novel_signal = NovelSignal::kNone;
};

template <typename T>
struct BatchRay {
  Ray<T> ray;
  Vec3<T> forward;  // camera optical axis, for z-depth
};

template <typename T>
struct RayBatch {
  std::vector<BatchRay<T>> source;
  Mat3X<T> source_rgb;
  Eigen::VectorXi source_sem;

  std::vector<BatchRay<T>> novel;
  Eigen::VectorXi novel_sem;  // semantic signal
  VecX<T> novel_w;            // 0/1 per ray; 1 by construction of the sampler
  Mat3X<T> novel_rgb;         // rgb signal

  std::vector<BatchRay<T>> mono;  // grouped per patch, row-major in the patch
  VecX<T> mono_target;
  int rays_per_patch = 0;

  // Shared normalizer of the semantic-guidance term: drawn source rays plus
  // drawn novel rays, one denominator for both populations.
  int sem_denom() const {
    return static_cast<int>(source.size() + novel.size());
  }
};

template <typename T>
class BatchAssembler {
 public:
  BatchAssembler(const Intrinsics<T>& intr, T t_near, T t_far,
                 std::vector<SourceTrainView<T>> sources,
                 std::vector<NovelTrainView<T>> novels, const BatchConfig& cfg)
      : intr_(intr), t_near_(t_near), t_far_(t_far), sources_(std::move(sources)),
        novels_(std::move(novels)), cfg_(cfg) {
    if (sources_.empty()) throw std::invalid_argument("BatchAssembler: no source views");
    if (cfg_.mono_patches > 0 &&
        (cfg_.patch_w > intr_.width || cfg_.patch_h > intr_.height))
      throw std::invalid_argument("BatchAssembler: patch larger than image");
    for (int i = 0; i < static_cast<int>(novels_.size()); ++i) {
      const NovelTrainView<T>& nv = novels_[i];
      std::vector<std::pair<int, int>> coords;
      for (int v = 0; v < nv.mask.rows(); ++v)
        for (int u = 0; u < nv.mask.cols(); ++u)
          if (nv.mask(v, u)) coords.emplace_back(u, v);
      if (!coords.empty()) {
        support_.push_back(std::move(coords));
        usable_novels_.push_back(i);
      }
    }
  }

  const BatchConfig& config() const { return cfg_; }
  const Intrinsics<T>& intrinsics() const { return intr_; }
  T t_near() const { return t_near_; }
  T t_far() const { return t_far_; }

  RayBatch<T> draw(std::uint64_t seed, std::int64_t iter) const {
    Rng rng(mix_seed(mix_seed(seed, 0xba7c4), static_cast<std::uint64_t>(iter)));
    RayBatch<T> batch;

    batch.source.reserve(cfg_.source_rays);
    batch.source_rgb.resize(3, cfg_.source_rays);
    batch.source_sem.resize(cfg_.source_rays);
    for (int i = 0; i < cfg_.source_rays; ++i) {
      const auto& view = sources_[rng.uniform_int(sources_.size())];
      const int u = static_cast<int>(rng.uniform_int(intr_.width));
      const int v = static_cast<int>(rng.uniform_int(intr_.height));
      batch.source.push_back(make_ray(view.pose, u, v));
      batch.source_rgb.col(i) = view.rgb.at(v, u).template cast<T>();
      batch.source_sem[i] = view.labels(v, u);
    }

    batch.rays_per_patch = cfg_.patch_w * cfg_.patch_h;
    batch.mono.reserve(cfg_.mono_patches * batch.rays_per_patch);
    batch.mono_target.resize(cfg_.mono_patches * batch.rays_per_patch);
    for (int p = 0; p < cfg_.mono_patches; ++p) {
      const auto& view = sources_[rng.uniform_int(sources_.size())];
      const int x0 = static_cast<int>(rng.uniform_int(intr_.width - cfg_.patch_w + 1));
      const int y0 = static_cast<int>(rng.uniform_int(intr_.height - cfg_.patch_h + 1));
      int j = p * batch.rays_per_patch;
      for (int dy = 0; dy < cfg_.patch_h; ++dy)
        for (int dx = 0; dx < cfg_.patch_w; ++dx, ++j) {
          batch.mono.push_back(make_ray(view.pose, x0 + dx, y0 + dy));
          batch.mono_target[j] = static_cast<T>(view.mono(y0 + dy, x0 + dx));
        }
    }

    if (cfg_.novel_signal != NovelSignal::kNone && !usable_novels_.empty() &&
        cfg_.novel_rays > 0) {
      const bool rgb = cfg_.novel_signal == NovelSignal::kRgb;
      batch.novel.reserve(cfg_.novel_rays);
      if (rgb)
        batch.novel_rgb.resize(3, cfg_.novel_rays);
      else
        batch.novel_sem.resize(cfg_.novel_rays);
      batch.novel_w = VecX<T>::Ones(cfg_.novel_rays);
      for (int i = 0; i < cfg_.novel_rays; ++i) {
        const std::size_t pick = rng.uniform_int(usable_novels_.size());
        const NovelTrainView<T>& view = novels_[usable_novels_[pick]];
        const auto [u, v] = support_[pick][rng.uniform_int(support_[pick].size())];
        batch.novel.push_back(make_ray(view.pose, u, v));
        if (rgb)
          batch.novel_rgb.col(i) = view.rgb.at(v, u).template cast<T>();
        else
          batch.novel_sem[i] = view.labels(v, u);
      }
    }
    return batch;
  }

 private:
  BatchRay<T> make_ray(const Pose<T>& pose, int u, int v) const {
    BatchRay<T> br;
    br.ray = ray_for_pixel(intr_, pose, Pixel<T>{static_cast<T>(u), static_cast<T>(v)},
                           t_near_, t_far_);
    br.forward = pose.forward();
    return br;
  }

  Intrinsics<T> intr_;
  T t_near_, t_far_;
  std::vector<SourceTrainView<T>> sources_;
  std::vector<NovelTrainView<T>> novels_;
  BatchConfig cfg_;
  std::vector<std::vector<std::pair<int, int>>> support_;  // per usable novel
  std::vector<int> usable_novels_;
};

struct TrainConfig {
  std::int64_t iterations = 800;
  double lr_init = 5e-4;
  double lr_final = 5e-5;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  double lambda_sem = 0.1;
  double lambda_mono = 0.1;
  int n_samples = 32;
  bool stratified = true;
  std::uint64_t seed = 1;
  std::int64_t checkpoint_interval = 0;  // 0: never
};

struct LossRow {
  std::int64_t iter = 0;
  double l_recon = 0, l_sem = 0, l_mono = 0, total = 0, lr = 0;
  int degenerate_patches = 0;  // mono patches that hit the shift-only fallback
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::int64_t iter, const std::string& what)
      : std::runtime_error(what), iteration(iter) {}
  std::int64_t iteration;
};

template <typename T>
struct TrainHooks {
  std::function<void(std::int64_t, const SemanticField<T>&)> on_checkpoint;
  std::function<void(const LossRow&)> on_row;
};

namespace detail {

// Seeds are derived per ray so stratified sampling is independent of the
// processing order.
inline std::uint64_t ray_seed(std::uint64_t seed, std::int64_t iter, std::uint64_t stream,
                              std::int64_t index) {
  return mix_seed(mix_seed(mix_seed(seed, stream), static_cast<std::uint64_t>(iter)),
                  static_cast<std::uint64_t>(index));
}

constexpr std::uint64_t kSourceStream = 0x51;
constexpr std::uint64_t kNovelStream = 0x52;
constexpr std::uint64_t kMonoStream = 0x53;
constexpr int kRayGrain = 256;  // rays per gradient-reduction block; part of
                                // the deterministic summation order

}  // namespace detail

template <typename T>
std::vector<LossRow> train(SemanticField<T>& field, const BatchAssembler<T>& batches,
                           const TrainConfig& cfg, const TrainHooks<T>& hooks = {}) {
  if (cfg.iterations < 0) throw std::invalid_argument("train: negative iterations");
  Adam<T> opt(field.num_params(),
              {static_cast<T>(cfg.adam_beta1), static_cast<T>(cfg.adam_beta2),
               static_cast<T>(cfg.adam_eps)});
  std::vector<LossRow> history;
  history.reserve(cfg.iterations);

  const int n_samples = cfg.n_samples;
  VecX<T> grad(field.num_params());

  // Per-block gradient buffers, grown on demand and reused across iterations.
  std::vector<VecX<T>> block_grads;
  std::vector<LossRow> block_rows;
  auto ensure_blocks = [&](int n) {
    while (static_cast<int>(block_grads.size()) < n)
      block_grads.emplace_back(VecX<T>::Zero(field.num_params()));
    block_rows.assign(std::max<int>(n, 1), LossRow{});
  };

  for (std::int64_t iter = 0; iter < cfg.iterations; ++iter) {
    const double lr = exponential_lr(cfg.lr_init, cfg.lr_final, iter, cfg.iterations);
    RayBatch<T> batch = batches.draw(cfg.seed, iter);
    const int n_src = static_cast<int>(batch.source.size());
    const int n_nov = static_cast<int>(batch.novel.size());
    const int n_patches =
        batch.rays_per_patch > 0
            ? static_cast<int>(batch.mono.size()) / batch.rays_per_patch
            : 0;
    const T denom = static_cast<T>(batch.sem_denom());
    const T lam_sem = static_cast<T>(cfg.lambda_sem);
    const T lam_mono = static_cast<T>(cfg.lambda_mono);

    const int src_blocks = (n_src + detail::kRayGrain - 1) / detail::kRayGrain;
    const int nov_blocks = (n_nov + detail::kRayGrain - 1) / detail::kRayGrain;
    const int total_blocks = src_blocks + nov_blocks + n_patches;
    ensure_blocks(total_blocks);
    for (int b = 0; b < total_blocks; ++b) block_grads[b].setZero();

    // source rays: recon + semantic
    if (n_src > 0) {
      parallel_blocks(n_src, detail::kRayGrain, [&](std::ptrdiff_t lo, std::ptrdiff_t hi) {
        const int blk = static_cast<int>(lo / detail::kRayGrain);
        VecX<T>& g = block_grads[blk];
        LossRow& row = block_rows[blk];
        RenderWorkspace<T> ws;
        CompositeGrad<T> cg;
        VecX<T> dce;
        for (std::ptrdiff_t i = lo; i < hi; ++i) {
          Rng ray_rng(detail::ray_seed(cfg.seed, iter, detail::kSourceStream, i));
          const BatchRay<T>& br = batch.source[i];
          const auto& res = render_ray(field, br.ray, br.forward, n_samples,
                                       cfg.stratified, &ray_rng, ws, true);
          const Vec3<T> diff = res.color - batch.source_rgb.col(i);
          row.l_recon += diff.squaredNorm() / n_src;
          const Vec3<T> d_color = diff * (T(2) / static_cast<T>(n_src));
          T d_depth = T(0);
          VecX<T> d_logits;
          if (lam_sem > T(0)) {
            row.l_sem += lam_sem * ce_logits<T>(res.logits, batch.source_sem[i], dce) / denom;
            d_logits = dce * (lam_sem / denom);
          }
          composite_backward(res, ws.out.color, ws.out.logits, ws.z, ws.delta,
                             br.ray.t_far * br.ray.direction.dot(br.forward), d_color,
                             d_depth, d_logits, cg);
          typename SemanticField<T>::Upstream up;
          up.d_sigma_recon = cg.d_sigma_recon;
          up.d_sigma_sem = cg.d_sigma_sem;
          up.d_color = cg.d_color;
          up.d_logits = cg.d_logits;
          field.backward(ws.cache, up, g);
        }
      });
    }

    // novel rays: semantic or rgb signal, normalized by the shared denominator
    if (n_nov > 0) {
      const bool rgb = batch.novel_rgb.cols() > 0;
      parallel_blocks(n_nov, detail::kRayGrain, [&](std::ptrdiff_t lo, std::ptrdiff_t hi) {
        const int blk = src_blocks + static_cast<int>(lo / detail::kRayGrain);
        VecX<T>& g = block_grads[blk];
        LossRow& row = block_rows[blk];
        RenderWorkspace<T> ws;
        CompositeGrad<T> cg;
        VecX<T> dce;
        for (std::ptrdiff_t i = lo; i < hi; ++i) {
          Rng ray_rng(detail::ray_seed(cfg.seed, iter, detail::kNovelStream, i));
          const BatchRay<T>& br = batch.novel[i];
          const auto& res = render_ray(field, br.ray, br.forward, n_samples,
                                       cfg.stratified, &ray_rng, ws, true);
          Vec3<T> d_color = Vec3<T>::Zero();
          VecX<T> d_logits;
          const T w = batch.novel_w[i];
          if (rgb) {
            const Vec3<T> diff = res.color - batch.novel_rgb.col(i);
            row.l_sem += lam_sem * w * diff.squaredNorm() / denom;
            d_color = diff * (T(2) * lam_sem * w / denom);
          } else {
            row.l_sem += lam_sem * w * ce_logits<T>(res.logits, batch.novel_sem[i], dce) / denom;
            d_logits = dce * (lam_sem * w / denom);
          }
          composite_backward(res, ws.out.color, ws.out.logits, ws.z, ws.delta,
                             br.ray.t_far * br.ray.direction.dot(br.forward), d_color,
                             T(0), d_logits, cg);
          typename SemanticField<T>::Upstream up;
          up.d_sigma_recon = cg.d_sigma_recon;
          up.d_sigma_sem = cg.d_sigma_sem;
          up.d_color = cg.d_color;
          up.d_logits = cg.d_logits;
          field.backward(ws.cache, up, g);
        }
      });
    }

    // mono patches: render depths, fit scale/shift, then push the residual
    // gradients back through a second, identically sampled render
    if (n_patches > 0) {
      parallel_blocks(n_patches, 1, [&](std::ptrdiff_t p_lo, std::ptrdiff_t p_hi) {
        for (std::ptrdiff_t p = p_lo; p < p_hi; ++p) {
          const int blk = src_blocks + nov_blocks + static_cast<int>(p);
          VecX<T>& g = block_grads[blk];
          LossRow& row = block_rows[blk];
          RenderWorkspace<T> ws;
          CompositeGrad<T> cg;
          const int n = batch.rays_per_patch;
          const std::ptrdiff_t base = p * n;
          VecX<T> depths(n);
          for (int j = 0; j < n; ++j) {
            Rng ray_rng(detail::ray_seed(cfg.seed, iter, detail::kMonoStream, base + j));
            const BatchRay<T>& br = batch.mono[base + j];
            depths[j] = render_ray(field, br.ray, br.forward, n_samples, cfg.stratified,
                                   &ray_rng, ws)
                            .depth;
          }
          const VecX<T> target = batch.mono_target.segment(base, n);
          MonoDepthLoss<T> mono = mono_depth_loss<T>(depths, target);
          row.l_mono += lam_mono * mono.loss / n_patches;
          if (mono.degenerate) ++row.degenerate_patches;
          const T scale = lam_mono / static_cast<T>(n_patches);
          for (int j = 0; j < n; ++j) {
            Rng ray_rng(detail::ray_seed(cfg.seed, iter, detail::kMonoStream, base + j));
            const BatchRay<T>& br = batch.mono[base + j];
            const auto& res = render_ray(field, br.ray, br.forward, n_samples,
                                         cfg.stratified, &ray_rng, ws, true);
            composite_backward<T>(res, ws.out.color, ws.out.logits, ws.z, ws.delta,
                                  br.ray.t_far * br.ray.direction.dot(br.forward),
                                  Vec3<T>::Zero(), scale * mono.d_depth[j], VecX<T>(), cg);
            typename SemanticField<T>::Upstream up;
            up.d_sigma_recon = cg.d_sigma_recon;
            up.d_color = cg.d_color;
            field.backward(ws.cache, up, g);
          }
        }
      });
    }

    LossRow row;
    row.iter = iter;
    row.lr = lr;
    for (int b = 0; b < total_blocks; ++b) {
      row.l_recon += block_rows[b].l_recon;
      row.l_sem += block_rows[b].l_sem;
      row.l_mono += block_rows[b].l_mono;
      row.degenerate_patches += block_rows[b].degenerate_patches;
    }
    row.total = row.l_recon + row.l_sem + row.l_mono;
    if (!std::isfinite(row.total))
      throw DivergenceError(iter, "training diverged at iteration " + std::to_string(iter) +
                                      ": recon=" + std::to_string(row.l_recon) +
                                      " sem=" + std::to_string(row.l_sem) +
                                      " mono=" + std::to_string(row.l_mono));

    grad.setZero();
    for (int b = 0; b < total_blocks; ++b) grad += block_grads[b];
    opt.step(field.params(), grad, static_cast<T>(lr));

    history.push_back(row);
    if (hooks.on_row) hooks.on_row(row);
    if (hooks.on_checkpoint && cfg.checkpoint_interval > 0 &&
        (iter + 1) % cfg.checkpoint_interval == 0)
      hooks.on_checkpoint(iter + 1, field);
  }
  return history;
}

}  // namespace s3
