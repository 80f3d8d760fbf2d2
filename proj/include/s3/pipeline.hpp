// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end orchestration: scene + ground truth generation, teacher
// training, dense novel-view rendering, verification, student training, and
// evaluation, with every stage persisting its artifacts before the next one
// starts. A run can be resumed: completed stages are recorded in state.json
// and skipped on rerun. One process owns an experiment directory at a time
// (advisory lock).
//
// Layout under the output directory:
//   scene/     generated scene, poses, source/test ground truth, pseudo-mono
//              depths, quarantined novel-pose ground truth (evaluation only)
//   teacher/   teacher checkpoint + loss history
//   novel/     teacher renders: novel views (rgb/labels/depth/logits) and
//              source-view renders (depth for verification)
//   validity/  per-novel-view validity masks (PBM)
//   student/   per-mode student checkpoints + loss histories
//   reports/   evaluation JSON, the ablation table, and the effective config

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "s3/config.hpp"
#include "s3/metrics.hpp"
#include "s3/synth_scene.hpp"

namespace s3 {

struct PipelineState {
  bool scene_built = false;
  bool teacher_trained = false;
  bool novel_rendered = false;
  bool verified = false;
  bool evaluated = false;
  std::vector<std::string> students;  // mode names with trained checkpoints

  bool has_student(const std::string& name) const;
};

// Camera rig helpers (exposed for tests). Sources sit on a small ring near
// the scene center looking outward at the primitive ring; novel and test
// poses interpolate between adjacent sources with a small pose jitter.
Intrinsicsd make_intrinsics(int image_size, double fov_deg);
std::vector<Posed> source_ring_poses(int count, std::uint64_t seed);
std::vector<Posed> interpolate_ring(const std::vector<Posed>& ring, int count,
                                    double phase, double rot_jitter, double trans_jitter,
                                    std::uint64_t seed);

class Pipeline {
 public:
  Pipeline(ExperimentConfig cfg, std::filesystem::path out_dir);
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  void build_scene();
  void train_teacher();
  void render_novel_set();
  void verify_novel_set();
  void train_student(RunMode mode);
  std::vector<EvalReport> evaluate();
  // Runs every stage the configured mode needs, skipping completed ones.
  std::vector<EvalReport> run_all();

  const PipelineState& state() const { return state_; }
  const ExperimentConfig& config() const { return cfg_; }
  const std::filesystem::path& out_dir() const { return out_; }

 private:
  struct Rig {
    Intrinsicsd intr;
    std::vector<Posed> source, novel, test;
  };

  // Releases the advisory lock even when the constructor throws after
  // acquiring it (stale-fingerprint and corrupt-state errors).
  struct DirLock {
    DirLock() = default;
    explicit DirLock(const std::filesystem::path& lock_path);
    ~DirLock();
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;
    int fd = -1;
  };

  void save_state() const;
  void load_state();
  Rig load_rig() const;
  SyntheticScene load_scene() const;

  ExperimentConfig cfg_;
  std::filesystem::path out_;
  PipelineState state_;
  DirLock lock_;
};

}  // namespace s3
