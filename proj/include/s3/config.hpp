// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration: a flat key=value document (with '#' comments)
// covering scene generation, pose layout, field size, training, and the run
// mode. Unknown keys are errors so typos cannot silently fall back to
// defaults. serialize() emits every key in a fixed order; that canonical text
// is embedded in checkpoints and written next to reports for provenance.

#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "s3/trainer.hpp"

namespace s3 {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One run mode per invocation. The student variants differ in which guidance
// ingredients are active; see mode_policy().
enum class RunMode {
  kTeacherOnly,
  kStudentSupervision,      // verified novel semantics, no codebook
  kStudentFull,             // verified novel semantics + codebook
  kAblationNoVerification,  // novel semantics everywhere, w = 1
  kAblationNoRenderedLabels,  // no novel rays at all, codebook kept
  kAblationRenderedRgb,     // novel rays supervised with teacher-rendered RGB
  kAblationWarpedRgb,       // novel rays supervised with source-warped RGB
  kAblationCodebookOnly,    // codebook only, semantic loss disabled
};

const char* mode_name(RunMode mode);
RunMode mode_from_name(const std::string& name);

struct ModePolicy {
  bool codebook = false;
  bool detach_semantics = false;
  NovelSignal novel = NovelSignal::kNone;
  bool gate_by_validity = false;  // novel sampling restricted to validity maps
  bool semantic_loss = false;
};

ModePolicy mode_policy(RunMode mode);

struct ExperimentConfig {
  // scene
  std::uint64_t scene_seed = 7;
  int primitives = 6;
  int classes = 5;
  int image_size = 64;
  double fov_deg = 60.0;
  double t_near = 0.05;
  double t_far = 6.0;
  // poses
  int source_views = 6;
  int novel_views = 60;
  int test_views = 12;
  // field
  int hidden_width = 48;
  int trunk_depth = 8;
  int skip_layer = 4;
  int pos_octaves = 10;
  int dir_octaves = 4;
  double input_scale = 0.22;
  int codebook_size = 64;
  int num_heads = 4;
  int codebook_layer_idx = 7;
  bool attn_scale = true;
  // training
  std::int64_t iterations = 800;
  double lr_init = 5e-4;
  double lr_final = 5e-5;
  double lambda_sem = 0.1;
  double lambda_mono = 0.1;
  int n_samples = 24;
  bool stratified = true;
  std::uint64_t train_seed = 1;
  int source_rays = 512;
  int mono_patches = 1;
  int novel_rays = 512;
  std::int64_t checkpoint_interval = 0;
  // mode
  RunMode mode = RunMode::kStudentFull;

  std::string serialize() const;
  void validate() const;  // throws ConfigError on inconsistent values
};

// Applies key=value lines to the defaults. Unknown keys, malformed lines, and
// unparsable values all throw ConfigError.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace s3
