// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "s3/config.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace s3;

TEST_CASE("serialize then parse is a fixed point") {
  ExperimentConfig cfg;
  cfg.scene_seed = 42;
  cfg.image_size = 32;
  cfg.lambda_sem = 0.25;
  cfg.mode = RunMode::kAblationWarpedRgb;
  const std::string text = cfg.serialize();
  const ExperimentConfig back = parse_config(text);
  CHECK(back.serialize() == text);
  CHECK(back.scene_seed == 42);
  CHECK(back.image_size == 32);
  CHECK(back.lambda_sem == 0.25);
  CHECK(back.mode == RunMode::kAblationWarpedRgb);
}

TEST_CASE("doubles survive the round trip exactly") {
  ExperimentConfig cfg;
  cfg.lr_init = 1.0 / 3.0;
  cfg.fov_deg = 59.999999999999993;
  cfg.input_scale = 0.1 + 0.2;  // deliberately not representable as "0.3"
  const ExperimentConfig back = parse_config(cfg.serialize());
  CHECK(back.lr_init == cfg.lr_init);
  CHECK(back.fov_deg == cfg.fov_deg);
  CHECK(back.input_scale == cfg.input_scale);
}

TEST_CASE("every serialized key can be overridden") {
  ExperimentConfig defaults;
  const std::string text = defaults.serialize();
  // Apply the full document back onto the defaults line by line; every key
  // must be known to the parser.
  CHECK_NOTHROW(parse_config(text));
  // And the document mentions each config section.
  for (const char* key :
       {"scene.seed", "scene.image_size", "poses.source", "field.width",
        "field.codebook_size", "train.iterations", "train.lambda_mono",
        "train.novel_rays", "mode"})
    CHECK_MESSAGE(text.find(key) != std::string::npos, key);
}

TEST_CASE("parser accepts comments and reports malformed lines") {
  const ExperimentConfig cfg = parse_config(
      "# a comment\n"
      "scene.seed = 11  # trailing comment\n"
      "\n"
      "train.iterations = 5\n");
  CHECK(cfg.scene_seed == 11);
  CHECK(cfg.iterations == 5);

  CHECK_THROWS_WITH_AS(parse_config("scene.seed 11\n"), doctest::Contains("line 1"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("\nscene.seed =\n"), doctest::Contains("line 2"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("no.such.key = 3\n"),
                       doctest::Contains("unknown config key"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("scene.seed = banana\n"),
                       doctest::Contains("bad value"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("mode = nonsense\n"), doctest::Contains("unknown mode"),
                       ConfigError);
}

TEST_CASE("validate rejects inconsistent settings") {
  auto expect = [](void (*tweak)(ExperimentConfig&), const char* fragment) {
    ExperimentConfig cfg;
    tweak(cfg);
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains(fragment), ConfigError);
  };
  expect([](ExperimentConfig& c) { c.classes = 1; }, "classes");
  expect([](ExperimentConfig& c) { c.image_size = 8; }, "image_size");
  expect([](ExperimentConfig& c) { c.t_near = -1.0; }, "t range");
  expect([](ExperimentConfig& c) { c.source_views = 1; }, "poses.source");
  expect([](ExperimentConfig& c) { c.hidden_width = 7; }, "width");
  expect([](ExperimentConfig& c) { c.skip_layer = 20; }, "skip_layer");
  expect([](ExperimentConfig& c) { c.codebook_layer_idx = 99; }, "codebook_layer");
  expect([](ExperimentConfig& c) { c.num_heads = 5; }, "heads");
  expect([](ExperimentConfig& c) { c.iterations = 0; }, "iterations");
  expect([](ExperimentConfig& c) { c.lr_final = 0.0; }, "learning rates");
  expect([](ExperimentConfig& c) { c.lambda_sem = -0.1; }, "loss weights");
  expect([](ExperimentConfig& c) { c.n_samples = 1; }, "samples");
  expect([](ExperimentConfig& c) {
    c.image_size = 16;  // valid on its own, too small for a mono patch
  }, "depth patches");
  ExperimentConfig ok;
  ok.image_size = 16;
  ok.mono_patches = 0;  // no patches, so the 16-pixel image is fine
  CHECK_NOTHROW(ok.validate());
}

TEST_CASE("mode names round trip") {
  for (RunMode mode : {RunMode::kTeacherOnly, RunMode::kStudentSupervision,
                       RunMode::kStudentFull, RunMode::kAblationNoVerification,
                       RunMode::kAblationNoRenderedLabels, RunMode::kAblationRenderedRgb,
                       RunMode::kAblationWarpedRgb, RunMode::kAblationCodebookOnly})
    CHECK(mode_from_name(mode_name(mode)) == mode);
  CHECK(std::string(mode_name(RunMode::kStudentFull)) == "student_full");
  CHECK_THROWS_AS(mode_from_name("STUDENT_FULL"), ConfigError);
}

TEST_CASE("mode policies encode the ablation grid") {
  const ModePolicy teacher = mode_policy(RunMode::kTeacherOnly);
  CHECK(!teacher.codebook);
  CHECK(teacher.detach_semantics);
  CHECK(teacher.novel == NovelSignal::kNone);
  CHECK(teacher.semantic_loss);

  const ModePolicy full = mode_policy(RunMode::kStudentFull);
  CHECK(full.codebook);
  CHECK(!full.detach_semantics);
  CHECK(full.novel == NovelSignal::kSemantic);
  CHECK(full.gate_by_validity);
  CHECK(full.semantic_loss);

  const ModePolicy supervision = mode_policy(RunMode::kStudentSupervision);
  CHECK(!supervision.codebook);
  CHECK(supervision.novel == NovelSignal::kSemantic);
  CHECK(supervision.gate_by_validity);

  const ModePolicy no_verif = mode_policy(RunMode::kAblationNoVerification);
  CHECK(no_verif.novel == NovelSignal::kSemantic);
  CHECK(!no_verif.gate_by_validity);

  const ModePolicy no_labels = mode_policy(RunMode::kAblationNoRenderedLabels);
  CHECK(no_labels.codebook);
  CHECK(no_labels.novel == NovelSignal::kNone);
  CHECK(no_labels.semantic_loss);

  const ModePolicy rendered = mode_policy(RunMode::kAblationRenderedRgb);
  CHECK(rendered.novel == NovelSignal::kRgb);
  const ModePolicy warped = mode_policy(RunMode::kAblationWarpedRgb);
  CHECK(warped.novel == NovelSignal::kRgb);
  CHECK(!warped.codebook);

  const ModePolicy cb_only = mode_policy(RunMode::kAblationCodebookOnly);
  CHECK(cb_only.codebook);
  CHECK(cb_only.novel == NovelSignal::kNone);
  CHECK(!cb_only.semantic_loss);
}

TEST_CASE("load_config reads files and rejects missing ones") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "s3_config_test";
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "a.cfg");
    out << "scene.seed = 99\nmode = teacher_only\n";
  }
  const ExperimentConfig cfg = load_config(dir / "a.cfg");
  CHECK(cfg.scene_seed == 99);
  CHECK(cfg.mode == RunMode::kTeacherOnly);
  CHECK_THROWS_AS(load_config(dir / "nope.cfg"), ConfigError);
}
