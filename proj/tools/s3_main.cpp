// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end for the pipeline. Every stage is a subcommand over a
// shared experiment directory; run-all chains the stages the configured mode
// needs and skips the ones already recorded in state.json.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "s3/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"self-improving semantic radiance field pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "run";
  std::string mode_str;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "config file (key = value lines)");
  app.add_option("--out", out_dir, "experiment directory")->capture_default_str();
  app.add_option("--mode", mode_str, "run mode override (e.g. student_full)");
  auto* seed_opt =
      app.add_option("--seed", seed, "sets both the scene and training seed");

  CLI::App* cmd_scene = app.add_subcommand("build-scene", "generate scene + ground truth");
  CLI::App* cmd_teacher = app.add_subcommand("train-teacher", "fit the teacher field");
  CLI::App* cmd_novel = app.add_subcommand("render-novel", "render the novel pose set");
  CLI::App* cmd_verify = app.add_subcommand("verify", "build validity maps");
  CLI::App* cmd_student = app.add_subcommand("train-student", "fit a student field");
  CLI::App* cmd_eval = app.add_subcommand("evaluate", "score checkpoints on held-out views");
  CLI::App* cmd_all = app.add_subcommand("run-all", "run every stage the mode needs");
  CLI::App* cmd_print = app.add_subcommand("print-config", "dump the effective config");
  for (CLI::App* sub : {cmd_scene, cmd_teacher, cmd_novel, cmd_verify, cmd_student,
                        cmd_eval, cmd_all, cmd_print})
    sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    s3::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = s3::load_config(config_path);
    if (seed_opt->count() > 0) {
      cfg.scene_seed = seed;
      cfg.train_seed = seed;
    }
    if (!mode_str.empty()) cfg.mode = s3::mode_from_name(mode_str);

    if (cmd_print->parsed()) {
      cfg.validate();
      std::cout << cfg.serialize();
      return 0;
    }

    s3::Pipeline pipeline(cfg, out_dir);
    if (cmd_scene->parsed()) {
      pipeline.build_scene();
    } else if (cmd_teacher->parsed()) {
      pipeline.train_teacher();
    } else if (cmd_novel->parsed()) {
      pipeline.render_novel_set();
    } else if (cmd_verify->parsed()) {
      pipeline.verify_novel_set();
    } else if (cmd_student->parsed()) {
      pipeline.train_student(cfg.mode);
    } else if (cmd_eval->parsed()) {
      std::cout << s3::format_report_table(pipeline.evaluate());
    } else if (cmd_all->parsed()) {
      std::cout << s3::format_report_table(pipeline.run_all());
    }
    return 0;
  } catch (const s3::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const s3::DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
