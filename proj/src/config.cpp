// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "s3/config.hpp"

#include <climits>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace s3 {

namespace {

struct ModeEntry {
  RunMode mode;
  const char* name;
  ModePolicy policy;
};

constexpr NovelSignal kSem = NovelSignal::kSemantic;
constexpr NovelSignal kRgb = NovelSignal::kRgb;
constexpr NovelSignal kNone = NovelSignal::kNone;

const ModeEntry kModes[] = {
    // {codebook, detach_semantics, novel, gate_by_validity, semantic_loss}
    {RunMode::kTeacherOnly, "teacher_only", {false, true, kNone, false, true}},
    {RunMode::kStudentSupervision, "student_supervision_level", {false, false, kSem, true, true}},
    {RunMode::kStudentFull, "student_full", {true, false, kSem, true, true}},
    {RunMode::kAblationNoVerification, "ablation_no_verification", {true, false, kSem, false, true}},
    {RunMode::kAblationNoRenderedLabels, "ablation_no_rendered_labels", {true, false, kNone, false, true}},
    {RunMode::kAblationRenderedRgb, "ablation_rendered_rgb", {false, false, kRgb, false, true}},
    {RunMode::kAblationWarpedRgb, "ablation_warped_rgb", {false, false, kRgb, false, true}},
    {RunMode::kAblationCodebookOnly, "ablation_codebook_only", {true, false, kNone, false, false}},
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const char* mode_name(RunMode mode) {
  for (const ModeEntry& e : kModes)
    if (e.mode == mode) return e.name;
  throw std::logic_error("mode_name: unmapped mode");
}

RunMode mode_from_name(const std::string& name) {
  for (const ModeEntry& e : kModes)
    if (name == e.name) return e.mode;
  throw ConfigError("unknown mode: " + name);
}

ModePolicy mode_policy(RunMode mode) {
  for (const ModeEntry& e : kModes)
    if (e.mode == mode) return e.policy;
  throw std::logic_error("mode_policy: unmapped mode");
}

namespace {

class KeyTable {
 public:
  explicit KeyTable(ExperimentConfig& cfg) {
    add_u64("scene.seed", cfg.scene_seed);
    add_int("scene.primitives", cfg.primitives);
    add_int("scene.classes", cfg.classes);
    add_int("scene.image_size", cfg.image_size);
    add_double("scene.fov_deg", cfg.fov_deg);
    add_double("scene.t_near", cfg.t_near);
    add_double("scene.t_far", cfg.t_far);
    add_int("poses.source", cfg.source_views);
    add_int("poses.novel", cfg.novel_views);
    add_int("poses.test", cfg.test_views);
    add_int("field.width", cfg.hidden_width);
    add_int("field.depth", cfg.trunk_depth);
    add_int("field.skip_layer", cfg.skip_layer);
    add_int("field.pos_octaves", cfg.pos_octaves);
    add_int("field.dir_octaves", cfg.dir_octaves);
    add_double("field.input_scale", cfg.input_scale);
    add_int("field.codebook_size", cfg.codebook_size);
    add_int("field.heads", cfg.num_heads);
    add_int("field.codebook_layer", cfg.codebook_layer_idx);
    add_bool("field.attn_scale", cfg.attn_scale);
    add_i64("train.iterations", cfg.iterations);
    add_double("train.lr_init", cfg.lr_init);
    add_double("train.lr_final", cfg.lr_final);
    add_double("train.lambda_sem", cfg.lambda_sem);
    add_double("train.lambda_mono", cfg.lambda_mono);
    add_int("train.samples", cfg.n_samples);
    add_bool("train.stratified", cfg.stratified);
    add_u64("train.seed", cfg.train_seed);
    add_int("train.source_rays", cfg.source_rays);
    add_int("train.mono_patches", cfg.mono_patches);
    add_int("train.novel_rays", cfg.novel_rays);
    add_i64("train.checkpoint_interval", cfg.checkpoint_interval);
    setters_["mode"] = [&cfg](const std::string& v) { cfg.mode = mode_from_name(v); };
  }

  void apply(const std::string& key, const std::string& value) {
    auto it = setters_.find(key);
    if (it == setters_.end()) throw ConfigError("unknown config key: " + key);
    try {
      it->second(value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError("bad value for " + key + ": " + value);
    }
  }

 private:
  static std::size_t parse_all(const std::string& v, double& out) {
    std::size_t used = 0;
    out = std::stod(v, &used);
    return used;
  }

  void add_double(const std::string& key, double& slot) {
    setters_[key] = [&slot](const std::string& v) {
      double parsed = 0;
      if (parse_all(v, parsed) != v.size()) throw std::invalid_argument(v);
      slot = parsed;
    };
  }
  void add_int(const std::string& key, int& slot) {
    setters_[key] = [&slot](const std::string& v) {
      std::size_t used = 0;
      const long long parsed = std::stoll(v, &used);
      if (used != v.size() || parsed < INT_MIN || parsed > INT_MAX)
        throw std::invalid_argument(v);
      slot = static_cast<int>(parsed);
    };
  }
  void add_i64(const std::string& key, std::int64_t& slot) {
    setters_[key] = [&slot](const std::string& v) {
      std::size_t used = 0;
      slot = std::stoll(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
    };
  }
  void add_u64(const std::string& key, std::uint64_t& slot) {
    setters_[key] = [&slot](const std::string& v) {
      std::size_t used = 0;
      slot = std::stoull(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
    };
  }
  void add_bool(const std::string& key, bool& slot) {
    setters_[key] = [&slot](const std::string& v) {
      if (v == "true" || v == "1")
        slot = true;
      else if (v == "false" || v == "0")
        slot = false;
      else
        throw std::invalid_argument(v);
    };
  }

  std::map<std::string, std::function<void(const std::string&)>> setters_;
};

void emit(std::ostream& os, const char* key, const std::string& v) {
  os << key << " = " << v << "\n";
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string ExperimentConfig::serialize() const {
  std::ostringstream os;
  emit(os, "scene.seed", std::to_string(scene_seed));
  emit(os, "scene.primitives", std::to_string(primitives));
  emit(os, "scene.classes", std::to_string(classes));
  emit(os, "scene.image_size", std::to_string(image_size));
  emit(os, "scene.fov_deg", fmt_double(fov_deg));
  emit(os, "scene.t_near", fmt_double(t_near));
  emit(os, "scene.t_far", fmt_double(t_far));
  emit(os, "poses.source", std::to_string(source_views));
  emit(os, "poses.novel", std::to_string(novel_views));
  emit(os, "poses.test", std::to_string(test_views));
  emit(os, "field.width", std::to_string(hidden_width));
  emit(os, "field.depth", std::to_string(trunk_depth));
  emit(os, "field.skip_layer", std::to_string(skip_layer));
  emit(os, "field.pos_octaves", std::to_string(pos_octaves));
  emit(os, "field.dir_octaves", std::to_string(dir_octaves));
  emit(os, "field.input_scale", fmt_double(input_scale));
  emit(os, "field.codebook_size", std::to_string(codebook_size));
  emit(os, "field.heads", std::to_string(num_heads));
  emit(os, "field.codebook_layer", std::to_string(codebook_layer_idx));
  emit(os, "field.attn_scale", attn_scale ? "true" : "false");
  emit(os, "train.iterations", std::to_string(iterations));
  emit(os, "train.lr_init", fmt_double(lr_init));
  emit(os, "train.lr_final", fmt_double(lr_final));
  emit(os, "train.lambda_sem", fmt_double(lambda_sem));
  emit(os, "train.lambda_mono", fmt_double(lambda_mono));
  emit(os, "train.samples", std::to_string(n_samples));
  emit(os, "train.stratified", stratified ? "true" : "false");
  emit(os, "train.seed", std::to_string(train_seed));
  emit(os, "train.source_rays", std::to_string(source_rays));
  emit(os, "train.mono_patches", std::to_string(mono_patches));
  emit(os, "train.novel_rays", std::to_string(novel_rays));
  emit(os, "train.checkpoint_interval", std::to_string(checkpoint_interval));
  emit(os, "mode", mode_name(mode));
  return os.str();
}

void ExperimentConfig::validate() const {
  if (primitives < 1) throw ConfigError("scene.primitives must be >= 1");
  if (classes < 2) throw ConfigError("scene.classes must be >= 2");
  if (image_size < 16) throw ConfigError("scene.image_size must be >= 16");
  if (!(fov_deg > 10.0 && fov_deg < 170.0)) throw ConfigError("scene.fov_deg out of range");
  if (!(t_near > 0.0 && t_far > t_near)) throw ConfigError("scene t range invalid");
  if (source_views < 2) throw ConfigError("poses.source must be >= 2");
  if (novel_views < 1 || test_views < 1) throw ConfigError("pose counts must be >= 1");
  if (hidden_width < 8 || hidden_width % 2 != 0)
    throw ConfigError("field.width must be even and >= 8");
  if (trunk_depth < 2 || skip_layer < 1 || skip_layer >= trunk_depth)
    throw ConfigError("field depth/skip_layer inconsistent");
  if (codebook_layer_idx < 0 || codebook_layer_idx >= trunk_depth)
    throw ConfigError("field.codebook_layer out of range");
  if (num_heads < 1 || hidden_width % num_heads != 0)
    throw ConfigError("field.heads must divide field.width");
  if (iterations < 1) throw ConfigError("train.iterations must be >= 1");
  if (!(lr_init > 0.0) || !(lr_final > 0.0)) throw ConfigError("learning rates must be > 0");
  if (lambda_sem < 0.0 || lambda_mono < 0.0) throw ConfigError("loss weights must be >= 0");
  if (n_samples < 2) throw ConfigError("train.samples must be >= 2");
  if (source_rays < 1) throw ConfigError("train.source_rays must be >= 1");
  if (mono_patches < 0 || novel_rays < 0) throw ConfigError("ray counts must be >= 0");
  if (mono_patches > 0 && image_size < 32)
    throw ConfigError("image too small for 32x16 depth patches");
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  KeyTable table(cfg);
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": empty key or value");
    table.apply(key, value);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace s3
