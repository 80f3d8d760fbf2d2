// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "s3/pipeline.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "s3/image_io.hpp"
#include "s3/trainer.hpp"

namespace s3 {

namespace {

namespace fs = std::filesystem;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

std::string view_name(const char* prefix, int idx, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d%s", prefix, idx, ext);
  return buf;
}

// The directory fingerprint deliberately drops the mode line: training
// different students against the same artifacts is the normal workflow.
std::string config_fingerprint(const ExperimentConfig& cfg) {
  std::istringstream in(cfg.serialize());
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line))
    if (line.rfind("mode", 0) != 0) out << line << '\n';
  return out.str();
}

template <typename T>
Pose<T> pose_cast(const Posed& p) {
  return Pose<T>{p.rotation.cast<T>(), p.translation.cast<T>()};
}

template <typename T>
Intrinsics<T> intr_cast(const Intrinsicsd& in) {
  return Intrinsics<T>{static_cast<T>(in.fx), static_cast<T>(in.fy),
                       static_cast<T>(in.cx), static_cast<T>(in.cy), in.width,
                       in.height};
}

// World +y is "down", matching the camera convention, so cameras built here
// keep the horizon level.
Posed look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target) {
  const Eigen::Vector3d fwd = (target - eye).normalized();
  Eigen::Vector3d down_w(0.0, 1.0, 0.0);
  if (std::abs(fwd.y()) > 0.999) down_w = Eigen::Vector3d(1.0, 0.0, 0.0);
  const Eigen::Vector3d right = down_w.cross(fwd).normalized();
  const Eigen::Vector3d down = fwd.cross(right);
  Posed pose;
  pose.rotation.col(0) = right;
  pose.rotation.col(1) = down;
  pose.rotation.col(2) = fwd;
  pose.translation = eye;
  return pose;
}

void append_pose_block(std::ostream& os, const char* name,
                       const std::vector<Posed>& poses) {
  os << name << " " << poses.size() << "\n";
  os.precision(17);
  for (std::size_t i = 0; i < poses.size(); ++i) {
    os << i;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) os << " " << poses[i].rotation(r, c);
    for (int r = 0; r < 3; ++r) os << " " << poses[i].translation[r];
    os << "\n";
  }
}

std::vector<Posed> parse_pose_block(std::istream& is, const std::string& name) {
  std::string key;
  std::size_t count = 0;
  if (!(is >> key >> count) || key != name)
    throw std::runtime_error("poses.txt: expected block '" + name + "'");
  std::vector<Posed> poses(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t idx = 0;
    if (!(is >> idx) || idx != i)
      throw std::runtime_error("poses.txt: bad index in block '" + name + "'");
    Posed& p = poses[i];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        if (!(is >> p.rotation(r, c)))
          throw std::runtime_error("poses.txt: truncated rotation");
    for (int r = 0; r < 3; ++r)
      if (!(is >> p.translation[r]))
        throw std::runtime_error("poses.txt: truncated translation");
  }
  return poses;
}

FieldConfig make_field_config(const ExperimentConfig& cfg, const ModePolicy& policy) {
  FieldConfig fc;
  fc.num_classes = cfg.classes;
  fc.hidden_width = cfg.hidden_width;
  fc.trunk_depth = cfg.trunk_depth;
  fc.skip_layer = cfg.skip_layer;
  fc.pos_enc = EncodingConfig{cfg.pos_octaves, true};
  fc.dir_enc = EncodingConfig{cfg.dir_octaves, true};
  fc.input_scale = cfg.input_scale;
  fc.use_codebook = policy.codebook;
  fc.codebook_size = cfg.codebook_size;
  fc.num_heads = cfg.num_heads;
  fc.codebook_layer_idx = cfg.codebook_layer_idx;
  fc.attn_scale = cfg.attn_scale;
  fc.detach_semantics = policy.detach_semantics;
  fc.detach_codebook_from_sem = true;
  return fc;
}

TrainConfig make_train_config(const ExperimentConfig& cfg, const ModePolicy& policy) {
  TrainConfig tc;
  tc.iterations = cfg.iterations;
  tc.lr_init = cfg.lr_init;
  tc.lr_final = cfg.lr_final;
  tc.lambda_sem = policy.semantic_loss ? cfg.lambda_sem : 0.0;
  tc.lambda_mono = cfg.lambda_mono;
  tc.n_samples = cfg.n_samples;
  tc.stratified = cfg.stratified;
  tc.seed = cfg.train_seed;
  tc.checkpoint_interval = cfg.checkpoint_interval;
  return tc;
}

std::string loss_csv(const std::vector<LossRow>& rows) {
  std::ostringstream os;
  os.precision(12);
  os << "iteration,l_recon,l_sem,l_mono,total,lr\n";
  for (const LossRow& r : rows)
    os << r.iter << "," << r.l_recon << "," << r.l_sem << "," << r.l_mono << ","
       << r.total << "," << r.lr << "\n";
  return os.str();
}

// Runs the optimizer with periodic progress lines and a post-hoc warning when
// the scale/shift fit fell back to shift-only on some patches.
template <typename T>
std::vector<LossRow> run_training(SemanticField<T>& field, const BatchAssembler<T>& batches,
                                  const TrainConfig& tc, const std::string& tag) {
  const std::int64_t step = std::max<std::int64_t>(1, tc.iterations / 8);
  TrainHooks<T> hooks;
  hooks.on_row = [&](const LossRow& row) {
    if ((row.iter + 1) % step == 0 || row.iter + 1 == tc.iterations) {
      std::ostringstream os;
      os.precision(5);
      os << "[" << tag << "] iter " << (row.iter + 1) << "/" << tc.iterations
         << " recon " << row.l_recon << " sem " << row.l_sem << " mono "
         << row.l_mono;
      std::cout << os.str() << std::endl;
    }
  };
  std::vector<LossRow> rows = train(field, batches, tc, hooks);
  std::int64_t degenerate = 0;
  for (const LossRow& r : rows) degenerate += r.degenerate_patches;
  if (degenerate > 0)
    std::cerr << "[" << tag << "] warning: " << degenerate
              << " mono patches used the shift-only fallback\n";
  return rows;
}

constexpr RunMode kRowOrder[] = {
    RunMode::kTeacherOnly,          RunMode::kStudentSupervision,
    RunMode::kStudentFull,          RunMode::kAblationNoVerification,
    RunMode::kAblationNoRenderedLabels, RunMode::kAblationRenderedRgb,
    RunMode::kAblationWarpedRgb,    RunMode::kAblationCodebookOnly,
};

}  // namespace

bool PipelineState::has_student(const std::string& name) const {
  return std::find(students.begin(), students.end(), name) != students.end();
}

Intrinsicsd make_intrinsics(int image_size, double fov_deg) {
  Intrinsicsd intr;
  intr.width = image_size;
  intr.height = image_size;
  const double f = 0.5 * image_size / std::tan(0.5 * fov_deg * M_PI / 180.0);
  intr.fx = f;
  intr.fy = f;
  intr.cx = 0.5 * image_size;
  intr.cy = 0.5 * image_size;
  return intr;
}

std::vector<Posed> source_ring_poses(int count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("source_ring_poses: count < 1");
  Rng rng(mix_seed(seed, 0x50c5));
  std::vector<Posed> poses;
  poses.reserve(count);
  for (int i = 0; i < count; ++i) {
    // Inside-out ring: cameras near the origin aimed at the primitive ring.
    // The (sin, cos) azimuth convention matches scene generation.
    const double az = (i + 0.5 + rng.uniform(-0.15, 0.15)) * 2.0 * M_PI / count;
    const double radius = 0.45 + rng.uniform(-0.05, 0.05);
    const double height = rng.uniform(-0.2, 0.2);
    const Eigen::Vector3d eye(radius * std::sin(az), height, radius * std::cos(az));
    const Eigen::Vector3d target(2.8 * std::sin(az), 0.5 * height, 2.8 * std::cos(az));
    poses.push_back(look_at(eye, target));
  }
  return poses;
}

std::vector<Posed> interpolate_ring(const std::vector<Posed>& ring, int count,
                                    double phase, double rot_jitter, double trans_jitter,
                                    std::uint64_t seed) {
  if (ring.empty()) throw std::invalid_argument("interpolate_ring: empty ring");
  if (count < 1) throw std::invalid_argument("interpolate_ring: count < 1");
  Rng rng(mix_seed(seed, 0x17e9));
  const int n = static_cast<int>(ring.size());
  std::vector<Posed> poses;
  poses.reserve(count);
  for (int j = 0; j < count; ++j) {
    const double s = (j + phase) * static_cast<double>(n) / count;
    const int k = static_cast<int>(std::floor(s)) % n;
    const int k1 = (k + 1) % n;
    const double f = s - std::floor(s);
    const Eigen::Quaterniond qa(ring[k].rotation);
    const Eigen::Quaterniond qb(ring[k1].rotation);
    Eigen::Quaterniond q = qa.slerp(f, qb).normalized();
    Posed pose;
    pose.translation = (1.0 - f) * ring[k].translation + f * ring[k1].translation;
    if (rot_jitter > 0.0 || trans_jitter > 0.0) {
      Eigen::Vector3d axis(rng.gaussian(), rng.gaussian(), rng.gaussian());
      const double norm = axis.norm();
      axis = norm > 1e-12 ? Eigen::Vector3d(axis / norm) : Eigen::Vector3d::UnitY();
      const double angle = rot_jitter * rng.gaussian();
      q = Eigen::Quaterniond(Eigen::AngleAxisd(angle, axis)) * q;
      pose.translation += trans_jitter * Eigen::Vector3d(rng.gaussian(), rng.gaussian(),
                                                         rng.gaussian());
    }
    pose.rotation = q.normalized().toRotationMatrix();
    poses.push_back(pose);
  }
  return poses;
}

Pipeline::DirLock::DirLock(const fs::path& lock_path) {
  fd = ::open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
  if (fd < 0)
    throw std::runtime_error(lock_path.string() + ": cannot open lock file");
  if (::flock(fd, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd);
    fd = -1;
    throw std::runtime_error("experiment directory is in use by another process: " +
                             lock_path.parent_path().string());
  }
}

Pipeline::DirLock::~DirLock() {
  if (fd >= 0) {
    ::flock(fd, LOCK_UN);
    ::close(fd);
  }
}

Pipeline::Pipeline(ExperimentConfig cfg, std::filesystem::path out_dir)
    : cfg_(std::move(cfg)), out_(std::move(out_dir)) {
  cfg_.validate();
  fs::create_directories(out_);
  for (const char* dir : {"scene", "teacher", "novel", "validity", "student", "reports"})
    fs::create_directories(out_ / dir);
  DirLock lock(out_ / ".lock");

  const fs::path cfg_path = out_ / "config.txt";
  const std::string fingerprint = config_fingerprint(cfg_);
  if (fs::exists(cfg_path)) {
    if (read_text(cfg_path) != fingerprint)
      throw ConfigError("existing artifacts in " + out_.string() +
                        " were produced with a different config; use a fresh "
                        "output directory");
  } else {
    write_text(cfg_path, fingerprint);
  }
  load_state();
  lock_.fd = std::exchange(lock.fd, -1);
}

void Pipeline::save_state() const {
  nlohmann::json j;
  j["scene_built"] = state_.scene_built;
  j["teacher_trained"] = state_.teacher_trained;
  j["novel_rendered"] = state_.novel_rendered;
  j["verified"] = state_.verified;
  j["evaluated"] = state_.evaluated;
  j["students"] = state_.students;
  write_text(out_ / "state.json", j.dump(2) + "\n");
}

void Pipeline::load_state() {
  const fs::path path = out_ / "state.json";
  if (!fs::exists(path)) return;
  const nlohmann::json j = nlohmann::json::parse(read_text(path));
  state_.scene_built = j.value("scene_built", false);
  state_.teacher_trained = j.value("teacher_trained", false);
  state_.novel_rendered = j.value("novel_rendered", false);
  state_.verified = j.value("verified", false);
  state_.evaluated = j.value("evaluated", false);
  state_.students = j.value("students", std::vector<std::string>{});
}

Pipeline::Rig Pipeline::load_rig() const {
  Rig rig;
  rig.intr = make_intrinsics(cfg_.image_size, cfg_.fov_deg);
  std::istringstream in(read_text(out_ / "scene" / "poses.txt"));
  rig.source = parse_pose_block(in, "sources");
  rig.novel = parse_pose_block(in, "novels");
  rig.test = parse_pose_block(in, "tests");
  if (static_cast<int>(rig.source.size()) != cfg_.source_views ||
      static_cast<int>(rig.novel.size()) != cfg_.novel_views ||
      static_cast<int>(rig.test.size()) != cfg_.test_views)
    throw std::runtime_error("poses.txt does not match the configured view counts");
  return rig;
}

SyntheticScene Pipeline::load_scene() const {
  return read_scene(out_ / "scene" / "scene.txt");
}

void Pipeline::build_scene() {
  std::cout << "[scene] generating scene and ground truth\n";
  const SyntheticScene scene =
      generate_scene(cfg_.scene_seed, cfg_.primitives, cfg_.classes);
  const Intrinsicsd intr = make_intrinsics(cfg_.image_size, cfg_.fov_deg);
  const std::vector<Posed> sources =
      source_ring_poses(cfg_.source_views, mix_seed(cfg_.scene_seed, 0xa1));
  const std::vector<Posed> novels = interpolate_ring(
      sources, cfg_.novel_views, 0.0, 0.03, 0.03, mix_seed(cfg_.scene_seed, 0xa2));
  const std::vector<Posed> tests = interpolate_ring(
      sources, cfg_.test_views, 0.37, 0.03, 0.03, mix_seed(cfg_.scene_seed, 0xa3));

  const fs::path dir = out_ / "scene";
  write_scene(dir / "scene.txt", scene);
  {
    std::ostringstream os;
    append_pose_block(os, "sources", sources);
    append_pose_block(os, "novels", novels);
    append_pose_block(os, "tests", tests);
    write_text(dir / "poses.txt", os.str());
  }

  for (int i = 0; i < cfg_.source_views; ++i) {
    const GroundTruthView gt =
        render_gt_view(scene, sources[i], intr, cfg_.t_near, cfg_.t_far);
    const int foreground =
        static_cast<int>((gt.labels.array() != scene.background_class()).count());
    if (foreground == 0)
      throw std::runtime_error(
          "source view " + std::to_string(i) +
          " sees no primitive; pick a different scene.seed or wider fov");
    write_ppm(dir / view_name("src", i, ".ppm"), gt.rgb);
    write_pgm(dir / view_name("src", i, ".pgm"), gt.labels);
    write_depth(dir / view_name("src", i, ".dpth"), gt.depth);
    const GrayImage mono = pseudo_mono_depth(
        gt.depth, mix_seed(cfg_.scene_seed, 0xd47 + static_cast<std::uint64_t>(i)),
        0.85, 0.3, 0.02);
    write_depth(dir / view_name("src", i, "_mono.dpth"), mono);
  }
  for (int i = 0; i < cfg_.test_views; ++i) {
    const GroundTruthView gt =
        render_gt_view(scene, tests[i], intr, cfg_.t_near, cfg_.t_far);
    write_ppm(dir / view_name("test", i, ".ppm"), gt.rgb);
    write_pgm(dir / view_name("test", i, ".pgm"), gt.labels);
    write_depth(dir / view_name("test", i, ".dpth"), gt.depth);
  }
  // Ground truth at novel poses exists only for evaluation (validity
  // precision); training never reads these files.
  for (int i = 0; i < cfg_.novel_views; ++i) {
    const GroundTruthView gt =
        render_gt_view(scene, novels[i], intr, cfg_.t_near, cfg_.t_far);
    write_ppm(dir / view_name("novel_gt", i, ".ppm"), gt.rgb);
    write_pgm(dir / view_name("novel_gt", i, ".pgm"), gt.labels);
    write_depth(dir / view_name("novel_gt", i, ".dpth"), gt.depth);
  }

  state_.scene_built = true;
  save_state();
}

void Pipeline::train_teacher() {
  if (!state_.scene_built) throw std::runtime_error("train_teacher: scene not built");
  std::cout << "[teacher] training on " << cfg_.source_views << " source views\n";
  const Rig rig = load_rig();
  const Intrinsics<float> intr = intr_cast<float>(rig.intr);

  std::vector<SourceTrainView<float>> views(cfg_.source_views);
  for (int i = 0; i < cfg_.source_views; ++i) {
    views[i].pose = pose_cast<float>(rig.source[i]);
    views[i].rgb = read_ppm(out_ / "scene" / view_name("src", i, ".ppm"));
    views[i].labels = read_pgm(out_ / "scene" / view_name("src", i, ".pgm"));
    views[i].mono = read_depth(out_ / "scene" / view_name("src", i, "_mono.dpth"));
  }

  const ModePolicy policy = mode_policy(RunMode::kTeacherOnly);
  SemanticField<float> field(make_field_config(cfg_, policy));
  field.init_params(mix_seed(cfg_.train_seed, 0x7eac));

  BatchConfig bc;
  bc.source_rays = cfg_.source_rays;
  bc.mono_patches = cfg_.mono_patches;
  bc.novel_rays = 0;
  bc.novel_signal = NovelSignal::kNone;
  BatchAssembler<float> batches(intr, static_cast<float>(cfg_.t_near),
                                static_cast<float>(cfg_.t_far), std::move(views), {},
                                bc);

  const TrainConfig tc = make_train_config(cfg_, policy);
  const std::vector<LossRow> rows = run_training(field, batches, tc, "teacher");

  field.save_checkpoint(out_ / "teacher" / "teacher.ckpt", cfg_.serialize());
  write_text(out_ / "teacher" / "loss.csv", loss_csv(rows));
  state_.teacher_trained = true;
  save_state();
}

void Pipeline::render_novel_set() {
  if (!state_.teacher_trained)
    throw std::runtime_error("render_novel_set: teacher not trained");
  std::cout << "[novel] rendering " << cfg_.novel_views << " novel views\n";
  const Rig rig = load_rig();
  const Intrinsics<float> intr = intr_cast<float>(rig.intr);
  const SemanticField<float> field =
      SemanticField<float>::load_checkpoint(out_ / "teacher" / "teacher.ckpt");

  const fs::path dir = out_ / "novel";
  for (int j = 0; j < cfg_.novel_views; ++j) {
    const RenderedView view =
        render_view(field, intr, pose_cast<float>(rig.novel[j]),
                    static_cast<float>(cfg_.t_near), static_cast<float>(cfg_.t_far),
                    cfg_.n_samples);
    write_ppm(dir / view_name("nov", j, ".ppm"), view.color);
    write_pgm(dir / view_name("nov", j, ".pgm"), view.logits.argmax());
    write_depth(dir / view_name("nov", j, ".dpth"), view.depth);
    write_logits(dir / view_name("nov", j, ".lgts"), view.logits);
  }
  // Teacher depth at the source poses anchors verification; source labels come
  // from the posed ground truth, so only depth is kept here.
  for (int i = 0; i < cfg_.source_views; ++i) {
    const RenderedView view =
        render_view(field, intr, pose_cast<float>(rig.source[i]),
                    static_cast<float>(cfg_.t_near), static_cast<float>(cfg_.t_far),
                    cfg_.n_samples);
    write_depth(dir / view_name("src", i, ".dpth"), view.depth);
  }
  state_.novel_rendered = true;
  save_state();
}

void Pipeline::verify_novel_set() {
  if (!state_.novel_rendered)
    throw std::runtime_error("verify_novel_set: novel views not rendered");
  std::cout << "[verify] building validity maps\n";
  const Rig rig = load_rig();

  std::vector<ViewBundle> sources(cfg_.source_views);
  for (int i = 0; i < cfg_.source_views; ++i) {
    sources[i].pose = rig.source[i];
    sources[i].depth = read_depth(out_ / "novel" / view_name("src", i, ".dpth"));
    sources[i].labels = read_pgm(out_ / "scene" / view_name("src", i, ".pgm"));
  }
  for (int j = 0; j < cfg_.novel_views; ++j) {
    ViewBundle nov;
    nov.pose = rig.novel[j];
    nov.depth = read_depth(out_ / "novel" / view_name("nov", j, ".dpth"));
    nov.labels = read_pgm(out_ / "novel" / view_name("nov", j, ".pgm"));
    const ValidityMap validity = validity_map(sources, nov, rig.intr);
    write_pbm(out_ / "validity" / view_name("val", j, ".pbm"), validity);
  }
  state_.verified = true;
  save_state();
}

void Pipeline::train_student(RunMode mode) {
  if (mode == RunMode::kTeacherOnly)
    throw ConfigError("teacher_only is not a student mode");
  if (!state_.verified)
    throw std::runtime_error("train_student: verification has not run");
  const std::string name = mode_name(mode);
  std::cout << "[student] training mode " << name << "\n";
  const ModePolicy policy = mode_policy(mode);
  const Rig rig = load_rig();
  const Intrinsics<float> intr = intr_cast<float>(rig.intr);

  std::vector<SourceTrainView<float>> views(cfg_.source_views);
  for (int i = 0; i < cfg_.source_views; ++i) {
    views[i].pose = pose_cast<float>(rig.source[i]);
    views[i].rgb = read_ppm(out_ / "scene" / view_name("src", i, ".ppm"));
    views[i].labels = read_pgm(out_ / "scene" / view_name("src", i, ".pgm"));
    views[i].mono = read_depth(out_ / "scene" / view_name("src", i, "_mono.dpth"));
  }

  std::vector<NovelTrainView<float>> novels;
  if (policy.novel == NovelSignal::kSemantic) {
    novels.resize(cfg_.novel_views);
    for (int j = 0; j < cfg_.novel_views; ++j) {
      novels[j].pose = pose_cast<float>(rig.novel[j]);
      novels[j].labels = read_pgm(out_ / "novel" / view_name("nov", j, ".pgm"));
      novels[j].mask =
          policy.gate_by_validity
              ? read_pbm(out_ / "validity" / view_name("val", j, ".pbm"))
              : MaskImage::Ones(cfg_.image_size, cfg_.image_size);
    }
  } else if (policy.novel == NovelSignal::kRgb) {
    novels.resize(cfg_.novel_views);
    std::vector<ViewBundle> warp_sources;
    if (mode == RunMode::kAblationWarpedRgb) {
      warp_sources.resize(cfg_.source_views);
      for (int i = 0; i < cfg_.source_views; ++i) {
        warp_sources[i].pose = rig.source[i];
        warp_sources[i].depth = read_depth(out_ / "novel" / view_name("src", i, ".dpth"));
        warp_sources[i].labels = read_pgm(out_ / "scene" / view_name("src", i, ".pgm"));
        warp_sources[i].rgb = read_ppm(out_ / "scene" / view_name("src", i, ".ppm"));
      }
    }
    for (int j = 0; j < cfg_.novel_views; ++j) {
      novels[j].pose = pose_cast<float>(rig.novel[j]);
      if (mode == RunMode::kAblationWarpedRgb) {
        WarpResult merged = warp_rgb(warp_sources[0], rig.novel[j], rig.intr);
        for (int i = 1; i < cfg_.source_views; ++i)
          merge_warp(merged, warp_rgb(warp_sources[i], rig.novel[j], rig.intr));
        novels[j].rgb = std::move(merged.color);
        novels[j].mask = std::move(merged.coverage);
      } else {
        novels[j].rgb = read_ppm(out_ / "novel" / view_name("nov", j, ".ppm"));
        novels[j].mask = MaskImage::Ones(cfg_.image_size, cfg_.image_size);
      }
    }
  }

  SemanticField<float> field(make_field_config(cfg_, policy));
  // One shared init across modes so student comparisons start from the same
  // weights wherever shapes agree.
  field.init_params(mix_seed(cfg_.train_seed, 0x57d));

  BatchConfig bc;
  bc.source_rays = cfg_.source_rays;
  bc.mono_patches = cfg_.mono_patches;
  bc.novel_rays = policy.novel == NovelSignal::kNone ? 0 : cfg_.novel_rays;
  bc.novel_signal = policy.novel;
  BatchAssembler<float> batches(intr, static_cast<float>(cfg_.t_near),
                                static_cast<float>(cfg_.t_far), std::move(views),
                                std::move(novels), bc);

  const TrainConfig tc = make_train_config(cfg_, policy);
  const std::vector<LossRow> rows = run_training(field, batches, tc, name);

  field.save_checkpoint(out_ / "student" / (name + ".ckpt"), cfg_.serialize());
  write_text(out_ / "student" / (name + "_loss.csv"), loss_csv(rows));
  if (!state_.has_student(name)) state_.students.push_back(name);
  save_state();
}

std::vector<EvalReport> Pipeline::evaluate() {
  if (!state_.teacher_trained) throw std::runtime_error("evaluate: teacher not trained");
  std::cout << "[eval] rendering " << cfg_.test_views << " held-out views per model\n";
  const Rig rig = load_rig();
  const Intrinsics<float> intr = intr_cast<float>(rig.intr);

  std::vector<ColorImage> gt_rgb(cfg_.test_views);
  std::vector<LabelImage> gt_labels(cfg_.test_views);
  for (int k = 0; k < cfg_.test_views; ++k) {
    gt_rgb[k] = read_ppm(out_ / "scene" / view_name("test", k, ".ppm"));
    gt_labels[k] = read_pgm(out_ / "scene" / view_name("test", k, ".pgm"));
  }

  std::vector<std::pair<std::string, fs::path>> entries;
  entries.emplace_back(mode_name(RunMode::kTeacherOnly), out_ / "teacher" / "teacher.ckpt");
  for (RunMode mode : kRowOrder) {
    const std::string name = mode_name(mode);
    if (mode != RunMode::kTeacherOnly && state_.has_student(name))
      entries.emplace_back(name, out_ / "student" / (name + ".ckpt"));
  }

  std::vector<EvalReport> reports;
  reports.reserve(entries.size());
  for (const auto& [name, ckpt] : entries) {
    const SemanticField<float> field = SemanticField<float>::load_checkpoint(ckpt);
    EvalReport report;
    report.name = name;
    for (int k = 0; k < cfg_.test_views; ++k) {
      const RenderedView view =
          render_view(field, intr, pose_cast<float>(rig.test[k]),
                      static_cast<float>(cfg_.t_near), static_cast<float>(cfg_.t_far),
                      cfg_.n_samples);
      ViewMetrics vm;
      vm.view = k;
      vm.psnr = psnr(view.color, gt_rgb[k]);
      vm.ssim = ssim(view.color, gt_rgb[k]);
      vm.sem_accuracy = semantic_accuracy(view.logits.argmax(), gt_labels[k]);
      report.views.push_back(vm);
    }
    report.finalize();
    reports.push_back(std::move(report));
  }

  // Verification quality is a property of the teacher's renders, so the
  // pooled precision/recall lands on the teacher row.
  if (state_.verified && !reports.empty()) {
    ValidityReport pooled;
    for (int j = 0; j < cfg_.novel_views; ++j) {
      const MaskImage validity = read_pbm(out_ / "validity" / view_name("val", j, ".pbm"));
      const LabelImage rendered = read_pgm(out_ / "novel" / view_name("nov", j, ".pgm"));
      const LabelImage gt = read_pgm(out_ / "scene" / view_name("novel_gt", j, ".pgm"));
      const ValidityReport vr = validity_report(validity, rendered, gt);
      pooled.valid_count += vr.valid_count;
      pooled.correct_count += vr.correct_count;
      pooled.valid_correct_count += vr.valid_correct_count;
    }
    pooled.precision = pooled.valid_count > 0
                           ? static_cast<double>(pooled.valid_correct_count) /
                                 static_cast<double>(pooled.valid_count)
                           : std::numeric_limits<double>::quiet_NaN();
    pooled.recall = pooled.correct_count > 0
                        ? static_cast<double>(pooled.valid_correct_count) /
                              static_cast<double>(pooled.correct_count)
                        : std::numeric_limits<double>::quiet_NaN();
    reports.front().has_validity = true;
    reports.front().validity = pooled;
  }

  write_text(out_ / "reports" / "report.json", reports_to_json(reports));
  write_text(out_ / "reports" / "ablation_table.txt", format_report_table(reports));
  write_text(out_ / "reports" / "config.txt", cfg_.serialize());
  state_.evaluated = true;
  save_state();
  return reports;
}

std::vector<EvalReport> Pipeline::run_all() {
  if (!state_.scene_built) build_scene();
  if (!state_.teacher_trained) train_teacher();
  if (cfg_.mode != RunMode::kTeacherOnly) {
    if (!state_.novel_rendered) render_novel_set();
    if (!state_.verified) verify_novel_set();
    if (!state_.has_student(mode_name(cfg_.mode))) train_student(cfg_.mode);
  }
  return evaluate();
}

}  // namespace s3
