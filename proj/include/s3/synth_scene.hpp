// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0
//
// Analytic synthetic scenes: labeled boxes and spheres around the origin,
// flat albedo per primitive with single-directional-light Lambert shading.
// Serves as the ground-truth oracle for the whole pipeline, so everything
// here is deterministic in the seed and exactly reproducible.

#pragma once

#include <Eigen/Geometry>

#include <filesystem>
#include <string>
#include <vector>

#include "s3/geometry.hpp"
#include "s3/image.hpp"

namespace s3 {

enum class PrimitiveType { kBox, kSphere };

struct Primitive {
  PrimitiveType type = PrimitiveType::kSphere;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  // Half extents for boxes; radius in x (y, z unused) for spheres.
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  Eigen::Vector3d albedo = Eigen::Vector3d::Ones();
  int class_id = 0;

  double radius() const { return size.x(); }
};

struct SyntheticScene {
  std::vector<Primitive> primitives;
  int num_classes = 2;  // background class is num_classes - 1
  Eigen::Vector3d background_color = Eigen::Vector3d(0.62, 0.67, 0.72);
  Eigen::AlignedBox3d bounds{Eigen::Vector3d(-4.5, -4.5, -4.5),
                             Eigen::Vector3d(4.5, 4.5, 4.5)};
  // 0 = flat albedo, 1 = fully Lambertian against the directional light.
  double shading = 0.35;

  int background_class() const { return num_classes - 1; }
};

// World-space light direction used by the Lambert term (unit, pointing from
// surfaces toward the light).
Eigen::Vector3d scene_light_dir();

// Places `num_primitives` labeled primitives in a ring around the origin so
// that an inside-out camera ring sees them. Foreground classes 0..C-2 each get
// a base hue; per-primitive albedo jitters around it. Deterministic in seed.
SyntheticScene generate_scene(std::uint64_t seed, int num_primitives,
                              int num_classes);

struct TraceResult {
  Eigen::Vector3d rgb;
  double z_depth = 0.0;  // camera-frame z; ray.t_far when nothing is hit
  int class_id = 0;
};

// Nearest-hit trace over (ray.t_near, ray.t_far). `forward` is the camera
// optical axis in world coordinates and converts the hit parameter t into a
// camera-frame z depth; it defaults to the ray direction, which makes z == t.
// The Ray type does not carry the camera axis, so it is an extra argument.
TraceResult trace(const SyntheticScene& scene, const Rayd& ray);
TraceResult trace(const SyntheticScene& scene, const Rayd& ray,
                  const Eigen::Vector3d& forward);

struct GroundTruthView {
  Posed pose;
  ColorImage rgb;
  GrayImage depth;    // camera z; t_far sentinel on background
  LabelImage labels;  // background class where depth is the sentinel
  double t_far = 0.0;
};

GroundTruthView render_gt_view(const SyntheticScene& scene, const Posed& pose,
                               const Intrinsicsd& intr, double t_near,
                               double t_far);

// Monocular-depth stand-in: scale * depth + shift + gaussian noise, applied
// per pixel in row-major order. Deterministic in seed.
GrayImage pseudo_mono_depth(const GrayImage& depth, std::uint64_t seed,
                            double scale, double shift, double noise_sigma);

// Plain-text scene serialization (primitives + palette metadata).
std::string serialize_scene(const SyntheticScene& scene);
SyntheticScene parse_scene(const std::string& text);
void write_scene(const std::filesystem::path& path, const SyntheticScene& scene);
SyntheticScene read_scene(const std::filesystem::path& path);

// Mean albedo per class over a scene's primitives; the background class maps
// to the background color. Used by the RGB-nearest-class proxy metric.
std::vector<Eigen::Vector3d> class_reference_colors(const SyntheticScene& scene);

Eigen::Vector3d hsv_to_rgb(double h, double s, double v);

}  // namespace s3
