// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "s3/synth_scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace s3 {
namespace {

// Ray/sphere intersection: smallest t in (t_near, t_far), or -1.
double intersect_sphere(const Rayd& ray, const Eigen::Vector3d& center,
                        double radius) {
  const Eigen::Vector3d oc = ray.origin - center;
  const double b = oc.dot(ray.direction);
  const double c = oc.squaredNorm() - radius * radius;
  const double disc = b * b - c;
  if (disc < 0.0) return -1.0;
  const double sq = std::sqrt(disc);
  const double t0 = -b - sq;
  if (t0 > ray.t_near && t0 < ray.t_far) return t0;
  const double t1 = -b + sq;
  if (t1 > ray.t_near && t1 < ray.t_far) return t1;
  return -1.0;
}

// Slab test against an axis-aligned box: smallest t in (t_near, t_far), or -1.
double intersect_box(const Rayd& ray, const Eigen::Vector3d& center,
                     const Eigen::Vector3d& half) {
  double t_lo = -std::numeric_limits<double>::infinity();
  double t_hi = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double lo = center[a] - half[a], hi = center[a] + half[a];
    if (ray.direction[a] == 0.0) {
      if (ray.origin[a] < lo || ray.origin[a] > hi) return -1.0;
      continue;
    }
    double t0 = (lo - ray.origin[a]) / ray.direction[a];
    double t1 = (hi - ray.origin[a]) / ray.direction[a];
    if (t0 > t1) std::swap(t0, t1);
    t_lo = std::max(t_lo, t0);
    t_hi = std::min(t_hi, t1);
    if (t_lo > t_hi) return -1.0;
  }
  if (t_lo > ray.t_near && t_lo < ray.t_far) return t_lo;
  if (t_hi > ray.t_near && t_hi < ray.t_far) return t_hi;  // origin inside box
  return -1.0;
}

Eigen::Vector3d primitive_normal(const Primitive& prim, const Eigen::Vector3d& p) {
  if (prim.type == PrimitiveType::kSphere)
    return (p - prim.center).normalized();
  // Box: the axis with the largest |offset| / half-extent is the face hit.
  const Eigen::Vector3d rel = p - prim.center;
  int axis = 0;
  double best = -1.0;
  for (int a = 0; a < 3; ++a) {
    const double score = std::abs(rel[a]) / prim.size[a];
    if (score > best) {
      best = score;
      axis = a;
    }
  }
  Eigen::Vector3d n = Eigen::Vector3d::Zero();
  n[axis] = rel[axis] >= 0.0 ? 1.0 : -1.0;
  return n;
}

}  // namespace

Eigen::Vector3d scene_light_dir() {
  return Eigen::Vector3d(0.35, -0.85, 0.40).normalized();
}

SyntheticScene generate_scene(std::uint64_t seed, int num_primitives,
                              int num_classes) {
  if (num_primitives < 1) throw std::invalid_argument("generate_scene: num_primitives < 1");
  if (num_classes < 2) throw std::invalid_argument("generate_scene: need >= 2 classes");
  SyntheticScene scene;
  scene.num_classes = num_classes;
  Rng rng(mix_seed(seed, 0x5ce7e));

  const int fg_classes = num_classes - 1;
  std::vector<Eigen::Vector3d> base_albedo(fg_classes);
  for (int k = 0; k < fg_classes; ++k)
    base_albedo[k] = hsv_to_rgb(static_cast<double>(k) / fg_classes, 0.68, 0.82);

  scene.primitives.reserve(num_primitives);
  for (int i = 0; i < num_primitives; ++i) {
    Primitive prim;
    prim.class_id = i % fg_classes;
    prim.type = rng.uniform() < 0.5 ? PrimitiveType::kBox : PrimitiveType::kSphere;
    // Stratified azimuths give full ring coverage; radius keeps a clear gap
    // between the camera ring near the origin and the primitives.
    const double azimuth =
        (i + 0.5 + rng.uniform(-0.35, 0.35)) * 2.0 * M_PI / num_primitives;
    const double rho = rng.uniform(2.2, 3.4);
    const double y = rng.uniform(-0.9, 0.9);
    prim.center = Eigen::Vector3d(rho * std::sin(azimuth), y, rho * std::cos(azimuth));
    if (prim.type == PrimitiveType::kBox) {
      prim.size = Eigen::Vector3d(rng.uniform(0.3, 0.8), rng.uniform(0.3, 0.8),
                                  rng.uniform(0.3, 0.8));
    } else {
      const double r = rng.uniform(0.3, 0.7);
      prim.size = Eigen::Vector3d(r, 0.0, 0.0);
    }
    prim.albedo = base_albedo[prim.class_id];
    for (int c = 0; c < 3; ++c)
      prim.albedo[c] = std::clamp(prim.albedo[c] + rng.uniform(-0.06, 0.06), 0.05, 0.98);
    scene.primitives.push_back(prim);
  }
  return scene;
}

TraceResult trace(const SyntheticScene& scene, const Rayd& ray) {
  return trace(scene, ray, ray.direction);
}

TraceResult trace(const SyntheticScene& scene, const Rayd& ray,
                  const Eigen::Vector3d& forward) {
  double best_t = -1.0;
  const Primitive* best = nullptr;
  for (const Primitive& prim : scene.primitives) {
    const double t = prim.type == PrimitiveType::kSphere
                         ? intersect_sphere(ray, prim.center, prim.radius())
                         : intersect_box(ray, prim.center, prim.size);
    if (t > 0.0 && (best == nullptr || t < best_t)) {
      best_t = t;
      best = &prim;
    }
  }
  TraceResult out;
  if (best == nullptr) {
    out.rgb = scene.background_color;
    out.z_depth = ray.t_far;
    out.class_id = scene.background_class();
    return out;
  }
  const Eigen::Vector3d hit = ray.origin + best_t * ray.direction;
  const Eigen::Vector3d n = primitive_normal(*best, hit);
  const double lambert = std::max(0.0, n.dot(scene_light_dir()));
  const double term = (1.0 - scene.shading) + scene.shading * lambert;
  out.rgb = best->albedo * term;
  out.z_depth = best_t * ray.direction.dot(forward);
  out.class_id = best->class_id;
  return out;
}

GroundTruthView render_gt_view(const SyntheticScene& scene, const Posed& pose,
                               const Intrinsicsd& intr, double t_near,
                               double t_far) {
  GroundTruthView view;
  view.pose = pose;
  view.t_far = t_far;
  view.rgb = ColorImage(intr.height, intr.width);
  view.depth = GrayImage::Zero(intr.height, intr.width);
  view.labels = LabelImage::Zero(intr.height, intr.width);
  const Eigen::Vector3d forward = pose.forward();
  for (int y = 0; y < intr.height; ++y)
    for (int x = 0; x < intr.width; ++x) {
      const Rayd ray = ray_for_pixel(intr, pose,
                                     Pixeld{static_cast<double>(x), static_cast<double>(y)},
                                     t_near, t_far);
      const TraceResult hit = trace(scene, ray, forward);
      view.rgb.set(y, x, hit.rgb);
      view.depth(y, x) = hit.class_id == scene.background_class() ? t_far : hit.z_depth;
      view.labels(y, x) = hit.class_id;
    }
  return view;
}

GrayImage pseudo_mono_depth(const GrayImage& depth, std::uint64_t seed,
                            double scale, double shift, double noise_sigma) {
  Rng rng(mix_seed(seed, 0x30703));
  GrayImage mono(depth.rows(), depth.cols());
  for (int y = 0; y < depth.rows(); ++y)
    for (int x = 0; x < depth.cols(); ++x)
      mono(y, x) = scale * depth(y, x) + shift + noise_sigma * rng.gaussian();
  return mono;
}

std::string serialize_scene(const SyntheticScene& scene) {
  std::ostringstream out;
  out.precision(17);
  out << "classes " << scene.num_classes << "\n";
  out << "background " << scene.background_color.x() << " " << scene.background_color.y()
      << " " << scene.background_color.z() << "\n";
  out << "bounds " << scene.bounds.min().transpose() << " "
      << scene.bounds.max().transpose() << "\n";
  out << "shading " << scene.shading << "\n";
  for (const Primitive& p : scene.primitives) {
    out << (p.type == PrimitiveType::kBox ? "box " : "sphere ");
    out << p.center.transpose() << " ";
    if (p.type == PrimitiveType::kBox)
      out << p.size.transpose() << " ";
    else
      out << p.radius() << " ";
    out << p.albedo.transpose() << " " << p.class_id << "\n";
  }
  return out.str();
}

SyntheticScene parse_scene(const std::string& text) {
  SyntheticScene scene;
  scene.primitives.clear();
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "classes") {
      ls >> scene.num_classes;
    } else if (kind == "background") {
      ls >> scene.background_color.x() >> scene.background_color.y() >>
          scene.background_color.z();
    } else if (kind == "bounds") {
      Eigen::Vector3d lo, hi;
      ls >> lo.x() >> lo.y() >> lo.z() >> hi.x() >> hi.y() >> hi.z();
      scene.bounds = Eigen::AlignedBox3d(lo, hi);
    } else if (kind == "shading") {
      ls >> scene.shading;
    } else if (kind == "box" || kind == "sphere") {
      Primitive p;
      p.type = kind == "box" ? PrimitiveType::kBox : PrimitiveType::kSphere;
      ls >> p.center.x() >> p.center.y() >> p.center.z();
      if (p.type == PrimitiveType::kBox) {
        ls >> p.size.x() >> p.size.y() >> p.size.z();
      } else {
        double r;
        ls >> r;
        p.size = Eigen::Vector3d(r, 0.0, 0.0);
      }
      ls >> p.albedo.x() >> p.albedo.y() >> p.albedo.z() >> p.class_id;
      if (!ls) throw std::runtime_error("parse_scene: malformed primitive line");
      scene.primitives.push_back(p);
    } else {
      throw std::runtime_error("parse_scene: unknown record '" + kind + "'");
    }
  }
  if (scene.num_classes < 2) throw std::runtime_error("parse_scene: missing classes");
  return scene;
}

void write_scene(const std::filesystem::path& path, const SyntheticScene& scene) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << serialize_scene(scene);
}

SyntheticScene read_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scene(buf.str());
}

std::vector<Eigen::Vector3d> class_reference_colors(const SyntheticScene& scene) {
  std::vector<Eigen::Vector3d> colors(scene.num_classes, Eigen::Vector3d::Zero());
  std::vector<int> counts(scene.num_classes, 0);
  for (const Primitive& p : scene.primitives) {
    colors[p.class_id] += p.albedo;
    ++counts[p.class_id];
  }
  for (int k = 0; k + 1 < scene.num_classes; ++k)
    if (counts[k] > 0) colors[k] /= counts[k];
  colors[scene.background_class()] = scene.background_color;
  return colors;
}

Eigen::Vector3d hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = v - c;
  return Eigen::Vector3d(r + m, g + m, b + m);
}

}  // namespace s3
