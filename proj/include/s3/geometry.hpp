// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0
//
// Pinhole camera geometry. Conventions used throughout the project:
//   - camera frame is right-handed with +z forward, +x right, +y down;
//   - poses are camera-to-world rigid transforms;
//   - depth always means camera-frame z, not distance along the ray;
//   - pixel (u, v) addresses the center of image cell (u, v). Rays are cast
//    through cell centers (u + 0.5, v + 0.5); project_point/back_project work
//    in raw continuous coordinates so they invert each other exactly. Stated
//    explicitly because the verification stage rounds projected coordinates.

#pragma once

#include <Eigen/LU>  // is_rigid needs determinant()

#include <cmath>
#include <optional>
#include <stdexcept>

#include "s3/common.hpp"

namespace s3 {

template <typename T>
struct Pixel {
  T u = T(0);
  T v = T(0);
};

template <typename T>
struct Intrinsics {
  T fx = T(1), fy = T(1);
  T cx = T(0), cy = T(0);
  int width = 0, height = 0;

  Mat3<T> matrix() const {
    Mat3<T> k;
    k << fx, T(0), cx, T(0), fy, cy, T(0), T(0), T(1);
    return k;
  }

  bool contains(T u, T v) const {
    return u >= T(0) && u < T(width) && v >= T(0) && v < T(height);
  }
  bool contains(const Pixel<T>& p) const { return contains(p.u, p.v); }
};

// Camera-to-world transform: x_world = rotation * x_cam + translation.
// Also doubles as a general rigid transform between camera frames.
template <typename T>
struct Pose {
  Mat3<T> rotation = Mat3<T>::Identity();
  Vec3<T> translation = Vec3<T>::Zero();

  Vec3<T> to_world(const Vec3<T>& p_cam) const {
    return rotation * p_cam + translation;
  }
  Vec3<T> to_camera(const Vec3<T>& p_world) const {
    return rotation.transpose() * (p_world - translation);
  }
  // Optical axis and center of projection in world coordinates.
  Vec3<T> forward() const { return rotation.col(2); }
  Vec3<T> center() const { return translation; }

  Pose inverse() const {
    Pose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(rotation.transpose() * translation);
    return inv;
  }
  // Matrix composition order: compose(other) applies `other` first, then this.
  Pose compose(const Pose& other) const {
    Pose out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
  }

  bool is_rigid(T tol = T(1e-9)) const {
    const Mat3<T> rtr = rotation.transpose() * rotation;
    return (rtr - Mat3<T>::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - T(1)) <= tol;
  }
};

template <typename T>
struct Ray {
  Vec3<T> origin = Vec3<T>::Zero();
  Vec3<T> direction = Vec3<T>::UnitZ();  // unit length, world frame
  T t_near = T(0);
  T t_far = T(0);
};

template <typename T>
struct ProjectedPoint {
  Pixel<T> pixel;
  T depth = T(0);  // camera-frame z
};

// World-space ray through the center of image cell `px`.
template <typename T>
Ray<T> ray_for_pixel(const Intrinsics<T>& intr, const Pose<T>& pose,
                     const Pixel<T>& px, T t_near, T t_far) {
  if (!intr.contains(px))
    throw std::domain_error("ray_for_pixel: pixel outside image bounds");
  if (!(t_near > T(0)) || !(t_far > t_near))
    throw std::domain_error("ray_for_pixel: need 0 < t_near < t_far");
  const Vec3<T> dir_cam((px.u + T(0.5) - intr.cx) / intr.fx,
                        (px.v + T(0.5) - intr.cy) / intr.fy, T(1));
  Ray<T> ray;
  ray.origin = pose.center();
  ray.direction = (pose.rotation * dir_cam).normalized();
  ray.t_near = t_near;
  ray.t_far = t_far;
  return ray;
}

// Rigid transform taking src-camera coordinates to dst-camera coordinates.
template <typename T>
Pose<T> relative_pose(const Pose<T>& src, const Pose<T>& dst) {
  Pose<T> rel;
  rel.rotation = dst.rotation.transpose() * src.rotation;
  rel.translation = dst.rotation.transpose() * (src.translation - dst.translation);
  return rel;
}

// Perspective projection of a camera-frame point. Empty when the point is at
// or behind the camera plane (z <= 1e-9); callers treat that chain as invalid.
template <typename T>
std::optional<ProjectedPoint<T>> project_point(const Intrinsics<T>& intr,
                                               const Vec3<T>& p_cam) {
  if (!(p_cam.z() > T(1e-9))) return std::nullopt;
  ProjectedPoint<T> out;
  out.pixel.u = intr.fx * p_cam.x() / p_cam.z() + intr.cx;
  out.pixel.v = intr.fy * p_cam.y() / p_cam.z() + intr.cy;
  out.depth = p_cam.z();
  return out;
}

// Camera-frame point at depth z along the raw continuous pixel coordinate.
// Exact inverse of project_point.
template <typename T>
Vec3<T> back_project(const Intrinsics<T>& intr, const Pixel<T>& px, T depth) {
  if (!(depth > T(0)))
    throw std::domain_error("back_project: depth must be positive");
  return Vec3<T>((px.u - intr.cx) / intr.fx * depth,
                 (px.v - intr.cy) / intr.fy * depth, depth);
}

using Pixeld = Pixel<double>;
using Intrinsicsd = Intrinsics<double>;
using Posed = Pose<double>;
using Rayd = Ray<double>;

}  // namespace s3
