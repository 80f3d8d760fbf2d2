// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "s3/bdv.hpp"

#include <cmath>
#include <stdexcept>

namespace s3 {

namespace {

struct RoundedPixel {
  long u = 0, v = 0;
};

RoundedPixel round_pixel(const Pixeld& p) {
  return {std::lround(p.u), std::lround(p.v)};
}

bool lookup_ok(const Intrinsicsd& intr, const RoundedPixel& q) {
  return q.u >= 0 && q.u < intr.width && q.v >= 0 && q.v < intr.height;
}

bool is_background(const ViewBundle& view, int u, int v) {
  return view.depth(v, u) == view.sentinel_depth;
}

std::optional<Pixeld> project_through(const Posed& rel, const Intrinsicsd& intr,
                                      const Eigen::Vector3d& point_cam) {
  const Eigen::Vector3d moved = rel.rotation * point_cam + rel.translation;
  auto proj = project_point(intr, moved);
  if (!proj) return std::nullopt;
  if (!lookup_ok(intr, round_pixel(proj->pixel))) return std::nullopt;
  return proj->pixel;
}

}  // namespace

std::optional<Pixeld> project_src_to_nov(const ViewBundle& src, const Posed& nov_pose,
                                         const Intrinsicsd& intr, int u, int v) {
  const double d = src.depth(v, u);
  if (d <= 0.0) return std::nullopt;
  const Eigen::Vector3d p_cam =
      back_project(intr, Pixeld{static_cast<double>(u), static_cast<double>(v)}, d);
  return project_through(relative_pose(src.pose, nov_pose), intr, p_cam);
}

std::optional<Pixeld> project_nov_to_src(const ViewBundle& nov, const Posed& src_pose,
                                         const Intrinsicsd& intr, const Pixeld& p_hat) {
  const RoundedPixel q = round_pixel(p_hat);
  if (!lookup_ok(intr, q)) return std::nullopt;
  const double d = nov.depth(q.v, q.u);
  if (d <= 0.0) return std::nullopt;
  const Eigen::Vector3d p_cam = back_project(intr, p_hat, d);
  return project_through(relative_pose(nov.pose, src_pose), intr, p_cam);
}

VerifiedMap verify_pair(const ViewBundle& src, const ViewBundle& nov,
                        const Intrinsicsd& intr) {
  if (src.depth.rows() != intr.height || src.depth.cols() != intr.width ||
      nov.depth.rows() != intr.height || nov.depth.cols() != intr.width ||
      src.labels.rows() != intr.height || nov.labels.rows() != intr.height)
    throw std::invalid_argument("verify_pair: bundle/intrinsics dimension mismatch");

  VerifiedMap mask = VerifiedMap::Zero(intr.height, intr.width);
  // Both relative poses are fixed per pair; hoisting them keeps the per-pixel
  // arithmetic identical to the exhaustive reference implementation.
  const Posed src_to_nov = relative_pose(src.pose, nov.pose);
  const Posed nov_to_src = relative_pose(nov.pose, src.pose);

  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      if (is_background(src, u, v)) continue;
      const double d = src.depth(v, u);
      if (d <= 0.0) continue;
      const Eigen::Vector3d p_cam = back_project(
          intr, Pixeld{static_cast<double>(u), static_cast<double>(v)}, d);
      auto p_hat = project_through(src_to_nov, intr, p_cam);
      if (!p_hat) continue;
      const RoundedPixel q_hat = round_pixel(*p_hat);
      const double d_hat = nov.depth(q_hat.v, q_hat.u);
      if (d_hat <= 0.0) continue;
      auto p_back = project_through(nov_to_src, intr, back_project(intr, *p_hat, d_hat));
      if (!p_back) continue;
      const RoundedPixel q_back = round_pixel(*p_back);
      const int label = src.labels(v, u);
      if (nov.labels(q_hat.v, q_hat.u) == label &&
          src.labels(q_back.v, q_back.u) == label)
        mask(q_hat.v, q_hat.u) = 1;
    }
  }
  return mask;
}

ValidityMap validity_map(const std::vector<ViewBundle>& sources, const ViewBundle& nov,
                         const Intrinsicsd& intr) {
  if (sources.empty()) throw std::invalid_argument("validity_map: no sources");
  ValidityMap mask = ValidityMap::Zero(intr.height, intr.width);
  for (const ViewBundle& src : sources) {
    VerifiedMap m = verify_pair(src, nov, intr);
    mask = mask.cwiseMax(m);
  }
  return mask;
}

WarpResult warp_rgb(const ViewBundle& src, const Posed& nov_pose, const Intrinsicsd& intr) {
  if (!src.rgb) throw std::invalid_argument("warp_rgb: source bundle has no rgb");
  WarpResult out;
  out.color.resize(intr.height, intr.width);
  out.coverage = MaskImage::Zero(intr.height, intr.width);
  out.depth = GrayImage::Constant(intr.height, intr.width,
                                  std::numeric_limits<double>::infinity());
  const Posed src_to_nov = relative_pose(src.pose, nov_pose);
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      if (is_background(src, u, v)) continue;
      const double d = src.depth(v, u);
      if (d <= 0.0) continue;
      const Eigen::Vector3d p_cam = back_project(
          intr, Pixeld{static_cast<double>(u), static_cast<double>(v)}, d);
      const Eigen::Vector3d moved =
          src_to_nov.rotation * p_cam + src_to_nov.translation;
      auto proj = project_point(intr, moved);
      if (!proj) continue;
      const RoundedPixel q = round_pixel(proj->pixel);
      if (!lookup_ok(intr, q)) continue;
      if (proj->depth < out.depth(q.v, q.u)) {
        out.depth(q.v, q.u) = proj->depth;
        out.color.set(q.v, q.u, src.rgb->at(v, u));
        out.coverage(q.v, q.u) = 1;
      }
    }
  }
  return out;
}

void merge_warp(WarpResult& into, const WarpResult& from) {
  if (into.depth.rows() != from.depth.rows() || into.depth.cols() != from.depth.cols())
    throw std::invalid_argument("merge_warp: size mismatch");
  for (int v = 0; v < into.depth.rows(); ++v) {
    for (int u = 0; u < into.depth.cols(); ++u) {
      if (from.coverage(v, u) && from.depth(v, u) < into.depth(v, u)) {
        into.depth(v, u) = from.depth(v, u);
        into.color.set(v, u, from.color.at(v, u));
        into.coverage(v, u) = 1;
      }
    }
  }
}

}  // namespace s3
