// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0
//
// Bi-directional verification between a source view (trusted labels and
// depth) and a rendered novel view. A source pixel is back-projected into the
// novel view, the novel view's depth sends it back, and the novel-view label
// is accepted only when all three lookups agree. Per-source verified maps are
// OR-ed into a validity map that gates semantic supervision on novel rays.
//
// All projections follow the raw-coordinate chain from geometry.hpp;
// continuous coordinates are rounded (half away from zero) for every image
// lookup. Labels are categorical so no interpolation anywhere.

#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "s3/geometry.hpp"
#include "s3/image.hpp"

namespace s3 {

struct ViewBundle {
  Posed pose;
  GrayImage depth;    // z-depth, world units
  LabelImage labels;
  std::optional<ColorImage> rgb;
  // Pixels whose depth equals this exactly are background and are skipped as
  // projection sources. NaN (the default) disables the rule.
  double sentinel_depth = std::numeric_limits<double>::quiet_NaN();
};

using VerifiedMap = MaskImage;
using ValidityMap = MaskImage;

// Continuous source-to-novel reprojection of pixel p using the source depth
// map. Empty when the point lands behind the novel camera or its rounded
// coordinates fall outside the novel image (every valid result is safe to
// look up after rounding).
std::optional<Pixeld> project_src_to_nov(const ViewBundle& src, const Posed& nov_pose,
                                         const Intrinsicsd& intr, int u, int v);

// The reverse chain: depth is read from the novel view at round(p_hat), the
// back-projection itself uses the continuous coordinates.
std::optional<Pixeld> project_nov_to_src(const ViewBundle& nov, const Posed& src_pose,
                                         const Intrinsicsd& intr, const Pixeld& p_hat);

// Marks round(p_hat) for every source pixel whose label survives the
// three-way consensus: source label, novel label at round(p_hat), and source
// label at the round-trip return pixel. Source background pixels are skipped;
// any chain reaching a novel pixel suffices (OR over collisions).
VerifiedMap verify_pair(const ViewBundle& src, const ViewBundle& nov,
                        const Intrinsicsd& intr);

// Element-wise OR of verify_pair over all sources.
ValidityMap validity_map(const std::vector<ViewBundle>& sources, const ViewBundle& nov,
                         const Intrinsicsd& intr);

struct WarpResult {
  ColorImage color;
  MaskImage coverage;  // 1 where some source pixel splatted
  GrayImage depth;     // winning projected depth; sentinel elsewhere
};

// Splats source RGB into the novel view, nearest projected depth winning on
// collisions. Only used by the warped-supervision ablation.
WarpResult warp_rgb(const ViewBundle& src, const Posed& nov_pose, const Intrinsicsd& intr);

// Folds another source's warp into an accumulated result, keeping the nearer
// depth where both wrote.
void merge_warp(WarpResult& into, const WarpResult& from);

}  // namespace s3
