// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "s3/common.hpp"

namespace s3 {

// Images are indexed (row, col) = (y, x), matching Eigen matrix indexing.
using GrayImage = Eigen::MatrixXd;
using LabelImage = Eigen::MatrixXi;
using MaskImage = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

// Planar RGB image, one matrix per channel.
struct ColorImage {
  GrayImage r, g, b;

  ColorImage() = default;
  ColorImage(int height, int width)
      : r(GrayImage::Zero(height, width)),
        g(GrayImage::Zero(height, width)),
        b(GrayImage::Zero(height, width)) {}

  int height() const { return static_cast<int>(r.rows()); }
  int width() const { return static_cast<int>(r.cols()); }

  void resize(int height, int width) {
    r = GrayImage::Zero(height, width);
    g = GrayImage::Zero(height, width);
    b = GrayImage::Zero(height, width);
  }

  Eigen::Vector3d at(int y, int x) const {
    return Eigen::Vector3d(r(y, x), g(y, x), b(y, x));
  }
  void set(int y, int x, const Eigen::Vector3d& rgb) {
    r(y, x) = rgb.x();
    g(y, x) = rgb.y();
    b(y, x) = rgb.z();
  }
};

// Per-pixel class scores, one plane per class.
struct LogitImage {
  std::vector<GrayImage> planes;

  LogitImage() = default;
  LogitImage(int height, int width, int num_classes)
      : planes(num_classes, GrayImage::Zero(height, width)) {}

  int height() const { return planes.empty() ? 0 : static_cast<int>(planes[0].rows()); }
  int width() const { return planes.empty() ? 0 : static_cast<int>(planes[0].cols()); }
  int num_classes() const { return static_cast<int>(planes.size()); }

  // Lowest index wins ties, so the result is deterministic.
  LabelImage argmax() const {
    if (planes.empty()) throw std::invalid_argument("LogitImage::argmax: empty");
    LabelImage labels = LabelImage::Zero(planes[0].rows(), planes[0].cols());
    for (int y = 0; y < planes[0].rows(); ++y)
      for (int x = 0; x < planes[0].cols(); ++x) {
        int best = 0;
        double best_v = planes[0](y, x);
        for (int c = 1; c < num_classes(); ++c)
          if (planes[c](y, x) > best_v) {
            best_v = planes[c](y, x);
            best = c;
          }
        labels(y, x) = best;
      }
    return labels;
  }
};

}  // namespace s3
