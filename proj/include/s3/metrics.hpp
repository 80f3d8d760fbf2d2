// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "s3/image.hpp"

namespace s3 {

// 10 log10(1 / MSE) for [0,1] images, capped at 100 dB for identical inputs.
double psnr(const ColorImage& img, const ColorImage& ref);
double psnr(const GrayImage& img, const GrayImage& ref);

// Mean SSIM over valid 11x11 windows (Gaussian weights, sigma 1.5, k1 0.01,
// k2 0.03, dynamic range 1), averaged over channels.
double ssim(const ColorImage& img, const ColorImage& ref);
double ssim(const GrayImage& img, const GrayImage& ref);

// Fraction of pixels (restricted to mask if given) with equal labels.
double semantic_accuracy(const LabelImage& labels, const LabelImage& gt,
                         const MaskImage* mask = nullptr);

struct ValidityReport {
  double precision = 0;  // P(label correct | valid); NaN when nothing is valid
  double recall = 0;     // P(valid | label correct); NaN when nothing is correct
  std::int64_t valid_count = 0;
  std::int64_t correct_count = 0;
  std::int64_t valid_correct_count = 0;
};

ValidityReport validity_report(const MaskImage& validity, const LabelImage& rendered,
                               const LabelImage& gt);

struct ViewMetrics {
  int view = 0;
  double psnr = 0, ssim = 0, sem_accuracy = 0;
};

struct EvalReport {
  std::string name;  // which checkpoint/mode this evaluates
  std::vector<ViewMetrics> views;
  double psnr = 0, ssim = 0, sem_accuracy = 0;  // means over views
  bool has_validity = false;
  ValidityReport validity;

  void finalize();  // fills the means from the per-view rows
};

// Deterministic JSON (sorted keys, fixed float formatting).
std::string report_to_json(const EvalReport& report);
std::string reports_to_json(const std::vector<EvalReport>& reports);

// Fixed-width table, one report per row.
std::string format_report_table(const std::vector<EvalReport>& reports);

}  // namespace s3
