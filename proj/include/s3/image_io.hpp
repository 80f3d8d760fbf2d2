// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0
//
// On-disk image formats. All of them are exact round-trip contracts:
//   - RGB        binary PPM (P6), 8 bits per channel
//   - labels     binary PGM (P5), one byte per class id
//   - masks      binary PBM (P4), one bit per pixel
//   - depth      "DPTH" + u16 width + u16 height, then float32 little-endian
//   - logits     "LGTS" + u16 width + u16 height + u16 classes, then float32
// Multi-byte header fields are little-endian; float payloads are row-major,
// logits interleaved per pixel (all classes of a pixel adjacent).

#pragma once

#include <filesystem>
#include <string>

#include "s3/image.hpp"

namespace s3 {

void write_ppm(const std::filesystem::path& path, const ColorImage& img);
ColorImage read_ppm(const std::filesystem::path& path);

void write_pgm(const std::filesystem::path& path, const LabelImage& labels);
LabelImage read_pgm(const std::filesystem::path& path);

void write_pbm(const std::filesystem::path& path, const MaskImage& mask);
MaskImage read_pbm(const std::filesystem::path& path);

void write_depth(const std::filesystem::path& path, const GrayImage& depth);
GrayImage read_depth(const std::filesystem::path& path);

void write_logits(const std::filesystem::path& path, const LogitImage& logits);
LogitImage read_logits(const std::filesystem::path& path);

// 8-bit quantization used by write_ppm: round(clamp01(v) * 255).
std::uint8_t quantize8(double v);

}  // namespace s3
