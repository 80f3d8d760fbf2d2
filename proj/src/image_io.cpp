// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "s3/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

namespace s3 {
namespace {

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw std::runtime_error(path.string() + ": " + what);
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open for reading");
  return in;
}

void put_u16(std::string& buf, std::uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

std::uint32_t get_u16(const char* p) {
  return static_cast<std::uint8_t>(p[0]) |
         (static_cast<std::uint32_t>(static_cast<std::uint8_t>(p[1])) << 8);
}

void write_f32_payload(std::ofstream& out, const std::vector<float>& data) {
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
}

std::vector<float> read_f32_payload(std::ifstream& in, std::size_t count,
                                    const std::filesystem::path& path) {
  std::vector<float> data(count);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float))
    fail(path, "truncated float payload");
  return data;
}

// Reads one PNM token, skipping whitespace and '#' comments.
std::string pnm_token(std::ifstream& in, const std::filesystem::path& path) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (!std::isspace(c)) {
      tok.push_back(static_cast<char>(c));
      break;
    }
  }
  while ((c = in.get()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(c));
  if (tok.empty()) fail(path, "unexpected end of header");
  return tok;
}

struct PnmHeader {
  int width = 0, height = 0, maxval = 0;
};

PnmHeader read_pnm_header(std::ifstream& in, const std::filesystem::path& path,
                          const std::string& magic, bool has_maxval) {
  if (pnm_token(in, path) != magic) fail(path, "bad magic, expected " + magic);
  PnmHeader h;
  h.width = std::stoi(pnm_token(in, path));
  h.height = std::stoi(pnm_token(in, path));
  if (has_maxval) {
    h.maxval = std::stoi(pnm_token(in, path));
    if (h.maxval != 255) fail(path, "only maxval 255 is supported");
  }
  if (h.width <= 0 || h.height <= 0) fail(path, "bad dimensions");
  return h;
}

}  // namespace

std::uint8_t quantize8(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

void write_ppm(const std::filesystem::path& path, const ColorImage& img) {
  auto out = open_out(path);
  out << "P6\n" << img.width() << " " << img.height() << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width()) * 3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      row[3 * x + 0] = quantize8(img.r(y, x));
      row[3 * x + 1] = quantize8(img.g(y, x));
      row[3 * x + 2] = quantize8(img.b(y, x));
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) fail(path, "write failed");
}

ColorImage read_ppm(const std::filesystem::path& path) {
  auto in = open_in(path);
  const PnmHeader h = read_pnm_header(in, path, "P6", true);
  ColorImage img(h.height, h.width);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(h.width) * 3);
  for (int y = 0; y < h.height; ++y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size()));
    if (static_cast<std::size_t>(in.gcount()) != row.size()) fail(path, "truncated pixel data");
    for (int x = 0; x < h.width; ++x) {
      img.r(y, x) = row[3 * x + 0] / 255.0;
      img.g(y, x) = row[3 * x + 1] / 255.0;
      img.b(y, x) = row[3 * x + 2] / 255.0;
    }
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const LabelImage& labels) {
  if (labels.maxCoeff() > 255 || labels.minCoeff() < 0)
    throw std::invalid_argument("write_pgm: labels must be in [0, 255]");
  auto out = open_out(path);
  out << "P5\n" << labels.cols() << " " << labels.rows() << "\n255\n";
  std::vector<std::uint8_t> row(static_cast<std::size_t>(labels.cols()));
  for (int y = 0; y < labels.rows(); ++y) {
    for (int x = 0; x < labels.cols(); ++x)
      row[x] = static_cast<std::uint8_t>(labels(y, x));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) fail(path, "write failed");
}

LabelImage read_pgm(const std::filesystem::path& path) {
  auto in = open_in(path);
  const PnmHeader h = read_pnm_header(in, path, "P5", true);
  LabelImage labels(h.height, h.width);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(h.width));
  for (int y = 0; y < h.height; ++y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size()));
    if (static_cast<std::size_t>(in.gcount()) != row.size()) fail(path, "truncated pixel data");
    for (int x = 0; x < h.width; ++x) labels(y, x) = row[x];
  }
  return labels;
}

void write_pbm(const std::filesystem::path& path, const MaskImage& mask) {
  auto out = open_out(path);
  out << "P4\n" << mask.cols() << " " << mask.rows() << "\n";
  const int bytes_per_row = (static_cast<int>(mask.cols()) + 7) / 8;
  std::vector<std::uint8_t> row(static_cast<std::size_t>(bytes_per_row));
  for (int y = 0; y < mask.rows(); ++y) {
    std::fill(row.begin(), row.end(), 0);
    for (int x = 0; x < mask.cols(); ++x)
      if (mask(y, x)) row[x / 8] |= static_cast<std::uint8_t>(0x80u >> (x % 8));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) fail(path, "write failed");
}

MaskImage read_pbm(const std::filesystem::path& path) {
  auto in = open_in(path);
  const PnmHeader h = read_pnm_header(in, path, "P4", false);
  MaskImage mask(h.height, h.width);
  const int bytes_per_row = (h.width + 7) / 8;
  std::vector<std::uint8_t> row(static_cast<std::size_t>(bytes_per_row));
  for (int y = 0; y < h.height; ++y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size()));
    if (static_cast<std::size_t>(in.gcount()) != row.size()) fail(path, "truncated pixel data");
    for (int x = 0; x < h.width; ++x)
      mask(y, x) = (row[x / 8] >> (7 - x % 8)) & 1u;
  }
  return mask;
}

void write_depth(const std::filesystem::path& path, const GrayImage& depth) {
  if (depth.rows() > 0xffff || depth.cols() > 0xffff)
    throw std::invalid_argument("write_depth: image too large for u16 header");
  auto out = open_out(path);
  std::string header = "DPTH";
  put_u16(header, static_cast<std::uint32_t>(depth.cols()));
  put_u16(header, static_cast<std::uint32_t>(depth.rows()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  std::vector<float> data(static_cast<std::size_t>(depth.size()));
  std::size_t i = 0;
  for (int y = 0; y < depth.rows(); ++y)
    for (int x = 0; x < depth.cols(); ++x) data[i++] = static_cast<float>(depth(y, x));
  write_f32_payload(out, data);
  if (!out) fail(path, "write failed");
}

GrayImage read_depth(const std::filesystem::path& path) {
  auto in = open_in(path);
  char header[8];
  in.read(header, 8);
  if (in.gcount() != 8 || std::memcmp(header, "DPTH", 4) != 0) fail(path, "bad depth header");
  const int width = static_cast<int>(get_u16(header + 4));
  const int height = static_cast<int>(get_u16(header + 6));
  if (width <= 0 || height <= 0) fail(path, "bad dimensions");
  const auto data = read_f32_payload(in, static_cast<std::size_t>(width) * height, path);
  GrayImage depth(height, width);
  std::size_t i = 0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) depth(y, x) = data[i++];
  return depth;
}

void write_logits(const std::filesystem::path& path, const LogitImage& logits) {
  if (logits.num_classes() == 0) throw std::invalid_argument("write_logits: empty");
  if (logits.height() > 0xffff || logits.width() > 0xffff || logits.num_classes() > 0xffff)
    throw std::invalid_argument("write_logits: dimensions too large for u16 header");
  auto out = open_out(path);
  std::string header = "LGTS";
  put_u16(header, static_cast<std::uint32_t>(logits.width()));
  put_u16(header, static_cast<std::uint32_t>(logits.height()));
  put_u16(header, static_cast<std::uint32_t>(logits.num_classes()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  std::vector<float> data(static_cast<std::size_t>(logits.width()) * logits.height() *
                          logits.num_classes());
  std::size_t i = 0;
  for (int y = 0; y < logits.height(); ++y)
    for (int x = 0; x < logits.width(); ++x)
      for (int c = 0; c < logits.num_classes(); ++c)
        data[i++] = static_cast<float>(logits.planes[c](y, x));
  write_f32_payload(out, data);
  if (!out) fail(path, "write failed");
}

LogitImage read_logits(const std::filesystem::path& path) {
  auto in = open_in(path);
  char header[10];
  in.read(header, 10);
  if (in.gcount() != 10 || std::memcmp(header, "LGTS", 4) != 0) fail(path, "bad logits header");
  const int width = static_cast<int>(get_u16(header + 4));
  const int height = static_cast<int>(get_u16(header + 6));
  const int classes = static_cast<int>(get_u16(header + 8));
  if (width <= 0 || height <= 0 || classes <= 0) fail(path, "bad dimensions");
  const auto data =
      read_f32_payload(in, static_cast<std::size_t>(width) * height * classes, path);
  LogitImage logits(height, width, classes);
  std::size_t i = 0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < classes; ++c) logits.planes[c](y, x) = data[i++];
  return logits;
}

}  // namespace s3
