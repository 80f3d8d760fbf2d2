// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "s3/image_io.hpp"

#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "s3/common.hpp"

namespace fs = std::filesystem;
using namespace s3;

namespace {

fs::path temp_dir() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / "s3_image_io_test";
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("quantize8 clamps and rounds to nearest") {
  CHECK(quantize8(0.0) == 0);
  CHECK(quantize8(1.0) == 255);
  CHECK(quantize8(-0.5) == 0);
  CHECK(quantize8(2.0) == 255);
  // 0.5 * 255 = 127.5, lround rounds half away from zero.
  CHECK(quantize8(0.5) == 128);
  CHECK(quantize8(127.0 / 255.0) == 127);
  CHECK(quantize8(127.49 / 255.0) == 127);
  CHECK(quantize8(127.51 / 255.0) == 128);
}

TEST_CASE("ppm round trip preserves 8-bit colors exactly") {
  ColorImage img(5, 7);
  Rng rng(mix_seed(11, 0));
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      // Values chosen on the 8-bit lattice so the round trip is exact.
      img.r(y, x) = static_cast<int>(rng.uniform_int(256)) / 255.0;
      img.g(y, x) = static_cast<int>(rng.uniform_int(256)) / 255.0;
      img.b(y, x) = static_cast<int>(rng.uniform_int(256)) / 255.0;
    }
  }
  const fs::path path = temp_dir() / "round.ppm";
  write_ppm(path, img);
  const ColorImage back = read_ppm(path);
  REQUIRE(back.width() == 7);
  REQUIRE(back.height() == 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 7; ++x) {
      // Both sides are int / 255.0, so the trip is bit exact.
      CHECK(back.r(y, x) == img.r(y, x));
      CHECK(back.g(y, x) == img.g(y, x));
      CHECK(back.b(y, x) == img.b(y, x));
    }
}

TEST_CASE("ppm quantization error is bounded by half a step") {
  ColorImage img(3, 3);
  Rng rng(mix_seed(12, 0));
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      img.r(y, x) = rng.uniform();
      img.g(y, x) = rng.uniform();
      img.b(y, x) = rng.uniform();
    }
  const fs::path path = temp_dir() / "quant.ppm";
  write_ppm(path, img);
  const ColorImage back = read_ppm(path);
  const double half_step = 0.5 / 255.0 + 1e-12;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      CHECK(std::abs(back.r(y, x) - img.r(y, x)) <= half_step);
      CHECK(std::abs(back.g(y, x) - img.g(y, x)) <= half_step);
      CHECK(std::abs(back.b(y, x) - img.b(y, x)) <= half_step);
    }
}

TEST_CASE("ppm header and payload layout") {
  ColorImage img(1, 2);
  img.r(0, 0) = 1.0;
  img.g(0, 0) = 0.0;
  img.b(0, 0) = 0.0;
  img.r(0, 1) = 0.0;
  img.g(0, 1) = 0.0;
  img.b(0, 1) = 1.0;
  const fs::path path = temp_dir() / "layout.ppm";
  write_ppm(path, img);
  const std::string bytes = slurp(path);
  const std::string expected = std::string("P6\n2 1\n255\n") +
                               '\xff' + '\x00' + '\x00' + '\x00' + '\x00' + '\xff';
  CHECK(bytes == expected);
}

TEST_CASE("pgm round trip and range validation") {
  LabelImage labels(4, 6);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x) labels(y, x) = (y * 6 + x) * 10 % 256;
  const fs::path path = temp_dir() / "labels.pgm";
  write_pgm(path, labels);
  const LabelImage back = read_pgm(path);
  REQUIRE(back.rows() == 4);
  REQUIRE(back.cols() == 6);
  CHECK((back == labels));

  LabelImage bad(1, 1);
  bad(0, 0) = 256;
  CHECK_THROWS_AS(write_pgm(temp_dir() / "bad.pgm", bad), std::invalid_argument);
  bad(0, 0) = -1;
  CHECK_THROWS_AS(write_pgm(temp_dir() / "bad.pgm", bad), std::invalid_argument);
}

TEST_CASE("pgm reader skips comments and flexible whitespace") {
  const fs::path path = temp_dir() / "comment.pgm";
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5 # magic\n# a comment line\n 3\t2 # dims\n255\n";
    const char px[6] = {0, 1, 2, 3, 4, 5};
    out.write(px, 6);
  }
  const LabelImage back = read_pgm(path);
  REQUIRE(back.rows() == 2);
  REQUIRE(back.cols() == 3);
  CHECK(back(0, 0) == 0);
  CHECK(back(1, 2) == 5);
}

TEST_CASE("pbm bit packing is most significant bit first") {
  // Width 9 forces a 2-byte row with 7 bits of padding.
  MaskImage mask = MaskImage::Zero(2, 9);
  mask(0, 0) = 1;  // MSB of byte 0
  mask(0, 8) = 1;  // MSB of byte 1
  mask(1, 7) = 1;  // LSB of byte 0
  const fs::path path = temp_dir() / "bits.pbm";
  write_pbm(path, mask);
  const std::string bytes = slurp(path);
  const std::string header = "P4\n9 2\n";
  REQUIRE(bytes.size() == header.size() + 4);
  CHECK(bytes.substr(0, header.size()) == header);
  CHECK(static_cast<std::uint8_t>(bytes[header.size() + 0]) == 0x80);
  CHECK(static_cast<std::uint8_t>(bytes[header.size() + 1]) == 0x80);
  CHECK(static_cast<std::uint8_t>(bytes[header.size() + 2]) == 0x01);
  CHECK(static_cast<std::uint8_t>(bytes[header.size() + 3]) == 0x00);
}

TEST_CASE("pbm round trip at widths around byte boundaries") {
  for (int width : {1, 7, 8, 9, 16, 17}) {
    MaskImage mask(3, width);
    Rng rng(mix_seed(13, width));
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < width; ++x)
        mask(y, x) = rng.uniform() < 0.5 ? 0 : 1;
    const fs::path path = temp_dir() / ("w" + std::to_string(width) + ".pbm");
    write_pbm(path, mask);
    const MaskImage back = read_pbm(path);
    REQUIRE(back.rows() == 3);
    REQUIRE(back.cols() == width);
    CHECK((back == mask));
  }
}

TEST_CASE("depth files preserve float32 payloads") {
  GrayImage depth(3, 4);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x) depth(y, x) = 0.1 + y * 1.5 + x * 0.25;
  const fs::path path = temp_dir() / "d.dpth";
  write_depth(path, depth);
  const GrayImage back = read_depth(path);
  REQUIRE(back.rows() == 3);
  REQUIRE(back.cols() == 4);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x)
      CHECK(back(y, x) == static_cast<double>(static_cast<float>(depth(y, x))));
}

TEST_CASE("depth header is little endian u16 dimensions") {
  GrayImage depth = GrayImage::Zero(1, 300);
  const fs::path path = temp_dir() / "wide.dpth";
  write_depth(path, depth);
  const std::string bytes = slurp(path);
  REQUIRE(bytes.size() == 8 + 300 * sizeof(float));
  CHECK(bytes.substr(0, 4) == "DPTH");
  // 300 = 0x012c little endian.
  CHECK(static_cast<std::uint8_t>(bytes[4]) == 0x2c);
  CHECK(static_cast<std::uint8_t>(bytes[5]) == 0x01);
  CHECK(static_cast<std::uint8_t>(bytes[6]) == 0x01);
  CHECK(static_cast<std::uint8_t>(bytes[7]) == 0x00);
}

TEST_CASE("logits round trip preserves planes and argmax") {
  LogitImage logits(2, 3, 4);
  Rng rng(mix_seed(14, 0));
  for (int c = 0; c < 4; ++c)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 3; ++x)
        logits.planes[c](y, x) = static_cast<float>(rng.gaussian());
  const fs::path path = temp_dir() / "l.lgts";
  write_logits(path, logits);
  const LogitImage back = read_logits(path);
  REQUIRE(back.num_classes() == 4);
  REQUIRE(back.height() == 2);
  REQUIRE(back.width() == 3);
  for (int c = 0; c < 4; ++c)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 3; ++x)
        CHECK(back.planes[c](y, x) ==
              static_cast<double>(static_cast<float>(logits.planes[c](y, x))));
  CHECK((back.argmax() == logits.argmax()));
}

TEST_CASE("readers reject malformed files") {
  const fs::path missing = temp_dir() / "missing.ppm";
  CHECK_THROWS(read_ppm(missing));

  const fs::path bad_magic = temp_dir() / "bad_magic.ppm";
  {
    std::ofstream out(bad_magic, std::ios::binary);
    out << "P5\n2 2\n255\n....";
  }
  CHECK_THROWS_WITH(read_ppm(bad_magic), doctest::Contains("bad magic"));

  const fs::path truncated = temp_dir() / "trunc.ppm";
  {
    std::ofstream out(truncated, std::ios::binary);
    out << "P6\n4 4\n255\nabc";
  }
  CHECK_THROWS_WITH(read_ppm(truncated), doctest::Contains("truncated"));

  const fs::path high_maxval = temp_dir() / "maxval.pgm";
  {
    std::ofstream out(high_maxval, std::ios::binary);
    out << "P5\n1 1\n65535\n\0\0";
  }
  CHECK_THROWS_WITH(read_pgm(high_maxval), doctest::Contains("maxval"));

  const fs::path bad_depth = temp_dir() / "bad.dpth";
  {
    std::ofstream out(bad_depth, std::ios::binary);
    out << "NOPE1234";
  }
  CHECK_THROWS_WITH(read_depth(bad_depth), doctest::Contains("bad depth header"));

  const fs::path short_depth = temp_dir() / "short.dpth";
  {
    std::ofstream out(short_depth, std::ios::binary);
    std::string header = "DPTH";
    header.push_back('\x02');
    header.push_back('\x00');
    header.push_back('\x02');
    header.push_back('\x00');
    out.write(header.data(), 8);
    const float one = 1.0f;
    out.write(reinterpret_cast<const char*>(&one), sizeof(float));
  }
  CHECK_THROWS_WITH(read_depth(short_depth), doctest::Contains("truncated"));
}
