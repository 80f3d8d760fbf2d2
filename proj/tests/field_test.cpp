// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "s3/field.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "s3/common.hpp"

using namespace s3;

namespace {

FieldConfig small_config() {
  FieldConfig cfg;
  cfg.num_classes = 3;
  cfg.hidden_width = 8;
  cfg.trunk_depth = 4;
  cfg.skip_layer = 2;
  cfg.pos_enc = {2, true};
  cfg.dir_enc = {1, true};
  cfg.use_codebook = true;
  cfg.codebook_size = 3;
  cfg.num_heads = 2;
  cfg.codebook_layer_idx = 3;
  return cfg;
}

struct Batch {
  Mat3X<double> x, d;
};

Batch make_batch(std::uint64_t seed, int B) {
  Batch b;
  b.x.resize(3, B);
  b.d.resize(3, B);
  Rng rng(mix_seed(seed, 0xba7c));
  for (int i = 0; i < B; ++i) {
    for (int r = 0; r < 3; ++r) b.x(r, i) = rng.uniform(-2.0, 2.0);
    Eigen::Vector3d dir(rng.gaussian(), rng.gaussian(), rng.gaussian());
    b.d.col(i) = dir.normalized();
  }
  return b;
}

bool tensor_is_zero(const SemanticField<double>& field, const VecX<double>& grad,
                    const std::string& name) {
  const TensorSpec& s = field.layout()[field.tensor_index(name)];
  return grad.segment(s.offset, s.size()).norm() == 0.0;
}

}  // namespace

TEST_CASE("positional encoding layout is component major") {
  EncodingConfig cfg{2, true};
  CHECK(cfg.dim() == 15);
  const Eigen::Vector3d x(0.3, -0.1, 2.0);
  const VecX<double> e = encode<double>(x, cfg);
  REQUIRE(e.size() == 15);
  for (int c = 0; c < 3; ++c) {
    const double v = x[c];
    CHECK(e[5 * c + 0] == v);
    CHECK(e[5 * c + 1] == doctest::Approx(std::sin(M_PI * v)).epsilon(1e-15));
    CHECK(e[5 * c + 2] == doctest::Approx(std::cos(M_PI * v)).epsilon(1e-15));
    CHECK(e[5 * c + 3] == doctest::Approx(std::sin(2 * M_PI * v)).epsilon(1e-15));
    CHECK(e[5 * c + 4] == doctest::Approx(std::cos(2 * M_PI * v)).epsilon(1e-15));
  }

  EncodingConfig no_input{1, false};
  CHECK(no_input.dim() == 6);
  const VecX<double> e2 = encode<double>(x, no_input);
  CHECK(e2[0] == doctest::Approx(std::sin(M_PI * 0.3)).epsilon(1e-15));
  CHECK(e2[1] == doctest::Approx(std::cos(M_PI * 0.3)).epsilon(1e-15));
}

TEST_CASE("encode_batch agrees with single-point encode") {
  EncodingConfig cfg{3, true};
  Batch b = make_batch(4, 5);
  MatX<double> out;
  encode_batch<double>(b.x, cfg, out);
  REQUIRE(out.cols() == 5);
  for (int i = 0; i < 5; ++i)
    CHECK(out.col(i).isApprox(encode<double>(Vec3<double>(b.x.col(i)), cfg), 1e-15));
}

TEST_CASE("field gradients match finite differences over every parameter") {
  FieldConfig cfg = small_config();
  cfg.detach_semantics = false;
  cfg.detach_codebook_from_sem = false;  // fully differentiable for the check
  SemanticField<double> field(cfg);
  field.init_params(31);

  const int B = 3;
  Batch batch = make_batch(31, B);
  Rng rng(mix_seed(31, 0x9d));
  VecX<double> a_r(B), a_s(B);
  Mat3X<double> d_color(3, B);
  MatX<double> d_logits(cfg.num_classes, B);
  for (int i = 0; i < B; ++i) {
    a_r[i] = rng.uniform(-1.0, 1.0);
    a_s[i] = rng.uniform(-1.0, 1.0);
    for (int r = 0; r < 3; ++r) d_color(r, i) = rng.uniform(-1.0, 1.0);
    for (int c = 0; c < cfg.num_classes; ++c) d_logits(c, i) = rng.uniform(-1.0, 1.0);
  }

  auto objective = [&]() {
    SemanticField<double>::Outputs out;
    field.forward(batch.x, batch.d, out);
    double j = 0.0;
    j += (a_r + a_s).dot(out.sigma);
    j += (d_color.array() * out.color.array()).sum();
    j += (d_logits.array() * out.logits.array()).sum();
    return j;
  };

  SemanticField<double>::Outputs out;
  SemanticField<double>::Cache cache;
  field.forward(batch.x, batch.d, out, &cache);
  SemanticField<double>::Upstream up;
  up.d_sigma_recon = a_r;
  up.d_sigma_sem = a_s;
  up.d_color = d_color;
  up.d_logits = d_logits;
  VecX<double> grad = VecX<double>::Zero(field.num_params());
  field.backward(cache, up, grad);

  double worst = 0.0;
  for (std::ptrdiff_t p = 0; p < field.num_params(); ++p) {
    const double theta = field.params()[p];
    const double h = 1e-5 * std::max(1.0, std::abs(theta));
    field.params()[p] = theta + h;
    const double jp = objective();
    field.params()[p] = theta - h;
    const double jm = objective();
    field.params()[p] = theta;
    const double fd = (jp - jm) / (2 * h);
    const double err = std::abs(fd - grad[p]) / std::max({1.0, std::abs(fd), std::abs(grad[p])});
    worst = std::max(worst, err);
  }
  CHECK(worst < 1e-5);
  // Every parameter group participates in this configuration.
  for (const TensorSpec& s : field.layout())
    CHECK_MESSAGE(grad.segment(s.offset, s.size()).norm() > 0.0, s.name);
}

TEST_CASE("detach_semantics confines the sem stream to the semantic head") {
  FieldConfig cfg = small_config();
  cfg.detach_semantics = true;
  SemanticField<double> field(cfg);
  field.init_params(32);
  Batch batch = make_batch(32, 4);

  SemanticField<double>::Outputs out;
  SemanticField<double>::Cache cache;
  field.forward(batch.x, batch.d, out, &cache);
  SemanticField<double>::Upstream up;
  up.d_sigma_sem = VecX<double>::Ones(4);
  up.d_logits = MatX<double>::Ones(cfg.num_classes, 4);
  VecX<double> grad = VecX<double>::Zero(field.num_params());
  field.backward(cache, up, grad);

  CHECK(!tensor_is_zero(field, grad, "sem_w"));
  CHECK(!tensor_is_zero(field, grad, "sem_b"));
  for (const TensorSpec& s : field.layout())
    if (s.name != "sem_w" && s.name != "sem_b")
      CHECK_MESSAGE(grad.segment(s.offset, s.size()).norm() == 0.0, s.name);
}

TEST_CASE("detach_codebook_from_sem blocks the sem stream at the codebook") {
  FieldConfig cfg = small_config();
  cfg.detach_semantics = false;
  cfg.detach_codebook_from_sem = true;
  SemanticField<double> field(cfg);
  field.init_params(33);
  Batch batch = make_batch(33, 4);

  SemanticField<double>::Outputs out;
  SemanticField<double>::Cache cache;
  field.forward(batch.x, batch.d, out, &cache);
  SemanticField<double>::Upstream up;
  up.d_sigma_sem = VecX<double>::Ones(4);
  up.d_logits = MatX<double>::Ones(cfg.num_classes, 4);
  VecX<double> grad = VecX<double>::Zero(field.num_params());
  field.backward(cache, up, grad);

  for (const char* name :
       {"codebook_words", "codebook_wq", "codebook_wk", "codebook_wv", "codebook_wo"})
    CHECK_MESSAGE(tensor_is_zero(field, grad, name), name);
  // The stream still reaches the trunk and the density head.
  CHECK(!tensor_is_zero(field, grad, "trunk_w0"));
  CHECK(!tensor_is_zero(field, grad, "density_w"));

  // The recon stream always reaches the codebook.
  grad.setZero();
  SemanticField<double>::Upstream recon;
  recon.d_sigma_recon = VecX<double>::Ones(4);
  recon.d_color = Mat3X<double>::Ones(3, 4);
  field.backward(cache, recon, grad);
  for (const char* name :
       {"codebook_words", "codebook_wq", "codebook_wk", "codebook_wv", "codebook_wo"})
    CHECK_MESSAGE(!tensor_is_zero(field, grad, name), name);
  CHECK(tensor_is_zero(field, grad, "sem_w"));
  CHECK(tensor_is_zero(field, grad, "sem_b"));
}

TEST_CASE("a zero-row logits gradient is treated as absent") {
  // Compositing an rgb-only batch yields a 0 x B d_logits. backward must not
  // touch the semantic head for it, let alone write past a 0-row product.
  SemanticField<double> field(small_config());
  field.init_params(34);
  Batch batch = make_batch(34, 4);

  SemanticField<double>::Outputs out;
  SemanticField<double>::Cache cache;
  field.forward(batch.x, batch.d, out, &cache);

  SemanticField<double>::Upstream up;
  up.d_sigma_recon = VecX<double>::Ones(4);
  up.d_color = Mat3X<double>::Ones(3, 4);
  VecX<double> expect = VecX<double>::Zero(field.num_params());
  field.backward(cache, up, expect);

  up.d_sigma_sem = VecX<double>::Zero(4);
  up.d_logits = MatX<double>(0, 4);
  VecX<double> grad = VecX<double>::Zero(field.num_params());
  field.backward(cache, up, grad);
  CHECK((grad - expect).norm() == 0.0);
}

TEST_CASE("codebook injection changes the forward pass") {
  FieldConfig cfg = small_config();
  SemanticField<double> with(cfg);
  with.init_params(34);
  cfg.use_codebook = false;
  SemanticField<double> without(cfg);
  without.init_params(34);
  // Shared prefix of the layout carries the same values under the same seed
  // only for matching shapes; copy the common tensors over instead.
  for (const TensorSpec& s : without.layout())
    without.tensor(s.name) = with.tensor(s.name);

  Batch batch = make_batch(34, 3);
  SemanticField<double>::Outputs a, b;
  with.forward(batch.x, batch.d, a);
  without.forward(batch.x, batch.d, b);
  CHECK(!a.sigma.isApprox(b.sigma, 1e-12));
}

TEST_CASE("init_params is deterministic and respects glorot bounds") {
  SemanticField<double> f1(small_config());
  SemanticField<double> f2(small_config());
  f1.init_params(77);
  f2.init_params(77);
  CHECK((f1.params() == f2.params()));
  f2.init_params(78);
  CHECK((f1.params() != f2.params()));

  for (const TensorSpec& s : f1.layout()) {
    auto t = f1.tensor(s.name);
    if (s.name.find("_b") != std::string::npos && s.name.find("codebook") == std::string::npos) {
      CHECK(t.norm() == 0.0);
    } else if (s.name == "codebook_words") {
      CHECK(t.norm() > 0.0);
    } else {
      const double bound = std::sqrt(6.0 / (s.rows + s.cols));
      CHECK(t.maxCoeff() <= bound);
      CHECK(t.minCoeff() >= -bound);
      CHECK(t.norm() > 0.0);
    }
  }
}

TEST_CASE("checkpoints round trip across scalar types") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "s3_field_test";
  fs::create_directories(dir);

  FieldConfig cfg = small_config();
  cfg.detach_semantics = true;
  SemanticField<double> field(cfg);
  field.init_params(55);
  const std::string extra = "run config\nline two";
  field.save_checkpoint(dir / "f.ckpt", extra);

  std::string extra_back;
  SemanticField<double> same = SemanticField<double>::load_checkpoint(dir / "f.ckpt", &extra_back);
  CHECK(extra_back == extra);
  CHECK(same.config().detach_semantics);
  CHECK(same.config().use_codebook);
  CHECK(same.num_params() == field.num_params());
  CHECK((same.params() == field.params()));

  // Double file loaded as float: values cast, shapes preserved.
  SemanticField<float> narrow = SemanticField<float>::load_checkpoint(dir / "f.ckpt");
  REQUIRE(narrow.num_params() == field.num_params());
  for (std::ptrdiff_t i = 0; i < field.num_params(); ++i)
    CHECK(narrow.params()[i] == static_cast<float>(field.params()[i]));

  // Float file loaded as double: exactly the float values.
  narrow.save_checkpoint(dir / "g.ckpt");
  SemanticField<double> widened = SemanticField<double>::load_checkpoint(dir / "g.ckpt");
  for (std::ptrdiff_t i = 0; i < field.num_params(); ++i)
    CHECK(widened.params()[i] == static_cast<double>(narrow.params()[i]));

  CHECK_THROWS(SemanticField<double>::load_checkpoint(dir / "missing.ckpt"));
  {
    std::ofstream bad(dir / "bad.ckpt", std::ios::binary);
    bad << "NOPelektrič";
  }
  CHECK_THROWS(SemanticField<double>::load_checkpoint(dir / "bad.ckpt"));
}

TEST_CASE("config validation rejects inconsistent dimensions") {
  auto expect_throw = [](FieldConfig cfg) {
    CHECK_THROWS_AS(SemanticField<double>{cfg}, std::invalid_argument);
  };
  FieldConfig base = small_config();

  FieldConfig c = base;
  c.trunk_depth = 1;
  expect_throw(c);
  c = base;
  c.skip_layer = 0;
  expect_throw(c);
  c = base;
  c.skip_layer = c.trunk_depth;
  expect_throw(c);
  c = base;
  c.hidden_width = 9;
  expect_throw(c);
  c = base;
  c.num_heads = 3;  // does not divide width 8
  expect_throw(c);
  c = base;
  c.codebook_layer_idx = c.trunk_depth;
  expect_throw(c);
  c = base;
  c.codebook_size = 0;
  expect_throw(c);
  c = base;
  c.pos_enc.octaves = -1;
  expect_throw(c);

  SemanticField<double> ok(base);
  CHECK_THROWS_AS(ok.tensor("no_such_tensor"), std::invalid_argument);
}

TEST_CASE("parameter layout is contiguous and named") {
  SemanticField<double> field(small_config());
  std::ptrdiff_t off = 0;
  for (const TensorSpec& s : field.layout()) {
    CHECK(s.offset == off);
    off += s.size();
  }
  CHECK(off == field.num_params());
  CHECK(field.tensor("trunk_w2").cols() == 8 + 15);  // skip layer sees [act, enc(x)]
  CHECK(field.tensor("codebook_words").rows() == 3);
  CHECK(field.tensor("codebook_words").cols() == 8);
}
