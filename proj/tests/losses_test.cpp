// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "s3/losses.hpp"

#include <doctest.h>

#include <cmath>

#include "s3/common.hpp"

using namespace s3;

TEST_CASE("recon_loss on hand-computed values") {
  Mat3X<double> colors(3, 2), targets(3, 2);
  colors << 1.0, 0.0, 0.5, 0.5, 0.0, 1.0;
  targets << 0.0, 0.0, 0.5, 0.0, 0.0, 1.0;
  // diffs: col0 = (1, 0, 0), col1 = (0, 0.5, 0); squared norm 1.25, mean 0.625
  const ReconLoss<double> l = recon_loss<double>(colors, targets);
  CHECK(l.loss == doctest::Approx(0.625).epsilon(1e-15));
  CHECK(l.d_color(0, 0) == doctest::Approx(1.0).epsilon(1e-15));   // 2 * 1 / 2
  CHECK(l.d_color(1, 1) == doctest::Approx(0.5).epsilon(1e-15));   // 2 * 0.5 / 2
  CHECK(l.d_color(2, 0) == 0.0);

  CHECK_THROWS_AS(recon_loss<double>(Mat3X<double>(3, 0), Mat3X<double>(3, 0)),
                  std::domain_error);
  CHECK_THROWS_AS(recon_loss<double>(colors, Mat3X<double>(3, 3)), std::invalid_argument);
}

TEST_CASE("recon_loss gradient matches finite differences") {
  Rng rng(mix_seed(41, 0));
  Mat3X<double> colors = Mat3X<double>::Random(3, 4);
  Mat3X<double> targets = Mat3X<double>::Random(3, 4);
  const ReconLoss<double> l = recon_loss<double>(colors, targets);
  const double h = 1e-7;
  for (int i = 0; i < 4; ++i)
    for (int r = 0; r < 3; ++r) {
      Mat3X<double> cp = colors, cm = colors;
      cp(r, i) += h;
      cm(r, i) -= h;
      const double fd =
          (recon_loss<double>(cp, targets).loss - recon_loss<double>(cm, targets).loss) / (2 * h);
      CHECK(l.d_color(r, i) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("ce_logits equals the direct softmax formula") {
  VecX<double> logits(4);
  logits << 0.2, -1.3, 2.0, 0.7;
  VecX<double> d;
  const double loss = ce_logits<double>(logits, 2, d);

  double denom = 0.0;
  for (int c = 0; c < 4; ++c) denom += std::exp(logits[c]);
  const double direct = -std::log(std::exp(logits[2]) / denom);
  CHECK(loss == doctest::Approx(direct).epsilon(1e-14));
  for (int c = 0; c < 4; ++c) {
    const double p = std::exp(logits[c]) / denom;
    CHECK(d[c] == doctest::Approx(p - (c == 2 ? 1.0 : 0.0)).epsilon(1e-13));
  }
  // Softmax gradient columns sum to zero.
  CHECK(d.sum() == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("ce_logits is stable at extreme magnitudes") {
  VecX<double> logits(3);
  VecX<double> d;
  logits << 1000.0, 999.0, -1000.0;
  const double loss = ce_logits<double>(logits, 0, d);
  CHECK(std::isfinite(loss));
  CHECK(loss == doctest::Approx(std::log1p(std::exp(-1.0))).epsilon(1e-12));
  logits << -1000.0, -1001.0, -1002.0;
  const double loss2 = ce_logits<double>(logits, 1, d);
  CHECK(std::isfinite(loss2));
  CHECK(d.allFinite());

  CHECK_THROWS_AS(ce_logits<double>(logits, 3, d), std::domain_error);
  CHECK_THROWS_AS(ce_logits<double>(logits, -1, d), std::domain_error);
}

TEST_CASE("ce_logits gradient matches finite differences") {
  Rng rng(mix_seed(42, 0));
  VecX<double> logits(5);
  for (int c = 0; c < 5; ++c) logits[c] = rng.uniform(-2.0, 2.0);
  VecX<double> d;
  ce_logits<double>(logits, 3, d);
  const double h = 1e-7;
  for (int c = 0; c < 5; ++c) {
    VecX<double> lp = logits, lm = logits;
    lp[c] += h;
    lm[c] -= h;
    VecX<double> scratch;
    const double fd =
        (ce_logits<double>(lp, 3, scratch) - ce_logits<double>(lm, 3, scratch)) / (2 * h);
    CHECK(d[c] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("semantic_loss splits additively under a shared denominator") {
  // The combined population loss must equal the sum of the per-population
  // calls when each call is handed the same total denominator.
  Rng rng(mix_seed(43, 0));
  const int C = 4, B = 10;
  MatX<double> logits = MatX<double>::Random(C, B);
  Eigen::VectorXi targets(B);
  VecX<double> weights(B);
  for (int i = 0; i < B; ++i) {
    targets[i] = static_cast<int>(rng.uniform_int(C));
    weights[i] = rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.2, 1.0);
  }
  const double denom = 10.0;
  const SemanticLoss<double> all = semantic_loss<double>(logits, targets, weights, denom);

  const int split = 6;
  const SemanticLoss<double> left = semantic_loss<double>(
      logits.leftCols(split), targets.head(split), weights.head(split), denom);
  const SemanticLoss<double> right = semantic_loss<double>(
      logits.rightCols(B - split), targets.tail(B - split), weights.tail(B - split), denom);
  CHECK(all.loss == doctest::Approx(left.loss + right.loss).epsilon(1e-13));
  CHECK(all.d_logits.leftCols(split).isApprox(left.d_logits, 1e-13));
  CHECK(all.d_logits.rightCols(B - split).isApprox(right.d_logits, 1e-13));
}

TEST_CASE("semantic_loss zero-weight rays contribute nothing but are validated") {
  MatX<double> logits = MatX<double>::Random(3, 2);
  Eigen::VectorXi targets(2);
  targets << 1, 2;
  VecX<double> weights(2);
  weights << 0.0, 1.0;
  const SemanticLoss<double> l = semantic_loss<double>(logits, targets, weights, 2.0);
  CHECK(l.d_logits.col(0).norm() == 0.0);
  VecX<double> d;
  CHECK(l.loss == doctest::Approx(ce_logits<double>(logits.col(1), 2, d) / 2.0).epsilon(1e-14));

  targets << 1, 5;  // out of range but weighted zero? weight 1 -> throws
  CHECK_THROWS_AS(semantic_loss<double>(logits, targets, weights, 2.0), std::domain_error);
  targets << 5, 2;  // out of range with zero weight still throws
  CHECK_THROWS_AS(semantic_loss<double>(logits, targets, weights, 2.0), std::domain_error);
  targets << 1, 2;
  CHECK_THROWS_AS(semantic_loss<double>(logits, targets, weights, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(
      semantic_loss<double>(logits, Eigen::VectorXi::Zero(3), weights, 2.0),
      std::invalid_argument);
}

TEST_CASE("semantic_loss gradient matches finite differences") {
  Rng rng(mix_seed(44, 0));
  const int C = 3, B = 4;
  MatX<double> logits = MatX<double>::Random(C, B);
  Eigen::VectorXi targets(B);
  VecX<double> weights(B);
  for (int i = 0; i < B; ++i) {
    targets[i] = static_cast<int>(rng.uniform_int(C));
    weights[i] = rng.uniform(0.1, 1.0);
  }
  const double denom = 7.0;
  const SemanticLoss<double> l = semantic_loss<double>(logits, targets, weights, denom);
  const double h = 1e-7;
  for (int i = 0; i < B; ++i)
    for (int c = 0; c < C; ++c) {
      MatX<double> lp = logits, lm = logits;
      lp(c, i) += h;
      lm(c, i) -= h;
      const double fd = (semantic_loss<double>(lp, targets, weights, denom).loss -
                         semantic_loss<double>(lm, targets, weights, denom).loss) /
                        (2 * h);
      CHECK(l.d_logits(c, i) == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("mono_depth_loss is zero for any affine transform of the target") {
  Rng rng(mix_seed(45, 0));
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 16;
    VecX<double> mono(n);
    for (int i = 0; i < n; ++i) mono[i] = rng.uniform(0.5, 5.0);
    const double a = rng.uniform(0.2, 3.0);
    const double b = rng.uniform(-1.0, 1.0);
    // rendered = (mono - b) / a, so a * rendered + b == mono exactly in math
    const VecX<double> rendered = ((mono.array() - b) / a).matrix();
    const MonoDepthLoss<double> l = mono_depth_loss<double>(rendered, mono);
    CHECK(l.loss < 1e-10);
    CHECK(l.scale == doctest::Approx(a).epsilon(1e-8));
    CHECK(l.shift == doctest::Approx(b).epsilon(1e-7));
    CHECK(!l.degenerate);
  }
}

TEST_CASE("mono_depth_loss fit matches the normal-equations solution") {
  Rng rng(mix_seed(46, 0));
  const int n = 12;
  VecX<double> rendered(n), mono(n);
  for (int i = 0; i < n; ++i) {
    rendered[i] = rng.uniform(0.5, 4.0);
    mono[i] = 0.8 * rendered[i] + 0.3 + 0.05 * rng.gaussian();
  }
  const MonoDepthLoss<double> l = mono_depth_loss<double>(rendered, mono);

  // Solve [sum d^2, sum d; sum d, n] [a; b] = [sum d m; sum m] by Cramer.
  const double sdd = rendered.squaredNorm();
  const double sd = rendered.sum();
  const double sdm = rendered.dot(mono);
  const double sm = mono.sum();
  const double det = sdd * n - sd * sd;
  const double a = (sdm * n - sd * sm) / det;
  const double b = (sdd * sm - sd * sdm) / det;
  CHECK(l.scale == doctest::Approx(a).epsilon(1e-10));
  CHECK(l.shift == doctest::Approx(b).epsilon(1e-10));
  const double expected_loss =
      (rendered.array() * a + b - mono.array()).matrix().squaredNorm() / n;
  CHECK(l.loss == doctest::Approx(expected_loss).epsilon(1e-12));
}

TEST_CASE("mono_depth_loss envelope gradient matches finite differences") {
  // The scale and shift refit at every evaluation, so agreement with FD
  // demonstrates the envelope argument, not just the residual formula.
  Rng rng(mix_seed(47, 0));
  const int n = 8;
  VecX<double> rendered(n), mono(n);
  for (int i = 0; i < n; ++i) {
    rendered[i] = rng.uniform(1.0, 3.0);
    mono[i] = 1.4 * rendered[i] - 0.2 + 0.1 * rng.gaussian();
  }
  const MonoDepthLoss<double> l = mono_depth_loss<double>(rendered, mono);
  const double h = 1e-6;
  for (int i = 0; i < n; ++i) {
    VecX<double> rp = rendered, rm = rendered;
    rp[i] += h;
    rm[i] -= h;
    const double fd =
        (mono_depth_loss<double>(rp, mono).loss - mono_depth_loss<double>(rm, mono).loss) /
        (2 * h);
    CHECK(l.d_depth[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("mono_depth_loss pins the scale on constant patches") {
  VecX<double> rendered = VecX<double>::Constant(6, 2.5);
  VecX<double> mono(6);
  mono << 1.0, 1.1, 0.9, 1.0, 1.05, 0.95;
  const MonoDepthLoss<double> l = mono_depth_loss<double>(rendered, mono);
  CHECK(l.degenerate);
  CHECK(l.scale == 1.0);
  CHECK(l.shift == doctest::Approx(mono.mean() - 2.5).epsilon(1e-13));

  CHECK_THROWS_AS(mono_depth_loss<double>(VecX<double>::Ones(1), VecX<double>::Ones(1)),
                  std::invalid_argument);
  CHECK_THROWS_AS(mono_depth_loss<double>(rendered, VecX<double>::Ones(3)),
                  std::invalid_argument);
}
