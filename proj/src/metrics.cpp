// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0

#include "s3/metrics.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace s3 {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01, kK2 = 0.03;

void check_same_shape(Eigen::Index r1, Eigen::Index c1, Eigen::Index r2, Eigen::Index c2,
                      const char* who) {
  if (r1 != r2 || c1 != c2) throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

double mse_accum(const GrayImage& a, const GrayImage& b) {
  return (a - b).squaredNorm();
}

double psnr_from_mse(double mse) {
  if (mse <= 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

Eigen::VectorXd gaussian_kernel() {
  Eigen::VectorXd g(kWindow);
  const double c = (kWindow - 1) / 2.0;
  for (int i = 0; i < kWindow; ++i)
    g[i] = std::exp(-0.5 * (i - c) * (i - c) / (kSigma * kSigma));
  g /= g.sum();
  return g;
}

// Separable valid-window convolution with the SSIM Gaussian.
GrayImage gauss_filter(const GrayImage& img) {
  static const Eigen::VectorXd g = gaussian_kernel();
  const Eigen::Index h = img.rows(), w = img.cols();
  GrayImage tmp(h, w - kWindow + 1);
  for (Eigen::Index y = 0; y < h; ++y)
    for (Eigen::Index x = 0; x + kWindow <= w; ++x) {
      double acc = 0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * img(y, x + k);
      tmp(y, x) = acc;
    }
  GrayImage out(h - kWindow + 1, w - kWindow + 1);
  for (Eigen::Index y = 0; y + kWindow <= h; ++y)
    for (Eigen::Index x = 0; x < tmp.cols(); ++x) {
      double acc = 0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * tmp(y + k, x);
      out(y, x) = acc;
    }
  return out;
}

double ssim_channel(const GrayImage& x, const GrayImage& y) {
  if (x.rows() < kWindow || x.cols() < kWindow)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  const double c1 = kK1 * kK1, c2 = kK2 * kK2;  // L = 1
  GrayImage mu_x = gauss_filter(x);
  GrayImage mu_y = gauss_filter(y);
  GrayImage xx = gauss_filter((x.array() * x.array()).matrix());
  GrayImage yy = gauss_filter((y.array() * y.array()).matrix());
  GrayImage xy = gauss_filter((x.array() * y.array()).matrix());
  double acc = 0;
  for (Eigen::Index r = 0; r < mu_x.rows(); ++r)
    for (Eigen::Index c = 0; c < mu_x.cols(); ++c) {
      const double mx = mu_x(r, c), my = mu_y(r, c);
      const double vx = xx(r, c) - mx * mx;
      const double vy = yy(r, c) - my * my;
      const double cov = xy(r, c) - mx * my;
      acc += ((2 * mx * my + c1) * (2 * cov + c2)) /
             ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  return acc / static_cast<double>(mu_x.size());
}

}  // namespace

double psnr(const GrayImage& img, const GrayImage& ref) {
  check_same_shape(img.rows(), img.cols(), ref.rows(), ref.cols(), "psnr");
  return psnr_from_mse(mse_accum(img, ref) / static_cast<double>(img.size()));
}

double psnr(const ColorImage& img, const ColorImage& ref) {
  check_same_shape(img.r.rows(), img.r.cols(), ref.r.rows(), ref.r.cols(), "psnr");
  const double mse = (mse_accum(img.r, ref.r) + mse_accum(img.g, ref.g) +
                      mse_accum(img.b, ref.b)) /
                     (3.0 * static_cast<double>(img.r.size()));
  return psnr_from_mse(mse);
}

double ssim(const GrayImage& img, const GrayImage& ref) {
  check_same_shape(img.rows(), img.cols(), ref.rows(), ref.cols(), "ssim");
  return ssim_channel(img, ref);
}

double ssim(const ColorImage& img, const ColorImage& ref) {
  check_same_shape(img.r.rows(), img.r.cols(), ref.r.rows(), ref.r.cols(), "ssim");
  return (ssim_channel(img.r, ref.r) + ssim_channel(img.g, ref.g) +
          ssim_channel(img.b, ref.b)) /
         3.0;
}

double semantic_accuracy(const LabelImage& labels, const LabelImage& gt,
                         const MaskImage* mask) {
  check_same_shape(labels.rows(), labels.cols(), gt.rows(), gt.cols(),
                   "semantic_accuracy");
  std::int64_t total = 0, hit = 0;
  for (Eigen::Index r = 0; r < labels.rows(); ++r)
    for (Eigen::Index c = 0; c < labels.cols(); ++c) {
      if (mask && !(*mask)(r, c)) continue;
      ++total;
      if (labels(r, c) == gt(r, c)) ++hit;
    }
  if (total == 0) throw std::domain_error("semantic_accuracy: empty mask");
  return static_cast<double>(hit) / static_cast<double>(total);
}

ValidityReport validity_report(const MaskImage& validity, const LabelImage& rendered,
                               const LabelImage& gt) {
  check_same_shape(validity.rows(), validity.cols(), gt.rows(), gt.cols(),
                   "validity_report");
  check_same_shape(rendered.rows(), rendered.cols(), gt.rows(), gt.cols(),
                   "validity_report");
  ValidityReport rep;
  for (Eigen::Index r = 0; r < gt.rows(); ++r)
    for (Eigen::Index c = 0; c < gt.cols(); ++c) {
      const bool valid = validity(r, c) != 0;
      const bool correct = rendered(r, c) == gt(r, c);
      rep.valid_count += valid;
      rep.correct_count += correct;
      rep.valid_correct_count += valid && correct;
    }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  rep.precision = rep.valid_count > 0
                      ? static_cast<double>(rep.valid_correct_count) / rep.valid_count
                      : nan;
  rep.recall = rep.correct_count > 0
                   ? static_cast<double>(rep.valid_correct_count) / rep.correct_count
                   : nan;
  return rep;
}

void EvalReport::finalize() {
  psnr = ssim = sem_accuracy = 0;
  if (views.empty()) return;
  for (const ViewMetrics& v : views) {
    psnr += v.psnr;
    ssim += v.ssim;
    sem_accuracy += v.sem_accuracy;
  }
  psnr /= views.size();
  ssim /= views.size();
  sem_accuracy /= views.size();
}

namespace {

// Round-tripped through a fixed format so reruns emit byte-identical files.
nlohmann::json num(double v) {
  if (std::isnan(v)) return nullptr;
  std::ostringstream os;
  os.precision(10);
  os << v;
  return nlohmann::json::parse(os.str());
}

nlohmann::json report_json(const EvalReport& r) {
  nlohmann::json j;
  j["name"] = r.name;
  j["psnr"] = num(r.psnr);
  j["ssim"] = num(r.ssim);
  j["sem_accuracy"] = num(r.sem_accuracy);
  nlohmann::json views = nlohmann::json::array();
  for (const ViewMetrics& v : r.views) {
    nlohmann::json jv;
    jv["view"] = v.view;
    jv["psnr"] = num(v.psnr);
    jv["ssim"] = num(v.ssim);
    jv["sem_accuracy"] = num(v.sem_accuracy);
    views.push_back(jv);
  }
  j["views"] = views;
  if (r.has_validity) {
    nlohmann::json jv;
    jv["precision"] = num(r.validity.precision);
    jv["recall"] = num(r.validity.recall);
    jv["valid_count"] = r.validity.valid_count;
    jv["correct_count"] = r.validity.correct_count;
    jv["valid_correct_count"] = r.validity.valid_correct_count;
    j["validity"] = jv;
  }
  return j;
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  return report_json(report).dump(2) + "\n";
}

std::string reports_to_json(const std::vector<EvalReport>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const EvalReport& r : reports) arr.push_back(report_json(r));
  return arr.dump(2) + "\n";
}

std::string format_report_table(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << "mode                        psnr    ssim    sem_acc\n";
  os.setf(std::ios::fixed);
  for (const EvalReport& r : reports) {
    std::string name = r.name;
    if (name.size() < 26) name.resize(26, ' ');
    os.precision(2);
    os << name << "  " << r.psnr << "   ";
    os.precision(4);
    os << r.ssim << "  " << r.sem_accuracy << "\n";
  }
  return os.str();
}

}  // namespace s3
