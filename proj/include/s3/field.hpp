// Copyright 2026 The s3 Authors
// SPDX-License-Identifier: Apache-2.0
//
// The neural scene field: an 8-layer ReLU MLP trunk over positionally encoded
// points with a skip connection, plus three heads (softplus density, sigmoid
// RGB conditioned on the encoded view direction, linear per-class logits) and
// an optional semantic codebook queried with multi-head attention whose output
// is added to the trunk feature.
//
// Forward and reverse passes are written out by hand. The backward pass keeps
// two upstream gradient streams apart - "recon" (color/depth driven) and "sem"
// (logit driven) - because the two are routed differently:
//   - detach_semantics: the sem stream updates only the semantic head; it
//     never reaches the trunk, the other heads, or the codebook. Used by the
//     teacher so semantic supervision cannot disturb its geometry.
//   - detach_codebook_from_sem: the sem stream skips the codebook branch
//     (words and attention projections) but still updates trunk and heads.
//     Default student routing: the codebook learns from reconstruction only.

#pragma once

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "s3/common.hpp"

namespace s3 {

struct EncodingConfig {
  int octaves = 10;
  bool include_input = true;

  int dim(int components = 3) const {
    return components * ((include_input ? 1 : 0) + 2 * octaves);
  }
};

struct FieldConfig {
  int num_classes = 2;
  int hidden_width = 128;  // trunk width h; also the codebook word size d
  int trunk_depth = 8;
  int skip_layer = 4;  // this layer's input is [previous activation, enc(x)]
  EncodingConfig pos_enc{10, true};
  EncodingConfig dir_enc{4, true};
  // Positions are multiplied by this before encoding so that the scene fits
  // roughly in [-1, 1] where the low-frequency octaves are informative.
  double input_scale = 0.22;
  bool use_codebook = false;
  int codebook_size = 64;  // number of words
  int num_heads = 4;
  int codebook_layer_idx = 7;  // trunk layer whose output queries the codebook
  bool attn_scale = true;      // divide attention scores by sqrt(d_head)
  bool detach_semantics = false;
  bool detach_codebook_from_sem = true;

  int head_dim() const { return hidden_width / num_heads; }
};

// Component-major sinusoidal encoding: for each input component x_c the block
// [x_c, sin(2^0 pi x_c), cos(2^0 pi x_c), ..., sin(2^{L-1} pi x_c), cos(...)].
template <typename T>
void encode_batch(const Eigen::Ref<const Mat3X<T>>& x, const EncodingConfig& cfg,
                  MatX<T>& out) {
  const int B = static_cast<int>(x.cols());
  const int per = (cfg.include_input ? 1 : 0) + 2 * cfg.octaves;
  out.resize(3 * per, B);
  for (int c = 0; c < 3; ++c) {
    int row = c * per;
    if (cfg.include_input) out.row(row++) = x.row(c);
    T freq = static_cast<T>(M_PI);
    for (int k = 0; k < cfg.octaves; ++k) {
      out.row(row++) = (x.row(c) * freq).array().sin().matrix();
      out.row(row++) = (x.row(c) * freq).array().cos().matrix();
      freq *= T(2);
    }
  }
}

template <typename T>
VecX<T> encode(const Vec3<T>& x, const EncodingConfig& cfg) {
  Mat3X<T> in(3, 1);
  in.col(0) = x;
  MatX<T> out;
  encode_batch<T>(in, cfg, out);
  return out.col(0);
}

struct TensorSpec {
  std::string name;
  int rows = 0, cols = 0;
  std::ptrdiff_t offset = 0;

  int size() const { return rows * cols; }
};

template <typename T>
class SemanticField {
 public:
  using Vec = VecX<T>;
  using Mat = MatX<T>;

  struct Outputs {
    Vec sigma;     // B
    Mat3X<T> color;   // 3 x B
    Mat logits;    // C x B
    Mat feature;   // h x B, the feature the heads consume
  };

  // Everything backward() needs, captured by forward().
  struct Cache {
    int B = 0;
    Mat enc_x, enc_d;
    std::vector<Mat> acts;  // post-ReLU trunk activations, raw (pre-injection)
    Mat injected;           // acts[q] + f_sr when the codebook is active
    std::vector<Mat> attn;  // per head: softmax weights, K x B
    std::vector<Mat> query; // per head: queries, d_head x B
    Mat h1;                 // color hidden activation, h/2 x B
    Mat3X<T> color;         // sigmoid outputs
    Vec sigma;
  };

  struct Upstream {
    Vec d_sigma_recon, d_sigma_sem;  // B each; pass zero-sized for "none"
    Mat3X<T> d_color;                // 3 x B or empty
    Mat d_logits;                    // C x B or empty
  };

  explicit SemanticField(const FieldConfig& cfg) : cfg_(cfg) {
    validate_config();
    build_layout();
    params_ = Vec::Zero(total_params_);
  }

  const FieldConfig& config() const { return cfg_; }
  Vec& params() { return params_; }
  const Vec& params() const { return params_; }
  std::ptrdiff_t num_params() const { return total_params_; }
  const std::vector<TensorSpec>& layout() const { return layout_; }

  Eigen::Map<Mat> tensor(int i) {
    const TensorSpec& s = layout_[i];
    return Eigen::Map<Mat>(params_.data() + s.offset, s.rows, s.cols);
  }
  Eigen::Map<const Mat> tensor(int i) const {
    const TensorSpec& s = layout_[i];
    return Eigen::Map<const Mat>(params_.data() + s.offset, s.rows, s.cols);
  }
  int tensor_index(const std::string& name) const {
    for (int i = 0; i < static_cast<int>(layout_.size()); ++i)
      if (layout_[i].name == name) return i;
    throw std::invalid_argument("SemanticField: no tensor named " + name);
  }
  Eigen::Map<Mat> tensor(const std::string& name) { return tensor(tensor_index(name)); }
  Eigen::Map<const Mat> tensor(const std::string& name) const {
    return tensor(tensor_index(name));
  }

  // Glorot-uniform weights, zero biases, gaussian codebook words.
  void init_params(std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0xf1e1d));
    for (int i = 0; i < static_cast<int>(layout_.size()); ++i) {
      auto t = tensor(i);
      const std::string& name = layout_[i].name;
      if (name.find("_b") != std::string::npos && name.find("codebook") == std::string::npos) {
        t.setZero();
        continue;
      }
      if (name == "codebook_words") {
        const T s = T(1) / std::sqrt(static_cast<T>(cfg_.hidden_width));
        for (int col = 0; col < t.cols(); ++col)
          for (int row = 0; row < t.rows(); ++row)
            t(row, col) = s * static_cast<T>(rng.gaussian());
        continue;
      }
      const double bound = std::sqrt(6.0 / (t.rows() + t.cols()));
      for (int col = 0; col < t.cols(); ++col)
        for (int row = 0; row < t.rows(); ++row)
          t(row, col) = static_cast<T>(rng.uniform(-bound, bound));
    }
  }

  void forward(const Eigen::Ref<const Mat3X<T>>& x,
               const Eigen::Ref<const Mat3X<T>>& dirs, Outputs& out,
               Cache* cache = nullptr) const {
    if (x.cols() != dirs.cols())
      throw std::invalid_argument("SemanticField::forward: x/dirs size mismatch");
    const int B = static_cast<int>(x.cols());
    Cache local;
    Cache& cc = cache ? *cache : local;
    cc.B = B;
    encode_batch<T>((x * static_cast<T>(cfg_.input_scale)).eval(), cfg_.pos_enc, cc.enc_x);
    encode_batch<T>(dirs, cfg_.dir_enc, cc.enc_d);

    const int depth = cfg_.trunk_depth;
    cc.acts.resize(depth);
    const Mat* flow = nullptr;
    for (int l = 0; l < depth; ++l) {
      auto w = tensor(trunk_w_[l]);
      auto b = tensor(trunk_b_[l]);
      Mat& a = cc.acts[l];
      if (l == 0) {
        a.noalias() = w * cc.enc_x;
      } else if (l == cfg_.skip_layer) {
        a.noalias() = w.leftCols(cfg_.hidden_width) * (*flow);
        a.noalias() += w.rightCols(enc_x_dim_) * cc.enc_x;
      } else {
        a.noalias() = w * (*flow);
      }
      a.colwise() += b.col(0);
      a = a.cwiseMax(T(0));
      flow = &a;
      if (cfg_.use_codebook && l == cfg_.codebook_layer_idx) {
        query_codebook_batch(a, cc);
        flow = &cc.injected;
      }
    }
    const Mat& u = *flow;

    // density
    {
      auto w = tensor(density_w_);
      auto b = tensor(density_b_);
      Eigen::Matrix<T, 1, Eigen::Dynamic> pre = w * u;
      pre.array() += b(0, 0);
      out.sigma.resize(B);
      for (int i = 0; i < B; ++i) out.sigma[i] = softplus(pre(0, i));
      cc.sigma = out.sigma;
    }
    // color
    {
      auto w1 = tensor(color_w1_);
      auto b1 = tensor(color_b1_);
      auto w2 = tensor(color_w2_);
      auto b2 = tensor(color_b2_);
      cc.h1.noalias() = w1.leftCols(cfg_.hidden_width) * u;
      cc.h1.noalias() += w1.rightCols(enc_d_dim_) * cc.enc_d;
      cc.h1.colwise() += b1.col(0);
      cc.h1 = cc.h1.cwiseMax(T(0));
      Mat3X<T> pre = w2 * cc.h1;
      pre.colwise() += b2.col(0);
      out.color = (T(1) / (T(1) + (-pre.array()).exp())).matrix();  // sigmoid
      cc.color = out.color;
    }
    // semantics (view independent)
    {
      auto w = tensor(sem_w_);
      auto b = tensor(sem_b_);
      out.logits.noalias() = w * u;
      out.logits.colwise() += b.col(0);
    }
    out.feature = u;
  }

  Outputs forward_single(const Vec3<T>& x, const Vec3<T>& d) const {
    Mat3X<T> xs(3, 1), ds(3, 1);
    xs.col(0) = x;
    ds.col(0) = d;
    Outputs out;
    forward(xs, ds, out);
    return out;
  }

  // Multi-head attention lookup into the codebook for a single feature.
  Vec query_codebook(const Vec& f) const {
    if (!cfg_.use_codebook)
      throw std::domain_error("query_codebook: field has no codebook");
    Cache cc;
    Mat fm(f.size(), 1);
    fm.col(0) = f;
    query_codebook_batch(fm, cc);
    return cc.injected.col(0) - f;
  }

  // Accumulates parameter gradients into `grad` (same layout as params).
  void backward(const Cache& cc, const Upstream& up, Vec& grad) const {
    if (grad.size() != total_params_)
      throw std::invalid_argument("SemanticField::backward: grad size mismatch");
    const int B = cc.B;
    const int h = cfg_.hidden_width;
    const Mat& u = head_input(cc);

    Mat du_r = Mat::Zero(h, B);
    Mat du_s = Mat::Zero(h, B);

    // density head; softplus'(s) = 1 - exp(-softplus(s))
    if (up.d_sigma_recon.size() > 0 || up.d_sigma_sem.size() > 0) {
      Eigen::Array<T, 1, Eigen::Dynamic> spgrad(1, B);
      for (int i = 0; i < B; ++i) spgrad(0, i) = T(1) - std::exp(-cc.sigma[i]);
      Eigen::Matrix<T, 1, Eigen::Dynamic> ds_r =
          Eigen::Matrix<T, 1, Eigen::Dynamic>::Zero(1, B);
      Eigen::Matrix<T, 1, Eigen::Dynamic> ds_s = ds_r;
      if (up.d_sigma_recon.size() > 0)
        ds_r = (up.d_sigma_recon.transpose().array() * spgrad).matrix();
      if (up.d_sigma_sem.size() > 0 && !cfg_.detach_semantics)
        ds_s = (up.d_sigma_sem.transpose().array() * spgrad).matrix();
      auto w = tensor(density_w_);
      grad_map(density_w_, grad).noalias() += (ds_r + ds_s) * u.transpose();
      grad_map(density_b_, grad)(0, 0) += (ds_r + ds_s).sum();
      du_r.noalias() += w.transpose() * ds_r;
      du_s.noalias() += w.transpose() * ds_s;
    }

    // color head (always recon-side)
    if (up.d_color.cols() > 0) {
      Mat3X<T> dpre =
          (up.d_color.array() * cc.color.array() * (T(1) - cc.color.array())).matrix();
      grad_map(color_w2_, grad).noalias() += dpre * cc.h1.transpose();
      grad_map(color_b2_, grad).col(0) += dpre.rowwise().sum();
      auto w2 = tensor(color_w2_);
      Mat dh1 = (w2.transpose() * dpre).eval();
      dh1 = (cc.h1.array() > T(0)).select(dh1, T(0));
      auto gw1 = grad_map(color_w1_, grad);
      gw1.leftCols(h).noalias() += dh1 * u.transpose();
      gw1.rightCols(enc_d_dim_).noalias() += dh1 * cc.enc_d.transpose();
      grad_map(color_b1_, grad).col(0) += dh1.rowwise().sum();
      auto w1 = tensor(color_w1_);
      du_r.noalias() += w1.leftCols(h).transpose() * dh1;
    }

    // semantic head: weights always learn; the input path is the sem stream.
    // size(), not cols(): an rgb-supervised batch hands us a 0 x B matrix.
    if (up.d_logits.size() > 0) {
      grad_map(sem_w_, grad).noalias() += up.d_logits * u.transpose();
      grad_map(sem_b_, grad).col(0) += up.d_logits.rowwise().sum();
      if (!cfg_.detach_semantics) {
        auto w = tensor(sem_w_);
        du_s.noalias() += w.transpose() * up.d_logits;
      }
    }

    // trunk above the injection point: streams stay separate
    int l = cfg_.trunk_depth - 1;
    if (cfg_.use_codebook) {
      for (; l > cfg_.codebook_layer_idx; --l) {
        du_r = layer_backward(l, du_r, cc, grad);
        du_s = layer_backward(l, du_s, cc, grad);
      }
      Mat into_query = du_r;
      if (!cfg_.detach_codebook_from_sem && !cfg_.detach_semantics) into_query += du_s;
      Mat dflow = du_r + du_s;
      dflow += query_backward(cc, into_query, grad);
      for (; l >= 0; --l) dflow = layer_backward(l, dflow, cc, grad);
    } else {
      Mat dflow = du_r + du_s;
      for (; l >= 0; --l) dflow = layer_backward(l, dflow, cc, grad);
    }
  }

  void save_checkpoint(const std::filesystem::path& path,
                       const std::string& extra_text = {}) const;
  static SemanticField load_checkpoint(const std::filesystem::path& path,
                                       std::string* extra_text = nullptr);

 private:
  void validate_config() {
    if (cfg_.num_classes < 1 || cfg_.hidden_width < 1 || cfg_.trunk_depth < 2)
      throw std::invalid_argument("FieldConfig: bad dimensions");
    if (cfg_.skip_layer < 1 || cfg_.skip_layer >= cfg_.trunk_depth)
      throw std::invalid_argument("FieldConfig: skip_layer out of range");
    if (cfg_.hidden_width % 2 != 0)
      throw std::invalid_argument("FieldConfig: hidden_width must be even");
    if (cfg_.use_codebook) {
      if (cfg_.codebook_size < 1) throw std::invalid_argument("FieldConfig: empty codebook");
      if (cfg_.num_heads < 1 || cfg_.hidden_width % cfg_.num_heads != 0)
        throw std::invalid_argument("FieldConfig: heads must divide hidden_width");
      if (cfg_.codebook_layer_idx < 0 || cfg_.codebook_layer_idx >= cfg_.trunk_depth)
        throw std::invalid_argument("FieldConfig: codebook_layer_idx out of range");
    }
    if (cfg_.pos_enc.octaves < 0 || cfg_.dir_enc.octaves < 0)
      throw std::invalid_argument("FieldConfig: negative encoding octaves");
  }

  void build_layout() {
    enc_x_dim_ = cfg_.pos_enc.dim();
    enc_d_dim_ = cfg_.dir_enc.dim();
    const int h = cfg_.hidden_width;
    const int h2 = h / 2;
    std::ptrdiff_t off = 0;
    auto add = [&](const std::string& name, int rows, int cols) {
      layout_.push_back({name, rows, cols, off});
      off += static_cast<std::ptrdiff_t>(rows) * cols;
      return static_cast<int>(layout_.size()) - 1;
    };
    trunk_w_.resize(cfg_.trunk_depth);
    trunk_b_.resize(cfg_.trunk_depth);
    for (int l = 0; l < cfg_.trunk_depth; ++l) {
      int in = l == 0 ? enc_x_dim_ : (l == cfg_.skip_layer ? h + enc_x_dim_ : h);
      trunk_w_[l] = add("trunk_w" + std::to_string(l), h, in);
      trunk_b_[l] = add("trunk_b" + std::to_string(l), h, 1);
    }
    density_w_ = add("density_w", 1, h);
    density_b_ = add("density_b", 1, 1);
    color_w1_ = add("color_w1", h2, h + enc_d_dim_);
    color_b1_ = add("color_b1", h2, 1);
    color_w2_ = add("color_w2", 3, h2);
    color_b2_ = add("color_b2", 3, 1);
    sem_w_ = add("sem_w", cfg_.num_classes, h);
    sem_b_ = add("sem_b", cfg_.num_classes, 1);
    if (cfg_.use_codebook) {
      codebook_words_ = add("codebook_words", cfg_.codebook_size, h);
      codebook_wq_ = add("codebook_wq", h, h);
      codebook_wk_ = add("codebook_wk", h, h);
      codebook_wv_ = add("codebook_wv", h, h);
      codebook_wo_ = add("codebook_wo", h, h);
    }
    total_params_ = off;
  }

  static T softplus(T s) {
    if (s > T(30)) return s;
    return std::log1p(std::exp(s));
  }

  const Mat& head_input(const Cache& cc) const {
    if (cfg_.use_codebook && cfg_.codebook_layer_idx == cfg_.trunk_depth - 1)
      return cc.injected;
    return cc.acts[cfg_.trunk_depth - 1];
  }

  // The activation that feeds layer l (l >= 1).
  const Mat& flow_before(int l, const Cache& cc) const {
    if (cfg_.use_codebook && l - 1 == cfg_.codebook_layer_idx) return cc.injected;
    return cc.acts[l - 1];
  }

  Eigen::Map<Mat> grad_map(int i, Vec& grad) const {
    const TensorSpec& s = layout_[i];
    return Eigen::Map<Mat>(grad.data() + s.offset, s.rows, s.cols);
  }

  void query_codebook_batch(const Mat& f, Cache& cc) const {
    const int B = static_cast<int>(f.cols());
    const int dh = cfg_.head_dim();
    const int nh = cfg_.num_heads;
    auto words = tensor(codebook_words_);
    auto wq = tensor(codebook_wq_);
    auto wk = tensor(codebook_wk_);
    auto wv = tensor(codebook_wv_);
    auto wo = tensor(codebook_wo_);
    const T scale = cfg_.attn_scale ? T(1) / std::sqrt(static_cast<T>(dh)) : T(1);
    cc.attn.resize(nh);
    cc.query.resize(nh);
    Mat concat(cfg_.hidden_width, B);
    for (int i = 0; i < nh; ++i) {
      Mat keys = words * wk.middleCols(i * dh, dh);   // K x d_head
      Mat vals = words * wv.middleCols(i * dh, dh);   // K x d_head
      cc.query[i].noalias() = wq.middleCols(i * dh, dh).transpose() * f;
      Mat scores = (keys * cc.query[i]) * scale;      // K x B
      // column-wise softmax, shifted for stability
      Mat& attn = cc.attn[i];
      attn = scores;
      for (int col = 0; col < B; ++col) {
        auto c = attn.col(col);
        const T m = c.maxCoeff();
        c = (c.array() - m).exp().matrix();
        c /= c.sum();
      }
      concat.middleRows(i * dh, dh).noalias() = vals.transpose() * attn;
    }
    cc.injected.noalias() = wo.transpose() * concat;
    cc.injected += f;
  }

  // Returns the gradient w.r.t. the query feature; accumulates codebook grads.
  Mat query_backward(const Cache& cc, const Mat& d_fsr, Vec& grad) const {
    const int B = cc.B;
    const int dh = cfg_.head_dim();
    const int nh = cfg_.num_heads;
    const Mat& f = cc.acts[cfg_.codebook_layer_idx];
    auto words = tensor(codebook_words_);
    auto wq = tensor(codebook_wq_);
    auto wk = tensor(codebook_wk_);
    auto wv = tensor(codebook_wv_);
    auto wo = tensor(codebook_wo_);
    const T scale = cfg_.attn_scale ? T(1) / std::sqrt(static_cast<T>(dh)) : T(1);

    // rebuild the concatenated head outputs for the W_o gradient
    Mat concat(cfg_.hidden_width, B);
    for (int i = 0; i < nh; ++i) {
      Mat vals = words * wv.middleCols(i * dh, dh);
      concat.middleRows(i * dh, dh).noalias() = vals.transpose() * cc.attn[i];
    }
    grad_map(codebook_wo_, grad).noalias() += concat * d_fsr.transpose();
    Mat dconcat = wo * d_fsr;

    Mat df = Mat::Zero(f.rows(), B);
    auto gwords = grad_map(codebook_words_, grad);
    for (int i = 0; i < nh; ++i) {
      Mat keys = words * wk.middleCols(i * dh, dh);
      Mat vals = words * wv.middleCols(i * dh, dh);
      const Mat& attn = cc.attn[i];
      Mat dout = dconcat.middleRows(i * dh, dh);  // d_head x B
      Mat dattn = vals * dout;                    // K x B
      Mat dvals = attn * dout.transpose();        // K x d_head
      // softmax backward per column
      Mat dscores(attn.rows(), B);
      for (int col = 0; col < B; ++col) {
        const T dot = attn.col(col).dot(dattn.col(col));
        dscores.col(col) =
            (attn.col(col).array() * (dattn.col(col).array() - dot)).matrix();
      }
      dscores *= scale;
      Mat dquery = keys.transpose() * dscores;    // d_head x B
      Mat dkeys = dscores * cc.query[i].transpose();  // K x d_head
      grad_map(codebook_wq_, grad).middleCols(i * dh, dh).noalias() +=
          f * dquery.transpose();
      df.noalias() += wq.middleCols(i * dh, dh) * dquery;
      gwords.noalias() += dkeys * wk.middleCols(i * dh, dh).transpose();
      gwords.noalias() += dvals * wv.middleCols(i * dh, dh).transpose();
      grad_map(codebook_wk_, grad).middleCols(i * dh, dh).noalias() +=
          words.transpose() * dkeys;
      grad_map(codebook_wv_, grad).middleCols(i * dh, dh).noalias() +=
          words.transpose() * dvals;
    }
    return df;
  }

  // ReLU + linear backward for trunk layer l; returns upstream for the layer
  // below (empty for l == 0).
  Mat layer_backward(int l, const Mat& dout, const Cache& cc, Vec& grad) const {
    const Mat& a = cc.acts[l];
    Mat dz = (a.array() > T(0)).select(dout, T(0));
    auto gw = grad_map(trunk_w_[l], grad);
    auto gb = grad_map(trunk_b_[l], grad);
    gb.col(0) += dz.rowwise().sum();
    auto w = tensor(trunk_w_[l]);
    if (l == 0) {
      gw.noalias() += dz * cc.enc_x.transpose();
      return Mat();
    }
    if (l == cfg_.skip_layer) {
      const Mat& prev = flow_before(l, cc);
      gw.leftCols(cfg_.hidden_width).noalias() += dz * prev.transpose();
      gw.rightCols(enc_x_dim_).noalias() += dz * cc.enc_x.transpose();
      return w.leftCols(cfg_.hidden_width).transpose() * dz;
    }
    gw.noalias() += dz * flow_before(l, cc).transpose();
    return w.transpose() * dz;
  }

  FieldConfig cfg_;
  std::vector<TensorSpec> layout_;
  Vec params_;
  std::ptrdiff_t total_params_ = 0;
  int enc_x_dim_ = 0, enc_d_dim_ = 0;
  std::vector<int> trunk_w_, trunk_b_;
  int density_w_ = -1, density_b_ = -1;
  int color_w1_ = -1, color_b1_ = -1, color_w2_ = -1, color_b2_ = -1;
  int sem_w_ = -1, sem_b_ = -1;
  int codebook_words_ = -1, codebook_wq_ = -1, codebook_wk_ = -1, codebook_wv_ = -1,
      codebook_wo_ = -1;
};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("checkpoint: truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f64(std::ostream& out, double v) {
  static_assert(sizeof(double) == 8);
  char b[8];
  std::memcpy(b, &v, 8);
  out.write(b, 8);
}

inline double get_f64(std::istream& in) {
  char b[8];
  in.read(b, 8);
  if (!in) throw std::runtime_error("checkpoint: truncated");
  double v;
  std::memcpy(&v, b, 8);
  return v;
}

}  // namespace detail

// Binary checkpoint: "S3NF" magic, u32 version, scalar width, the field
// configuration, a verbatim copy of the experiment configuration text, then
// every tensor in declaration order prefixed by u32 rows / u32 cols.
template <typename T>
void SemanticField<T>::save_checkpoint(const std::filesystem::path& path,
                                       const std::string& extra_text) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out.write("S3NF", 4);
  detail::put_u32(out, 1);  // version
  detail::put_u32(out, sizeof(T));
  detail::put_u32(out, static_cast<std::uint32_t>(cfg_.num_classes));
  detail::put_u32(out, static_cast<std::uint32_t>(cfg_.hidden_width));
  detail::put_u32(out, static_cast<std::uint32_t>(cfg_.trunk_depth));
  detail::put_u32(out, static_cast<std::uint32_t>(cfg_.skip_layer));
  detail::put_u32(out, static_cast<std::uint32_t>(cfg_.pos_enc.octaves));
  detail::put_u32(out, cfg_.pos_enc.include_input ? 1 : 0);
  detail::put_u32(out, static_cast<std::uint32_t>(cfg_.dir_enc.octaves));
  detail::put_u32(out, cfg_.dir_enc.include_input ? 1 : 0);
  detail::put_f64(out, cfg_.input_scale);
  detail::put_u32(out, cfg_.use_codebook ? 1 : 0);
  detail::put_u32(out, static_cast<std::uint32_t>(cfg_.codebook_size));
  detail::put_u32(out, static_cast<std::uint32_t>(cfg_.num_heads));
  detail::put_u32(out, static_cast<std::uint32_t>(cfg_.codebook_layer_idx));
  detail::put_u32(out, cfg_.attn_scale ? 1 : 0);
  detail::put_u32(out, cfg_.detach_semantics ? 1 : 0);
  detail::put_u32(out, cfg_.detach_codebook_from_sem ? 1 : 0);
  detail::put_u32(out, static_cast<std::uint32_t>(extra_text.size()));
  out.write(extra_text.data(), static_cast<std::streamsize>(extra_text.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(layout_.size()));
  for (int i = 0; i < static_cast<int>(layout_.size()); ++i) {
    detail::put_u32(out, static_cast<std::uint32_t>(layout_[i].rows));
    detail::put_u32(out, static_cast<std::uint32_t>(layout_[i].cols));
    auto t = tensor(i);
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(sizeof(T) * t.size()));
  }
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

template <typename T>
SemanticField<T> SemanticField<T>::load_checkpoint(const std::filesystem::path& path,
                                                   std::string* extra_text) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open for reading");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "S3NF", 4) != 0)
    throw std::runtime_error(path.string() + ": bad checkpoint magic");
  const std::uint32_t version = detail::get_u32(in);
  if (version != 1)
    throw std::runtime_error(path.string() + ": unsupported checkpoint version");
  const std::uint32_t scalar_bytes = detail::get_u32(in);
  if (scalar_bytes != 4 && scalar_bytes != 8)
    throw std::runtime_error(path.string() + ": bad scalar width");
  FieldConfig cfg;
  cfg.num_classes = static_cast<int>(detail::get_u32(in));
  cfg.hidden_width = static_cast<int>(detail::get_u32(in));
  cfg.trunk_depth = static_cast<int>(detail::get_u32(in));
  cfg.skip_layer = static_cast<int>(detail::get_u32(in));
  cfg.pos_enc.octaves = static_cast<int>(detail::get_u32(in));
  cfg.pos_enc.include_input = detail::get_u32(in) != 0;
  cfg.dir_enc.octaves = static_cast<int>(detail::get_u32(in));
  cfg.dir_enc.include_input = detail::get_u32(in) != 0;
  cfg.input_scale = detail::get_f64(in);
  cfg.use_codebook = detail::get_u32(in) != 0;
  cfg.codebook_size = static_cast<int>(detail::get_u32(in));
  cfg.num_heads = static_cast<int>(detail::get_u32(in));
  cfg.codebook_layer_idx = static_cast<int>(detail::get_u32(in));
  cfg.attn_scale = detail::get_u32(in) != 0;
  cfg.detach_semantics = detail::get_u32(in) != 0;
  cfg.detach_codebook_from_sem = detail::get_u32(in) != 0;
  const std::uint32_t extra_len = detail::get_u32(in);
  std::string extra(extra_len, '\0');
  in.read(extra.data(), static_cast<std::streamsize>(extra_len));
  if (extra_text) *extra_text = extra;

  SemanticField field(cfg);
  const std::uint32_t num_tensors = detail::get_u32(in);
  if (num_tensors != field.layout_.size())
    throw std::runtime_error(path.string() + ": tensor count mismatch");
  for (int i = 0; i < static_cast<int>(num_tensors); ++i) {
    const std::uint32_t rows = detail::get_u32(in);
    const std::uint32_t cols = detail::get_u32(in);
    if (rows != static_cast<std::uint32_t>(field.layout_[i].rows) ||
        cols != static_cast<std::uint32_t>(field.layout_[i].cols))
      throw std::runtime_error(path.string() + ": tensor shape mismatch");
    auto t = field.tensor(i);
    if (scalar_bytes == sizeof(T)) {
      in.read(reinterpret_cast<char*>(t.data()),
              static_cast<std::streamsize>(sizeof(T) * t.size()));
    } else if (scalar_bytes == 4) {
      std::vector<float> buf(t.size());
      in.read(reinterpret_cast<char*>(buf.data()),
              static_cast<std::streamsize>(4 * buf.size()));
      for (int k = 0; k < t.size(); ++k) t.data()[k] = static_cast<T>(buf[k]);
    } else {
      std::vector<double> buf(t.size());
      in.read(reinterpret_cast<char*>(buf.data()),
              static_cast<std::streamsize>(8 * buf.size()));
      for (int k = 0; k < t.size(); ++k) t.data()[k] = static_cast<T>(buf[k]);
    }
    if (!in) throw std::runtime_error(path.string() + ": truncated tensor data");
  }
  return field;
}

}  // namespace s3
