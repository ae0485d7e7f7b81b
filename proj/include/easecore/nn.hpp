#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "easecore/common.hpp"
#include "easecore/rng.hpp"
#include "easecore/tensor.hpp"

namespace easecore {

// Layers operate on feature maps stored as a C x (N*H*W) column-major matrix:
// column index = n*(h*w) + y*w + x, so the channels of one spatial position
// are contiguous. Channel concatenation is row concatenation, batch norm is a
// row reduction, and convolution is one GEMM over an im2col matrix whose rows
// are ordered (ky, kx, ci) with ci fastest. Convolution weights use the
// matching [c_out][(ky*k + kx)*c_in + ci] layout; checkpoints store that
// order.

template <typename S>
struct FeatureMap {
  int n = 0, c = 0, h = 0, w = 0;
  MatX<S> m;

  void reset(int n_, int c_, int h_, int w_) {
    n = n_;
    c = c_;
    h = h_;
    w = w_;
    const Eigen::Index cols = static_cast<Eigen::Index>(n_) * h_ * w_;
    if (m.rows() != c_ || m.cols() != cols) m.resize(c_, cols);
  }
  Eigen::Index cols() const { return m.cols(); }
  int plane() const { return h * w; }
};

template <typename S>
struct Param {
  std::string name;
  std::vector<S> v, g;
  bool decay = true;  // weight decay skips normalization scales/offsets

  void resize(std::size_t size) {
    v.assign(size, S(0));
    g.assign(size, S(0));
  }
  std::size_t size() const { return v.size(); }
};

template <typename S>
struct Buffer {
  std::string name;
  std::vector<S> v;
};

template <typename S>
struct LayerState {
  std::vector<Param<S>*> params;
  std::vector<Buffer<S>*> buffers;
};

// ---------------------------------------------------------------------------

template <typename S>
class Conv2d {
 public:
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, int pad,
         bool bias = false)
      : name_(std::move(name)),
        cin_(in_channels),
        cout_(out_channels),
        k_(kernel),
        stride_(stride),
        pad_(pad),
        has_bias_(bias) {
    weight_.name = name_ + ".weight";
    weight_.resize(static_cast<std::size_t>(cout_) * cin_ * k_ * k_);
    if (has_bias_) {
      bias_.name = name_ + ".bias";
      bias_.resize(static_cast<std::size_t>(cout_));
    }
  }

  void init(Rng& rng) {
    const double fan_in = static_cast<double>(cin_) * k_ * k_;
    const double std_dev = std::sqrt(2.0 / fan_in);
    for (auto& x : weight_.v) x = static_cast<S>(std_dev * rng.next_normal());
    if (has_bias_)
      for (auto& x : bias_.v) x = S(0);
  }

  void collect(LayerState<S>& st) {
    st.params.push_back(&weight_);
    if (has_bias_) st.params.push_back(&bias_);
  }

  const FeatureMap<S>& forward(const FeatureMap<S>& x) {
    in_ = &x;
    const int oh = (x.h + 2 * pad_ - k_) / stride_ + 1;
    const int ow = (x.w + 2 * pad_ - k_) / stride_ + 1;
    out_.reset(x.n, cout_, oh, ow);
    ConstMatMap<S> wmat(weight_.v.data(), cout_, cin_ * k_ * k_);
    if (pointwise()) {
      // 1x1 stride-1 convolution is a plain GEMM on the feature matrix.
      out_.m.noalias() = wmat * x.m;
    } else {
      build_cols(x, oh, ow);
      out_.m.noalias() = wmat * col_;
    }
    if (has_bias_) out_.m.colwise() += ConstMatMap<S>(bias_.v.data(), cout_, 1).col(0);
    return out_;
  }

  const FeatureMap<S>& backward(const FeatureMap<S>& dy) {
    const FeatureMap<S>& x = *in_;
    MatMap<S> dw(weight_.g.data(), cout_, cin_ * k_ * k_);
    if (has_bias_) {
      MatMap<S> db(bias_.g.data(), cout_, 1);
      db.col(0) += dy.m.rowwise().sum();
    }
    ConstMatMap<S> wmat(weight_.v.data(), cout_, cin_ * k_ * k_);
    din_.reset(x.n, x.c, x.h, x.w);
    if (pointwise()) {
      dw.noalias() += dy.m * x.m.transpose();
      din_.m.noalias() = wmat.transpose() * dy.m;
      return din_;
    }
    dw.noalias() += dy.m * col_.transpose();
    dcol_.resize(col_.rows(), col_.cols());
    dcol_.noalias() = wmat.transpose() * dy.m;
    din_.m.setZero();
    scatter_cols(dy);
    return din_;
  }

 private:
  bool pointwise() const { return k_ == 1 && stride_ == 1 && pad_ == 0; }

  void build_cols(const FeatureMap<S>& x, int oh, int ow) {
    const Eigen::Index rows = static_cast<Eigen::Index>(cin_) * k_ * k_;
    const Eigen::Index cols = static_cast<Eigen::Index>(x.n) * oh * ow;
    if (col_.rows() != rows || col_.cols() != cols) col_.resize(rows, cols);
    const S* src = x.m.data();
    S* dst = col_.data();
    const int plane = x.plane();
    for (int n = 0; n < x.n; ++n) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          for (int ky = 0; ky < k_; ++ky) {
            const int sy = oy * stride_ - pad_ + ky;
            for (int kx = 0; kx < k_; ++kx) {
              const int sx = ox * stride_ - pad_ + kx;
              if (sy >= 0 && sy < x.h && sx >= 0 && sx < x.w) {
                const S* block = src + (static_cast<std::size_t>(n) * plane + sy * x.w + sx) *
                                           static_cast<std::size_t>(x.c);
                for (int ci = 0; ci < cin_; ++ci) dst[ci] = block[ci];
              } else {
                for (int ci = 0; ci < cin_; ++ci) dst[ci] = S(0);
              }
              dst += cin_;
            }
          }
        }
      }
    }
  }

  void scatter_cols(const FeatureMap<S>& dy) {
    const FeatureMap<S>& x = *in_;
    S* dst = din_.m.data();
    const S* src = dcol_.data();
    const int plane = x.plane();
    for (int n = 0; n < x.n; ++n) {
      for (int oy = 0; oy < dy.h; ++oy) {
        for (int ox = 0; ox < dy.w; ++ox) {
          for (int ky = 0; ky < k_; ++ky) {
            const int sy = oy * stride_ - pad_ + ky;
            for (int kx = 0; kx < k_; ++kx) {
              const int sx = ox * stride_ - pad_ + kx;
              if (sy >= 0 && sy < x.h && sx >= 0 && sx < x.w) {
                S* block = dst + (static_cast<std::size_t>(n) * plane + sy * x.w + sx) *
                                     static_cast<std::size_t>(x.c);
                for (int ci = 0; ci < cin_; ++ci) block[ci] += src[ci];
              }
              src += cin_;
            }
          }
        }
      }
    }
  }

  std::string name_;
  int cin_, cout_, k_, stride_, pad_;
  bool has_bias_;
  Param<S> weight_, bias_;
  const FeatureMap<S>* in_ = nullptr;
  FeatureMap<S> out_, din_;
  MatX<S> col_, dcol_;
};

// ---------------------------------------------------------------------------

template <typename S>
class BatchNorm2d {
 public:
  explicit BatchNorm2d(std::string name, int channels, S momentum = S(0.1), S eps = S(1e-5))
      : name_(std::move(name)), c_(channels), momentum_(momentum), eps_(eps) {
    gamma_.name = name_ + ".gamma";
    gamma_.resize(static_cast<std::size_t>(c_));
    gamma_.decay = false;
    beta_.name = name_ + ".beta";
    beta_.resize(static_cast<std::size_t>(c_));
    beta_.decay = false;
    running_mean_.name = name_ + ".running_mean";
    running_mean_.v.assign(static_cast<std::size_t>(c_), S(0));
    running_var_.name = name_ + ".running_var";
    running_var_.v.assign(static_cast<std::size_t>(c_), S(1));
  }

  void init(Rng&) {
    std::fill(gamma_.v.begin(), gamma_.v.end(), S(1));
    std::fill(beta_.v.begin(), beta_.v.end(), S(0));
    std::fill(running_mean_.v.begin(), running_mean_.v.end(), S(0));
    std::fill(running_var_.v.begin(), running_var_.v.end(), S(1));
  }

  void collect(LayerState<S>& st) {
    st.params.push_back(&gamma_);
    st.params.push_back(&beta_);
    st.buffers.push_back(&running_mean_);
    st.buffers.push_back(&running_var_);
  }

  const FeatureMap<S>& forward(const FeatureMap<S>& x, bool train) {
    out_.reset(x.n, x.c, x.h, x.w);
    const auto cols = x.cols();
    const S inv_m = S(1) / static_cast<S>(cols);
    if (train) {
      in_ = &x;
      mean_ = x.m.rowwise().sum() * inv_m;
      xhat_.resize(x.m.rows(), cols);
      xhat_ = x.m.colwise() - mean_;
      var_ = xhat_.cwiseProduct(xhat_).rowwise().sum() * inv_m;
      inv_std_ = (var_.array() + eps_).sqrt().inverse().matrix();
      xhat_.array().colwise() *= inv_std_.array();
      for (int ch = 0; ch < c_; ++ch) {
        running_mean_.v[ch] = (S(1) - momentum_) * running_mean_.v[ch] + momentum_ * mean_(ch);
        running_var_.v[ch] = (S(1) - momentum_) * running_var_.v[ch] + momentum_ * var_(ch);
      }
      ConstMatMap<S> gamma(gamma_.v.data(), c_, 1);
      ConstMatMap<S> beta(beta_.v.data(), c_, 1);
      out_.m = (xhat_.array().colwise() * gamma.col(0).array()).matrix();
      out_.m.colwise() += beta.col(0);
    } else {
      Eigen::Matrix<S, Eigen::Dynamic, 1> scale(c_), shift(c_);
      for (int ch = 0; ch < c_; ++ch) {
        const S inv = S(1) / std::sqrt(running_var_.v[ch] + eps_);
        scale(ch) = gamma_.v[ch] * inv;
        shift(ch) = beta_.v[ch] - gamma_.v[ch] * running_mean_.v[ch] * inv;
      }
      out_.m = (x.m.array().colwise() * scale.array()).matrix();
      out_.m.colwise() += shift;
    }
    return out_;
  }

  const FeatureMap<S>& backward(const FeatureMap<S>& dy) {
    const FeatureMap<S>& x = *in_;
    const auto cols = x.cols();
    const S inv_m = S(1) / static_cast<S>(cols);

    Eigen::Matrix<S, Eigen::Dynamic, 1> dgamma = dy.m.cwiseProduct(xhat_).rowwise().sum();
    Eigen::Matrix<S, Eigen::Dynamic, 1> dbeta = dy.m.rowwise().sum();
    for (int ch = 0; ch < c_; ++ch) {
      gamma_.g[ch] += dgamma(ch);
      beta_.g[ch] += dbeta(ch);
    }

    // dx = (gamma * inv_std / m) * (m*dy - sum(dy) - xhat * sum(dy*xhat))
    din_.reset(x.n, x.c, x.h, x.w);
    ConstMatMap<S> gamma(gamma_.v.data(), c_, 1);
    din_.m = dy.m * static_cast<S>(cols);
    din_.m.colwise() -= dbeta;
    din_.m -= (xhat_.array().colwise() * dgamma.array()).matrix();
    din_.m.array().colwise() *= (gamma.col(0).array() * inv_std_.array()) * inv_m;
    return din_;
  }

 private:
  std::string name_;
  int c_;
  S momentum_, eps_;
  Param<S> gamma_, beta_;
  Buffer<S> running_mean_, running_var_;
  const FeatureMap<S>* in_ = nullptr;
  FeatureMap<S> out_, din_;
  MatX<S> xhat_;
  Eigen::Matrix<S, Eigen::Dynamic, 1> mean_, var_, inv_std_;
};

// ---------------------------------------------------------------------------

template <typename S>
class ReLU {
 public:
  const FeatureMap<S>& forward(const FeatureMap<S>& x) {
    in_ = &x;
    out_.reset(x.n, x.c, x.h, x.w);
    out_.m = x.m.cwiseMax(S(0));
    return out_;
  }
  const FeatureMap<S>& backward(const FeatureMap<S>& dy) {
    din_.reset(dy.n, dy.c, dy.h, dy.w);
    din_.m = (in_->m.array() > S(0)).template cast<S>().matrix().cwiseProduct(dy.m);
    return din_;
  }

 private:
  const FeatureMap<S>* in_ = nullptr;
  FeatureMap<S> out_, din_;
};

// ReLU over a plain feature matrix (used after fully connected layers).
template <typename S>
class DenseReLU {
 public:
  const MatX<S>& forward(const MatX<S>& x) {
    in_ = &x;
    out_ = x.cwiseMax(S(0));
    return out_;
  }
  const MatX<S>& backward(const MatX<S>& dy) {
    din_ = (in_->array() > S(0)).template cast<S>().matrix().cwiseProduct(dy);
    return din_;
  }

 private:
  const MatX<S>* in_ = nullptr;
  MatX<S> out_, din_;
};

// ---------------------------------------------------------------------------

// 2x2 window, stride 2. Odd trailing rows/columns are dropped.
template <typename S>
class Pool2x2 {
 public:
  enum class Kind { max, avg };
  explicit Pool2x2(Kind kind) : kind_(kind) {}

  const FeatureMap<S>& forward(const FeatureMap<S>& x) {
    const int oh = x.h / 2, ow = x.w / 2;
    out_.reset(x.n, x.c, oh, ow);
    in_dims_ = {x.n, x.c, x.h, x.w};
    if (kind_ == Kind::max) argmax_.assign(out_.m.size(), 0);
    const int plane = x.plane();
    for (int n = 0; n < x.n; ++n) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          const Eigen::Index out_col = static_cast<Eigen::Index>(n) * oh * ow + oy * ow + ox;
          for (int c = 0; c < x.c; ++c) {
            S best = S(0);
            int best_idx = 0;
            S acc = S(0);
            for (int dy = 0; dy < 2; ++dy) {
              for (int dx = 0; dx < 2; ++dx) {
                const Eigen::Index in_col =
                    static_cast<Eigen::Index>(n) * plane + (2 * oy + dy) * x.w + (2 * ox + dx);
                const S v = x.m(c, in_col);
                if (kind_ == Kind::avg) {
                  acc += v;
                } else if (dy == 0 && dx == 0) {
                  best = v;
                  best_idx = 0;
                } else if (v > best) {
                  best = v;
                  best_idx = dy * 2 + dx;
                }
              }
            }
            if (kind_ == Kind::avg) {
              out_.m(c, out_col) = acc * S(0.25);
            } else {
              out_.m(c, out_col) = best;
              argmax_[static_cast<std::size_t>(out_col) * x.c + c] =
                  static_cast<std::uint8_t>(best_idx);
            }
          }
        }
      }
    }
    return out_;
  }

  const FeatureMap<S>& backward(const FeatureMap<S>& dy) {
    din_.reset(in_dims_[0], in_dims_[1], in_dims_[2], in_dims_[3]);
    din_.m.setZero();
    const int plane = in_dims_[2] * in_dims_[3];
    const int w = in_dims_[3];
    for (int n = 0; n < dy.n; ++n) {
      for (int oy = 0; oy < dy.h; ++oy) {
        for (int ox = 0; ox < dy.w; ++ox) {
          const Eigen::Index out_col =
              static_cast<Eigen::Index>(n) * dy.h * dy.w + oy * dy.w + ox;
          for (int c = 0; c < dy.c; ++c) {
            const S g = dy.m(c, out_col);
            if (kind_ == Kind::avg) {
              for (int d = 0; d < 4; ++d) {
                const Eigen::Index in_col =
                    static_cast<Eigen::Index>(n) * plane + (2 * oy + d / 2) * w + (2 * ox + d % 2);
                din_.m(c, in_col) += g * S(0.25);
              }
            } else {
              const int d = argmax_[static_cast<std::size_t>(out_col) * dy.c + c];
              const Eigen::Index in_col =
                  static_cast<Eigen::Index>(n) * plane + (2 * oy + d / 2) * w + (2 * ox + d % 2);
              din_.m(c, in_col) += g;
            }
          }
        }
      }
    }
    return din_;
  }

 private:
  Kind kind_;
  FeatureMap<S> out_, din_;
  std::array<int, 4> in_dims_{};
  std::vector<std::uint8_t> argmax_;
};

// ---------------------------------------------------------------------------

// Flattens (c, h, w) into one feature column per sample, channel-major.
template <typename S>
class Flatten {
 public:
  const MatX<S>& forward(const FeatureMap<S>& x) {
    dims_ = {x.n, x.c, x.h, x.w};
    const int plane = x.plane();
    out_.resize(static_cast<Eigen::Index>(x.c) * plane, x.n);
    for (int n = 0; n < x.n; ++n)
      for (int p = 0; p < plane; ++p)
        for (int c = 0; c < x.c; ++c)
          out_(static_cast<Eigen::Index>(c) * plane + p, n) =
              x.m(c, static_cast<Eigen::Index>(n) * plane + p);
    return out_;
  }
  const FeatureMap<S>& backward(const MatX<S>& dy) {
    din_.reset(dims_[0], dims_[1], dims_[2], dims_[3]);
    const int plane = dims_[2] * dims_[3];
    for (int n = 0; n < dims_[0]; ++n)
      for (int p = 0; p < plane; ++p)
        for (int c = 0; c < dims_[1]; ++c)
          din_.m(c, static_cast<Eigen::Index>(n) * plane + p) =
              dy(static_cast<Eigen::Index>(c) * plane + p, n);
    return din_;
  }

 private:
  std::array<int, 4> dims_{};
  MatX<S> out_;
  FeatureMap<S> din_;
};

// Mean over all spatial positions, one feature column per sample.
template <typename S>
class GlobalAvgPool {
 public:
  const MatX<S>& forward(const FeatureMap<S>& x) {
    dims_ = {x.n, x.c, x.h, x.w};
    const int plane = x.plane();
    out_.resize(x.c, x.n);
    for (int n = 0; n < x.n; ++n)
      out_.col(n) = x.m.middleCols(static_cast<Eigen::Index>(n) * plane, plane).rowwise().sum() *
                    (S(1) / static_cast<S>(plane));
    return out_;
  }
  const FeatureMap<S>& backward(const MatX<S>& dy) {
    din_.reset(dims_[0], dims_[1], dims_[2], dims_[3]);
    const int plane = dims_[2] * dims_[3];
    const S scale = S(1) / static_cast<S>(plane);
    for (int n = 0; n < dims_[0]; ++n)
      for (int p = 0; p < plane; ++p)
        din_.m.col(static_cast<Eigen::Index>(n) * plane + p) = dy.col(n) * scale;
    return din_;
  }

 private:
  std::array<int, 4> dims_{};
  MatX<S> out_;
  FeatureMap<S> din_;
};

// ---------------------------------------------------------------------------

template <typename S>
class Linear {
 public:
  Linear(std::string name, int in_features, int out_features)
      : name_(std::move(name)), din_features_(in_features), dout_features_(out_features) {
    weight_.name = name_ + ".weight";
    weight_.resize(static_cast<std::size_t>(out_features) * in_features);
    bias_.name = name_ + ".bias";
    bias_.resize(static_cast<std::size_t>(out_features));
  }

  void init(Rng& rng) {
    const double std_dev = std::sqrt(2.0 / din_features_);
    for (auto& x : weight_.v) x = static_cast<S>(std_dev * rng.next_normal());
    std::fill(bias_.v.begin(), bias_.v.end(), S(0));
  }

  void collect(LayerState<S>& st) {
    st.params.push_back(&weight_);
    st.params.push_back(&bias_);
  }

  const MatX<S>& forward(const MatX<S>& x) {
    in_ = &x;
    ConstMatMap<S> w(weight_.v.data(), dout_features_, din_features_);
    ConstMatMap<S> b(bias_.v.data(), dout_features_, 1);
    out_.noalias() = w * x;
    out_.colwise() += b.col(0);
    return out_;
  }

  const MatX<S>& backward(const MatX<S>& dy) {
    MatMap<S> dw(weight_.g.data(), dout_features_, din_features_);
    dw.noalias() += dy * in_->transpose();
    MatMap<S> db(bias_.g.data(), dout_features_, 1);
    db.col(0) += dy.rowwise().sum();
    ConstMatMap<S> w(weight_.v.data(), dout_features_, din_features_);
    din_.noalias() = w.transpose() * dy;
    return din_;
  }

 private:
  std::string name_;
  int din_features_, dout_features_;
  Param<S> weight_, bias_;
  const MatX<S>* in_ = nullptr;
  MatX<S> out_, din_;
};

// ---------------------------------------------------------------------------

// Cross-entropy over softmax logits. Per-example losses are computed in
// double regardless of S so that analytic expectations hold tightly.
template <typename S>
struct SoftmaxCrossEntropy {
  // logits: classes x batch. Returns mean loss; fills dlogits (already
  // divided by batch) and per_example losses.
  static double forward_backward(const MatX<S>& logits, const std::vector<int>& labels,
                                 MatX<S>* dlogits, std::vector<double>* per_example) {
    const Eigen::Index classes = logits.rows(), batch = logits.cols();
    if (dlogits != nullptr) dlogits->resize(classes, batch);
    if (per_example != nullptr) per_example->assign(static_cast<std::size_t>(batch), 0.0);
    double total = 0.0;
    const S inv_batch = S(1) / static_cast<S>(batch);
    for (Eigen::Index j = 0; j < batch; ++j) {
      const int label = labels[static_cast<std::size_t>(j)];
      double max_logit = -std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < classes; ++i)
        max_logit = std::max(max_logit, static_cast<double>(logits(i, j)));
      double sum_exp = 0.0;
      for (Eigen::Index i = 0; i < classes; ++i)
        sum_exp += std::exp(static_cast<double>(logits(i, j)) - max_logit);
      const double log_norm = max_logit + std::log(sum_exp);
      const double loss = log_norm - static_cast<double>(logits(label, j));
      total += loss;
      if (per_example != nullptr) (*per_example)[static_cast<std::size_t>(j)] = loss;
      if (dlogits != nullptr) {
        for (Eigen::Index i = 0; i < classes; ++i) {
          const double p =
              std::exp(static_cast<double>(logits(i, j)) - max_logit) / sum_exp;
          (*dlogits)(i, j) = (static_cast<S>(p) - (i == label ? S(1) : S(0))) * inv_batch;
        }
      }
    }
    return total / static_cast<double>(batch);
  }
};

// ---------------------------------------------------------------------------

// Loads an NCHW input tensor into the channel-column feature map layout.
template <typename S>
void to_feature_map(const Tensor4<S>& x, FeatureMap<S>& fm) {
  fm.reset(x.n, x.c, x.h, x.w);
  const int plane = x.h * x.w;
  for (int n = 0; n < x.n; ++n) {
    const S* src = x.sample(n);
    for (int c = 0; c < x.c; ++c)
      for (int p = 0; p < plane; ++p)
        fm.m(c, static_cast<Eigen::Index>(n) * plane + p) = src[static_cast<std::size_t>(c) * plane + p];
  }
}

}  // namespace easecore
