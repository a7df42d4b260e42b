#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "passdoor/rng.hpp"
#include "passdoor/tensor.hpp"

namespace passdoor {

/// Handle to one trainable buffer and its gradient, identified by name
/// for checkpointing.
template <typename T>
struct ParamRef {
  std::string name;
  AlignedVec<T>* w;
  AlignedVec<T>* g;
};

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatCM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// ---------------------------------------------------------------------------
// Conv2d: 3x3 (or kxk) same-padded convolution via im2col + GEMM.

template <typename T>
class Conv2d {
public:
  Conv2d(std::string name, int cin, int cout, int k = 3, int stride = 1,
         double init_scale = 1.0)
      : name_(std::move(name)), cin_(cin), cout_(cout), k_(k), stride_(stride),
        pad_(k / 2), init_scale_(init_scale),
        w_(static_cast<std::size_t>(cout) * cin * k * k),
        gw_(w_.size()), b_(static_cast<std::size_t>(cout)), gb_(b_.size()) {}

  void init(Rng& rng) {
    if (init_scale_ == 0.0) {
      std::fill(w_.begin(), w_.end(), T(0));
    } else {
      const double stddev =
          init_scale_ * std::sqrt(2.0 / (static_cast<double>(cin_) * k_ * k_));
      for (auto& v : w_) v = static_cast<T>(rng.normal(0.0, stddev));
    }
    std::fill(b_.begin(), b_.end(), T(0));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.c != cin_) throw std::invalid_argument(name_ + ": channel mismatch");
    in_n_ = x.n;
    in_h_ = x.h;
    in_w_ = x.w;
    out_h_ = (x.h + 2 * pad_ - k_) / stride_ + 1;
    out_w_ = (x.w + 2 * pad_ - k_) / stride_ + 1;
    const int K = cin_ * k_ * k_;
    const std::size_t ohw = static_cast<std::size_t>(out_h_) * out_w_;
    col_.assign(static_cast<std::size_t>(x.n) * K * ohw, T(0));
    Tensor<T> y(x.n, cout_, out_h_, out_w_);
    Eigen::Map<const MatRM<T>> wm(w_.data(), cout_, K);
    Eigen::Map<const VecX<T>> bv(b_.data(), cout_);
    for (int s = 0; s < x.n; ++s) {
      T* col = col_.data() + static_cast<std::size_t>(s) * K * ohw;
      im2col(x.sample(s), col);
      Eigen::Map<MatCM<T>> cm(col, K, static_cast<Eigen::Index>(ohw));
      Eigen::Map<MatRM<T>> ym(y.sample(s), cout_, static_cast<Eigen::Index>(ohw));
      ym.noalias() = wm * cm;
      ym.colwise() += bv;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, bool accumulate_param_grads = true) {
    const int K = cin_ * k_ * k_;
    const std::size_t ohw = static_cast<std::size_t>(out_h_) * out_w_;
    Tensor<T> dx(in_n_, cin_, in_h_, in_w_);
    Eigen::Map<const MatRM<T>> wm(w_.data(), cout_, K);
    Eigen::Map<MatRM<T>> gwm(gw_.data(), cout_, K);
    Eigen::Map<VecX<T>> gbv(gb_.data(), cout_);
    MatCM<T> dcol(K, static_cast<Eigen::Index>(ohw));
    for (int s = 0; s < in_n_; ++s) {
      Eigen::Map<const MatRM<T>> dym(dy.sample(s), cout_, static_cast<Eigen::Index>(ohw));
      const T* col = col_.data() + static_cast<std::size_t>(s) * K * ohw;
      Eigen::Map<const MatCM<T>> cm(col, K, static_cast<Eigen::Index>(ohw));
      if (accumulate_param_grads) {
        gwm.noalias() += dym * cm.transpose();
        gbv.noalias() += dym.rowwise().sum();
      }
      dcol.noalias() = wm.transpose() * dym;
      col2im(dcol.data(), dx.sample(s));
    }
    return dx;
  }

  void collect(std::vector<ParamRef<T>>& out) {
    out.push_back({name_ + ".w", &w_, &gw_});
    out.push_back({name_ + ".b", &b_, &gb_});
  }

  int out_channels() const { return cout_; }

private:
  void im2col(const T* x, T* col) const {
    const std::size_t K = static_cast<std::size_t>(cin_) * k_ * k_;
    for (int oy = 0; oy < out_h_; ++oy) {
      for (int ox = 0; ox < out_w_; ++ox) {
        const std::size_t cidx = static_cast<std::size_t>(oy) * out_w_ + ox;
        T* dst = col + cidx * K;
        for (int ci = 0; ci < cin_; ++ci) {
          const T* plane = x + static_cast<std::size_t>(ci) * in_h_ * in_w_;
          for (int ky = 0; ky < k_; ++ky) {
            const int iy = oy * stride_ + ky - pad_;
            for (int kx = 0; kx < k_; ++kx) {
              const int ix = ox * stride_ + kx - pad_;
              T val = T(0);
              if (iy >= 0 && iy < in_h_ && ix >= 0 && ix < in_w_) {
                val = plane[static_cast<std::size_t>(iy) * in_w_ + ix];
              }
              *dst++ = val;
            }
          }
        }
      }
    }
  }

  void col2im(const T* dcol, T* dx) const {
    const std::size_t K = static_cast<std::size_t>(cin_) * k_ * k_;
    for (int oy = 0; oy < out_h_; ++oy) {
      for (int ox = 0; ox < out_w_; ++ox) {
        const std::size_t cidx = static_cast<std::size_t>(oy) * out_w_ + ox;
        const T* src = dcol + cidx * K;
        for (int ci = 0; ci < cin_; ++ci) {
          T* plane = dx + static_cast<std::size_t>(ci) * in_h_ * in_w_;
          for (int ky = 0; ky < k_; ++ky) {
            const int iy = oy * stride_ + ky - pad_;
            for (int kx = 0; kx < k_; ++kx) {
              const int ix = ox * stride_ + kx - pad_;
              const T g = src[(static_cast<std::size_t>(ci) * k_ + ky) * k_ + kx];
              if (iy >= 0 && iy < in_h_ && ix >= 0 && ix < in_w_) {
                plane[static_cast<std::size_t>(iy) * in_w_ + ix] += g;
              }
            }
          }
        }
      }
    }
  }

  std::string name_;
  int cin_, cout_, k_, stride_, pad_;
  double init_scale_;
  AlignedVec<T> w_, gw_, b_, gb_;
  // forward cache
  int in_n_ = 0, in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
  AlignedVec<T> col_;
};

// ---------------------------------------------------------------------------
// Depthwise 3x3 convolution (direct loops; only the mobile backbone uses it).

template <typename T>
class DepthwiseConv2d {
public:
  DepthwiseConv2d(std::string name, int channels, int k = 3, int stride = 1)
      : name_(std::move(name)), c_(channels), k_(k), stride_(stride), pad_(k / 2),
        w_(static_cast<std::size_t>(channels) * k * k), gw_(w_.size()),
        b_(static_cast<std::size_t>(channels)), gb_(b_.size()) {}

  void init(Rng& rng) {
    const double stddev = std::sqrt(2.0 / (static_cast<double>(k_) * k_));
    for (auto& v : w_) v = static_cast<T>(rng.normal(0.0, stddev));
    std::fill(b_.begin(), b_.end(), T(0));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    in_ = x;
    const int oh = (x.h + 2 * pad_ - k_) / stride_ + 1;
    const int ow = (x.w + 2 * pad_ - k_) / stride_ + 1;
    Tensor<T> y(x.n, c_, oh, ow);
    for (int s = 0; s < x.n; ++s) {
      for (int ci = 0; ci < c_; ++ci) {
        const T* wk = w_.data() + static_cast<std::size_t>(ci) * k_ * k_;
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            T acc = b_[static_cast<std::size_t>(ci)];
            for (int ky = 0; ky < k_; ++ky) {
              const int iy = oy * stride_ + ky - pad_;
              if (iy < 0 || iy >= x.h) continue;
              for (int kx = 0; kx < k_; ++kx) {
                const int ix = ox * stride_ + kx - pad_;
                if (ix < 0 || ix >= x.w) continue;
                acc += wk[ky * k_ + kx] * x.at(s, ci, iy, ix);
              }
            }
            y.at(s, ci, oy, ox) = acc;
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, bool accumulate_param_grads = true) {
    Tensor<T> dx(in_.n, c_, in_.h, in_.w);
    for (int s = 0; s < dy.n; ++s) {
      for (int ci = 0; ci < c_; ++ci) {
        const T* wk = w_.data() + static_cast<std::size_t>(ci) * k_ * k_;
        T* gwk = gw_.data() + static_cast<std::size_t>(ci) * k_ * k_;
        for (int oy = 0; oy < dy.h; ++oy) {
          for (int ox = 0; ox < dy.w; ++ox) {
            const T g = dy.at(s, ci, oy, ox);
            if (accumulate_param_grads) gb_[static_cast<std::size_t>(ci)] += g;
            for (int ky = 0; ky < k_; ++ky) {
              const int iy = oy * stride_ + ky - pad_;
              if (iy < 0 || iy >= in_.h) continue;
              for (int kx = 0; kx < k_; ++kx) {
                const int ix = ox * stride_ + kx - pad_;
                if (ix < 0 || ix >= in_.w) continue;
                if (accumulate_param_grads) gwk[ky * k_ + kx] += g * in_.at(s, ci, iy, ix);
                dx.at(s, ci, iy, ix) += g * wk[ky * k_ + kx];
              }
            }
          }
        }
      }
    }
    return dx;
  }

  void collect(std::vector<ParamRef<T>>& out) {
    out.push_back({name_ + ".w", &w_, &gw_});
    out.push_back({name_ + ".b", &b_, &gb_});
  }

private:
  std::string name_;
  int c_, k_, stride_, pad_;
  AlignedVec<T> w_, gw_, b_, gb_;
  Tensor<T> in_;
};

// ---------------------------------------------------------------------------
// Linear on flattened samples.

template <typename T>
class Linear {
public:
  Linear(std::string name, int in, int out)
      : name_(std::move(name)), in_(in), out_(out),
        w_(static_cast<std::size_t>(out) * in), gw_(w_.size()),
        b_(static_cast<std::size_t>(out)), gb_(b_.size()) {}

  void init(Rng& rng) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(in_));
    for (auto& v : w_) v = static_cast<T>(rng.normal(0.0, stddev));
    std::fill(b_.begin(), b_.end(), T(0));
  }

  Tensor<T> forward(const Tensor<T>& x) {
    if (static_cast<int>(x.sample_size()) != in_) {
      throw std::invalid_argument(name_ + ": input size mismatch");
    }
    x_ = x;
    Tensor<T> y(x.n, out_, 1, 1);
    Eigen::Map<const MatRM<T>> xm(x.v.data(), x.n, in_);
    Eigen::Map<const MatRM<T>> wm(w_.data(), out_, in_);
    Eigen::Map<MatRM<T>> ym(y.v.data(), x.n, out_);
    ym.noalias() = xm * wm.transpose();
    Eigen::Map<const VecX<T>> bv(b_.data(), out_);
    ym.rowwise() += bv.transpose();
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, bool accumulate_param_grads = true) {
    Tensor<T> dx(x_.n, x_.c, x_.h, x_.w);
    Eigen::Map<const MatRM<T>> dym(dy.v.data(), dy.n, out_);
    Eigen::Map<const MatRM<T>> xm(x_.v.data(), x_.n, in_);
    Eigen::Map<const MatRM<T>> wm(w_.data(), out_, in_);
    if (accumulate_param_grads) {
      Eigen::Map<MatRM<T>> gwm(gw_.data(), out_, in_);
      gwm.noalias() += dym.transpose() * xm;
      Eigen::Map<VecX<T>> gbv(gb_.data(), out_);
      gbv.noalias() += dym.colwise().sum().transpose();
    }
    Eigen::Map<MatRM<T>> dxm(dx.v.data(), x_.n, in_);
    dxm.noalias() = dym * wm;
    return dx;
  }

  void collect(std::vector<ParamRef<T>>& out) {
    out.push_back({name_ + ".w", &w_, &gw_});
    out.push_back({name_ + ".b", &b_, &gb_});
  }

private:
  std::string name_;
  int in_, out_;
  AlignedVec<T> w_, gw_, b_, gb_;
  Tensor<T> x_;
};

// ---------------------------------------------------------------------------
// Elementwise activations. Each instance caches its own output, so every
// application site needs its own object.

template <typename T>
class LeakyReLU {
public:
  explicit LeakyReLU(T slope = T(0.1)) : slope_(slope) {}
  Tensor<T> forward(const Tensor<T>& x) {
    y_ = x;
    for (auto& v : y_.v) v = v > T(0) ? v : slope_ * v;
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.v.size(); ++i) {
      if (y_.v[i] <= T(0)) dx.v[i] *= slope_;
    }
    return dx;
  }

private:
  T slope_;
  Tensor<T> y_;
};

template <typename T>
class Tanh {
public:
  Tensor<T> forward(const Tensor<T>& x) {
    y_ = x;
    for (auto& v : y_.v) v = std::tanh(v);
    return y_;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.v.size(); ++i) dx.v[i] *= T(1) - y_.v[i] * y_.v[i];
    return dx;
  }

private:
  Tensor<T> y_;
};

// ---------------------------------------------------------------------------
// Resampling / pooling.

template <typename T>
class Upsample2x {
public:
  Tensor<T> forward(const Tensor<T>& x) {
    in_h_ = x.h;
    in_w_ = x.w;
    Tensor<T> y(x.n, x.c, x.h * 2, x.w * 2);
    for (int s = 0; s < x.n; ++s)
      for (int c = 0; c < x.c; ++c)
        for (int yy = 0; yy < y.h; ++yy)
          for (int xx = 0; xx < y.w; ++xx)
            y.at(s, c, yy, xx) = x.at(s, c, yy / 2, xx / 2);
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.n, dy.c, in_h_, in_w_);
    for (int s = 0; s < dy.n; ++s)
      for (int c = 0; c < dy.c; ++c)
        for (int yy = 0; yy < dy.h; ++yy)
          for (int xx = 0; xx < dy.w; ++xx)
            dx.at(s, c, yy / 2, xx / 2) += dy.at(s, c, yy, xx);
    return dx;
  }

private:
  int in_h_ = 0, in_w_ = 0;
};

template <typename T>
class GlobalAvgPool {
public:
  Tensor<T> forward(const Tensor<T>& x) {
    in_h_ = x.h;
    in_w_ = x.w;
    Tensor<T> y(x.n, x.c, 1, 1);
    const T inv = T(1) / static_cast<T>(x.h * x.w);
    for (int s = 0; s < x.n; ++s)
      for (int c = 0; c < x.c; ++c) {
        T acc = T(0);
        for (int yy = 0; yy < x.h; ++yy)
          for (int xx = 0; xx < x.w; ++xx) acc += x.at(s, c, yy, xx);
        y.at(s, c, 0, 0) = acc * inv;
      }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dx(dy.n, dy.c, in_h_, in_w_);
    const T inv = T(1) / static_cast<T>(in_h_ * in_w_);
    for (int s = 0; s < dy.n; ++s)
      for (int c = 0; c < dy.c; ++c) {
        const T g = dy.at(s, c, 0, 0) * inv;
        for (int yy = 0; yy < in_h_; ++yy)
          for (int xx = 0; xx < in_w_; ++xx) dx.at(s, c, yy, xx) = g;
      }
    return dx;
  }

private:
  int in_h_ = 0, in_w_ = 0;
};

/// Per-channel multiplicative mask (not trainable); the fine-pruning
/// defense zeroes channels through this.
template <typename T>
class ChannelMask {
public:
  void resize(int channels) { mask_.assign(static_cast<std::size_t>(channels), T(1)); }
  bool empty() const { return mask_.empty(); }
  std::vector<T>& mask() { return mask_; }
  const std::vector<T>& mask() const { return mask_; }

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> y = x;
    const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
    for (int s = 0; s < x.n; ++s)
      for (int c = 0; c < x.c; ++c) {
        T* p = y.sample(s) + static_cast<std::size_t>(c) * hw;
        const T m = mask_[static_cast<std::size_t>(c)];
        for (std::size_t i = 0; i < hw; ++i) p[i] *= m;
      }
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) { return forward(dy); }

private:
  std::vector<T> mask_;
};

// ---------------------------------------------------------------------------
// Optimizer.

template <typename T>
class Adam {
public:
  Adam(std::vector<ParamRef<T>> params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
      m_.emplace_back(p.w->size(), T(0));
      v_.emplace_back(p.w->size(), T(0));
    }
  }

  void zero_grad() {
    for (auto& p : params_) std::fill(p.g->begin(), p.g->end(), T(0));
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
      auto& w = *params_[pi].w;
      auto& g = *params_[pi].g;
      auto& m = m_[pi];
      auto& v = v_[pi];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = static_cast<T>(b1_ * m[i] + (1.0 - b1_) * g[i]);
        v[i] = static_cast<T>(b2_ * v[i] + (1.0 - b2_) * g[i] * g[i]);
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
      }
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

private:
  std::vector<ParamRef<T>> params_;
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

inline double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

/// log(1 + e^z) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

/// Binary cross-entropy against target y from the logit, numerically
/// stable: softplus(z) - y*z.
inline double bce_with_logits(double z, double y) { return softplus(z) - y * z; }

}  // namespace passdoor
