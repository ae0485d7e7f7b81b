#pragma once

#include <array>
#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Core>

#include "easecore/common.hpp"

namespace easecore {

// Dense row-major N×C×H×W buffer. This is deliberately minimal: the layers
// use Eigen maps over the raw data for anything heavier than indexing.
template <typename S>
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<S> data;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_) {}

  void resize(int n_, int c_, int h_, int w_) {
    n = n_;
    c = c_;
    h = h_;
    w = w_;
    data.assign(static_cast<std::size_t>(n_) * c_ * h_ * w_, S(0));
  }

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t sample_stride() const { return static_cast<std::size_t>(c) * h * w; }

  S* sample(int i) { return data.data() + sample_stride() * static_cast<std::size_t>(i); }
  const S* sample(int i) const { return data.data() + sample_stride() * static_cast<std::size_t>(i); }

  S& at(int i, int ch, int y, int x) {
    return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }
  S at(int i, int ch, int y, int x) const {
    return data[((static_cast<std::size_t>(i) * c + ch) * h + y) * w + x];
  }

  void zero() { std::fill(data.begin(), data.end(), S(0)); }
};

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <typename S>
using MatMap = Eigen::Map<MatX<S>>;

template <typename S>
using ConstMatMap = Eigen::Map<const MatX<S>>;

// 8-bit image in C×H×W plane order (the CIFAR on-disk order).
struct ImageU8 {
  int c = 0, h = 0, w = 0;
  std::vector<std::uint8_t> data;

  ImageU8() = default;
  ImageU8(int c_, int h_, int w_)
      : c(c_), h(h_), w(w_), data(static_cast<std::size_t>(c_) * h_ * w_, 0) {}

  std::uint8_t& at(int ch, int y, int x) {
    return data[(static_cast<std::size_t>(ch) * h + y) * w + x];
  }
  std::uint8_t at(int ch, int y, int x) const {
    return data[(static_cast<std::size_t>(ch) * h + y) * w + x];
  }
  std::size_t size() const { return data.size(); }
};

struct ImageShape {
  int c = 0, h = 0, w = 0;
  bool operator==(const ImageShape&) const = default;
};

}  // namespace easecore
