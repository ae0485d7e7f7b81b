#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "easecore/common.hpp"
#include "easecore/manifest.hpp"
#include "easecore/rng.hpp"
#include "easecore/tensor.hpp"

namespace easecore {

// Training-recipe preprocessing. Train mode: zero-pad by 4, random 32x32 crop
// (a uniform offset over the 9x9 grid), horizontal flip with p = 0.5, then
// global contrast normalization. Eval mode applies the normalization only and
// draws nothing from the stream. GCN subtracts the per-image mean and divides
// by the per-image std with a 1e-8 floor, so a constant image maps to zeros.
//
// Draw order per image (fixed, part of the determinism contract):
// x-offset, y-offset, flip.

inline constexpr int kPadPixels = 4;

template <typename S>
void preprocess_into(const ImageU8& img, Rng* rng, bool train_mode, S* out) {
  const int c = img.c, h = img.h, w = img.w;
  int ox = kPadPixels, oy = kPadPixels;
  bool flip = false;
  if (train_mode) {
    if (rng == nullptr) throw ValidationError("train-mode preprocessing requires an rng stream");
    ox = static_cast<int>(rng->next_below(2 * kPadPixels + 1));
    oy = static_cast<int>(rng->next_below(2 * kPadPixels + 1));
    flip = rng->next_bool();
  }

  double sum = 0.0, sum_sq = 0.0;
  const std::size_t total = static_cast<std::size_t>(c) * h * w;
  std::size_t o = 0;
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      const int sy = y + oy - kPadPixels;
      for (int x = 0; x < w; ++x) {
        const int fx = flip ? w - 1 - x : x;
        const int sx = fx + ox - kPadPixels;
        double v = 0.0;
        if (sy >= 0 && sy < h && sx >= 0 && sx < w) v = img.at(ch, sy, sx);
        out[o++] = static_cast<S>(v);
        sum += v;
        sum_sq += v * v;
      }
    }
  }

  const double mean = sum / static_cast<double>(total);
  const double var = std::max(0.0, sum_sq / static_cast<double>(total) - mean * mean);
  const double denom = std::max(std::sqrt(var), 1e-8);
  for (std::size_t i = 0; i < total; ++i)
    out[i] = static_cast<S>((static_cast<double>(out[i]) - mean) / denom);
}

template <typename S = float>
std::vector<S> preprocess_and_augment(const ImageU8& img, Rng* rng, bool train_mode) {
  std::vector<S> out(static_cast<std::size_t>(img.c) * img.h * img.w);
  preprocess_into(img, rng, train_mode, out.data());
  return out;
}

// Fills one batch slot from a manifest example.
template <typename S>
void load_example_into(Tensor4<S>& batch, int slot, const ExampleRecord& ex, Rng* rng,
                       bool train_mode) {
  preprocess_into(ex.image, rng, train_mode, batch.sample(slot));
}

}  // namespace easecore
