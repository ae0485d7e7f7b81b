#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include <png.h>

#include "easecore/analysis.hpp"
#include "easecore/common.hpp"
#include "easecore/io.hpp"

namespace easecore {

// Writes 8-bit grayscale (c=1) or RGB (c=3) PNG. `text_pairs` become tEXt
// chunks; the orchestrator stores the generating config hash there.
inline void write_png(const fs::path& path, const std::vector<unsigned char>& pixels, int c,
                      int h, int w,
                      const std::vector<std::pair<std::string, std::string>>& text_pairs = {}) {
  if (c != 1 && c != 3) throw ValidationError("write_png: channels must be 1 or 3");
  if (pixels.size() != static_cast<std::size_t>(c) * h * w)
    throw ValidationError("write_png: pixel buffer size mismatch");

  const fs::path tmp = path.string() + ".tmp";
  FILE* fp = std::fopen(tmp.string().c_str(), "wb");
  if (fp == nullptr) throw LoadError("write_png: cannot open " + tmp.string());

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png != nullptr ? png_create_info_struct(png) : nullptr;
  if (info == nullptr) {
    if (png != nullptr) png_destroy_write_struct(&png, nullptr);
    std::fclose(fp);
    throw LoadError("write_png: libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    fs::remove(tmp);
    throw LoadError("write_png: libpng write failed for " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);

  std::vector<png_text> texts(text_pairs.size());
  std::vector<std::string> keys, values;  // keep the c_str storage alive
  keys.reserve(text_pairs.size());
  values.reserve(text_pairs.size());
  for (std::size_t i = 0; i < text_pairs.size(); ++i) {
    keys.push_back(text_pairs[i].first);
    values.push_back(text_pairs[i].second);
    texts[i] = {};
    texts[i].compression = PNG_TEXT_COMPRESSION_NONE;
    texts[i].key = const_cast<char*>(keys[i].c_str());
    texts[i].text = const_cast<char*>(values[i].c_str());
    texts[i].text_length = values[i].size();
  }
  if (!texts.empty()) png_set_text(png, info, texts.data(), static_cast<int>(texts.size()));
  png_write_info(png, info);

  // Planar (c,h,w) input to interleaved rows.
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * c);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch)
        row[static_cast<std::size_t>(x) * c + ch] =
            pixels[static_cast<std::size_t>(ch) * plane + static_cast<std::size_t>(y) * w + x];
    png_write_row(png, row.data());
  }
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
  fs::rename(tmp, path);
}

// Mean images carry real-valued intensities already inside [0, 255]; they
// are rounded (not rescaled) so that equal inputs stay visually comparable.
inline void write_mean_image_png(
    const MeanImage& image, const fs::path& path,
    const std::vector<std::pair<std::string, std::string>>& text_pairs = {}) {
  std::vector<unsigned char> pixels(image.pixels.size());
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    double v = image.pixels[i];
    if (v < 0.0) v = 0.0;
    if (v > 255.0) v = 255.0;
    pixels[i] = static_cast<unsigned char>(v + 0.5);
  }
  write_png(path, pixels, image.shape.c, image.shape.h, image.shape.w, text_pairs);
}

}  // namespace easecore
