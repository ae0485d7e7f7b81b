#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "easecore/cifar_io.hpp"
#include "easecore/common.hpp"
#include "easecore/io.hpp"
#include "easecore/manifest.hpp"
#include "easecore/rng.hpp"

namespace easecore {

// ---------------------------------------------------------------------------
// Biased low-dimensional dataset: each class is two Gaussian subclusters in an
// 8-dim latent space (a majority and a minority), rendered to 16x16 grayscale
// images through one fixed seeded linear map. The generator also returns the
// ground-truth subcluster of every example, which downstream experiments use
// as an oracle for easiness orderings, plus the raw latents so tests can fit
// independent classifiers on them.
// ---------------------------------------------------------------------------

inline constexpr int kLatentDim = 8;
inline constexpr int kBiasImageDim = 16;

struct SyntheticBiasSpec {
  int num_classes = 2;
  int examples_per_class = 500;
  double majority_fraction = 0.8;  // strictly > 0.5
  double subcluster_separation = 6.0;
  double noise_scale = 1.0;
  std::uint64_t seed = 1;
  // Plumbing knobs with fixed defaults (not part of the core spec above).
  int test_per_class = 100;
  // Wide enough that the classes stay separable through the training-recipe
  // crops and flips; the rendering map is not translation invariant.
  double class_separation = 12.0;

  void validate() const {
    if (num_classes < 2) throw ValidationError("num_classes must be >= 2");
    if (examples_per_class < 1) throw ValidationError("examples_per_class must be >= 1");
    if (majority_fraction <= 0.5 || majority_fraction >= 1.0)
      throw ValidationError("majority_fraction must lie in (0.5, 1): got " +
                            format_double(majority_fraction));
    if (subcluster_separation < 0.0) throw ValidationError("subcluster_separation must be >= 0");
    if (noise_scale <= 0.0) throw ValidationError("noise_scale must be > 0");
  }

  int majority_count(int per_class) const {
    return static_cast<int>(std::ceil(majority_fraction * per_class));
  }
};

enum class Subcluster { majority, minority };

inline const char* subcluster_name(Subcluster s) {
  return s == Subcluster::majority ? "majority" : "minority";
}

struct BiasDataset {
  DatasetManifest manifest;
  std::unordered_map<std::string, Subcluster> subcluster;
  std::unordered_map<std::string, std::vector<double>> latents;
};

namespace detail {

inline std::vector<double> random_unit_vector(Rng& rng, int dim) {
  std::vector<double> v(dim);
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (auto& x : v) {
      x = rng.next_normal();
      norm2 += x * x;
    }
  } while (norm2 < 1e-12);
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& x : v) x *= inv;
  return v;
}

inline ImageU8 render_latent(const std::vector<double>& z, const std::vector<double>& proj) {
  ImageU8 img(1, kBiasImageDim, kBiasImageDim);
  const int pixels = kBiasImageDim * kBiasImageDim;
  for (int p = 0; p < pixels; ++p) {
    double acc = 0.0;
    for (int d = 0; d < kLatentDim; ++d) acc += proj[static_cast<std::size_t>(p) * kLatentDim + d] * z[d];
    const double v = 128.0 + 22.0 * acc;
    img.data[p] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return img;
}

}  // namespace detail

// Deterministic given spec.seed. Subcluster counts per class are exactly
// ceil(majority_fraction * per-split class size). With
// subcluster_separation == 0 the two subclusters coincide; labels are still
// emitted but no easiness ordering between them is expected.
inline BiasDataset generate_biased_dataset(const SyntheticBiasSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  // Geometry: one center direction per class, one separation axis per class.
  std::vector<std::vector<double>> class_center(static_cast<std::size_t>(spec.num_classes));
  std::vector<std::vector<double>> sep_axis(static_cast<std::size_t>(spec.num_classes));
  for (int c = 0; c < spec.num_classes; ++c) {
    class_center[c] = detail::random_unit_vector(rng, kLatentDim);
    for (auto& x : class_center[c]) x *= spec.class_separation;
    sep_axis[c] = detail::random_unit_vector(rng, kLatentDim);
  }

  // Fixed rendering map, drawn once from the same seeded stream.
  std::vector<double> proj(static_cast<std::size_t>(kBiasImageDim) * kBiasImageDim * kLatentDim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(kLatentDim));
  for (auto& a : proj) a = rng.next_normal() * scale;

  BiasDataset out;
  out.manifest.dataset_id = "bias-synth:" + std::to_string(spec.seed);
  for (int c = 0; c < spec.num_classes; ++c)
    out.manifest.class_names.push_back("class" + std::to_string(c));
  out.manifest.image_shape = {1, kBiasImageDim, kBiasImageDim};
  out.manifest.source_kind = "synthetic-dir";
  out.manifest.source_root = "";

  auto emit_split = [&](Split split, int per_class) {
    std::size_t index = 0;
    const int majority = spec.majority_count(per_class);
    for (int c = 0; c < spec.num_classes; ++c) {
      for (int k = 0; k < per_class; ++k) {
        const Subcluster sub = k < majority ? Subcluster::majority : Subcluster::minority;
        const double side = sub == Subcluster::majority ? -0.5 : 0.5;
        std::vector<double> z(kLatentDim);
        for (int d = 0; d < kLatentDim; ++d) {
          const double center =
              class_center[c][d] + side * spec.subcluster_separation * sep_axis[c][d];
          z[d] = center + spec.noise_scale * rng.next_normal();
        }
        ExampleRecord ex;
        ex.example_id = make_example_id(split, index++);
        ex.label = c;
        ex.split = split;
        ex.image = detail::render_latent(z, proj);
        out.manifest.examples.push_back(std::move(ex));
        const auto& id = out.manifest.examples.back().example_id;
        out.subcluster[id] = sub;
        out.latents[id] = std::move(z);
      }
    }
  };
  emit_split(Split::train, spec.examples_per_class);
  emit_split(Split::test, spec.test_per_class);

  out.manifest.finalize();
  return out;
}

// --- synthetic-dir persistence ----------------------------------------------
// Directory layout: manifest.json + images.bin (raw uint8 CHW tensors in
// manifest order) + subcluster_labels.json.

inline void save_synthetic_dir(const DatasetManifest& manifest,
                               const std::unordered_map<std::string, std::string>& subcluster,
                               const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<unsigned char> blob;
  const std::size_t image_bytes = static_cast<std::size_t>(manifest.image_shape.c) *
                                  manifest.image_shape.h * manifest.image_shape.w;
  blob.reserve(manifest.examples.size() * image_bytes);
  DatasetManifest copy = manifest;
  copy.source_kind = "synthetic-dir";
  copy.source_root = dir.string();
  std::uint64_t offset = 0;
  for (auto& ex : copy.examples) {
    blob.insert(blob.end(), ex.image.data.begin(), ex.image.data.end());
    ex.source_file = "images.bin";
    ex.source_offset = offset;
    offset += image_bytes;
  }
  atomic_write_file(dir / "images.bin", blob);
  atomic_write_file(dir / "manifest.json", manifest_to_json(copy).dump(2) + "\n");
  nlohmann::json labels(subcluster);
  atomic_write_file(dir / "subcluster_labels.json", labels.dump(2) + "\n");
}

inline void save_synthetic_dir(const BiasDataset& ds, const fs::path& dir) {
  std::unordered_map<std::string, std::string> labels;
  for (const auto& [id, sub] : ds.subcluster) labels[id] = subcluster_name(sub);
  save_synthetic_dir(ds.manifest, labels, dir);
}

inline DatasetManifest load_synthetic_dir(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path))
    throw LoadError("missing manifest.json in synthetic dataset dir: " + dir.string());
  const auto j = nlohmann::json::parse(read_text_file(manifest_path));
  const auto blob = read_binary_file(dir / "images.bin");
  auto reader = [&](const std::string& file, std::uint64_t offset, ImageShape shape) {
    if (file != "images.bin")
      throw LoadError("synthetic manifest references unknown file: " + file);
    ImageU8 img(shape.c, shape.h, shape.w);
    if (offset + img.size() > blob.size())
      throw LoadError("images.bin too short for offset " + std::to_string(offset));
    std::copy(blob.begin() + static_cast<std::ptrdiff_t>(offset),
              blob.begin() + static_cast<std::ptrdiff_t>(offset + img.size()), img.data.begin());
    return img;
  };
  auto m = manifest_from_json(j, reader);
  m.source_root = dir.string();
  return m;
}

inline std::unordered_map<std::string, std::string> load_subcluster_labels(const fs::path& dir) {
  const auto j = nlohmann::json::parse(read_text_file(dir / "subcluster_labels.json"));
  return j.get<std::unordered_map<std::string, std::string>>();
}

// ---------------------------------------------------------------------------
// Structured 10-class 32x32x3 generator used as the desk-scale stand-in for a
// reduced CIFAR-10. Every class is an analytic pattern (background gradient +
// blobs). Each example draws a difficulty scalar d in [0, 1]; every rendering
// knob (pixel noise, translation, rotation, flipping, cross-class mixing,
// clutter) grows monotonically with d, so the corpus has a continuous
// difficulty axis that does not depend on which network looks at it. A
// majority of examples draw d from the mild half, a minority from the harsh
// half, and a small fraction of labels are resampled. The output is written
// in the CIFAR binary layout so it flows through the same loader as the real
// data.
// ---------------------------------------------------------------------------

struct CifarLikeSpec {
  int num_classes = 10;
  int train_per_class = 1000;
  int test_per_class = 200;
  double majority_fraction = 0.8;
  double label_noise = 0.01;
  double mix_max = 0.45;     // strongest cross-class blend, reached at d = 1
  double noise_min = 14.0;   // per-pixel gaussian sigma at d = 0
  double noise_max = 60.0;   // per-pixel gaussian sigma at d = 1
  std::uint64_t seed = 7;

  void validate() const {
    if (num_classes < 2 || num_classes > 26) throw ValidationError("num_classes must be in [2, 26]");
    if (train_per_class < 1 || test_per_class < 1)
      throw ValidationError("per-class counts must be >= 1");
    if (majority_fraction <= 0.5 || majority_fraction >= 1.0)
      throw ValidationError("majority_fraction must lie in (0.5, 1)");
    if (label_noise < 0.0 || label_noise > 0.2) throw ValidationError("label_noise must be in [0, 0.2]");
  }
};

struct CifarLikeDataset {
  DatasetManifest manifest;
  // "majority" | "minority" | "mislabeled" per example, for diagnostics.
  std::unordered_map<std::string, std::string> subcluster;
};

namespace detail {

struct PatternBlob {
  double cx, cy, sigma;
  double amp[3];
};

struct ClassPattern {
  double grad_x[3], grad_y[3], bias[3];
  std::vector<PatternBlob> blobs;

  double eval(int ch, double x, double y) const {
    double v = bias[ch] + grad_x[ch] * (x / 31.0 - 0.5) + grad_y[ch] * (y / 31.0 - 0.5);
    for (const auto& b : blobs) {
      const double dx = x - b.cx, dy = y - b.cy;
      v += b.amp[ch] * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
    }
    return v;
  }
};

inline ClassPattern make_class_pattern(Rng& rng) {
  ClassPattern p;
  for (int ch = 0; ch < 3; ++ch) {
    p.grad_x[ch] = 1.2 * (rng.next_double() * 2.0 - 1.0);
    p.grad_y[ch] = 1.2 * (rng.next_double() * 2.0 - 1.0);
    p.bias[ch] = 0.0;
  }
  const int blobs = 5 + static_cast<int>(rng.next_below(3));
  for (int i = 0; i < blobs; ++i) {
    PatternBlob b;
    b.cx = 4.0 + 24.0 * rng.next_double();
    b.cy = 4.0 + 24.0 * rng.next_double();
    b.sigma = 2.5 + 5.0 * rng.next_double();
    for (int ch = 0; ch < 3; ++ch) b.amp[ch] = 1.6 * (rng.next_double() * 2.0 - 1.0);
    p.blobs.push_back(b);
  }

  // Equalize the patterns across classes: common contrast and zero mean per
  // channel. Without this the luck of the draw decides class difficulty (a
  // class with an extreme mean color is identifiable from channel statistics
  // alone, which no crop, flip or pixel noise disturbs), and the easiness
  // tails collapse onto one or two classes instead of reflecting the
  // per-example rendering knobs.
  double mean[3] = {0.0, 0.0, 0.0};
  for (int ch = 0; ch < 3; ++ch) {
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) mean[ch] += p.eval(ch, x, y);
    mean[ch] /= 1024.0;
  }
  double var = 0.0;
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        const double d = p.eval(ch, x, y) - mean[ch];
        var += d * d;
      }
  var /= 3.0 * 1024.0;
  const double scale = 0.16 / std::max(std::sqrt(var), 1e-6);
  for (int ch = 0; ch < 3; ++ch) {
    p.grad_x[ch] *= scale;
    p.grad_y[ch] *= scale;
    p.bias[ch] = -scale * mean[ch];
  }
  for (auto& b : p.blobs)
    for (int ch = 0; ch < 3; ++ch) b.amp[ch] *= scale;
  return p;
}

struct RenderParams {
  double dx = 0, dy = 0, angle = 0;
  bool flip = false;
  double mix = 0;       // weight of the secondary class pattern
  int mix_class = 0;
  double strength = 1;  // multiplier on the class signal, shrinks as d grows
  double noise = 0;     // per-pixel gaussian sigma, in 8-bit units
  std::vector<PatternBlob> style;  // per-example clutter
};

inline ImageU8 render_class_image(const std::vector<ClassPattern>& patterns, int label,
                                  const RenderParams& rp, Rng& rng) {
  ImageU8 img(3, 32, 32);
  const double ca = std::cos(rp.angle), sa = std::sin(rp.angle);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      const double fx = rp.flip ? 31.0 - x : static_cast<double>(x);
      const double ux = fx - 15.5, uy = y - 15.5;
      const double sx = ca * ux - sa * uy + 15.5 + rp.dx;
      const double sy = sa * ux + ca * uy + 15.5 + rp.dy;
      for (int ch = 0; ch < 3; ++ch) {
        double v = (1.0 - rp.mix) * patterns[label].eval(ch, sx, sy);
        if (rp.mix > 0.0) v += rp.mix * patterns[rp.mix_class].eval(ch, sx, sy);
        v *= rp.strength;  // clutter below stays full size: it is nuisance
        for (const auto& b : rp.style) {
          const double bdx = x - b.cx, bdy = y - b.cy;
          v += b.amp[ch] * std::exp(-(bdx * bdx + bdy * bdy) / (2.0 * b.sigma * b.sigma));
        }
        double px = 128.0 + 64.0 * v + rp.noise * rng.next_normal();
        img.at(ch, y, x) = static_cast<std::uint8_t>(std::clamp(px, 0.0, 255.0));
      }
    }
  }
  return img;
}

}  // namespace detail

inline CifarLikeDataset generate_cifar_like(const CifarLikeSpec& spec) {
  spec.validate();
  Rng rng(splitmix64(spec.seed) ^ 0x5ca1ab1eULL);

  std::vector<detail::ClassPattern> patterns;
  for (int c = 0; c < spec.num_classes; ++c) patterns.push_back(detail::make_class_pattern(rng));

  CifarLikeDataset out;
  out.manifest.dataset_id = "cifar-like:" + std::to_string(spec.seed);
  for (int c = 0; c < spec.num_classes; ++c)
    out.manifest.class_names.push_back(std::string("class") + static_cast<char>('a' + c));
  out.manifest.image_shape = {3, 32, 32};
  out.manifest.source_kind = "cifar-bin";
  out.manifest.source_root = "";

  auto emit_split = [&](Split split, int per_class) {
    std::size_t index = 0;
    const int majority = static_cast<int>(std::ceil(spec.majority_fraction * per_class));
    for (int c = 0; c < spec.num_classes; ++c) {
      for (int k = 0; k < per_class; ++k) {
        const bool is_majority = k < majority;
        // Majority examples draw from the mild half of the difficulty axis,
        // minority from the harsh half; every knob below is monotone in d.
        const double d = is_majority ? 0.5 * rng.next_double() : 0.5 + 0.5 * rng.next_double();
        detail::RenderParams rp;
        rp.dx = 16.0 * (rng.next_double() - 0.5) * d;
        rp.dy = 16.0 * (rng.next_double() - 0.5) * d;
        rp.angle = 0.6 * (rng.next_double() * 2.0 - 1.0) * d;
        rp.flip = d > 0.5 && rng.next_bool();
        if (d > 0.5 && rng.next_bool()) {
          rp.mix = spec.mix_max * (0.45 + 0.55 * rng.next_double()) * (2.0 * (d - 0.5));
          rp.mix_class = (c + 1 + static_cast<int>(rng.next_below(
                                      static_cast<std::uint64_t>(spec.num_classes - 1)))) %
                         spec.num_classes;
        }
        rp.strength = 1.0 - 0.7 * d;
        rp.noise = spec.noise_min + (spec.noise_max - spec.noise_min) * d;
        const int clutter = 1 + static_cast<int>(std::floor(3.0 * d));
        for (int i = 0; i < clutter; ++i) {
          detail::PatternBlob b{32.0 * rng.next_double(), 32.0 * rng.next_double(),
                                2.0 + 4.0 * rng.next_double(), {}};
          for (int ch = 0; ch < 3; ++ch)
            b.amp[ch] = (0.2 + 0.7 * d) * (rng.next_double() * 2.0 - 1.0);
          rp.style.push_back(b);
        }

        int label = c;
        bool mislabeled = false;
        if (spec.label_noise > 0.0 && rng.next_double() < spec.label_noise) {
          label = (c + 1 + static_cast<int>(rng.next_below(
                               static_cast<std::uint64_t>(spec.num_classes - 1)))) %
                  spec.num_classes;
          mislabeled = true;
        }

        ExampleRecord ex;
        ex.example_id = make_example_id(split, index++);
        ex.label = label;
        ex.split = split;
        ex.image = detail::render_class_image(patterns, c, rp, rng);
        out.manifest.examples.push_back(std::move(ex));
        out.subcluster[out.manifest.examples.back().example_id] =
            mislabeled ? "mislabeled" : (is_majority ? "majority" : "minority");
      }
    }
  };
  emit_split(Split::train, spec.train_per_class);
  emit_split(Split::test, spec.test_per_class);

  out.manifest.finalize();
  return out;
}

// Writes the generated dataset as CIFAR-layout batch files (10000 records per
// data_batch file, remainder in the last one) plus batches.meta.txt and the
// diagnostic subcluster_labels.json.
inline void save_cifar_like(const CifarLikeDataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<std::pair<int, ImageU8>> train, test;
  for (const auto& ex : ds.manifest.examples)
    (ex.split == Split::train ? train : test).emplace_back(ex.label, ex.image);

  constexpr std::size_t kPerFile = 10000;
  std::size_t file_index = 1;
  for (std::size_t start = 0; start < train.size(); start += kPerFile) {
    const std::size_t end = std::min(train.size(), start + kPerFile);
    std::vector<std::pair<int, ImageU8>> chunk(train.begin() + static_cast<std::ptrdiff_t>(start),
                                               train.begin() + static_cast<std::ptrdiff_t>(end));
    write_cifar_batch(dir / ("data_batch_" + std::to_string(file_index++) + ".bin"), chunk);
  }
  write_cifar_batch(dir / "test_batch.bin", test);

  std::string meta;
  for (const auto& name : ds.manifest.class_names) meta += name + "\n";
  atomic_write_file(dir / "batches.meta.txt", meta);
  nlohmann::json labels(ds.subcluster);
  atomic_write_file(dir / "subcluster_labels.json", labels.dump(2) + "\n");
}

// --- load_dataset dispatch ---------------------------------------------------
// Supported on-disk layouts: a CIFAR binary directory or a synthetic dataset
// directory (manifest.json + images.bin).
inline DatasetManifest load_dataset(const fs::path& source) {
  if (!fs::exists(source)) throw LoadError("dataset source does not exist: " + source.string());
  if (fs::is_directory(source)) {
    if (fs::exists(source / "manifest.json")) return load_synthetic_dir(source);
    return load_cifar_dir(source);
  }
  throw LoadError("unsupported dataset source (expected a directory): " + source.string());
}

}  // namespace easecore
