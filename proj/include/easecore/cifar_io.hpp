#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "easecore/common.hpp"
#include "easecore/io.hpp"
#include "easecore/manifest.hpp"

namespace easecore {

// The 6-batch CIFAR-10 binary layout: records of 3073 bytes, one label byte
// followed by a 3x32x32 plane-major pixel block. Reduced datasets written by
// the synthetic generator use the same record format with fewer records per
// file, so file sizes only need to be a multiple of the record size.

inline constexpr int kCifarDim = 32;
inline constexpr int kCifarChannels = 3;
inline constexpr std::size_t kCifarPixelBytes = 3072;
inline constexpr std::size_t kCifarRecordBytes = kCifarPixelBytes + 1;

inline const std::vector<std::string>& cifar10_class_names() {
  static const std::vector<std::string> names = {"airplane", "automobile", "bird",  "cat",
                                                 "deer",     "dog",        "frog",  "horse",
                                                 "ship",     "truck"};
  return names;
}

inline std::vector<std::string> cifar_train_files(const fs::path& dir) {
  std::vector<std::string> files;
  for (int i = 1; i <= 5; ++i) {
    std::string name = "data_batch_" + std::to_string(i) + ".bin";
    if (fs::exists(dir / name)) files.push_back(name);
  }
  return files;
}

inline void append_cifar_file(DatasetManifest& m, const fs::path& dir, const std::string& file,
                              Split split, std::size_t& next_index) {
  const fs::path path = dir / file;
  const auto bytes = read_binary_file(path);
  if (bytes.empty()) throw LoadError("empty CIFAR batch file: " + path.string());
  if (bytes.size() % kCifarRecordBytes != 0)
    throw LoadError("corrupt CIFAR batch file (size " + std::to_string(bytes.size()) +
                    " is not a multiple of " + std::to_string(kCifarRecordBytes) +
                    "): " + path.string());
  const std::size_t count = bytes.size() / kCifarRecordBytes;
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t off = r * kCifarRecordBytes;
    ExampleRecord ex;
    ex.example_id = make_example_id(split, next_index);
    ex.label = bytes[off];
    if (ex.label >= static_cast<int>(m.class_names.size()))
      throw ValidationError("label " + std::to_string(ex.label) + " outside declared classes in " +
                            path.string() + " record " + std::to_string(r));
    ex.split = split;
    ex.image = ImageU8(kCifarChannels, kCifarDim, kCifarDim);
    std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(off + 1),
              bytes.begin() + static_cast<std::ptrdiff_t>(off + kCifarRecordBytes),
              ex.image.data.begin());
    ex.source_file = file;
    ex.source_offset = off + 1;
    m.examples.push_back(std::move(ex));
    ++next_index;
  }
}

// Loads a CIFAR-layout directory. Files are visited in the canonical batch
// order (data_batch_1..5, test_batch), never in directory enumeration order,
// so ids are stable. An optional batches.meta.txt overrides class names.
inline DatasetManifest load_cifar_dir(const fs::path& dir) {
  DatasetManifest m;
  m.source_kind = "cifar-bin";
  m.source_root = dir.string();
  m.image_shape = {kCifarChannels, kCifarDim, kCifarDim};

  const fs::path meta = dir / "batches.meta.txt";
  if (fs::exists(meta)) {
    std::istringstream in(read_text_file(meta));
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) m.class_names.push_back(line);
    }
  }
  if (m.class_names.empty()) m.class_names = cifar10_class_names();

  const auto train_files = cifar_train_files(dir);
  const bool has_test = fs::exists(dir / "test_batch.bin");
  if (train_files.empty() && !has_test)
    throw LoadError("no CIFAR batch files (data_batch_*.bin / test_batch.bin) in " + dir.string());

  std::size_t train_index = 0;
  for (const auto& f : train_files) append_cifar_file(m, dir, f, Split::train, train_index);
  std::size_t test_index = 0;
  if (has_test) append_cifar_file(m, dir, "test_batch.bin", Split::test, test_index);

  m.dataset_id = "cifar-bin:" + dir.filename().string();
  m.finalize();
  return m;
}

// Writes records (label, pixels) into one CIFAR-format batch file.
inline void write_cifar_batch(const fs::path& path,
                              const std::vector<std::pair<int, ImageU8>>& records) {
  std::vector<unsigned char> bytes;
  bytes.reserve(records.size() * kCifarRecordBytes);
  for (const auto& [label, image] : records) {
    if (image.size() != kCifarPixelBytes)
      throw ValidationError("CIFAR record requires 3x32x32 pixels");
    bytes.push_back(static_cast<unsigned char>(label));
    bytes.insert(bytes.end(), image.data.begin(), image.data.end());
  }
  atomic_write_file(path, bytes);
}

}  // namespace easecore
