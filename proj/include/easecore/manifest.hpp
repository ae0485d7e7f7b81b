#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "easecore/common.hpp"
#include "easecore/io.hpp"
#include "easecore/tensor.hpp"

namespace easecore {

enum class Split { train, test };

inline const char* split_name(Split s) { return s == Split::train ? "train" : "test"; }

inline Split split_from_name(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split: '" + s + "'");
}

struct ExampleRecord {
  std::string example_id;
  int label = 0;
  Split split = Split::train;
  ImageU8 image;
  // Where the pixels came from, so manifests can reference instead of copy.
  std::string source_file;
  std::uint64_t source_offset = 0;
};

// example_id = "<split>-<zero-padded source index>"; stable keys for
// cross-run joins.
inline std::string make_example_id(Split split, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s-%06zu", split_name(split), index);
  return buf;
}

// Immutable registry of examples. Construct, call finalize(), then share.
struct DatasetManifest {
  std::string dataset_id;
  std::vector<std::string> class_names;
  std::vector<ExampleRecord> examples;
  ImageShape image_shape;
  std::string source_kind;  // "cifar-bin" | "synthetic-dir"
  std::string source_root;

  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> test_indices;
  std::unordered_map<std::string, std::size_t> id_index;
  std::string content_fingerprint;

  const ExampleRecord& by_id(const std::string& id) const {
    auto it = id_index.find(id);
    if (it == id_index.end()) throw ValidationError("unknown example_id: " + id);
    return examples[it->second];
  }

  std::vector<std::string> split_ids(Split split) const {
    const auto& idx = split == Split::train ? train_indices : test_indices;
    std::vector<std::string> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(examples[i].example_id);
    return out;
  }

  // Builds indices, checks invariants, computes the content fingerprint.
  void finalize() {
    train_indices.clear();
    test_indices.clear();
    id_index.clear();
    id_index.reserve(examples.size());
    Fnv1a hash;
    hash.update(dataset_id);
    for (const auto& name : class_names) hash.update(name).update(";", 1);
    for (std::size_t i = 0; i < examples.size(); ++i) {
      const auto& ex = examples[i];
      if (!id_index.emplace(ex.example_id, i).second)
        throw ValidationError("duplicate example_id: " + ex.example_id);
      if (ex.label < 0 || ex.label >= static_cast<int>(class_names.size()))
        throw ValidationError("label " + std::to_string(ex.label) + " out of range for example " +
                              ex.example_id);
      if (ex.image.c != image_shape.c || ex.image.h != image_shape.h || ex.image.w != image_shape.w)
        throw ValidationError("image shape mismatch for example " + ex.example_id);
      (ex.split == Split::train ? train_indices : test_indices).push_back(i);
      hash.update(ex.example_id);
      const int label = ex.label;
      hash.update(&label, sizeof(label));
      hash.update(split_name(ex.split));
      hash.update(ex.image.data.data(), ex.image.data.size());
    }
    content_fingerprint = hash.hex();
  }
};

// Manifest with the train split restricted to `retained` (order preserved);
// the test split is untouched. Used by the ablation strategies, which retrain
// on a subset but evaluate on the full test set.
inline DatasetManifest restrict_train(const DatasetManifest& m,
                                      const std::unordered_set<std::string>& retained);

inline DatasetManifest restrict_train(const DatasetManifest& m,
                                      const std::vector<std::string>& retained) {
  return restrict_train(m, std::unordered_set<std::string>(retained.begin(), retained.end()));
}

inline DatasetManifest restrict_train(const DatasetManifest& m,
                                      const std::unordered_set<std::string>& retained) {
  DatasetManifest out;
  out.class_names = m.class_names;
  out.image_shape = m.image_shape;
  out.source_kind = m.source_kind;
  out.source_root = m.source_root;
  Fnv1a id_hash;
  for (const auto& ex : m.examples) {
    if (ex.split == Split::train) {
      if (!retained.count(ex.example_id)) continue;
      id_hash.update(ex.example_id).update(";", 1);
    }
    out.examples.push_back(ex);
  }
  out.dataset_id = m.dataset_id + "@" + id_hash.hex();
  out.finalize();
  const std::size_t kept = out.train_indices.size();
  if (kept != retained.size())
    throw ValidationError("retained set contains ids outside the train split");
  return out;
}

// --- persistence -----------------------------------------------------------
// JSON layout: {dataset_id, class_names, image_shape, source, examples:
// [{id,label,split,file,offset}]}. Pixels stay in the referenced source
// files; loading re-reads them from there.

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["dataset_id"] = m.dataset_id;
  j["class_names"] = m.class_names;
  j["image_shape"] = {{"c", m.image_shape.c}, {"h", m.image_shape.h}, {"w", m.image_shape.w}};
  j["source"] = {{"kind", m.source_kind}, {"root", m.source_root}};
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& ex : m.examples) {
    arr.push_back({{"id", ex.example_id},
                   {"label", ex.label},
                   {"split", split_name(ex.split)},
                   {"file", ex.source_file},
                   {"offset", ex.source_offset}});
  }
  j["examples"] = std::move(arr);
  return j;
}

// Reads back a manifest persisted with manifest_to_json. `pixel_reader` maps
// (file, offset) to pixel bytes of image_shape size.
template <typename PixelReader>
DatasetManifest manifest_from_json(const nlohmann::json& j, PixelReader&& pixel_reader) {
  DatasetManifest m;
  m.dataset_id = j.at("dataset_id").get<std::string>();
  m.class_names = j.at("class_names").get<std::vector<std::string>>();
  m.image_shape = {j.at("image_shape").at("c").get<int>(), j.at("image_shape").at("h").get<int>(),
                   j.at("image_shape").at("w").get<int>()};
  m.source_kind = j.at("source").at("kind").get<std::string>();
  m.source_root = j.at("source").at("root").get<std::string>();
  for (const auto& e : j.at("examples")) {
    ExampleRecord ex;
    ex.example_id = e.at("id").get<std::string>();
    ex.label = e.at("label").get<int>();
    ex.split = split_from_name(e.at("split").get<std::string>());
    ex.source_file = e.at("file").get<std::string>();
    ex.source_offset = e.at("offset").get<std::uint64_t>();
    ex.image = pixel_reader(ex.source_file, ex.source_offset, m.image_shape);
    m.examples.push_back(std::move(ex));
  }
  m.finalize();
  return m;
}

}  // namespace easecore
