#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "easecore/analysis.hpp"
#include "easecore/architectures.hpp"
#include "easecore/common.hpp"
#include "easecore/compression.hpp"
#include "easecore/easiness.hpp"
#include "easecore/io.hpp"
#include "easecore/manifest.hpp"
#include "easecore/optimizer.hpp"
#include "easecore/png_io.hpp"
#include "easecore/svg_plot.hpp"
#include "easecore/synthetic.hpp"
#include "easecore/trainer.hpp"

namespace easecore {

using nlohmann::json;

// ===========================================================================
// Artifact identity: every emitted file embeds the hash of the resolved
// config that produced it as a token "cfg-<16 hex digits>". Re-running the
// same config skips files whose embedded hash already matches (so reruns are
// byte-identical, timestamps included), and refuses to overwrite files whose
// hash differs or is missing.
// ===========================================================================

inline std::string config_hash_token(const std::string& canonical) {
  return "cfg-" + fnv1a_hex(canonical);
}

inline std::optional<std::string> find_embedded_config_hash(const unsigned char* data,
                                                            std::size_t n) {
  static const char tag[] = "cfg-";
  if (n < 20) return std::nullopt;
  for (std::size_t i = 0; i + 20 <= n; ++i) {
    if (std::memcmp(data + i, tag, 4) != 0) continue;
    bool ok = true;
    for (std::size_t k = 4; k < 20; ++k) {
      const unsigned char c = data[i + k];
      if (!std::isxdigit(c) || std::isupper(c)) {
        ok = false;
        break;
      }
    }
    if (ok) return std::string(reinterpret_cast<const char*>(data + i), 20);
  }
  return std::nullopt;
}

// Returns true if the file was written, false if an identical-config file was
// already in place and was left untouched.
inline bool write_artifact(const fs::path& path, const std::string& content,
                           const std::string& hash) {
  if (content.find(hash) == std::string::npos)
    throw ValidationError("internal: artifact content for " + path.string() +
                          " does not embed its config hash");
  if (fs::exists(path)) {
    const auto existing = read_binary_file(path);
    const auto found = find_embedded_config_hash(existing.data(), existing.size());
    if (!found)
      throw ValidationError("refusing to overwrite " + path.string() +
                            ": existing file carries no config hash (not an easecore artifact?)");
    if (*found != hash)
      throw ValidationError("refusing to overwrite " + path.string() +
                            ": existing file was produced by config " + *found +
                            ", current config is " + hash +
                            " (use a fresh output directory or remove the stale outputs)");
    return false;
  }
  fs::create_directories(path.parent_path());
  atomic_write_file(path, content);
  return true;
}

// Same skip/refuse semantics for PNGs, where the hash lives in a tEXt chunk.
inline bool write_png_artifact(const MeanImage& image, const fs::path& path,
                               const std::string& hash) {
  if (fs::exists(path)) {
    const auto existing = read_binary_file(path);
    const auto found = find_embedded_config_hash(existing.data(), existing.size());
    if (!found)
      throw ValidationError("refusing to overwrite " + path.string() +
                            ": existing file carries no config hash (not an easecore artifact?)");
    if (*found != hash)
      throw ValidationError("refusing to overwrite " + path.string() +
                            ": existing file was produced by config " + *found +
                            ", current config is " + hash);
    return false;
  }
  fs::create_directories(path.parent_path());
  write_mean_image_png(image, path, {{"config", hash}});
  return true;
}

inline std::string iso8601_utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[80];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
  return buf;
}

// ===========================================================================
// Trial loss caches. The disk cache lives under EASECORE_CACHE_DIR (or
// <output_dir>/cache when unset); keys already encode the full run identity
// (architecture fingerprint, dataset fingerprint, train config, seed, T), so
// files can be shared freely between experiments.
// ===========================================================================

class MemoryLossCache : public LossCache {
 public:
  bool lookup(const std::string& key, std::vector<double>* out) override {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = map_.find(key);
    if (it == map_.end()) return false;
    *out = it->second;
    return true;
  }
  void store(const std::string& key, const std::vector<double>& losses) override {
    std::lock_guard<std::mutex> lock(mu_);
    map_[key] = losses;
  }

 private:
  std::mutex mu_;
  std::map<std::string, std::vector<double>> map_;
};

class DiskLossCache : public LossCache {
 public:
  explicit DiskLossCache(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

  const fs::path& root() const { return root_; }

  bool lookup(const std::string& key, std::vector<double>* out) override {
    if (mem_.lookup(key, out)) return true;
    const fs::path file = root_ / (key + ".bin");
    if (!fs::exists(file)) return false;
    const auto raw = read_binary_file(file);
    // Malformed entries count as misses; the caller recomputes and overwrites.
    if (raw.size() < 12 || std::memcmp(raw.data(), "ELC1", 4) != 0) return false;
    std::uint64_t count = 0;
    std::memcpy(&count, raw.data() + 4, 8);
    if (raw.size() != 12 + count * sizeof(double)) return false;
    out->resize(count);
    std::memcpy(out->data(), raw.data() + 12, count * sizeof(double));
    mem_.store(key, *out);
    return true;
  }

  void store(const std::string& key, const std::vector<double>& losses) override {
    mem_.store(key, losses);
    std::string blob;
    blob.reserve(12 + losses.size() * sizeof(double));
    blob.append("ELC1", 4);
    const std::uint64_t count = losses.size();
    blob.append(reinterpret_cast<const char*>(&count), 8);
    blob.append(reinterpret_cast<const char*>(losses.data()), losses.size() * sizeof(double));
    atomic_write_file(root_ / (key + ".bin"), blob);
  }

 private:
  fs::path root_;
  MemoryLossCache mem_;
};

// ===========================================================================
// Experiment configuration: one JSON document describing the dataset, the
// architectures, the training recipe and the per-command parameters. Parsing
// resolves every default so the canonical form (and therefore the config
// hash) is independent of which optional keys the author spelled out.
// ===========================================================================

struct DatasetConfig {
  std::string source;  // dataset directory; empty when synthetic
  std::string synthetic_kind;  // "cifar-like" | "biased" | ""
  CifarLikeSpec cifar_like;
  SyntheticBiasSpec biased;
};

struct NamedArchitecture {
  std::string name;  // label used in filenames and pair labels
  ArchitectureSpec spec;
};

struct EasinessParams {
  std::int64_t T = 0;
  int M = 10;
  std::uint64_t master_seed = 1;
  double fraction = 0.1;
};

struct AnalysisParams {
  double fraction = 0.1;
  std::vector<std::int64_t> ts;  // matching-rate curve sample points
  std::vector<std::pair<std::int64_t, std::int64_t>> begin_end;
};

struct CompressionParams {
  std::vector<Strategy> strategies{Strategy::easy, Strategy::hard, Strategy::random,
                                   Strategy::stepwise};
  std::vector<double> ratios{0.1, 0.2, 0.3};
  std::vector<std::uint64_t> retrain_seeds{1, 2, 3};
  std::int64_t T = 0;  // defaults to easiness.T
  int M = 0;           // defaults to easiness.M
};

struct ExperimentConfig {
  fs::path output_dir;
  DatasetConfig dataset;
  std::vector<NamedArchitecture> architectures;
  TrainConfig train;
  EasinessParams easiness;
  AnalysisParams analysis;
  CompressionParams compression;

  // Execution knobs; deliberately excluded from the config hash because they
  // cannot change any output byte.
  int workers = 1;
  bool use_cache = true;
  fs::path cache_dir;

  std::string hash;  // "cfg-<16 hex>", set by parse_experiment_config

  json canonical_json() const {
    json d;
    if (!dataset.source.empty()) {
      d["source"] = dataset.source;
    } else if (dataset.synthetic_kind == "cifar-like") {
      const CifarLikeSpec& s = dataset.cifar_like;
      d["synthetic"] = {{"kind", "cifar-like"},
                        {"num_classes", s.num_classes},
                        {"train_per_class", s.train_per_class},
                        {"test_per_class", s.test_per_class},
                        {"majority_fraction", s.majority_fraction},
                        {"label_noise", s.label_noise},
                        {"mix_max", s.mix_max},
                        {"noise_min", s.noise_min},
                        {"noise_max", s.noise_max},
                        {"seed", s.seed}};
    } else {
      const SyntheticBiasSpec& s = dataset.biased;
      d["synthetic"] = {{"kind", "biased"},
                        {"num_classes", s.num_classes},
                        {"examples_per_class", s.examples_per_class},
                        {"test_per_class", s.test_per_class},
                        {"majority_fraction", s.majority_fraction},
                        {"subcluster_separation", s.subcluster_separation},
                        {"noise_scale", s.noise_scale},
                        {"class_separation", s.class_separation},
                        {"seed", s.seed}};
    }

    json archs = json::array();
    for (const NamedArchitecture& a : architectures)
      archs.push_back({{"name", a.name}, {"canonical", a.spec.canonical()}});

    json be = json::array();
    for (const auto& [ta, tb] : analysis.begin_end) be.push_back({ta, tb});

    json strategies = json::array();
    for (Strategy s : compression.strategies) strategies.push_back(strategy_name(s));

    return json{{"dataset", d},
                {"architectures", archs},
                {"train", train.canonical()},
                {"easiness",
                 {{"T", easiness.T},
                  {"M", easiness.M},
                  {"master_seed", easiness.master_seed},
                  {"fraction", easiness.fraction}}},
                {"analysis",
                 {{"fraction", analysis.fraction}, {"ts", analysis.ts}, {"begin_end", be}}},
                {"compression",
                 {{"strategies", strategies},
                  {"ratios", compression.ratios},
                  {"retrain_seeds", compression.retrain_seeds},
                  {"T", compression.T},
                  {"M", compression.M}}}};
  }
};

struct CommandOverrides {
  std::optional<std::string> out_dir;  // --out
  std::optional<int> workers;          // --workers
  std::optional<std::uint64_t> seed;   // --seed, replaces easiness.master_seed
  bool no_cache = false;               // --no-cache
};

// --- JSON field access with config-path diagnostics -------------------------

namespace cfg {

inline std::string type_name(const json& v) {
  switch (v.type()) {
    case json::value_t::object: return "object";
    case json::value_t::array: return "array";
    case json::value_t::string: return "string";
    case json::value_t::boolean: return "boolean";
    case json::value_t::number_integer:
    case json::value_t::number_unsigned: return "integer";
    case json::value_t::number_float: return "number";
    case json::value_t::null: return "null";
    default: return "value";
  }
}

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw ValidationError("config field \"" + path + "\": " + what);
}

inline const json* find(const json& j, const std::string& path, const std::string& key) {
  if (!j.is_object()) fail(path, "expected an object, got " + type_name(j));
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline const json& require(const json& j, const std::string& path, const std::string& key) {
  const json* v = find(j, path, key);
  if (v == nullptr) fail(join(path, key), "missing required field");
  return *v;
}

inline double as_double(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number, got " + type_name(v));
  return v.get<double>();
}

inline std::int64_t as_int(const json& v, const std::string& path) {
  if (!v.is_number_integer() && !v.is_number_unsigned())
    fail(path, "expected an integer, got " + type_name(v));
  return v.get<std::int64_t>();
}

inline std::uint64_t as_uint(const json& v, const std::string& path) {
  const std::int64_t n = as_int(v, path);
  if (n < 0 && !v.is_number_unsigned()) fail(path, "expected a nonnegative integer");
  return v.get<std::uint64_t>();
}

inline std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string, got " + type_name(v));
  return v.get<std::string>();
}

inline const json& as_array(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array, got " + type_name(v));
  return v;
}

inline double get_double(const json& j, const std::string& path, const std::string& key,
                         double fallback) {
  const json* v = find(j, path, key);
  return v == nullptr ? fallback : as_double(*v, join(path, key));
}

inline std::int64_t get_int(const json& j, const std::string& path, const std::string& key,
                            std::int64_t fallback) {
  const json* v = find(j, path, key);
  return v == nullptr ? fallback : as_int(*v, join(path, key));
}

inline std::uint64_t get_uint(const json& j, const std::string& path, const std::string& key,
                              std::uint64_t fallback) {
  const json* v = find(j, path, key);
  return v == nullptr ? fallback : as_uint(*v, join(path, key));
}

inline void reject_unknown_keys(const json& j, const std::string& path,
                                std::initializer_list<const char*> known) {
  if (!j.is_object()) fail(path, "expected an object, got " + type_name(j));
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) fail(join(path, it.key()), "unknown field");
  }
}

template <typename T, typename Fn>
std::vector<T> map_array(const json& v, const std::string& path, Fn fn) {
  const json& arr = as_array(v, path);
  std::vector<T> out;
  out.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i)
    out.push_back(fn(arr[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace cfg

// --- section parsers ---------------------------------------------------------

inline DatasetConfig parse_dataset_config(const json& j, const std::string& path) {
  DatasetConfig out;
  const json* source = cfg::find(j, path, "source");
  const json* synth = cfg::find(j, path, "synthetic");
  cfg::reject_unknown_keys(j, path, {"source", "synthetic"});
  if ((source != nullptr) == (synth != nullptr))
    cfg::fail(path, "exactly one of \"source\" or \"synthetic\" must be given");
  if (source != nullptr) {
    out.source = cfg::as_string(*source, cfg::join(path, "source"));
    if (out.source.empty()) cfg::fail(cfg::join(path, "source"), "must not be empty");
    return out;
  }
  const std::string spath = cfg::join(path, "synthetic");
  const std::string kind = cfg::as_string(cfg::require(*synth, spath, "kind"), spath + ".kind");
  out.synthetic_kind = kind;
  if (kind == "cifar-like") {
    cfg::reject_unknown_keys(*synth, spath,
                             {"kind", "num_classes", "train_per_class", "test_per_class",
                              "majority_fraction", "label_noise", "mix_max", "noise_min",
                              "noise_max", "seed"});
    CifarLikeSpec& s = out.cifar_like;
    s.num_classes = static_cast<int>(cfg::get_int(*synth, spath, "num_classes", s.num_classes));
    s.train_per_class =
        static_cast<int>(cfg::get_int(*synth, spath, "train_per_class", s.train_per_class));
    s.test_per_class =
        static_cast<int>(cfg::get_int(*synth, spath, "test_per_class", s.test_per_class));
    s.majority_fraction = cfg::get_double(*synth, spath, "majority_fraction", s.majority_fraction);
    s.label_noise = cfg::get_double(*synth, spath, "label_noise", s.label_noise);
    s.mix_max = cfg::get_double(*synth, spath, "mix_max", s.mix_max);
    s.noise_min = cfg::get_double(*synth, spath, "noise_min", s.noise_min);
    s.noise_max = cfg::get_double(*synth, spath, "noise_max", s.noise_max);
    s.seed = cfg::get_uint(*synth, spath, "seed", s.seed);
    try {
      s.validate();
    } catch (const ValidationError& e) {
      cfg::fail(spath, e.what());
    }
  } else if (kind == "biased") {
    cfg::reject_unknown_keys(*synth, spath,
                             {"kind", "num_classes", "examples_per_class", "test_per_class",
                              "majority_fraction", "subcluster_separation", "noise_scale",
                              "class_separation", "seed"});
    SyntheticBiasSpec& s = out.biased;
    s.num_classes = static_cast<int>(cfg::get_int(*synth, spath, "num_classes", s.num_classes));
    s.examples_per_class = static_cast<int>(
        cfg::get_int(*synth, spath, "examples_per_class", s.examples_per_class));
    s.test_per_class =
        static_cast<int>(cfg::get_int(*synth, spath, "test_per_class", s.test_per_class));
    s.majority_fraction = cfg::get_double(*synth, spath, "majority_fraction", s.majority_fraction);
    s.subcluster_separation =
        cfg::get_double(*synth, spath, "subcluster_separation", s.subcluster_separation);
    s.noise_scale = cfg::get_double(*synth, spath, "noise_scale", s.noise_scale);
    s.class_separation = cfg::get_double(*synth, spath, "class_separation", s.class_separation);
    s.seed = cfg::get_uint(*synth, spath, "seed", s.seed);
    try {
      s.validate();
    } catch (const ValidationError& e) {
      cfg::fail(spath, e.what());
    }
  } else {
    cfg::fail(spath + ".kind", "expected \"cifar-like\" or \"biased\", got \"" + kind + "\"");
  }
  return out;
}

inline NamedArchitecture parse_architecture(const json& j, const std::string& path) {
  cfg::reject_unknown_keys(
      j, path,
      {"name", "family", "num_classes", "input_shape", "stem_stride", "blocks_per_group",
       "widths", "head_hidden", "stem_channels", "stem_pool_stride", "layers_per_block", "growth",
       "bottleneck_mult", "plain_widths"});
  NamedArchitecture out;
  ArchitectureSpec& s = out.spec;
  s.family = cfg::as_string(cfg::require(j, path, "family"), cfg::join(path, "family"));
  out.name = cfg::find(j, path, "name") != nullptr
                 ? cfg::as_string(*cfg::find(j, path, "name"), cfg::join(path, "name"))
                 : s.family;
  s.num_classes = static_cast<int>(cfg::get_int(j, path, "num_classes", s.num_classes));
  if (const json* shape = cfg::find(j, path, "input_shape")) {
    const std::string sp = cfg::join(path, "input_shape");
    const json& arr = cfg::as_array(*shape, sp);
    if (arr.size() != 3) cfg::fail(sp, "expected [channels, height, width]");
    s.input_shape = {static_cast<int>(cfg::as_int(arr[0], sp)),
                     static_cast<int>(cfg::as_int(arr[1], sp)),
                     static_cast<int>(cfg::as_int(arr[2], sp))};
  }
  s.stem_stride = static_cast<int>(cfg::get_int(j, path, "stem_stride", s.stem_stride));
  s.blocks_per_group =
      static_cast<int>(cfg::get_int(j, path, "blocks_per_group", s.blocks_per_group));
  s.head_hidden = static_cast<int>(cfg::get_int(j, path, "head_hidden", s.head_hidden));
  s.stem_channels = static_cast<int>(cfg::get_int(j, path, "stem_channels", s.stem_channels));
  s.stem_pool_stride =
      static_cast<int>(cfg::get_int(j, path, "stem_pool_stride", s.stem_pool_stride));
  s.layers_per_block =
      static_cast<int>(cfg::get_int(j, path, "layers_per_block", s.layers_per_block));
  s.bottleneck_mult =
      static_cast<int>(cfg::get_int(j, path, "bottleneck_mult", s.bottleneck_mult));
  auto fill = [&](const char* key, auto& arr_field) {
    if (const json* v = cfg::find(j, path, key)) {
      const std::string kp = cfg::join(path, key);
      const json& arr = cfg::as_array(*v, kp);
      if (arr.size() != arr_field.size())
        cfg::fail(kp, "expected exactly " + std::to_string(arr_field.size()) + " entries");
      for (std::size_t i = 0; i < arr_field.size(); ++i)
        arr_field[i] = static_cast<int>(cfg::as_int(arr[i], kp));
    }
  };
  fill("widths", s.widths);
  fill("growth", s.growth);
  fill("plain_widths", s.plain_widths);
  try {
    s.validate();
  } catch (const ValidationError& e) {
    cfg::fail(path, e.what());
  }
  return out;
}

inline TrainConfig parse_train_config(const json& j, const std::string& path) {
  cfg::reject_unknown_keys(j, path,
                           {"momentum", "weight_decay", "initial_lr", "lr_milestones",
                            "batch_size", "max_epochs", "checkpoint_updates"});
  TrainConfig c;
  c.momentum = cfg::get_double(j, path, "momentum", c.momentum);
  c.weight_decay = cfg::get_double(j, path, "weight_decay", c.weight_decay);
  c.initial_lr = cfg::get_double(j, path, "initial_lr", c.initial_lr);
  c.batch_size = static_cast<int>(cfg::get_int(j, path, "batch_size", c.batch_size));
  c.max_epochs = static_cast<int>(cfg::get_int(j, path, "max_epochs", c.max_epochs));
  if (const json* v = cfg::find(j, path, "lr_milestones"))
    c.lr_milestones = cfg::map_array<int>(*v, cfg::join(path, "lr_milestones"),
                                          [](const json& e, const std::string& p) {
                                            return static_cast<int>(cfg::as_int(e, p));
                                          });
  if (const json* v = cfg::find(j, path, "checkpoint_updates"))
    c.checkpoint_updates = cfg::map_array<std::int64_t>(
        *v, cfg::join(path, "checkpoint_updates"),
        [](const json& e, const std::string& p) { return cfg::as_int(e, p); });
  return c;
}

// Parses and fully resolves a config document: defaults filled in, CLI
// overrides applied, checkpoint list reconciled with every requested T, and
// the config hash computed over the canonical form.
inline ExperimentConfig parse_experiment_config(const json& j, const CommandOverrides& ov) {
  cfg::reject_unknown_keys(j, "",
                           {"output_dir", "dataset", "architectures", "train", "easiness",
                            "analysis", "compression"});
  ExperimentConfig out;

  if (ov.out_dir.has_value()) {
    out.output_dir = *ov.out_dir;
  } else if (const json* v = cfg::find(j, "", "output_dir")) {
    out.output_dir = cfg::as_string(*v, "output_dir");
  } else {
    cfg::fail("output_dir", "missing (set it in the config or pass --out)");
  }

  out.dataset = parse_dataset_config(cfg::require(j, "", "dataset"), "dataset");

  const json& archs = cfg::as_array(cfg::require(j, "", "architectures"), "architectures");
  if (archs.empty()) cfg::fail("architectures", "must list at least one architecture");
  for (std::size_t i = 0; i < archs.size(); ++i)
    out.architectures.push_back(
        parse_architecture(archs[i], "architectures[" + std::to_string(i) + "]"));
  std::set<std::string> names;
  for (const NamedArchitecture& a : out.architectures)
    if (!names.insert(a.name).second)
      cfg::fail("architectures", "duplicate architecture name \"" + a.name +
                                     "\"; give each entry a distinct \"name\"");

  if (const json* v = cfg::find(j, "", "train")) out.train = parse_train_config(*v, "train");

  // easiness: T is the one mandatory experiment parameter.
  const json& ez = cfg::require(j, "", "easiness");
  cfg::reject_unknown_keys(ez, "easiness", {"T", "M", "master_seed", "fraction"});
  out.easiness.T = cfg::as_int(cfg::require(ez, "easiness", "T"), "easiness.T");
  out.easiness.M = static_cast<int>(cfg::get_int(ez, "easiness", "M", out.easiness.M));
  out.easiness.master_seed =
      cfg::get_uint(ez, "easiness", "master_seed", out.easiness.master_seed);
  out.easiness.fraction = cfg::get_double(ez, "easiness", "fraction", out.easiness.fraction);
  if (ov.seed.has_value()) out.easiness.master_seed = *ov.seed;
  if (out.easiness.M < 1) cfg::fail("easiness.M", "must be >= 1");
  if (out.easiness.T < 0) cfg::fail("easiness.T", "must be >= 0");
  if (!(out.easiness.fraction > 0.0) || out.easiness.fraction > 0.5)
    cfg::fail("easiness.fraction", "must lie in (0, 0.5], got " +
                                       format_double(out.easiness.fraction));

  out.analysis.fraction = out.easiness.fraction;
  out.analysis.ts = {out.easiness.T};
  if (const json* v = cfg::find(j, "", "analysis")) {
    cfg::reject_unknown_keys(*v, "analysis", {"fraction", "ts", "begin_end"});
    out.analysis.fraction = cfg::get_double(*v, "analysis", "fraction", out.analysis.fraction);
    if (const json* ts = cfg::find(*v, "analysis", "ts"))
      out.analysis.ts = cfg::map_array<std::int64_t>(
          *ts, "analysis.ts",
          [](const json& e, const std::string& p) { return cfg::as_int(e, p); });
    if (out.analysis.ts.empty()) cfg::fail("analysis.ts", "must not be empty");
    if (const json* be = cfg::find(*v, "analysis", "begin_end")) {
      const json& arr = cfg::as_array(*be, "analysis.begin_end");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string p = "analysis.begin_end[" + std::to_string(i) + "]";
        const json& pair = cfg::as_array(arr[i], p);
        if (pair.size() != 2) cfg::fail(p, "expected [T_begin, T_end]");
        out.analysis.begin_end.emplace_back(cfg::as_int(pair[0], p), cfg::as_int(pair[1], p));
      }
    } else if (out.analysis.ts.size() >= 2) {
      out.analysis.begin_end.emplace_back(out.analysis.ts.front(), out.analysis.ts.back());
    }
  }
  if (!(out.analysis.fraction > 0.0) || out.analysis.fraction > 0.5)
    cfg::fail("analysis.fraction", "must lie in (0, 0.5], got " +
                                       format_double(out.analysis.fraction));

  out.compression.T = out.easiness.T;
  out.compression.M = out.easiness.M;
  if (const json* v = cfg::find(j, "", "compression")) {
    cfg::reject_unknown_keys(*v, "compression", {"strategies", "ratios", "retrain_seeds", "T", "M"});
    if (const json* s = cfg::find(*v, "compression", "strategies"))
      out.compression.strategies = cfg::map_array<Strategy>(
          *s, "compression.strategies", [](const json& e, const std::string& p) {
            const std::string name = cfg::as_string(e, p);
            try {
              return strategy_from_name(name);
            } catch (const ValidationError&) {
              cfg::fail(p, "unknown strategy \"" + name +
                               "\" (expected easy, hard, random or stepwise)");
            }
          });
    if (const json* r = cfg::find(*v, "compression", "ratios"))
      out.compression.ratios = cfg::map_array<double>(
          *r, "compression.ratios",
          [](const json& e, const std::string& p) { return cfg::as_double(e, p); });
    if (const json* s = cfg::find(*v, "compression", "retrain_seeds"))
      out.compression.retrain_seeds = cfg::map_array<std::uint64_t>(
          *s, "compression.retrain_seeds",
          [](const json& e, const std::string& p) { return cfg::as_uint(e, p); });
    out.compression.T = cfg::get_int(*v, "compression", "T", out.compression.T);
    out.compression.M = static_cast<int>(cfg::get_int(*v, "compression", "M", out.compression.M));
  }
  for (double r : out.compression.ratios)
    if (!(r >= 0.0) || r >= 1.0) cfg::fail("compression.ratios", "ratios must lie in [0, 1)");

  // Every requested T must be a training checkpoint. When the author leaves
  // the checkpoint list out we derive it; otherwise we only verify coverage.
  std::set<std::int64_t> required{out.easiness.T, out.compression.T};
  for (std::int64_t t : out.analysis.ts) required.insert(t);
  for (const auto& [ta, tb] : out.analysis.begin_end) {
    required.insert(ta);
    required.insert(tb);
  }
  if (out.train.checkpoint_updates.empty()) {
    out.train.checkpoint_updates.assign(required.begin(), required.end());
  } else {
    for (std::int64_t t : required)
      if (std::find(out.train.checkpoint_updates.begin(), out.train.checkpoint_updates.end(),
                    t) == out.train.checkpoint_updates.end())
        cfg::fail("train.checkpoint_updates",
                  "T=" + std::to_string(t) +
                      " is requested by the experiment but missing from the checkpoint list");
  }

  if (ov.workers.has_value()) out.workers = *ov.workers;
  if (out.workers < 1) cfg::fail("workers", "must be >= 1");
  out.use_cache = !ov.no_cache;
  if (const char* env = std::getenv("EASECORE_CACHE_DIR"); env != nullptr && env[0] != '\0') {
    out.cache_dir = env;
  } else {
    out.cache_dir = out.output_dir / "cache";
  }

  out.hash = config_hash_token(out.canonical_json().dump());
  return out;
}

inline ExperimentConfig load_experiment_config(const fs::path& file, const CommandOverrides& ov) {
  json j;
  try {
    j = json::parse(read_text_file(file));
  } catch (const json::parse_error& e) {
    throw LoadError("config " + file.string() + " is not valid JSON: " + e.what());
  }
  return parse_experiment_config(j, ov);
}

inline DatasetManifest load_config_dataset(const DatasetConfig& d) {
  if (!d.source.empty()) return load_dataset(d.source);
  if (d.synthetic_kind == "cifar-like") return generate_cifar_like(d.cifar_like).manifest;
  return generate_biased_dataset(d.biased).manifest;
}

// ===========================================================================
// Persistence helpers for training artifacts.
// ===========================================================================

inline json train_record_to_json(const TrainRunRecord& r) {
  json metrics = json::array();
  for (const EpochMetrics& m : r.metrics)
    metrics.push_back({{"epoch", m.epoch},
                       {"train_loss", m.train_loss},
                       {"train_acc", m.train_acc},
                       {"test_acc", m.test_acc},
                       {"lr", m.lr}});
  json checkpoints = json::array();
  for (const auto& [t, ckpt] : r.checkpoints) checkpoints.push_back(t);
  return json{{"run_id", r.run_id},
              {"architecture", r.arch.canonical()},
              {"arch_fingerprint", r.arch.fingerprint()},
              {"train_config", r.config.canonical()},
              {"seed", r.seed},
              {"dataset_id", r.dataset_id},
              {"dataset_fingerprint", r.dataset_fingerprint},
              {"total_updates", r.total_updates},
              {"checkpoint_updates", checkpoints},
              {"metrics", metrics}};
}

inline json checkpoint_sidecar_json(const Checkpoint& ckpt, std::uint64_t seed) {
  return json{{"arch_fingerprint", ckpt.arch_fingerprint},
              {"seed", seed},
              {"update_count", ckpt.update_count}};
}

// Writes "<run_id>.json", "<run_id>.metrics.csv" and, for each checkpoint,
// "<run_id>.T<updates>.ckpt" plus its JSON sidecar.
inline void save_run_artifacts(const TrainRunRecord& r, const fs::path& dir) {
  fs::create_directories(dir);
  atomic_write_file(dir / (r.run_id + ".json"), train_record_to_json(r).dump(2) + "\n");
  atomic_write_file(dir / (r.run_id + ".metrics.csv"), metrics_to_csv(r.metrics));
  for (const auto& [t, ckpt] : r.checkpoints) {
    const std::string stem = r.run_id + ".T" + std::to_string(t);
    save_checkpoint(ckpt, dir / (stem + ".ckpt"));
    atomic_write_file(dir / (stem + ".ckpt.json"),
                      checkpoint_sidecar_json(ckpt, r.seed).dump(2) + "\n");
  }
}

// ===========================================================================
// Command implementations. These throw on any error; the CLI wrapper maps
// exceptions to a nonzero exit code. All artifact writes go through
// write_artifact, so reruns skip identical outputs and never clobber foreign
// or stale ones.
// ===========================================================================

namespace detail {

struct CommandContext {
  const ExperimentConfig& cfg;
  DatasetManifest manifest;
  std::unique_ptr<LossCache> cache;

  explicit CommandContext(const ExperimentConfig& c) : cfg(c) {
    manifest = load_config_dataset(c.dataset);
    if (c.use_cache)
      cache = std::make_unique<DiskLossCache>(c.cache_dir);
    else
      cache = std::make_unique<MemoryLossCache>();
  }

  EasinessOptions easiness_options() const {
    EasinessOptions opt;
    opt.workers = cfg.workers;
    opt.cache = cache.get();
    return opt;
  }
};

inline std::string csv_header_comment(const std::string& hash) {
  return "# config:" + hash + "\n";
}

inline std::string ratio_tag(double ratio) { return format_double(ratio); }

inline const char* kSeriesPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                       "#9467bd", "#ff7f0e", "#8c564b"};

inline std::string subset_file_body(const ExampleSubset& subset, const std::string& hash) {
  std::ostringstream os;
  os << csv_header_comment(hash) << "# rule:" << subset.selection_rule << "\n";
  for (const std::string& id : subset.example_ids) os << id << "\n";
  return os.str();
}

}  // namespace detail

// Computes one easiness table per architecture at easiness.T and writes the
// table CSV, its provenance sidecar and the easy/hard id lists.
inline void cmd_easiness(const ExperimentConfig& cfg, std::ostream& log) {
  detail::CommandContext ctx(cfg);
  fs::create_directories(cfg.output_dir);

  for (const NamedArchitecture& arch : cfg.architectures) {
    log << "easiness: " << arch.name << " T=" << cfg.easiness.T << " M=" << cfg.easiness.M
        << " over " << ctx.manifest.train_indices.size() << " train examples\n";
    const EasinessTable table =
        compute_easiness(arch.spec, ctx.manifest, cfg.train, cfg.easiness.T, cfg.easiness.M,
                         cfg.easiness.master_seed, ctx.easiness_options());

    const std::string stem = "easiness_" + arch.name + "_T" + std::to_string(cfg.easiness.T);
    const std::string csv =
        detail::csv_header_comment(cfg.hash) + easiness_to_csv(table, ctx.manifest);
    const bool wrote = write_artifact(cfg.output_dir / (stem + ".csv"), csv, cfg.hash);

    json sidecar{{"config", cfg.hash},
                 {"dataset_id", table.dataset_id},
                 {"arch_fingerprint", table.arch_fingerprint},
                 {"T", table.T},
                 {"M", table.M},
                 {"seeds", table.seeds},
                 {"created_at", iso8601_utc_now()}};
    write_artifact(cfg.output_dir / (stem + ".json"), sidecar.dump(2) + "\n", cfg.hash);

    for (SubsetKind kind : {SubsetKind::easy, SubsetKind::hard}) {
      const ExampleSubset subset = select_extremes(table, cfg.easiness.fraction, kind);
      write_artifact(cfg.output_dir / ("subset_" + arch.name + "_" + subset_kind_name(kind) +
                                       "_T" + std::to_string(cfg.easiness.T) + ".txt"),
                     detail::subset_file_body(subset, cfg.hash), cfg.hash);
    }
    log << "easiness: " << stem << (wrote ? " written\n" : " already up to date\n");
  }
}

// Matching-rate reports (cross-architecture at every analysis T, begin/end
// per architecture), mean images for every (class, kind) pair with their
// uniformity scores, and the matching-rate-vs-T plot.
inline void cmd_analyze(const ExperimentConfig& cfg, std::ostream& log) {
  detail::CommandContext ctx(cfg);
  fs::create_directories(cfg.output_dir);

  // Table cache for this invocation: (arch index, T) -> table. One training
  // pass per (arch, trial seed) serves every T through the loss cache.
  std::map<std::pair<std::size_t, std::int64_t>, EasinessTable> tables;
  auto table_at = [&](std::size_t arch_index, std::int64_t t) -> const EasinessTable& {
    auto key = std::make_pair(arch_index, t);
    auto it = tables.find(key);
    if (it == tables.end()) {
      log << "analyze: easiness " << cfg.architectures[arch_index].name << " T=" << t << "\n";
      it = tables
               .emplace(key, compute_easiness(cfg.architectures[arch_index].spec, ctx.manifest,
                                              cfg.train, t, cfg.easiness.M,
                                              cfg.easiness.master_seed, ctx.easiness_options()))
               .first;
    }
    return it->second;
  };

  std::vector<MatchingReport> reports;
  const bool cross_arch = cfg.architectures.size() >= 2;
  if (!cross_arch)
    log << "analyze: notice: single architecture configured; cross-architecture matching "
           "omitted, reporting begin/end only\n";

  if (cross_arch) {
    for (std::int64_t t : cfg.analysis.ts) {
      std::vector<EasinessTable> at_t;
      for (std::size_t i = 0; i < cfg.architectures.size(); ++i) at_t.push_back(table_at(i, t));
      for (SubsetKind kind : {SubsetKind::easy, SubsetKind::hard}) {
        auto pair_reports = cross_architecture_matching(at_t, cfg.analysis.fraction, kind);
        // Rewrite fingerprint pair labels into the configured names.
        std::size_t r = 0;
        for (std::size_t i = 0; i < at_t.size(); ++i)
          for (std::size_t jdx = i + 1; jdx < at_t.size(); ++jdx)
            pair_reports[r++].pair_label =
                cfg.architectures[i].name + " x " + cfg.architectures[jdx].name;
        reports.insert(reports.end(), pair_reports.begin(), pair_reports.end());
      }
    }
  }

  for (std::size_t i = 0; i < cfg.architectures.size(); ++i) {
    for (const auto& [ta, tb] : cfg.analysis.begin_end) {
      for (SubsetKind kind : {SubsetKind::easy, SubsetKind::hard}) {
        MatchingReport r =
            begin_end_matching(table_at(i, ta), table_at(i, tb), cfg.analysis.fraction, kind);
        r.pair_label = cfg.architectures[i].name + " begin x end";
        reports.push_back(r);
      }
    }
  }

  write_artifact(cfg.output_dir / "matching_reports.csv",
                 detail::csv_header_comment(cfg.hash) + matching_reports_to_csv(reports),
                 cfg.hash);

  // Matching-rate-vs-T curves (cross-architecture pairs only; begin/end rows
  // have two T values and are reported in the CSV instead).
  if (cross_arch) {
    PlotSpec plot;
    plot.title = "subset matching rate vs update count";
    plot.x_label = "updates T";
    plot.y_label = "matching rate";
    plot.has_hline = true;
    plot.hline = cfg.analysis.fraction;
    plot.hline_label = "chance";
    std::map<std::string, PlotSeries> series;
    std::size_t color_index = 0;
    for (const MatchingReport& r : reports) {
      if (r.t_a != r.t_b) continue;
      const std::string key = r.pair_label + " " + subset_kind_name(r.subset_kind);
      auto it = series.find(key);
      if (it == series.end()) {
        PlotSeries s;
        s.label = key;
        s.color = detail::kSeriesPalette[color_index++ % 6];
        it = series.emplace(key, std::move(s)).first;
      }
      it->second.points.emplace_back(static_cast<double>(r.t_a), r.rate);
    }
    for (auto& [key, s] : series) {
      std::sort(s.points.begin(), s.points.end());
      plot.series.push_back(std::move(s));
    }
    const std::string svg =
        "<!-- config:" + cfg.hash + " -->\n" + render_svg_plot(plot);
    write_artifact(cfg.output_dir / "matching_rates.svg", svg, cfg.hash);
  }

  // Mean images + uniformity: first architecture's table at the primary T.
  const EasinessTable& base = table_at(0, cfg.easiness.T);
  const ExampleSubset easy = select_extremes(base, cfg.analysis.fraction, SubsetKind::easy);
  const ExampleSubset hard = select_extremes(base, cfg.analysis.fraction, SubsetKind::hard);

  ExampleSubset random_subset;
  random_subset.subset_kind = SubsetKind::custom;
  {
    const std::vector<std::string> train_ids = ctx.manifest.split_ids(Split::train);
    const std::size_t k = static_cast<std::size_t>(
        cfg.analysis.fraction * static_cast<double>(train_ids.size()));
    Rng rng(Fnv1a()
                .update("analyze|random-subset|" + std::to_string(cfg.easiness.master_seed))
                .value());
    for (std::size_t idx : uniform_sample_indices(train_ids.size(), k, rng))
      random_subset.example_ids.push_back(train_ids[idx]);
    std::sort(random_subset.example_ids.begin(), random_subset.example_ids.end());
    random_subset.selection_rule =
        "random;fraction=" + format_double(cfg.analysis.fraction) +
        ";seed=" + std::to_string(cfg.easiness.master_seed);
  }

  const fs::path image_dir = cfg.output_dir / "mean_images";
  std::ostringstream uniformity;
  uniformity << detail::csv_header_comment(cfg.hash) << "class,kind,count,uniformity\n";
  const std::vector<std::pair<std::string, const ExampleSubset*>> kinds = {
      {"easy", &easy}, {"hard", &hard}, {"random", &random_subset}};
  std::size_t images_written = 0;
  for (int label = 0; label < static_cast<int>(ctx.manifest.class_names.size()); ++label) {
    for (const auto& [kind_name, subset] : kinds) {
      std::size_t present = 0;
      for (const auto& id : subset->example_ids)
        if (ctx.manifest.by_id(id).label == label) ++present;
      // An extreme subset can miss a class entirely; that is a finding, not
      // an error, so the class is simply absent from the outputs.
      if (present == 0) continue;
      const MeanImage mean = average_image(ctx.manifest, *subset, label);
      const std::string file_name =
          ctx.manifest.class_names[static_cast<std::size_t>(label)] + "_" + kind_name +
          "_mean.png";
      write_png_artifact(mean, image_dir / file_name, cfg.hash);
      uniformity << ctx.manifest.class_names[static_cast<std::size_t>(label)] << "," << kind_name
                 << "," << mean.count << "," << format_double(uniformity_score(mean)) << "\n";
      ++images_written;
    }
  }
  write_artifact(cfg.output_dir / "uniformity.csv", uniformity.str(), cfg.hash);
  log << "analyze: " << reports.size() << " matching reports, " << images_written
      << " mean images\n";
}

// Ablation grid + retrains on the first architecture; emits the result JSON,
// the accuracy curve CSV (source of truth), the retained id lists and the
// accuracy-vs-ratio plot.
inline void cmd_compress(const ExperimentConfig& cfg, std::ostream& log) {
  detail::CommandContext ctx(cfg);
  fs::create_directories(cfg.output_dir);
  const NamedArchitecture& arch = cfg.architectures.front();
  log << "compress: " << arch.name << " over " << cfg.compression.strategies.size()
      << " strategies x " << cfg.compression.ratios.size() << " ratios x "
      << cfg.compression.retrain_seeds.size() << " retrain seeds\n";

  CompressionOptions opt;
  opt.workers = cfg.workers;
  opt.cache = ctx.cache.get();
  const std::vector<CompressionResult> results = run_compression_experiment(
      arch.spec, ctx.manifest, cfg.train, cfg.compression.T, cfg.compression.M,
      cfg.easiness.master_seed, cfg.compression.strategies, cfg.compression.ratios,
      cfg.compression.retrain_seeds, opt);

  write_artifact(cfg.output_dir / "compression_curve.csv",
                 detail::csv_header_comment(cfg.hash) + compression_curve_csv(results), cfg.hash);

  json jresults = json::array();
  for (const CompressionResult& r : results) {
    json rounds = json::array();
    for (const StepwiseRound& round : r.stepwise_rounds)
      rounds.push_back({{"removed_count", round.removed.example_ids.size()},
                        {"rule", round.removed.selection_rule}});
    jresults.push_back({{"strategy", strategy_name(r.plan.strategy)},
                        {"target_ratio", r.plan.target_ratio},
                        {"rng_seed", r.plan.rng_seed},
                        {"per_round_sizes", r.plan.per_round_sizes},
                        {"retained_count", r.retained.example_ids.size()},
                        {"removed_count", r.removed.example_ids.size()},
                        {"retained_rule", r.retained.selection_rule},
                        {"retrain_seeds", r.retrain_seeds},
                        {"test_accuracies", r.test_accuracies},
                        {"stepwise_rounds", rounds}});
    write_artifact(cfg.output_dir / ("retained_" + std::string(strategy_name(r.plan.strategy)) +
                                     "_" + detail::ratio_tag(r.plan.target_ratio) + ".txt"),
                   detail::subset_file_body(r.retained, cfg.hash), cfg.hash);
  }
  const json doc{{"config", cfg.hash}, {"results", jresults}};
  write_artifact(cfg.output_dir / "compression_results.json", doc.dump(2) + "\n", cfg.hash);

  // Accuracy-vs-ratio plot: per strategy a mean line plus per-seed scatter.
  PlotSpec plot;
  plot.title = "test accuracy vs ablation ratio";
  plot.x_label = "ablation ratio";
  plot.y_label = "test accuracy";
  std::size_t color_index = 0;
  for (Strategy s : cfg.compression.strategies) {
    const std::string color = detail::kSeriesPalette[color_index++ % 6];
    PlotSeries mean_series;
    mean_series.label = strategy_name(s);
    mean_series.color = color;
    PlotSeries scatter;
    scatter.label = std::string(strategy_name(s)) + " seeds";
    scatter.color = color;
    scatter.draw_line = false;
    for (const CompressionResult& r : results) {
      if (r.plan.strategy != s) continue;
      double sum = 0.0;
      for (double acc : r.test_accuracies) {
        scatter.points.emplace_back(r.plan.target_ratio, acc);
        sum += acc;
      }
      mean_series.points.emplace_back(
          r.plan.target_ratio, sum / static_cast<double>(r.test_accuracies.size()));
    }
    std::sort(mean_series.points.begin(), mean_series.points.end());
    plot.series.push_back(std::move(mean_series));
    plot.series.push_back(std::move(scatter));
  }
  const std::string svg = "<!-- config:" + cfg.hash + " -->\n" + render_svg_plot(plot);
  write_artifact(cfg.output_dir / "compression_curve.svg", svg, cfg.hash);
  log << "compress: " << results.size() << " grid cells done\n";
}

// Generates a synthetic dataset directory from a standalone spec document:
// {"kind": "cifar-like" | "biased", "output_dir": ..., <spec fields>}.
inline void cmd_synth_from_json(const json& spec_json, const CommandOverrides& ov,
                                std::ostream& log) {
  if (!spec_json.is_object())
    throw ValidationError("synth spec: expected a JSON object at the top level");
  fs::path out_dir;
  if (ov.out_dir.has_value()) {
    out_dir = *ov.out_dir;
  } else if (const json* v = cfg::find(spec_json, "", "output_dir")) {
    out_dir = cfg::as_string(*v, "output_dir");
  } else {
    cfg::fail("output_dir", "missing (set it in the spec or pass --out)");
  }

  json dataset_obj = spec_json;
  dataset_obj.erase("output_dir");
  if (ov.seed.has_value()) dataset_obj["seed"] = *ov.seed;
  DatasetConfig d = parse_dataset_config(json{{"synthetic", dataset_obj}}, "");

  if (d.synthetic_kind == "cifar-like") {
    const CifarLikeDataset ds = generate_cifar_like(d.cifar_like);
    save_cifar_like(ds, out_dir);
    log << "synth: wrote " << ds.manifest.examples.size() << " examples ("
        << ds.manifest.train_indices.size() << " train) to " << out_dir.string() << "\n";
  } else {
    const BiasDataset ds = generate_biased_dataset(d.biased);
    save_synthetic_dir(ds, out_dir);
    log << "synth: wrote " << ds.manifest.examples.size() << " examples ("
        << ds.manifest.train_indices.size() << " train) to " << out_dir.string() << "\n";
  }
  atomic_write_file(out_dir / "synth_spec.json", dataset_obj.dump(2) + "\n");
}

inline void cmd_synth(const fs::path& spec_file, const CommandOverrides& ov, std::ostream& log) {
  json j;
  try {
    j = json::parse(read_text_file(spec_file));
  } catch (const json::parse_error& e) {
    throw LoadError("spec " + spec_file.string() + " is not valid JSON: " + e.what());
  }
  cmd_synth_from_json(j, ov, log);
}

}  // namespace easecore
