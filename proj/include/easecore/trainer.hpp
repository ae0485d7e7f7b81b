#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "easecore/architectures.hpp"
#include "easecore/augment.hpp"
#include "easecore/common.hpp"
#include "easecore/io.hpp"
#include "easecore/manifest.hpp"
#include "easecore/nn.hpp"
#include "easecore/optimizer.hpp"
#include "easecore/rng.hpp"
#include "easecore/tensor.hpp"

namespace easecore {

constexpr std::uint32_t kCheckpointMagic = 0x504b4345;  // "ECKP" little-endian
constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  std::uint8_t kind = 0;  // 0 = param, 1 = buffer
  std::vector<float> data;
};

struct Checkpoint {
  std::string arch_fingerprint;
  std::int64_t update_count = 0;
  std::vector<NamedTensor> tensors;
};

inline Checkpoint capture_checkpoint(Model<float>& model, const std::string& arch_fingerprint,
                                     std::int64_t update_count) {
  Checkpoint ckpt;
  ckpt.arch_fingerprint = arch_fingerprint;
  ckpt.update_count = update_count;
  for (const Param<float>* p : model.params())
    ckpt.tensors.push_back(NamedTensor{p->name, 0, p->v});
  for (const Buffer<float>* b : model.buffers())
    ckpt.tensors.push_back(NamedTensor{b->name, 1, b->v});
  return ckpt;
}

inline void load_checkpoint_into(const Checkpoint& ckpt, Model<float>& model,
                                 const std::string& arch_fingerprint) {
  if (ckpt.arch_fingerprint != arch_fingerprint)
    throw ValidationError("checkpoint: architecture fingerprint mismatch (checkpoint " +
                          ckpt.arch_fingerprint + ", model " + arch_fingerprint + ")");
  std::size_t i = 0;
  auto take = [&](const std::string& name, std::vector<float>& dst, std::uint8_t kind) {
    if (i >= ckpt.tensors.size())
      throw ValidationError("checkpoint: missing tensor '" + name + "'");
    const NamedTensor& t = ckpt.tensors[i++];
    if (t.name != name || t.kind != kind || t.data.size() != dst.size())
      throw ValidationError("checkpoint: tensor mismatch at '" + name + "'");
    dst = t.data;
  };
  for (Param<float>* p : model.params()) take(p->name, p->v, 0);
  for (Buffer<float>* b : model.buffers()) take(b->name, b->v, 1);
  if (i != ckpt.tensors.size()) throw ValidationError("checkpoint: trailing unknown tensors");
}

// Single-file binary blob. Integers little-endian; tensor data is float32.
inline void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  std::string out;
  auto put_u32 = [&](std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); };
  auto put_u64 = [&](std::uint64_t v) { out.append(reinterpret_cast<const char*>(&v), 8); };
  auto put_str = [&](const std::string& s) {
    put_u32(static_cast<std::uint32_t>(s.size()));
    out.append(s);
  };
  put_u32(kCheckpointMagic);
  put_u32(kCheckpointVersion);
  put_str(ckpt.arch_fingerprint);
  put_u64(static_cast<std::uint64_t>(ckpt.update_count));
  put_u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const NamedTensor& t : ckpt.tensors) {
    put_str(t.name);
    out.push_back(static_cast<char>(t.kind));
    put_u64(t.data.size());
    out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
  }
  atomic_write_file(path, out);
}

inline Checkpoint load_checkpoint(const fs::path& path) {
  const std::vector<unsigned char> raw = read_binary_file(path);
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (pos + n > raw.size()) throw LoadError(path.string() + ": truncated checkpoint");
  };
  auto get_u32 = [&] {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, raw.data() + pos, 4);
    pos += 4;
    return v;
  };
  auto get_u64 = [&] {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, raw.data() + pos, 8);
    pos += 8;
    return v;
  };
  auto get_str = [&] {
    const std::uint32_t n = get_u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(raw.data()) + pos, n);
    pos += n;
    return s;
  };
  if (get_u32() != kCheckpointMagic) throw LoadError(path.string() + ": not a checkpoint file");
  if (get_u32() != kCheckpointVersion)
    throw LoadError(path.string() + ": unsupported checkpoint version");
  Checkpoint ckpt;
  ckpt.arch_fingerprint = get_str();
  ckpt.update_count = static_cast<std::int64_t>(get_u64());
  const std::uint32_t ntensors = get_u32();
  ckpt.tensors.resize(ntensors);
  for (std::uint32_t i = 0; i < ntensors; ++i) {
    NamedTensor& t = ckpt.tensors[i];
    t.name = get_str();
    need(1);
    t.kind = raw[pos++];
    const std::uint64_t count = get_u64();
    need(count * sizeof(float));
    t.data.resize(count);
    std::memcpy(t.data.data(), raw.data() + pos, count * sizeof(float));
    pos += count * sizeof(float);
  }
  if (pos != raw.size()) throw LoadError(path.string() + ": trailing bytes");
  return ckpt;
}

// ---------------------------------------------------------------------------

struct EpochMetrics {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double lr = 0.0;
};

struct TrainRunRecord {
  std::string run_id;
  ArchitectureSpec arch;
  TrainConfig config;
  std::uint64_t seed = 0;
  std::string dataset_id;
  std::string dataset_fingerprint;
  std::int64_t total_updates = 0;
  std::vector<EpochMetrics> metrics;
  std::map<std::int64_t, Checkpoint> checkpoints;
};

struct TrialOptions {
  // Stop after this many updates (negative = run all epochs; 0 is valid and
  // stops right after the initialization snapshot). Checkpoints due at that
  // update are still taken, so easiness trials do not pay for epochs past
  // the last requested T.
  std::int64_t stop_after_updates = -1;
  // Evaluate test accuracy each epoch; easiness trials can turn this off.
  bool eval_test_per_epoch = true;
  // Take a snapshot at the last executed update even if it is not listed in
  // checkpoint_updates; retrains use this for their final evaluation.
  bool capture_final = false;
};

inline std::string make_run_id(const ArchitectureSpec& arch, const DatasetManifest& manifest,
                               const TrainConfig& config, std::uint64_t seed) {
  std::ostringstream os;
  os << arch.canonical() << "|" << manifest.dataset_id << "|" << manifest.content_fingerprint
     << "|" << config.canonical() << "|seed=" << seed;
  return "run-" + fnv1a_hex(os.str());
}

namespace detail {

template <typename S>
void fill_batch(Tensor4<S>& batch, const DatasetManifest& manifest,
                const std::vector<std::size_t>& order, std::size_t first, std::size_t count,
                Rng* rng, bool train_mode) {
  const ImageShape& shape = manifest.image_shape;
  batch.resize(static_cast<int>(count), shape.c, shape.h, shape.w);
  for (std::size_t b = 0; b < count; ++b) {
    const ExampleRecord& ex = manifest.examples[order[first + b]];
    preprocess_into<S>(ex.image, rng, train_mode, batch.sample(static_cast<int>(b)));
  }
}

inline std::size_t argmax_col(const MatX<float>& logits, Eigen::Index j) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < logits.rows(); ++i)
    if (logits(i, j) > logits(best, j)) best = i;
  return static_cast<std::size_t>(best);
}

}  // namespace detail

// Eval-mode forward over one split; returns (example_id, loss) in split order.
inline std::vector<std::pair<std::string, double>> evaluate_per_example_loss(
    Model<float>& model, const DatasetManifest& manifest, Split split, int batch_size = 256) {
  const std::vector<std::size_t>& idx =
      split == Split::train ? manifest.train_indices : manifest.test_indices;
  if (idx.empty()) throw ValidationError("evaluate_per_example_loss: empty split");
  std::vector<std::pair<std::string, double>> out;
  out.reserve(idx.size());
  Tensor4<float> batch;
  std::vector<int> labels;
  for (std::size_t first = 0; first < idx.size(); first += static_cast<std::size_t>(batch_size)) {
    const std::size_t count = std::min(static_cast<std::size_t>(batch_size), idx.size() - first);
    detail::fill_batch(batch, manifest, idx, first, count, nullptr, false);
    labels.resize(count);
    for (std::size_t b = 0; b < count; ++b)
      labels[b] = manifest.examples[idx[first + b]].label;
    const MatX<float>& logits = model.forward(batch, false);
    std::vector<double> losses;
    SoftmaxCrossEntropy<float>::forward_backward(logits, labels, nullptr, &losses);
    for (std::size_t b = 0; b < count; ++b)
      out.emplace_back(manifest.examples[idx[first + b]].example_id, losses[b]);
  }
  return out;
}

inline std::map<std::string, double> evaluate_per_example_loss(
    const Checkpoint& ckpt, const ArchitectureSpec& arch, const DatasetManifest& manifest,
    Split split, int batch_size = 256) {
  if (arch.input_shape != manifest.image_shape)
    throw ValidationError("evaluate_per_example_loss: architecture input shape differs from dataset");
  auto model = build_model<float>(arch);
  load_checkpoint_into(ckpt, *model, arch.fingerprint());
  std::map<std::string, double> out;
  for (auto& [id, loss] : evaluate_per_example_loss(*model, manifest, split, batch_size))
    out.emplace(id, loss);
  return out;
}

inline double evaluate_accuracy(Model<float>& model, const DatasetManifest& manifest, Split split,
                                int batch_size = 256) {
  const std::vector<std::size_t>& idx =
      split == Split::train ? manifest.train_indices : manifest.test_indices;
  if (idx.empty()) throw ValidationError("evaluate_accuracy: empty split");
  std::size_t correct = 0;
  Tensor4<float> batch;
  for (std::size_t first = 0; first < idx.size(); first += static_cast<std::size_t>(batch_size)) {
    const std::size_t count = std::min(static_cast<std::size_t>(batch_size), idx.size() - first);
    detail::fill_batch(batch, manifest, idx, first, count, nullptr, false);
    const MatX<float>& logits = model.forward(batch, false);
    for (std::size_t b = 0; b < count; ++b)
      if (detail::argmax_col(logits, static_cast<Eigen::Index>(b)) ==
          static_cast<std::size_t>(manifest.examples[idx[first + b]].label))
        ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(idx.size());
}

inline double evaluate_accuracy(const Checkpoint& ckpt, const ArchitectureSpec& arch,
                                const DatasetManifest& manifest, Split split,
                                int batch_size = 256) {
  if (arch.input_shape != manifest.image_shape)
    throw ValidationError("evaluate_accuracy: architecture input shape differs from dataset");
  auto model = build_model<float>(arch);
  load_checkpoint_into(ckpt, *model, arch.fingerprint());
  return evaluate_accuracy(*model, manifest, split, batch_size);
}

// ---------------------------------------------------------------------------

// One seeded trial. The seeded stream works as follows: parameter init draws
// from derive_seed(seed, 0); epoch e (0-based) reshuffles and augments from
// derive_seed(seed, 1 + e), consumed in data order. This keeps runs
// bit-reproducible regardless of how many trials run in parallel elsewhere.
inline TrainRunRecord train_trial(const ArchitectureSpec& arch, const DatasetManifest& manifest,
                                  const TrainConfig& config, std::uint64_t seed,
                                  const TrialOptions& options = {}) {
  arch.validate();
  if (manifest.train_indices.empty()) throw ValidationError("train_trial: empty train split");
  if (arch.input_shape != manifest.image_shape)
    throw ValidationError("train_trial: architecture input shape differs from dataset");
  const std::int64_t updates_per_epoch =
      static_cast<std::int64_t>((manifest.train_indices.size() +
                                 static_cast<std::size_t>(config.batch_size) - 1) /
                                static_cast<std::size_t>(config.batch_size));
  const std::int64_t total_updates = updates_per_epoch * config.max_epochs;
  config.validate(total_updates);

  TrainRunRecord record;
  record.arch = arch;
  record.config = config;
  record.seed = seed;
  record.dataset_id = manifest.dataset_id;
  record.dataset_fingerprint = manifest.content_fingerprint;
  record.total_updates = total_updates;
  record.run_id = make_run_id(arch, manifest, config, seed);
  const std::string arch_fp = arch.fingerprint();

  auto model = build_model<float>(arch);
  Rng init_rng(derive_seed(seed, 0));
  model->init(init_rng);
  MomentumSgd<float> optimizer(config.momentum, config.weight_decay);

  std::size_t next_ckpt = 0;
  std::int64_t update_count = 0;
  auto maybe_checkpoint = [&] {
    while (next_ckpt < config.checkpoint_updates.size() &&
           config.checkpoint_updates[next_ckpt] == update_count) {
      record.checkpoints.emplace(update_count,
                                 capture_checkpoint(*model, arch_fp, update_count));
      ++next_ckpt;
    }
  };
  maybe_checkpoint();  // T = 0 snapshots the initialization

  std::vector<std::size_t> order = manifest.train_indices;
  Tensor4<float> batch;
  std::vector<int> labels;
  MatX<float> dlogits;
  const std::int64_t stop_after =
      options.stop_after_updates >= 0 ? std::min(options.stop_after_updates, total_updates)
                                      : total_updates;

  for (int epoch = 1; epoch <= config.max_epochs && update_count < stop_after; ++epoch) {
    Rng data_rng(derive_seed(seed, static_cast<std::uint64_t>(epoch)));
    data_rng.shuffle(order);
    const double lr = config.lr_for_epoch(epoch);
    double loss_sum = 0.0;
    std::size_t seen = 0, correct = 0;
    std::int64_t batches = 0;

    for (std::size_t first = 0;
         first < order.size() && update_count < stop_after;
         first += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t count =
          std::min(static_cast<std::size_t>(config.batch_size), order.size() - first);
      detail::fill_batch(batch, manifest, order, first, count, &data_rng, true);
      labels.resize(count);
      for (std::size_t b = 0; b < count; ++b)
        labels[b] = manifest.examples[order[first + b]].label;

      const MatX<float>& logits = model->forward(batch, true);
      const double loss =
          SoftmaxCrossEntropy<float>::forward_backward(logits, labels, &dlogits, nullptr);
      if (!std::isfinite(loss)) throw DivergenceError("train_trial: loss diverged", update_count);
      for (std::size_t b = 0; b < count; ++b)
        if (detail::argmax_col(logits, static_cast<Eigen::Index>(b)) ==
            static_cast<std::size_t>(labels[b]))
          ++correct;
      loss_sum += loss;
      seen += count;
      ++batches;

      model->zero_grad();
      model->backward(dlogits);
      optimizer.step(model->params(), lr);
      ++update_count;
      maybe_checkpoint();
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.lr = lr;
    em.train_loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
    em.train_acc = seen > 0 ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    em.test_acc = (options.eval_test_per_epoch && !manifest.test_indices.empty())
                      ? evaluate_accuracy(*model, manifest, Split::test)
                      : std::numeric_limits<double>::quiet_NaN();
    record.metrics.push_back(em);
  }
  if (options.capture_final && record.checkpoints.find(update_count) == record.checkpoints.end())
    record.checkpoints.emplace(update_count, capture_checkpoint(*model, arch_fp, update_count));
  return record;
}

// CSV columns fixed: epoch, train_loss, train_acc, test_acc, lr.
inline std::string metrics_to_csv(const std::vector<EpochMetrics>& metrics) {
  std::ostringstream os;
  os << "epoch,train_loss,train_acc,test_acc,lr\n";
  for (const EpochMetrics& m : metrics)
    os << m.epoch << "," << format_double(m.train_loss) << "," << format_double(m.train_acc)
       << "," << format_double(m.test_acc) << "," << format_double(m.lr) << "\n";
  return os.str();
}

}  // namespace easecore
