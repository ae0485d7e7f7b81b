#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "easecore/common.hpp"
#include "easecore/io.hpp"
#include "easecore/manifest.hpp"
#include "easecore/thread_pool.hpp"
#include "easecore/trainer.hpp"

namespace easecore {

struct EasinessTable {
  std::string dataset_id;
  std::string arch_fingerprint;
  std::int64_t T = 0;
  int M = 0;
  std::vector<std::uint64_t> seeds;
  std::map<std::string, double> values;  // example_id -> easiness

  void validate(const DatasetManifest& manifest) const {
    if (M != static_cast<int>(seeds.size()))
      throw ValidationError("easiness: M differs from the seed count");
    std::set<std::uint64_t> distinct(seeds.begin(), seeds.end());
    if (distinct.size() != seeds.size())
      throw ValidationError("easiness: trial seeds are not distinct");
    if (values.size() != manifest.train_indices.size())
      throw ValidationError("easiness: values do not cover the train split");
    for (std::size_t idx : manifest.train_indices) {
      auto it = values.find(manifest.examples[idx].example_id);
      if (it == values.end())
        throw ValidationError("easiness: missing value for train example " +
                              manifest.examples[idx].example_id);
      if (!std::isfinite(it->second) || it->second < 0.0)
        throw ValidationError("easiness: non-finite or negative value at " + it->first);
    }
  }
};

enum class SubsetKind { easy, hard, removed, retained, custom };

inline const char* subset_kind_name(SubsetKind kind) {
  switch (kind) {
    case SubsetKind::easy: return "easy";
    case SubsetKind::hard: return "hard";
    case SubsetKind::removed: return "removed";
    case SubsetKind::retained: return "retained";
    default: return "custom";
  }
}

struct ExampleSubset {
  SubsetKind subset_kind = SubsetKind::custom;
  std::vector<std::string> example_ids;  // sorted ascending, duplicate-free
  std::string selection_rule;

  void validate_against(const DatasetManifest& manifest) const {
    if (!std::is_sorted(example_ids.begin(), example_ids.end()))
      throw ValidationError("subset: ids must be sorted");
    if (std::adjacent_find(example_ids.begin(), example_ids.end()) != example_ids.end())
      throw ValidationError("subset: duplicate ids");
    for (const std::string& id : example_ids) {
      auto it = manifest.id_index.find(id);
      if (it == manifest.id_index.end() || manifest.examples[it->second].split != Split::train)
        throw ValidationError("subset: id not in train split: " + id);
    }
  }
};

// Per-trial per-example loss store; keys identify (run, T, split). Losses are
// kept in manifest train order. Implementations must be thread safe.
class LossCache {
 public:
  virtual ~LossCache() = default;
  virtual bool lookup(const std::string& key, std::vector<double>* out) = 0;
  virtual void store(const std::string& key, const std::vector<double>& losses) = 0;
};

struct EasinessOptions {
  int workers = 1;
  LossCache* cache = nullptr;
};

inline std::string trial_loss_key(const std::string& run_id, std::int64_t T) {
  std::ostringstream os;
  os << "losses-" << run_id << "-T" << T << "-train";
  return os.str();
}

// Eq.-style easiness: mean per-example cross-entropy at checkpoint T over M
// trials seeded by derive_seed(master_seed, m). Each trial is trained at most
// once per process even when several T values are requested; all checkpoint
// losses are pushed into the cache so later calls with another T reuse them.
inline EasinessTable compute_easiness(const ArchitectureSpec& arch,
                                      const DatasetManifest& manifest, const TrainConfig& config,
                                      std::int64_t T, int M, std::uint64_t master_seed,
                                      const EasinessOptions& options = {}) {
  if (M < 1) throw ValidationError("compute_easiness: M must be >= 1");
  if (std::find(config.checkpoint_updates.begin(), config.checkpoint_updates.end(), T) ==
      config.checkpoint_updates.end())
    throw ValidationError("compute_easiness: T is not in config.checkpoint_updates");
  if (manifest.train_indices.empty())
    throw ValidationError("compute_easiness: empty train split");

  EasinessTable table;
  table.dataset_id = manifest.dataset_id;
  table.arch_fingerprint = arch.fingerprint();
  table.T = T;
  table.M = M;
  for (int m = 0; m < M; ++m)
    table.seeds.push_back(derive_seed(master_seed, static_cast<std::uint64_t>(m)));
  {
    std::set<std::uint64_t> distinct(table.seeds.begin(), table.seeds.end());
    if (distinct.size() != table.seeds.size())
      throw ValidationError("compute_easiness: derived trial seeds collide");
  }

  const std::int64_t max_t =
      *std::max_element(config.checkpoint_updates.begin(), config.checkpoint_updates.end());
  const std::size_t n_train = manifest.train_indices.size();
  std::vector<std::vector<double>> trial_losses(static_cast<std::size_t>(M));

  parallel_for_tasks(static_cast<std::size_t>(M), options.workers, [&](std::size_t m) {
    const std::uint64_t seed = table.seeds[m];
    const std::string run_id = make_run_id(arch, manifest, config, seed);
    if (options.cache != nullptr &&
        options.cache->lookup(trial_loss_key(run_id, T), &trial_losses[m])) {
      if (trial_losses[m].size() != n_train)
        throw ValidationError("compute_easiness: cached losses have wrong length for " + run_id);
      return;
    }
    TrialOptions topt;
    topt.stop_after_updates = max_t;
    topt.eval_test_per_epoch = false;
    TrainRunRecord record;
    try {
      record = train_trial(arch, manifest, config, seed, topt);
    } catch (const DivergenceError& e) {
      std::ostringstream os;
      os << "compute_easiness: trial " << m << " (seed " << seed << ") diverged at update "
         << e.update_index();
      throw DivergenceError(os.str(), e.update_index());
    }
    auto model = build_model<float>(arch);
    for (const auto& [t_value, ckpt] : record.checkpoints) {
      load_checkpoint_into(ckpt, *model, table.arch_fingerprint);
      auto losses = evaluate_per_example_loss(*model, manifest, Split::train);
      std::vector<double> flat(losses.size());
      for (std::size_t i = 0; i < losses.size(); ++i) flat[i] = losses[i].second;
      if (t_value == T) trial_losses[m] = flat;
      if (options.cache != nullptr)
        options.cache->store(trial_loss_key(run_id, t_value), flat);
    }
    if (trial_losses[m].size() != n_train)
      throw ValidationError("compute_easiness: trial produced no checkpoint at requested T");
  });

  // Aggregate in fixed (example, trial) order so threading cannot reorder
  // the floating-point sums.
  for (std::size_t i = 0; i < n_train; ++i) {
    double sum = 0.0;
    for (int m = 0; m < M; ++m) sum += trial_losses[static_cast<std::size_t>(m)][i];
    table.values.emplace(manifest.examples[manifest.train_indices[i]].example_id,
                         sum / static_cast<double>(M));
  }
  table.validate(manifest);
  return table;
}

// ---------------------------------------------------------------------------

// easy = the floor(fraction*N) ids with smallest easiness, hard = largest.
// Ties break toward ascending example_id in both directions.
inline ExampleSubset select_extremes(const EasinessTable& table, double fraction,
                                     SubsetKind kind) {
  if (kind != SubsetKind::easy && kind != SubsetKind::hard)
    throw ValidationError("select_extremes: kind must be easy or hard");
  if (!(fraction > 0.0) || fraction > 0.5)
    throw ValidationError("select_extremes: fraction must lie in (0, 0.5]");
  if (table.values.empty()) throw ValidationError("select_extremes: empty table");

  std::vector<std::pair<std::string, double>> order(table.values.begin(), table.values.end());
  if (kind == SubsetKind::easy) {
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second < b.second : a.first < b.first;
    });
  } else {
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
  }
  const std::size_t k =
      static_cast<std::size_t>(fraction * static_cast<double>(order.size()));

  ExampleSubset subset;
  subset.subset_kind = kind;
  subset.example_ids.reserve(k);
  for (std::size_t i = 0; i < k; ++i) subset.example_ids.push_back(order[i].first);
  std::sort(subset.example_ids.begin(), subset.example_ids.end());
  std::ostringstream rule;
  rule << subset_kind_name(kind) << ";fraction=" << format_double(fraction)
       << ";dataset=" << table.dataset_id << ";arch=" << table.arch_fingerprint
       << ";T=" << table.T << ";M=" << table.M;
  subset.selection_rule = rule.str();
  return subset;
}

// Divides each easiness by the total. Errors when the total is zero; the
// caller must decide to fall back to uniform explicitly.
inline std::map<std::string, double> normalize_easiness(const EasinessTable& table) {
  if (table.values.empty()) throw ValidationError("normalize_easiness: empty table");
  double sum = 0.0;
  for (const auto& [id, e] : table.values) {
    if (!std::isfinite(e) || e < 0.0)
      throw ValidationError("normalize_easiness: invalid easiness at " + id);
    sum += e;
  }
  if (sum <= 0.0)
    throw ValidationError("normalize_easiness: all values are zero; distribution undefined");
  std::map<std::string, double> out;
  for (const auto& [id, e] : table.values) out.emplace(id, e / sum);
  return out;
}

// ---------------------------------------------------------------------------

// CSV persistence. Values are written at full shortest-round-trip precision;
// rounding to 4 decimals is for reports only, never for stored tables.
inline std::string easiness_to_csv(const EasinessTable& table, const DatasetManifest& manifest) {
  std::ostringstream os;
  os << "example_id,label,easiness\n";
  for (const auto& [id, e] : table.values)
    os << id << "," << manifest.by_id(id).label << "," << format_double(e) << "\n";
  return os.str();
}

inline void easiness_values_from_csv(const std::string& csv, EasinessTable* table) {
  CsvTable parsed = parse_csv(csv);
  if (parsed.header != std::vector<std::string>{"example_id", "label", "easiness"})
    throw LoadError("easiness csv: unexpected header");
  table->values.clear();
  for (const auto& row : parsed.rows) {
    if (row.size() != 3) throw LoadError("easiness csv: malformed row");
    table->values[row[0]] = parse_double(row[2]);
  }
}

}  // namespace easecore
