#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "easecore/common.hpp"
#include "easecore/easiness.hpp"
#include "easecore/manifest.hpp"
#include "easecore/rng.hpp"
#include "easecore/thread_pool.hpp"
#include "easecore/trainer.hpp"

namespace easecore {

enum class Strategy { easy, hard, random, stepwise };

inline const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::easy: return "easy";
    case Strategy::hard: return "hard";
    case Strategy::random: return "random";
    default: return "stepwise";
  }
}

inline Strategy strategy_from_name(const std::string& name) {
  if (name == "easy") return Strategy::easy;
  if (name == "hard") return Strategy::hard;
  if (name == "random") return Strategy::random;
  if (name == "stepwise") return Strategy::stepwise;
  throw ValidationError("strategy: unknown name '" + name + "'");
}

struct AblationPlan {
  Strategy strategy = Strategy::random;
  double target_ratio = 0.0;
  std::uint64_t rng_seed = 0;
  std::vector<std::size_t> per_round_sizes;

  void validate() const {
    if (!(target_ratio >= 0.0) || target_ratio >= 1.0)
      throw ValidationError("plan.target_ratio: must lie in [0, 1)");
  }
};

// ---------------------------------------------------------------------------
// Sampling primitives. Both are deterministic functions of the Rng state.

// k distinct indices drawn uniformly from 0..n-1 (partial Fisher-Yates),
// returned sorted.
inline std::vector<std::size_t> uniform_sample_indices(std::size_t n, std::size_t k, Rng& rng) {
  if (k > n) throw ValidationError("uniform_sample_indices: k exceeds population");
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next_below(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

// k draws without replacement; each draw picks index i with probability
// proportional to weights[i] among the remaining items. Errors when the
// remaining weight mass hits zero before k draws (the caller must fall back
// to the uniform strategy explicitly), mirroring normalize_easiness.
inline std::vector<std::size_t> weighted_sample_without_replacement(std::vector<double> weights,
                                                                    std::size_t k, Rng& rng) {
  if (k > weights.size())
    throw ValidationError("weighted_sample_without_replacement: k exceeds population");
  for (double w : weights)
    if (!std::isfinite(w) || w < 0.0)
      throw ValidationError("weighted_sample_without_replacement: weights must be finite and >= 0");
  double total = 0.0;
  for (double w : weights) total += w;
  std::vector<std::size_t> drawn;
  drawn.reserve(k);
  for (std::size_t d = 0; d < k; ++d) {
    if (!(total > 0.0)) {
      // Refresh the running total to rule out cancellation drift before
      // declaring the distribution exhausted.
      total = 0.0;
      for (double w : weights) total += w;
      if (!(total > 0.0))
        throw ValidationError(
            "weighted_sample_without_replacement: remaining weights are all zero");
    }
    const double u = rng.next_double() * total;
    double acc = 0.0;
    std::size_t pick = weights.size();
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      acc += weights[i];
      pick = i;
      if (u < acc) break;
    }
    if (pick == weights.size())
      throw ValidationError("weighted_sample_without_replacement: remaining weights are all zero");
    drawn.push_back(pick);
    total -= weights[pick];
    weights[pick] = 0.0;
  }
  std::sort(drawn.begin(), drawn.end());
  return drawn;
}

// ---------------------------------------------------------------------------

namespace detail {

inline std::pair<ExampleSubset, ExampleSubset> split_by_removed(
    const std::vector<std::string>& ids, const std::vector<std::size_t>& removed_idx,
    const std::string& rule) {
  ExampleSubset removed, retained;
  removed.subset_kind = SubsetKind::removed;
  retained.subset_kind = SubsetKind::retained;
  removed.selection_rule = rule;
  retained.selection_rule = rule;
  std::vector<bool> is_removed(ids.size(), false);
  for (std::size_t i : removed_idx) is_removed[i] = true;
  for (std::size_t i = 0; i < ids.size(); ++i)
    (is_removed[i] ? removed : retained).example_ids.push_back(ids[i]);
  // ids are already ascending (table order), so both outputs stay sorted.
  return {std::move(removed), std::move(retained)};
}

}  // namespace detail

// One-shot weighted removal of floor(ratio*N) examples.
//   hard:   weight proportional to normalized easiness
//   easy:   weight proportional to (max_j e_j - e_i), renormalized; the
//           paper's normalization up-weights hard examples, this mirrors it
//           for the easy direction without extra hyperparameters
//   random: uniform
inline std::pair<ExampleSubset, ExampleSubset> ablate_once(const EasinessTable& table,
                                                           Strategy strategy, double ratio,
                                                           std::uint64_t rng_seed) {
  if (strategy == Strategy::stepwise)
    throw ValidationError("ablate_once: stepwise is not a one-shot strategy");
  if (!(ratio > 0.0) || ratio >= 1.0)
    throw ValidationError("ablate_once: ratio must lie in (0, 1)");
  if (table.values.empty()) throw ValidationError("ablate_once: empty table");

  std::vector<std::string> ids;
  std::vector<double> easiness;
  ids.reserve(table.values.size());
  for (const auto& [id, e] : table.values) {
    ids.push_back(id);
    easiness.push_back(e);
  }
  const std::size_t k =
      static_cast<std::size_t>(ratio * static_cast<double>(ids.size()));
  std::ostringstream rule;
  rule << strategy_name(strategy) << ";ratio=" << format_double(ratio) << ";seed=" << rng_seed
       << ";dataset=" << table.dataset_id << ";arch=" << table.arch_fingerprint
       << ";T=" << table.T << ";M=" << table.M;

  Rng rng(rng_seed);
  std::vector<std::size_t> removed_idx;
  if (strategy == Strategy::random) {
    removed_idx = uniform_sample_indices(ids.size(), k, rng);
  } else {
    std::vector<double> weights;
    if (strategy == Strategy::hard) {
      const auto normalized = normalize_easiness(table);
      weights.reserve(ids.size());
      for (const std::string& id : ids) weights.push_back(normalized.at(id));
    } else {
      const double max_e = *std::max_element(easiness.begin(), easiness.end());
      double sum = 0.0;
      for (double e : easiness) sum += max_e - e;
      if (!(sum > 0.0))
        throw ValidationError(
            "ablate_once: inverted easiness weights are all zero (values uniform); "
            "use the random strategy for an undifferentiated table");
      weights.reserve(ids.size());
      for (double e : easiness) weights.push_back((max_e - e) / sum);
    }
    removed_idx = weighted_sample_without_replacement(std::move(weights), k, rng);
  }
  return detail::split_by_removed(ids, removed_idx, rule.str());
}

// ---------------------------------------------------------------------------

struct StepwiseRound {
  EasinessTable table;
  ExampleSubset removed;
};

struct StepwiseResult {
  AblationPlan plan;
  ExampleSubset retained;
  std::vector<StepwiseRound> rounds;
};

struct StepwiseOptions {
  int workers = 1;
  LossCache* cache = nullptr;
  // Replace the weighted draw with a deterministic bottom-k selection.
  bool deterministic_bottomk = false;
};

inline std::uint64_t stepwise_round_table_seed(std::uint64_t master_seed, int round) {
  return derive_seed(master_seed, 2 * static_cast<std::uint64_t>(round));
}
inline std::uint64_t stepwise_round_draw_seed(std::uint64_t master_seed, int round) {
  return derive_seed(master_seed, 2 * static_cast<std::uint64_t>(round) + 1);
}

// Rounds of easy-weighted removal, 10% of the ORIGINAL train size per round,
// easiness recomputed on the shrunk set between rounds. Round r (0-based)
// derives its easiness master seed and its draw seed from master_seed via
// the helpers above.
inline StepwiseResult stepwise_ablate(const ArchitectureSpec& arch,
                                      const DatasetManifest& manifest, const TrainConfig& config,
                                      std::int64_t T, int M, double target_ratio,
                                      std::uint64_t master_seed,
                                      const StepwiseOptions& options = {}) {
  const double rounds_exact = target_ratio * 10.0;
  const int rounds = static_cast<int>(std::lround(rounds_exact));
  if (rounds < 1 || rounds > 9 || std::fabs(rounds_exact - rounds) > 1e-9)
    throw ValidationError(
        "stepwise_ablate: target_ratio must be a positive multiple of 0.1 below 1");

  const std::size_t n_original = manifest.train_indices.size();
  const std::size_t round_size = n_original / 10;
  if (round_size == 0) throw ValidationError("stepwise_ablate: train split too small");

  StepwiseResult result;
  result.plan.strategy = Strategy::stepwise;
  result.plan.target_ratio = target_ratio;
  result.plan.rng_seed = master_seed;
  result.retained.subset_kind = SubsetKind::retained;
  for (std::size_t idx : manifest.train_indices)
    result.retained.example_ids.push_back(manifest.examples[idx].example_id);
  std::sort(result.retained.example_ids.begin(), result.retained.example_ids.end());

  EasinessOptions eopt;
  eopt.workers = options.workers;
  eopt.cache = options.cache;

  DatasetManifest current = manifest;
  for (int r = 0; r < rounds; ++r) {
    EasinessTable table;
    try {
      table = compute_easiness(arch, current, config, T, M,
                               stepwise_round_table_seed(master_seed, r), eopt);
    } catch (const DivergenceError& e) {
      std::ostringstream os;
      os << "stepwise_ablate: round " << (r + 1) << " diverged: " << e.what();
      throw DivergenceError(os.str(), e.update_index());
    }

    std::vector<std::string> ids;
    std::vector<double> easiness;
    for (const auto& [id, e] : table.values) {
      ids.push_back(id);
      easiness.push_back(e);
    }
    std::vector<std::size_t> removed_idx;
    if (options.deterministic_bottomk) {
      std::vector<std::size_t> order(ids.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return easiness[a] != easiness[b] ? easiness[a] < easiness[b] : ids[a] < ids[b];
      });
      removed_idx.assign(order.begin(),
                         order.begin() + static_cast<std::ptrdiff_t>(round_size));
      std::sort(removed_idx.begin(), removed_idx.end());
    } else {
      const double max_e = *std::max_element(easiness.begin(), easiness.end());
      double sum = 0.0;
      for (double e : easiness) sum += max_e - e;
      if (!(sum > 0.0))
        throw ValidationError("stepwise_ablate: inverted easiness weights are all zero in round " +
                              std::to_string(r + 1));
      std::vector<double> weights;
      weights.reserve(easiness.size());
      for (double e : easiness) weights.push_back((max_e - e) / sum);
      Rng draw_rng(stepwise_round_draw_seed(master_seed, r));
      removed_idx = weighted_sample_without_replacement(std::move(weights), round_size, draw_rng);
    }

    std::ostringstream rule;
    rule << "stepwise-round" << (r + 1) << ";ratio=" << format_double(target_ratio)
         << ";seed=" << master_seed << ";dataset=" << table.dataset_id
         << ";arch=" << table.arch_fingerprint << ";T=" << T << ";M=" << M;
    auto [removed, retained] = detail::split_by_removed(ids, removed_idx, rule.str());

    result.plan.per_round_sizes.push_back(removed.example_ids.size());
    StepwiseRound round;
    round.table = std::move(table);
    round.removed = std::move(removed);
    result.rounds.push_back(std::move(round));

    std::vector<std::string> next_retained = retained.example_ids;
    result.retained.example_ids = next_retained;
    if (r + 1 < rounds)
      current = restrict_train(manifest, next_retained);
  }
  result.plan.validate();
  return result;
}

// ---------------------------------------------------------------------------

struct CompressionResult {
  AblationPlan plan;
  ExampleSubset retained;
  ExampleSubset removed;
  std::vector<std::uint64_t> retrain_seeds;
  std::vector<double> test_accuracies;
  std::vector<StepwiseRound> stepwise_rounds;  // empty for one-shot strategies
};

struct CompressionOptions {
  int workers = 1;
  LossCache* cache = nullptr;
};

// Seed for the single ablation draw of a (strategy, ratio) cell; recorded in
// the plan so results are reproducible from the result JSON alone.
inline std::uint64_t ablation_draw_seed(std::uint64_t master_seed, Strategy strategy,
                                        double ratio) {
  std::ostringstream os;
  os << "ablate|" << strategy_name(strategy) << "|" << format_double(ratio) << "|" << master_seed;
  return Fnv1a().update(os.str()).value();
}

// For each (strategy, ratio): one ablation draw, then one fresh-init retrain
// per seed on the retained set with the full schedule. The base easiness
// table (shared by all one-shot cells) is computed once.
inline std::vector<CompressionResult> run_compression_experiment(
    const ArchitectureSpec& arch, const DatasetManifest& manifest, const TrainConfig& config,
    std::int64_t T, int M, std::uint64_t master_seed, const std::vector<Strategy>& strategies,
    const std::vector<double>& ratios, const std::vector<std::uint64_t>& retrain_seeds,
    const CompressionOptions& options = {}) {
  if (strategies.empty()) throw ValidationError("compression: no strategies given");
  if (ratios.empty()) throw ValidationError("compression: no ratios given");
  if (retrain_seeds.empty()) throw ValidationError("compression: need at least one retrain seed");
  for (double r : ratios)
    if (!(r >= 0.0) || r >= 1.0)
      throw ValidationError("compression: ratios must lie in [0, 1)");

  // Random removal needs no easiness; the base table is only computed when
  // an easy or hard cell will actually draw from it.
  const bool any_oneshot_weighted =
      std::any_of(strategies.begin(), strategies.end(), [&](Strategy s) {
        return s == Strategy::easy || s == Strategy::hard;
      }) &&
      std::any_of(ratios.begin(), ratios.end(), [](double r) { return r > 0.0; });

  EasinessOptions eopt;
  eopt.workers = options.workers;
  eopt.cache = options.cache;
  EasinessTable base_table;
  if (any_oneshot_weighted)
    base_table = compute_easiness(arch, manifest, config, T, M, master_seed, eopt);

  // Retrains drop the easiness checkpoints; they only need the final model.
  TrainConfig retrain_config = config;
  retrain_config.checkpoint_updates.clear();

  ExampleSubset full_train;
  full_train.subset_kind = SubsetKind::retained;
  full_train.selection_rule = "ratio=0;identity";
  for (std::size_t idx : manifest.train_indices)
    full_train.example_ids.push_back(manifest.examples[idx].example_id);
  std::sort(full_train.example_ids.begin(), full_train.example_ids.end());

  std::vector<CompressionResult> results;
  for (Strategy strategy : strategies) {
    for (double ratio : ratios) {
      CompressionResult res;
      res.plan.strategy = strategy;
      res.plan.target_ratio = ratio;
      if (ratio == 0.0) {
        res.plan.rng_seed = 0;
        res.retained = full_train;
        res.removed.subset_kind = SubsetKind::removed;
        res.removed.selection_rule = full_train.selection_rule;
      } else if (strategy == Strategy::stepwise) {
        StepwiseOptions sopt;
        sopt.workers = options.workers;
        sopt.cache = options.cache;
        const std::uint64_t sw_seed = ablation_draw_seed(master_seed, strategy, ratio);
        StepwiseResult sw = stepwise_ablate(arch, manifest, config, T, M, ratio, sw_seed, sopt);
        res.plan = sw.plan;
        res.retained = sw.retained;
        res.removed.subset_kind = SubsetKind::removed;
        res.removed.selection_rule = "stepwise;cumulative";
        for (const StepwiseRound& round : sw.rounds)
          res.removed.example_ids.insert(res.removed.example_ids.end(),
                                         round.removed.example_ids.begin(),
                                         round.removed.example_ids.end());
        std::sort(res.removed.example_ids.begin(), res.removed.example_ids.end());
        res.stepwise_rounds = std::move(sw.rounds);
      } else if (strategy == Strategy::random) {
        res.plan.rng_seed = ablation_draw_seed(master_seed, strategy, ratio);
        Rng rng(res.plan.rng_seed);
        const std::size_t k = static_cast<std::size_t>(
            ratio * static_cast<double>(full_train.example_ids.size()));
        std::ostringstream rule;
        rule << "random;ratio=" << format_double(ratio) << ";seed=" << res.plan.rng_seed
             << ";dataset=" << manifest.dataset_id;
        auto [removed, retained] = detail::split_by_removed(
            full_train.example_ids, uniform_sample_indices(full_train.example_ids.size(), k, rng),
            rule.str());
        res.plan.per_round_sizes.push_back(removed.example_ids.size());
        res.removed = std::move(removed);
        res.retained = std::move(retained);
      } else {
        res.plan.rng_seed = ablation_draw_seed(master_seed, strategy, ratio);
        auto [removed, retained] = ablate_once(base_table, strategy, ratio, res.plan.rng_seed);
        res.plan.per_round_sizes.push_back(removed.example_ids.size());
        res.removed = std::move(removed);
        res.retained = std::move(retained);
      }

      const DatasetManifest retrain_manifest =
          res.retained.example_ids.size() == manifest.train_indices.size()
              ? manifest
              : restrict_train(manifest, res.retained.example_ids);
      res.retrain_seeds = retrain_seeds;
      res.test_accuracies.assign(retrain_seeds.size(), 0.0);
      parallel_for_tasks(retrain_seeds.size(), options.workers, [&](std::size_t s) {
        TrialOptions topt;
        topt.eval_test_per_epoch = true;
        const TrainRunRecord record =
            train_trial(arch, retrain_manifest, retrain_config, retrain_seeds[s], topt);
        res.test_accuracies[s] = record.metrics.back().test_acc;
      });
      results.push_back(std::move(res));
    }
  }
  return results;
}

// CSV columns fixed: strategy, ratio, seed, test_accuracy.
inline std::string compression_curve_csv(const std::vector<CompressionResult>& results) {
  std::ostringstream os;
  os << "strategy,ratio,seed,test_accuracy\n";
  for (const CompressionResult& res : results)
    for (std::size_t s = 0; s < res.retrain_seeds.size(); ++s)
      os << strategy_name(res.plan.strategy) << "," << format_double(res.plan.target_ratio) << ","
         << res.retrain_seeds[s] << "," << format_double(res.test_accuracies[s]) << "\n";
  return os.str();
}

}  // namespace easecore
