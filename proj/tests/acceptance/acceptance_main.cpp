// Acceptance gate. Each criterion prints one [PASS]/[FAIL] line with its
// measured wall-clock runtime; the process exits nonzero if any criterion
// fails. Tolerances and runtime caps are pinned as constants next to each
// criterion body. A shared on-disk trial cache under acceptance_scratch/
// makes reruns cheap without affecting any measured value.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "easecore/experiment.hpp"

using namespace easecore;

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

// ---------------------------------------------------------------------------
// Shared desk-scale fixtures: 10000 train / 2000 test synthetic CIFAR-like
// images, two small architectures, the standard 20-epoch recipe with batch
// 128 (79 updates per epoch, so T = 395 is epoch 5 and 1580 is epoch 20),
// M = 5 trials per easiness table, 10% subsets.
// ---------------------------------------------------------------------------

constexpr std::int64_t kT5 = 395;
constexpr std::int64_t kT20 = 1580;
constexpr int kDeskM = 5;
constexpr double kFraction = 0.1;
constexpr int kReps = 5;
constexpr std::uint64_t kDeskMasterSeeds[kReps] = {21, 22, 23, 24, 25};
constexpr std::uint64_t kRetrainSeeds[3] = {31, 32, 33};

const fs::path kScratch = "acceptance_scratch";

CifarLikeSpec desk_dataset_spec() {
  CifarLikeSpec s;
  s.num_classes = 10;
  s.train_per_class = 1000;
  s.test_per_class = 200;
  s.seed = 3407;
  return s;
}

ArchitectureSpec desk_wrn() {
  ArchitectureSpec a;
  a.family = "wide-resnet-small";
  return a;
}

ArchitectureSpec desk_densenet() {
  ArchitectureSpec a;
  a.family = "densenet-small";
  return a;
}

TrainConfig desk_train(std::vector<std::int64_t> checkpoints) {
  TrainConfig c;  // batch 128, 20 epochs, lr 0.1 dropping at epochs 11 and 16
  c.checkpoint_updates = std::move(checkpoints);
  return c;
}

const DatasetManifest& desk_manifest() {
  static const DatasetManifest m = generate_cifar_like(desk_dataset_spec()).manifest;
  return m;
}

DiskLossCache& shared_cache() {
  static DiskLossCache cache(kScratch / "cache");
  return cache;
}

EasinessOptions cached_options() {
  EasinessOptions opt;
  opt.cache = &shared_cache();
  return opt;
}

EasinessTable desk_table(const ArchitectureSpec& arch, const TrainConfig& cfg, std::int64_t t,
                         std::uint64_t master_seed) {
  return compute_easiness(arch, desk_manifest(), cfg, t, kDeskM, master_seed, cached_options());
}

// ---------------------------------------------------------------------------
// Criterion 1: matching-rate identities, exact.
// ---------------------------------------------------------------------------

ExampleSubset subset_of(std::vector<std::string> ids) {
  ExampleSubset s;
  s.subset_kind = SubsetKind::custom;
  std::sort(ids.begin(), ids.end());
  s.example_ids = std::move(ids);
  return s;
}

std::string criterion_identities() {
  const ExampleSubset a = subset_of({"a", "b", "c", "d"});
  const ExampleSubset b = subset_of({"e", "f", "g", "h"});
  const ExampleSubset nested = subset_of({"a", "b"});
  const ExampleSubset overlap = subset_of({"c", "d", "e"});

  require(matching_rate(a, a) == 1.0, "identity: rate(A, A) != 1");
  require(matching_rate(a, b) == 0.0, "disjoint: rate != 0");
  require(matching_rate(nested, a) == 0.5, "nested: rate != |A|/|B|");
  require(matching_rate(a, nested) == 0.5, "nested reversed: rate != |A|/|B|");
  require(matching_rate(a, overlap) == matching_rate(overlap, a), "symmetry violated");
  require(matching_rate(a, overlap) == 0.5, "partial overlap: 2/max(4,3) != 0.5");
  return "identity, disjoint, nested and symmetry all exact";
}

// ---------------------------------------------------------------------------
// Criterion 2: Monte-Carlo chance rate. 1000 pairs of uniform 10% subsets of
// N = 5000; the mean matching rate must be 0.1 within +-0.005.
// ---------------------------------------------------------------------------

std::string criterion_chance_rate() {
  constexpr std::size_t kN = 5000;
  constexpr std::size_t kK = 500;  // 10%
  constexpr int kPairs = 1000;
  constexpr double kTol = 0.005;

  std::vector<std::string> ids(kN);
  for (std::size_t i = 0; i < kN; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "ex-%04zu", i);
    ids[i] = buf;
  }
  Rng rng(20260815);
  auto draw = [&] {
    ExampleSubset s;
    s.subset_kind = SubsetKind::custom;
    for (std::size_t idx : uniform_sample_indices(kN, kK, rng))
      s.example_ids.push_back(ids[idx]);
    return s;
  };
  double sum = 0.0;
  for (int p = 0; p < kPairs; ++p) sum += matching_rate(draw(), draw());
  const double mean = sum / kPairs;
  require(std::fabs(mean - 0.1) <= kTol,
          "mean rate " + fmt(mean) + " outside 0.1 +- " + fmt(kTol, 3));
  return "mean rate " + fmt(mean) + " over 1000 pairs (want 0.1 +- 0.005)";
}

// ---------------------------------------------------------------------------
// Criterion 3: optimizer hand-sequence to 1e-10 relative and finite-difference
// gradients within 1e-3 relative on >= 95% of sampled plain-CNN coordinates.
// ---------------------------------------------------------------------------

std::string criterion_optimizer_and_gradients() {
  // Scalar quadratic L(w) = (w - 3)^2 / 2, so dL/dw = w - 3.
  constexpr double kSeqTol = 1e-10;
  {
    Param<double> w;
    w.name = "w";
    w.decay = true;
    w.resize(1);
    w.v[0] = 0.7;
    MomentumSgd<double> opt(0.9, 0.05);
    std::vector<Param<double>*> params{&w};
    double wr = 0.7, vr = 0.0;
    for (int step = 0; step < 5; ++step) {
      w.g[0] = w.v[0] - 3.0;
      opt.step(params, 0.1);
      vr = 0.9 * vr + (wr - 3.0) + 0.05 * wr;
      wr -= 0.1 * vr;
      const double rel = std::fabs(w.v[0] - wr) / std::max(1.0, std::fabs(wr));
      require(rel <= kSeqTol,
              "hand sequence diverges at step " + std::to_string(step + 1) + ": rel " + fmt(rel, 14));
    }
  }

  // Central finite differences on the plain CNN, double precision, batch 4.
  constexpr double kGradTol = 1e-3;
  constexpr double kH = 1e-5;
  constexpr int kCoords = 240;
  ArchitectureSpec pc;
  pc.family = "plain-cnn";
  auto model = build_model<double>(pc);
  Rng rng(77);
  model->init(rng);

  Tensor4<double> x(4, 3, 32, 32);
  for (auto& v : x.data) v = 0.5 * rng.next_normal();
  const int labels[4] = {0, 3, 7, 9};

  auto loss_of = [&]() {
    const MatX<double>& logits = model->forward(x, true);
    double total = 0.0;
    for (int n = 0; n < 4; ++n) {
      const double mx = logits.col(n).maxCoeff();
      double lse = 0.0;
      for (int c = 0; c < logits.rows(); ++c) lse += std::exp(logits(c, n) - mx);
      total += mx + std::log(lse) - logits(labels[n], n);
    }
    return total / 4.0;
  };

  // Analytic gradients once.
  model->zero_grad();
  const MatX<double>& logits = model->forward(x, true);
  MatX<double> dlogits(logits.rows(), logits.cols());
  for (int n = 0; n < 4; ++n) {
    const double mx = logits.col(n).maxCoeff();
    double lse = 0.0;
    for (int c = 0; c < logits.rows(); ++c) lse += std::exp(logits(c, n) - mx);
    for (int c = 0; c < logits.rows(); ++c)
      dlogits(c, n) = (std::exp(logits(c, n) - mx) / lse - (c == labels[n] ? 1.0 : 0.0)) / 4.0;
  }
  model->backward(dlogits);

  std::size_t total_coords = 0;
  for (const Param<double>* p : model->params()) total_coords += p->size();
  Rng pick(78);
  int ok = 0;
  for (int s = 0; s < kCoords; ++s) {
    std::size_t flat = pick.next_below(total_coords);
    Param<double>* target = nullptr;
    for (Param<double>* p : model->params()) {
      if (flat < p->size()) {
        target = p;
        break;
      }
      flat -= p->size();
    }
    const double saved = target->v[flat];
    const double analytic = target->g[flat];
    target->v[flat] = saved + kH;
    const double lp = loss_of();
    target->v[flat] = saved - kH;
    const double lm = loss_of();
    target->v[flat] = saved;
    const double fd = (lp - lm) / (2.0 * kH);
    const double rel = std::fabs(analytic - fd) / std::max({std::fabs(analytic), std::fabs(fd), 1e-8});
    if (rel <= kGradTol) ++ok;
  }
  const double frac = static_cast<double>(ok) / kCoords;
  require(frac >= 0.95, "only " + fmt(100.0 * frac, 1) + "% of sampled coordinates within 1e-3");
  return "hand sequence within 1e-10; " + std::to_string(ok) + "/" + std::to_string(kCoords) +
         " sampled gradient coordinates within 1e-3";
}

// ---------------------------------------------------------------------------
// Criterion 4: M = 1 easiness equals the single trial's loss map exactly, and
// an all-zero parameter snapshot scores ln(10) per example within 1e-6.
// ---------------------------------------------------------------------------

std::string criterion_easiness_degenerate() {
  CifarLikeSpec tiny = desk_dataset_spec();
  tiny.train_per_class = 30;
  tiny.test_per_class = 6;
  tiny.seed = 42;
  const DatasetManifest manifest = generate_cifar_like(tiny).manifest;

  ArchitectureSpec pc;
  pc.family = "plain-cnn";
  pc.plain_widths = {6, 10, 16};
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.max_epochs = 2;
  cfg.initial_lr = 0.05;
  cfg.lr_milestones = {};
  cfg.checkpoint_updates = {10};

  const std::uint64_t master = 9;
  const EasinessTable table = compute_easiness(pc, manifest, cfg, 10, 1, master);

  TrialOptions topt;
  topt.stop_after_updates = 10;
  topt.eval_test_per_epoch = false;
  const TrainRunRecord record = train_trial(pc, manifest, cfg, derive_seed(master, 0), topt);
  const auto losses =
      evaluate_per_example_loss(record.checkpoints.at(10), pc, manifest, Split::train);
  require(losses.size() == table.values.size(), "loss map and table sizes differ");
  for (const auto& [id, loss] : losses)
    require(table.values.at(id) == loss, "M=1 easiness differs from the trial loss at " + id);

  // Uniform prediction: zero every parameter -> logits all zero -> ln(10).
  constexpr double kLnTol = 1e-6;
  auto model = build_model<float>(pc);
  Rng rng(1);
  model->init(rng);
  for (Param<float>* p : model->params()) std::fill(p->v.begin(), p->v.end(), 0.0f);
  const Checkpoint zero_ckpt = capture_checkpoint(*model, pc.fingerprint(), 0);
  const auto uniform = evaluate_per_example_loss(zero_ckpt, pc, manifest, Split::train);
  const double ln10 = std::log(10.0);
  double worst = 0.0;
  for (const auto& [id, loss] : uniform) worst = std::max(worst, std::fabs(loss - ln10));
  require(worst <= kLnTol, "uniform-prediction loss deviates from ln 10 by " + fmt(worst, 9));
  return "M=1 equality exact on " + std::to_string(losses.size()) +
         " examples; max |loss - ln 10| = " + fmt(worst, 9);
}

// ---------------------------------------------------------------------------
// Criterion 5: on the synthetic biased dataset (majority fraction 0.8) the
// majority subcluster must come out easier (lower mean easiness) than the
// minority subcluster in >= 4 of 5 independent replications.
// ---------------------------------------------------------------------------

std::string criterion_bias_oracle() {
  ArchitectureSpec pc;
  pc.family = "plain-cnn";
  pc.num_classes = 2;
  pc.input_shape = {1, kBiasImageDim, kBiasImageDim};

  TrainConfig cfg;  // the plain CNN has no normalization, so a cool rate
  cfg.batch_size = 32;
  cfg.max_epochs = 2;
  cfg.initial_lr = 0.01;
  cfg.lr_milestones = {};
  cfg.checkpoint_updates = {64};  // epoch 2 at 32 updates/epoch

  int wins = 0;
  std::ostringstream detail;
  for (int r = 0; r < kReps; ++r) {
    SyntheticBiasSpec spec;  // 500/class train, 100/class test, majority 0.8
    spec.seed = 101 + static_cast<std::uint64_t>(r);
    const BiasDataset ds = generate_biased_dataset(spec);
    const EasinessTable table = compute_easiness(pc, ds.manifest, cfg, 64, kDeskM,
                                                 201 + static_cast<std::uint64_t>(r),
                                                 cached_options());
    double maj_sum = 0.0, min_sum = 0.0;
    std::size_t maj_n = 0, min_n = 0;
    for (const auto& [id, e] : table.values) {
      if (ds.subcluster.at(id) == Subcluster::majority) {
        maj_sum += e;
        ++maj_n;
      } else {
        min_sum += e;
        ++min_n;
      }
    }
    const double maj = maj_sum / static_cast<double>(maj_n);
    const double min = min_sum / static_cast<double>(min_n);
    if (maj < min) ++wins;
    detail << (r ? " " : "") << "rep" << (r + 1) << ":maj=" << fmt(maj, 3)
           << ",min=" << fmt(min, 3);
  }
  require(wins >= 4, "majority easier in only " + std::to_string(wins) + "/5 replications (" +
                         detail.str() + ")");
  return "majority < minority easiness in " + std::to_string(wins) + "/5 replications (" +
         detail.str() + ")";
}

// ---------------------------------------------------------------------------
// Criterion 6: cross-architecture matching at T = epoch 5. Both the easy-set
// and hard-set rates must exceed 0.2 (2x the 0.1 chance rate) in >= 4/5
// replications.
// ---------------------------------------------------------------------------

std::string criterion_cross_architecture() {
  constexpr double kBar = 0.2;
  const TrainConfig cfg = desk_train({kT5});
  int wins = 0;
  std::ostringstream detail;
  for (int r = 0; r < kReps; ++r) {
    const std::uint64_t master = kDeskMasterSeeds[r];
    const EasinessTable wrn = desk_table(desk_wrn(), cfg, kT5, master);
    const EasinessTable dn = desk_table(desk_densenet(), cfg, kT5, master);
    const double easy = matching_rate(select_extremes(wrn, kFraction, SubsetKind::easy),
                                      select_extremes(dn, kFraction, SubsetKind::easy));
    const double hard = matching_rate(select_extremes(wrn, kFraction, SubsetKind::hard),
                                      select_extremes(dn, kFraction, SubsetKind::hard));
    if (easy > kBar && hard > kBar) ++wins;
    detail << (r ? " " : "") << "rep" << (r + 1) << ":easy=" << fmt(easy, 3)
           << ",hard=" << fmt(hard, 3);
  }
  require(wins >= 4, "rates above 0.2 in only " + std::to_string(wins) + "/5 replications (" +
                         detail.str() + ")");
  return "easy and hard rates > 0.2 in " + std::to_string(wins) + "/5 replications (" +
         detail.str() + "; chance 0.1)";
}

// ---------------------------------------------------------------------------
// Criterion 7: begin-vs-end drift. For both architectures, easy and hard
// begin/end matching rates (T = 395 vs 1580) must lie strictly inside
// (0.1, 0.6) in >= 4/5 replications.
// ---------------------------------------------------------------------------

std::string criterion_begin_end() {
  constexpr double kLo = 0.1;
  constexpr double kHi = 0.6;
  const TrainConfig cfg = desk_train({kT5, kT20});
  const std::vector<ArchitectureSpec> archs{desk_wrn(), desk_densenet()};
  int wins = 0;
  std::ostringstream detail;
  for (int r = 0; r < kReps; ++r) {
    const std::uint64_t master = kDeskMasterSeeds[r];
    bool rep_ok = true;
    detail << (r ? " " : "") << "rep" << (r + 1) << ":";
    bool first = true;
    for (const ArchitectureSpec& arch : archs) {
      const EasinessTable begin = desk_table(arch, cfg, kT5, master);
      const EasinessTable end = desk_table(arch, cfg, kT20, master);
      for (SubsetKind kind : {SubsetKind::easy, SubsetKind::hard}) {
        const double rate = begin_end_matching(begin, end, kFraction, kind).rate;
        rep_ok = rep_ok && rate > kLo && rate < kHi;
        detail << (first ? "" : ",") << fmt(rate, 3);
        first = false;
      }
    }
    if (rep_ok) ++wins;
  }
  require(wins >= 4, "rates inside (0.1, 0.6) in only " + std::to_string(wins) +
                         "/5 replications (" + detail.str() + ")");
  return "all begin/end rates in (0.1, 0.6) in " + std::to_string(wins) + "/5 replications (" +
         detail.str() + ")";
}

// ---------------------------------------------------------------------------
// Criterion 8: diversity ordering. The hard-set mean image must score lower
// uniformity (flatter, i.e. visually more diverse members) than the easy-set
// mean image for >= 7 of 10 classes.
// ---------------------------------------------------------------------------

std::string criterion_uniformity() {
  const TrainConfig cfg = desk_train({kT5});
  const EasinessTable table = desk_table(desk_wrn(), cfg, kT5, kDeskMasterSeeds[0]);
  const ExampleSubset easy = select_extremes(table, kFraction, SubsetKind::easy);
  const ExampleSubset hard = select_extremes(table, kFraction, SubsetKind::hard);
  int ordered = 0;
  std::ostringstream detail;
  for (int label = 0; label < 10; ++label) {
    const double ue = uniformity_score(average_image(desk_manifest(), easy, label));
    const double uh = uniformity_score(average_image(desk_manifest(), hard, label));
    if (uh < ue) ++ordered;
    detail << (label ? " " : "") << "c" << label << ":" << (uh < ue ? "<" : ">=");
  }
  require(ordered >= 7, "hard < easy uniformity for only " + std::to_string(ordered) +
                            "/10 classes (" + detail.str() + ")");
  return "hard-set mean image less uniform for " + std::to_string(ordered) + "/10 classes (" +
         detail.str() + ")";
}

// ---------------------------------------------------------------------------
// Criterion 9: ablation ordering at ratio 0.3 over 3 retrain seeds. Removing
// hard examples must cost >= 0.5 accuracy points against random removal, and
// stepwise must stay within 0.2 points of random.
// ---------------------------------------------------------------------------

double mean_accuracy(const CompressionResult& r) {
  return std::accumulate(r.test_accuracies.begin(), r.test_accuracies.end(), 0.0) /
         static_cast<double>(r.test_accuracies.size());
}

std::string criterion_ablation_ordering() {
  constexpr double kHardGapPts = 0.5;      // accuracy points, i.e. 0.005 in [0, 1]
  constexpr double kStepwiseSlackPts = 0.2;
  const TrainConfig cfg = desk_train({kT5});
  CompressionOptions opt;
  opt.cache = &shared_cache();
  const auto results = run_compression_experiment(
      desk_wrn(), desk_manifest(), cfg, kT5, kDeskM, kDeskMasterSeeds[0],
      {Strategy::hard, Strategy::random, Strategy::stepwise}, {0.3},
      {kRetrainSeeds[0], kRetrainSeeds[1], kRetrainSeeds[2]}, opt);
  std::map<Strategy, double> acc;
  for (const auto& r : results) acc[r.plan.strategy] = mean_accuracy(r);
  const double hard = acc.at(Strategy::hard);
  const double random = acc.at(Strategy::random);
  const double stepwise = acc.at(Strategy::stepwise);
  std::ostringstream detail;
  detail << "hard=" << fmt(100 * hard, 2) << "% random=" << fmt(100 * random, 2)
         << "% stepwise=" << fmt(100 * stepwise, 2) << "%";
  require(hard <= random - kHardGapPts / 100.0,
          "hard removal not >= 0.5 points below random (" + detail.str() + ")");
  require(stepwise >= random - kStepwiseSlackPts / 100.0,
          "stepwise more than 0.2 points below random (" + detail.str() + ")");
  return detail.str() + " at ratio 0.3 over 3 seeds";
}

// ---------------------------------------------------------------------------
// Criterion 10: easy-removal cliff. Easy-strategy accuracy at ratio 0.7 must
// fall >= 2 accuracy points below easy-strategy accuracy at ratio 0.3.
// ---------------------------------------------------------------------------

std::string criterion_easy_cliff() {
  constexpr double kCliffPts = 2.0;
  const TrainConfig cfg = desk_train({kT5});
  CompressionOptions opt;
  opt.cache = &shared_cache();
  const auto results = run_compression_experiment(
      desk_wrn(), desk_manifest(), cfg, kT5, kDeskM, kDeskMasterSeeds[0], {Strategy::easy},
      {0.3, 0.7}, {kRetrainSeeds[0], kRetrainSeeds[1], kRetrainSeeds[2]}, opt);
  double at03 = 0.0, at07 = 0.0;
  for (const auto& r : results) {
    if (r.plan.target_ratio == 0.3) at03 = mean_accuracy(r);
    if (r.plan.target_ratio == 0.7) at07 = mean_accuracy(r);
  }
  std::ostringstream detail;
  detail << "easy@0.3=" << fmt(100 * at03, 2) << "% easy@0.7=" << fmt(100 * at07, 2) << "%";
  require(at07 <= at03 - kCliffPts / 100.0,
          "accuracy at 0.7 not >= 2 points below 0.3 (" + detail.str() + ")");
  return detail.str() + " over 3 seeds";
}

// ---------------------------------------------------------------------------
// Criterion 11: determinism. Running the same experiment config into two
// fresh directories must produce byte-identical files everywhere; the
// easiness provenance sidecars are excluded because they carry a wall-clock
// creation timestamp.
// ---------------------------------------------------------------------------

json determinism_config() {
  return json{
      {"dataset",
       {{"synthetic",
         {{"kind", "biased"},
          {"num_classes", 2},
          {"examples_per_class", 50},
          {"test_per_class", 10},
          {"seed", 3}}}}},
      {"architectures",
       json::array({{{"name", "cnn-a"},
                     {"family", "plain-cnn"},
                     {"num_classes", 2},
                     {"input_shape", {1, 16, 16}},
                     {"plain_widths", {6, 10, 16}}},
                    {{"name", "cnn-b"},
                     {"family", "plain-cnn"},
                     {"num_classes", 2},
                     {"input_shape", {1, 16, 16}},
                     {"plain_widths", {4, 8, 12}}}})},
      {"train",
       {{"batch_size", 64}, {"max_epochs", 1}, {"initial_lr", 0.05},
        {"lr_milestones", json::array()}}},
      {"easiness", {{"T", 0}, {"M", 2}, {"fraction", 0.5}}},
      {"analysis", {{"ts", {0, 2}}}},
      {"compression",
       {{"strategies", {"easy", "random"}}, {"ratios", {0.0, 0.2}}, {"retrain_seeds", {1}}}},
  };
}

std::map<std::string, std::string> run_pipeline_into(const fs::path& dir) {
  fs::remove_all(dir);
  CommandOverrides ov;
  ov.out_dir = dir.string();
  const ExperimentConfig cfg = parse_experiment_config(determinism_config(), ov);
  std::ostringstream log;
  cmd_easiness(cfg, log);
  cmd_analyze(cfg, log);
  cmd_compress(cfg, log);
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), dir).generic_string();
    const std::string name = entry.path().filename().string();
    if (name.rfind("easiness_", 0) == 0 && entry.path().extension() == ".json")
      continue;  // provenance sidecar embeds a creation timestamp
    files[rel] = read_text_file(entry.path());
  }
  return files;
}

std::string criterion_determinism() {
  unsetenv("EASECORE_CACHE_DIR");
  const auto first = run_pipeline_into(kScratch / "det_a");
  const auto second = run_pipeline_into(kScratch / "det_b");
  require(!first.empty(), "pipeline produced no files");
  require(first.size() == second.size(),
          "run file sets differ: " + std::to_string(first.size()) + " vs " +
              std::to_string(second.size()));
  std::size_t csvs = 0;
  for (const auto& [rel, bytes] : first) {
    auto it = second.find(rel);
    require(it != second.end(), "file " + rel + " missing from the rerun");
    require(it->second == bytes, "file " + rel + " differs between reruns");
    if (rel.size() > 4 && rel.substr(rel.size() - 4) == ".csv") ++csvs;
  }
  return std::to_string(first.size()) + " files including " + std::to_string(csvs) +
         " CSVs byte-identical across reruns";
}

// ---------------------------------------------------------------------------

struct CriterionSpec {
  int index;
  const char* title;
  double cap_seconds;  // 0 = no stated cap
  std::function<std::string()> run;
};

}  // namespace

int main() {
  const std::vector<CriterionSpec> criteria = {
      {1, "matching-rate identities", 1.0, criterion_identities},
      {2, "Monte-Carlo chance rate", 10.0, criterion_chance_rate},
      {3, "optimizer sequence and gradient check", 60.0, criterion_optimizer_and_gradients},
      {4, "degenerate easiness (M=1, uniform prediction)", 60.0, criterion_easiness_degenerate},
      {5, "bias oracle on the synthetic dataset", 600.0, criterion_bias_oracle},
      {6, "cross-architecture subset sharing", 1800.0, criterion_cross_architecture},
      {7, "begin-vs-end drift", 0.0, criterion_begin_end},
      {8, "mean-image uniformity ordering", 0.0, criterion_uniformity},
      {9, "ablation ordering at ratio 0.3", 3600.0, criterion_ablation_ordering},
      {10, "easy-removal cliff at ratio 0.7", 0.0, criterion_easy_cliff},
      {11, "byte-identical reruns", 0.0, criterion_determinism},
  };

  fs::create_directories(kScratch);
  int failures = 0;
  for (const CriterionSpec& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    std::string detail;
    try {
      detail = c.run();
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (ok && c.cap_seconds > 0.0 && seconds > c.cap_seconds) {
      ok = false;
      detail += " [runtime " + fmt(seconds, 1) + " s exceeds the " + fmt(c.cap_seconds, 0) +
                " s cap]";
    }
    std::printf("[%s] criterion %2d: %s (%.2f s) - %s\n", ok ? "PASS" : "FAIL", c.index, c.title,
                seconds, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  if (failures > 0) std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
