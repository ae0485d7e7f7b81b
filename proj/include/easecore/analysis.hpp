#pragma once

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "easecore/common.hpp"
#include "easecore/easiness.hpp"
#include "easecore/io.hpp"
#include "easecore/manifest.hpp"

namespace easecore {

struct MatchingReport {
  std::string pair_label;
  SubsetKind subset_kind = SubsetKind::custom;
  std::int64_t t_a = 0;
  std::int64_t t_b = 0;
  double rate = 0.0;
  double chance_rate = 0.0;
};

// |A ∩ B| / max(|A|, |B|). Requires both sets nonempty.
inline double matching_rate(const ExampleSubset& a, const ExampleSubset& b) {
  if (a.example_ids.empty() || b.example_ids.empty())
    throw ValidationError("matching_rate: sets must be nonempty");
  std::size_t common = 0;
  auto ia = a.example_ids.begin();
  auto ib = b.example_ids.begin();
  while (ia != a.example_ids.end() && ib != b.example_ids.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++common;
      ++ia;
      ++ib;
    }
  }
  return static_cast<double>(common) /
         static_cast<double>(std::max(a.example_ids.size(), b.example_ids.size()));
}

// Pairwise matching over all table pairs; the analytic chance rate for two
// independent uniform fraction-f subsets is f itself.
inline std::vector<MatchingReport> cross_architecture_matching(
    const std::vector<EasinessTable>& tables, double fraction, SubsetKind kind) {
  if (tables.size() < 2)
    throw ValidationError("cross_architecture_matching: need at least two tables");
  for (std::size_t i = 1; i < tables.size(); ++i)
    if (tables[i].dataset_id != tables[0].dataset_id)
      throw ValidationError("cross_architecture_matching: tables come from different datasets (" +
                            tables[0].dataset_id + " vs " + tables[i].dataset_id + ")");
  std::vector<MatchingReport> reports;
  for (std::size_t i = 0; i < tables.size(); ++i) {
    for (std::size_t j = i + 1; j < tables.size(); ++j) {
      const ExampleSubset a = select_extremes(tables[i], fraction, kind);
      const ExampleSubset b = select_extremes(tables[j], fraction, kind);
      MatchingReport r;
      r.pair_label = tables[i].arch_fingerprint + " x " + tables[j].arch_fingerprint;
      r.subset_kind = kind;
      r.t_a = tables[i].T;
      r.t_b = tables[j].T;
      r.rate = matching_rate(a, b);
      r.chance_rate = fraction;
      reports.push_back(r);
    }
  }
  return reports;
}

inline MatchingReport begin_end_matching(const EasinessTable& early, const EasinessTable& final_t,
                                         double fraction, SubsetKind kind) {
  if (early.dataset_id != final_t.dataset_id)
    throw ValidationError("begin_end_matching: tables come from different datasets");
  if (early.arch_fingerprint != final_t.arch_fingerprint)
    throw ValidationError("begin_end_matching: tables come from different architectures");
  if (early.T == final_t.T)
    throw ValidationError("begin_end_matching: both tables are at the same T");
  if (early.T > final_t.T)
    throw ValidationError("begin_end_matching: early table must have the smaller T");
  MatchingReport r;
  r.pair_label = "begin x end";
  r.subset_kind = kind;
  r.t_a = early.T;
  r.t_b = final_t.T;
  r.rate = matching_rate(select_extremes(early, fraction, kind),
                         select_extremes(final_t, fraction, kind));
  r.chance_rate = fraction;
  return r;
}

// Rates are report values, so they are rounded to 4 decimals here; stored
// easiness tables stay full precision.
inline std::string matching_reports_to_csv(const std::vector<MatchingReport>& reports) {
  std::ostringstream os;
  os << "pair,kind,T_a,T_b,rate,chance_rate\n";
  for (const MatchingReport& r : reports)
    os << r.pair_label << "," << subset_kind_name(r.subset_kind) << "," << r.t_a << "," << r.t_b
       << "," << format_double_fixed(r.rate, 4) << "," << format_double_fixed(r.chance_rate, 4)
       << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------

struct MeanImage {
  int class_label = 0;
  SubsetKind subset_kind = SubsetKind::custom;
  std::size_t count = 0;
  ImageShape shape;
  std::vector<double> pixels;  // c*h*w means of raw intensities
};

// Pixelwise mean of raw (unaugmented, unnormalized) intensities over the
// subset members carrying the given class label.
inline MeanImage average_image(const DatasetManifest& manifest, const ExampleSubset& subset,
                               int class_label) {
  MeanImage mi;
  mi.class_label = class_label;
  mi.subset_kind = subset.subset_kind;
  mi.shape = manifest.image_shape;
  mi.pixels.assign(static_cast<std::size_t>(mi.shape.c) * mi.shape.h * mi.shape.w, 0.0);
  for (const std::string& id : subset.example_ids) {
    const ExampleRecord& ex = manifest.by_id(id);
    if (ex.label != class_label) continue;
    for (std::size_t p = 0; p < mi.pixels.size(); ++p)
      mi.pixels[p] += static_cast<double>(ex.image.data[p]);
    ++mi.count;
  }
  if (mi.count == 0)
    throw ValidationError("average_image: subset has no examples of class " +
                          std::to_string(class_label));
  for (double& p : mi.pixels) p /= static_cast<double>(mi.count);
  return mi;
}

// Spatial variance of the mean image's intensities, all channels pooled.
// Lower score = flatter mean = visually more diverse source set.
inline double uniformity_score(const MeanImage& image) {
  if (image.pixels.empty()) return 0.0;
  double mean = 0.0;
  for (double p : image.pixels) mean += p;
  mean /= static_cast<double>(image.pixels.size());
  double var = 0.0;
  for (double p : image.pixels) var += (p - mean) * (p - mean);
  return var / static_cast<double>(image.pixels.size());
}

}  // namespace easecore
