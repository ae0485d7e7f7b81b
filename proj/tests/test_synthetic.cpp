#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <map>
#include <string>

#include "easecore/synthetic.hpp"

using namespace easecore;

TEST_CASE("biased generator: subcluster counts are exactly ceil(mf * n)") {
  SyntheticBiasSpec spec;
  spec.num_classes = 2;
  spec.examples_per_class = 100;
  spec.test_per_class = 20;
  spec.majority_fraction = 0.8;
  const BiasDataset ds = generate_biased_dataset(spec);

  std::map<std::pair<int, Subcluster>, int> counts;
  for (const auto& ex : ds.manifest.examples) {
    if (ex.split != Split::train) continue;
    counts[{ex.label, ds.subcluster.at(ex.example_id)}]++;
  }
  for (int c = 0; c < 2; ++c) {
    CHECK(counts[{c, Subcluster::majority}] == 80);  // ceil(0.8 * 100)
    CHECK(counts[{c, Subcluster::minority}] == 20);
  }
  CHECK(ds.manifest.train_indices.size() == 200);
  CHECK(ds.manifest.test_indices.size() == 40);
}

TEST_CASE("biased generator: ceil rounding on odd counts") {
  SyntheticBiasSpec spec;
  spec.num_classes = 2;
  spec.examples_per_class = 7;
  spec.test_per_class = 3;
  spec.majority_fraction = 0.6;
  const BiasDataset ds = generate_biased_dataset(spec);
  int majority = 0;
  for (const auto& ex : ds.manifest.examples)
    if (ex.split == Split::train && ex.label == 0 &&
        ds.subcluster.at(ex.example_id) == Subcluster::majority)
      majority++;
  CHECK(majority == 5);  // ceil(0.6 * 7) = 5
}

TEST_CASE("biased generator is deterministic and validates its spec") {
  SyntheticBiasSpec spec;
  spec.examples_per_class = 30;
  spec.test_per_class = 10;
  const BiasDataset a = generate_biased_dataset(spec);
  const BiasDataset b = generate_biased_dataset(spec);
  CHECK(a.manifest.content_fingerprint == b.manifest.content_fingerprint);
  CHECK(a.manifest.dataset_id == b.manifest.dataset_id);

  spec.seed += 1;
  const BiasDataset c = generate_biased_dataset(spec);
  CHECK(a.manifest.content_fingerprint != c.manifest.content_fingerprint);

  SyntheticBiasSpec bad = spec;
  bad.majority_fraction = 0.5;
  CHECK_THROWS_AS(generate_biased_dataset(bad), ValidationError);
}

TEST_CASE("zero separation still emits subcluster labels") {
  SyntheticBiasSpec spec;
  spec.examples_per_class = 10;
  spec.test_per_class = 2;
  spec.subcluster_separation = 0.0;
  const BiasDataset ds = generate_biased_dataset(spec);
  CHECK(ds.subcluster.size() == ds.manifest.examples.size());
}

TEST_CASE("synthetic dir round-trip preserves the dataset") {
  const fs::path dir = fs::path("tmp_synth_dir");
  fs::remove_all(dir);
  SyntheticBiasSpec spec;
  spec.examples_per_class = 25;
  spec.test_per_class = 5;
  const BiasDataset ds = generate_biased_dataset(spec);
  save_synthetic_dir(ds, dir);

  const DatasetManifest back = load_synthetic_dir(dir);
  REQUIRE(back.examples.size() == ds.manifest.examples.size());
  CHECK(back.content_fingerprint == ds.manifest.content_fingerprint);
  const auto labels = load_subcluster_labels(dir);
  CHECK(labels.size() == ds.subcluster.size());

  // load_dataset dispatches on the directory layout.
  const DatasetManifest dispatched = load_dataset(dir);
  CHECK(dispatched.content_fingerprint == ds.manifest.content_fingerprint);
  fs::remove_all(dir);
}

TEST_CASE("cifar-like generator: counts, determinism, label noise off") {
  CifarLikeSpec spec;
  spec.num_classes = 4;
  spec.train_per_class = 30;
  spec.test_per_class = 10;
  spec.label_noise = 0.0;
  const CifarLikeDataset ds = generate_cifar_like(spec);
  CHECK(ds.manifest.train_indices.size() == 120);
  CHECK(ds.manifest.test_indices.size() == 40);
  for (const auto& [id, kind] : ds.subcluster) CHECK(kind != "mislabeled");

  const CifarLikeDataset again = generate_cifar_like(spec);
  CHECK(again.manifest.content_fingerprint == ds.manifest.content_fingerprint);
}

TEST_CASE("cifar-like dataset round-trips through the CIFAR binary layout") {
  const fs::path dir = fs::path("tmp_cifar_dir");
  fs::remove_all(dir);
  CifarLikeSpec spec;
  spec.num_classes = 10;
  spec.train_per_class = 12;
  spec.test_per_class = 4;
  const CifarLikeDataset ds = generate_cifar_like(spec);
  save_cifar_like(ds, dir);

  const DatasetManifest back = load_dataset(dir);
  REQUIRE(back.examples.size() == ds.manifest.examples.size());
  CHECK(back.train_indices.size() == 120);
  CHECK(back.test_indices.size() == 40);
  CHECK(back.class_names == ds.manifest.class_names);
  // The loader assigns ids by source order, which matches generation order.
  for (std::size_t i = 0; i < back.examples.size(); ++i) {
    CHECK(back.examples[i].label == ds.manifest.examples[i].label);
    CHECK(back.examples[i].image.data == ds.manifest.examples[i].image.data);
  }
  fs::remove_all(dir);
}

TEST_CASE("loading an empty directory fails with a load error") {
  const fs::path dir = fs::path("tmp_empty_dir");
  fs::remove_all(dir);
  fs::create_directories(dir);
  CHECK_THROWS_AS(load_dataset(dir), LoadError);
  CHECK_THROWS_AS(load_dataset(dir / "missing"), LoadError);
  fs::remove_all(dir);
}
