// Copyright 2026 The protoadapt Authors.
// SPDX-License-Identifier: Apache-2.0

#include "protoadapt/prototype.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "oracles.hpp"
#include "protoadapt/error.hpp"
#include "test_util.hpp"

namespace protoadapt {
namespace {

EmbeddingCache cache_with(const Matrix& features, const BackboneId& id = "rn50") {
  EmbeddingCache cache;
  for (Eigen::Index i = 0; i < features.rows(); ++i) cache.sample_ids.push_back(std::to_string(i));
  cache.features[id] = {features, true};
  return cache;
}

PseudoLabelSet labels_from(const std::vector<std::vector<int>>& lists) {
  PseudoLabelSet set;
  set.k = 16;
  for (const auto& list : lists) {
    set.per_class.emplace_back();
    for (int s : list) set.per_class.back().push_back({s, 0.5});
  }
  return set;
}

TEST(EstimatePrototypes, SingleSampleIsItsOwnPrototype) {
  Matrix f{{0.6, 0.8}, {1.0, 0.0}};
  PrototypeBank bank = estimate_prototypes(cache_with(f), labels_from({{0}, {1}}), "rn50");
  EXPECT_NEAR(bank.prototypes(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(bank.prototypes(0, 1), 0.8, 1e-15);
  EXPECT_EQ(bank.k_used, (std::vector<int>{1, 1}));
  EXPECT_EQ(bank.source_backbone, "rn50");
}

TEST(EstimatePrototypes, AxisPairRenormalizes) {
  Matrix f{{1.0, 0.0}, {0.0, 1.0}};
  PrototypeBank bank = estimate_prototypes(cache_with(f), labels_from({{0, 1}}), "rn50");
  EXPECT_NEAR(bank.prototypes(0, 0), 0.70711, 1e-5);
  EXPECT_NEAR(bank.prototypes(0, 1), 0.70711, 1e-5);
  EXPECT_NEAR(bank.prototypes.row(0).norm(), 1.0, 1e-15);
}

TEST(EstimatePrototypes, MatchesMeanThenNormalizeOracle) {
  std::mt19937_64 rng(31);
  Matrix f = testing::random_unit_rows(rng, 64, 12);
  std::vector<std::vector<int>> lists(4);
  for (int i = 0; i < 64; ++i) lists[static_cast<std::size_t>(i % 4)].push_back(i);
  PrototypeBank bank = estimate_prototypes(cache_with(f), labels_from(lists), "rn50");
  auto rows = oracle::to_rows(f);
  for (std::size_t c = 0; c < 4; ++c) {
    auto expected = oracle::mean_then_normalize(rows, lists[c]);
    for (std::size_t j = 0; j < expected.size(); ++j) {
      EXPECT_NEAR(bank.prototypes(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)),
                  expected[j], 1e-12);
    }
    EXPECT_EQ(bank.k_used[c], 16);
  }
}

TEST(EstimatePrototypes, PermutationInvariantExactly) {
  std::mt19937_64 rng(37);
  Matrix f = testing::random_unit_rows(rng, 40, 9);
  std::vector<int> list(20);
  std::iota(list.begin(), list.end(), 5);
  PrototypeBank a = estimate_prototypes(cache_with(f), labels_from({list}), "rn50");
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(list.begin(), list.end(), rng);
    PrototypeBank b = estimate_prototypes(cache_with(f), labels_from({list}), "rn50");
    EXPECT_EQ(a.prototypes, b.prototypes);
  }
}

TEST(EstimatePrototypes, DuplicateSampleActsThroughTheMean) {
  Matrix f{{1.0, 0.0}, {0.0, 1.0}};
  PrototypeBank bank = estimate_prototypes(cache_with(f), labels_from({{0, 0, 1}}), "rn50");
  const double norm = std::sqrt(5.0);
  EXPECT_NEAR(bank.prototypes(0, 0), 2.0 / norm, 1e-15);
  EXPECT_NEAR(bank.prototypes(0, 1), 1.0 / norm, 1e-15);
}

TEST(EstimatePrototypes, UsesModelBackboneFeatures) {
  std::mt19937_64 rng(41);
  EmbeddingCache cache = cache_with(testing::random_unit_rows(rng, 10, 4), "vitb16");
  cache.features["rn50"] = {testing::random_unit_rows(rng, 10, 6), true};
  PseudoLabelSet labels = labels_from({{1, 3}, {2}});
  labels.labeling_backbone = "vitb16";
  PrototypeBank bank = estimate_prototypes(cache, labels, "rn50");
  EXPECT_EQ(bank.prototypes.cols(), 6);
  auto expected = oracle::mean_then_normalize(oracle::to_rows(cache.features["rn50"].data), {1, 3});
  for (int j = 0; j < 6; ++j) EXPECT_NEAR(bank.prototypes(0, j), expected[static_cast<std::size_t>(j)], 1e-12);
}

TEST(EstimatePrototypes, Errors) {
  Matrix f{{1.0, 0.0}, {0.0, 1.0}};
  EXPECT_THROW((void)estimate_prototypes(cache_with(f), labels_from({{0}, {}}), "rn50"),
               ValidationError);
  EXPECT_THROW((void)estimate_prototypes(cache_with(f), labels_from({{0}}), "vitb16"),
               ValidationError);
  EXPECT_THROW((void)estimate_prototypes(cache_with(f), labels_from({{2}}), "rn50"),
               ValidationError);
}

TEST(EstimatePrototypes, TextFallbackForEmptyClass) {
  Matrix f{{1.0, 0.0}, {0.0, 1.0}};
  TextClassifier text;
  text.class_names = {"a", "b"};
  text.features["rn50"] = {Matrix{{1.0, 0.0}, {0.6, 0.8}}, true};
  PrototypeOptions options;
  options.empty_class_fallback = &text;
  PrototypeBank bank = estimate_prototypes(cache_with(f), labels_from({{0}, {}}), "rn50", options);
  EXPECT_EQ(bank.k_used, (std::vector<int>{1, 0}));
  EXPECT_NEAR(bank.prototypes(1, 0), 0.6, 1e-15);
  EXPECT_NEAR(bank.prototypes(1, 1), 0.8, 1e-15);
}

TEST(PrototypeBankIo, RoundTrip) {
  testing::TempDir tmp;
  std::mt19937_64 rng(43);
  PrototypeBank bank;
  bank.prototypes = quantize_f32(testing::random_unit_rows(rng, 3, 5));
  bank.source_backbone = "rn50";
  bank.k_used = {16, 4, 0};
  bank.class_names = {"a", "b", "c"};
  save_prototypes(bank, tmp.path());
  EXPECT_TRUE(std::filesystem::exists(tmp / "prototypes.json"));
  PrototypeBank back = load_prototypes(tmp.path());
  EXPECT_EQ(back.prototypes, bank.prototypes);
  EXPECT_EQ(back.k_used, bank.k_used);
  EXPECT_EQ(back.class_names, bank.class_names);
  EXPECT_EQ(back.source_backbone, "rn50");
}

}  // namespace
}  // namespace protoadapt
