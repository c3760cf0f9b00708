// Copyright 2026 The protoadapt Authors.
// SPDX-License-Identifier: Apache-2.0

#include "protoadapt/pseudolabel.hpp"

#include <gtest/gtest.h>

#include <set>

#include "json.hpp"
#include "oracles.hpp"
#include "protoadapt/error.hpp"
#include "test_util.hpp"

namespace protoadapt {
namespace {

FeatureMatrix unit(Matrix m) { return {std::move(m), true}; }

ScoreTable two_class_table(const std::vector<double>& p0) {
  ScoreTable t;
  const auto n = static_cast<Eigen::Index>(p0.size());
  t.probabilities.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    t.probabilities(i, 0) = p0[static_cast<std::size_t>(i)];
    t.probabilities(i, 1) = 1.0 - p0[static_cast<std::size_t>(i)];
  }
  t.similarities = t.probabilities;
  return t;
}

std::vector<int> samples_of(const std::vector<Selection>& list) {
  std::vector<int> out;
  for (const auto& s : list) out.push_back(s.sample);
  return out;
}

TEST(SimilarityMatrix, Examples) {
  EXPECT_EQ(similarity_matrix(unit(Matrix{{1.0, 0.0}}), unit(Matrix{{1.0, 0.0}, {0.0, 1.0}})),
            (Matrix{{1.0, 0.0}}));
  EXPECT_DOUBLE_EQ(similarity_matrix(unit(Matrix{{0.6, 0.8}}), unit(Matrix{{1.0, 0.0}}))(0, 0), 0.6);
}

TEST(SimilarityMatrix, MatchesLoopOracle) {
  std::mt19937_64 rng(5);
  Matrix v = testing::random_unit_rows(rng, 7, 5);
  Matrix t = testing::random_unit_rows(rng, 3, 5);
  Matrix s = similarity_matrix(unit(v), unit(t));
  auto expected = oracle::dot_table(oracle::to_rows(v), oracle::to_rows(t));
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(s(i, j), expected[i][j], 1e-12);
}

TEST(SimilarityMatrix, Errors) {
  EXPECT_THROW((void)similarity_matrix(unit(Matrix{{1.0, 0.0}}), unit(Matrix{{1.0, 0.0, 0.0}})),
               ValidationError);
  EXPECT_THROW((void)similarity_matrix(unit(Matrix{{2.0, 0.0}}), unit(Matrix{{1.0, 0.0}})),
               ValidationError);
}

TEST(SoftmaxProbs, Examples) {
  Matrix even = softmax_probs(Matrix{{0.3, 0.3}}, 1.0);
  EXPECT_DOUBLE_EQ(even(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(even(0, 1), 0.5);

  Matrix p = softmax_probs(Matrix{{1.0, 0.0}}, 1.0);
  const double e = std::exp(1.0);
  EXPECT_NEAR(p(0, 0), e / (e + 1.0), 1e-15);
  EXPECT_NEAR(p(0, 0), 0.73106, 1e-5);
  EXPECT_NEAR(p(0, 1), 0.26894, 1e-5);

  Matrix sharp = softmax_probs(Matrix{{1.0, 0.0}}, 0.01);
  EXPECT_NEAR(sharp(0, 0), 1.0, 1e-15);
  EXPECT_GT(sharp(0, 1), 0.0);
  EXPECT_LT(sharp(0, 1), 1e-40);
  EXPECT_NEAR(sharp(0, 1), std::exp(-100.0), 1e-55);
}

TEST(SoftmaxProbs, RejectsNonPositiveTemperature) {
  EXPECT_THROW((void)softmax_probs(Matrix{{1.0}}, 0.0), ValidationError);
  EXPECT_THROW((void)softmax_probs(Matrix{{1.0}}, -1.0), ValidationError);
}

TEST(SoftmaxProbs, RowsSumToOne) {
  std::mt19937_64 rng(8);
  Matrix s = testing::random_matrix(rng, 30, 6);
  for (double tau : {0.01, 0.1, 1.0, 10.0}) {
    Matrix p = softmax_probs(s, tau);
    for (Eigen::Index r = 0; r < p.rows(); ++r) EXPECT_NEAR(p.row(r).sum(), 1.0, 1e-9);
  }
}

TEST(ArgmaxLabels, Examples) {
  EXPECT_EQ(argmax_labels(Matrix{{0.2, 0.8}}), std::vector<int>{1});
  EXPECT_EQ(argmax_labels(Matrix{{0.5, 0.5}}), std::vector<int>{0});
}

TEST(ArgmaxLabels, MatchesLinearScan) {
  std::mt19937_64 rng(13);
  Matrix p = softmax_probs(testing::random_matrix(rng, 50, 10), 0.5);
  auto rows = oracle::to_rows(p);
  auto labels = argmax_labels(p);
  for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(labels[i], oracle::argmax(rows[i]));
}

TEST(ArgmaxLabels, TemperatureNeverChangesLabels) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix s = testing::random_unit_rows(rng, 25, 4) * 0.9;
    auto base = argmax_labels(s);
    for (double tau : {0.01, 0.07, 1.0, 5.0}) EXPECT_EQ(argmax_labels(softmax_probs(s, tau)), base);
  }
}

TEST(SelectTopK, WorkedExample) {
  // Class-0 column [0.9, 0.8, 0.3, 0.2, 0.1]; samples 2..4 belong to class 1
  // with p(1|x) = 0.7, 0.8, 0.9.
  std::vector<double> p0{0.9, 0.8, 0.3, 0.2, 0.1};
  ScoreTable table = two_class_table(p0);
  PseudoLabelSet set = select_top_k(table, 2);
  auto expected = oracle::top_k(oracle::to_rows(table.probabilities),
                                oracle::to_rows(table.probabilities), 2);
  ASSERT_EQ(set.per_class.size(), 2u);
  EXPECT_EQ(samples_of(set.per_class[0]), (std::vector<int>{0, 1}));
  EXPECT_EQ(samples_of(set.per_class[1]), (std::vector<int>{4, 3}));
  for (std::size_t c = 0; c < 2; ++c) {
    ASSERT_EQ(set.per_class[c].size(), expected[c].size());
    for (std::size_t i = 0; i < expected[c].size(); ++i) {
      EXPECT_EQ(set.per_class[c][i].sample, expected[c][i].sample);
    }
  }
  EXPECT_DOUBLE_EQ(set.per_class[0][0].confidence, 0.9);
}

TEST(SelectTopK, ShortageTakesAllCandidates) {
  PseudoLabelSet set = select_top_k(two_class_table({0.9, 0.8, 0.7, 0.6, 0.55}), 16);
  EXPECT_EQ(set.per_class[0].size(), 5u);
  EXPECT_TRUE(set.per_class[1].empty());
}

TEST(SelectTopK, TieGoesToLowerIndex) {
  PseudoLabelSet set = select_top_k(two_class_table({0.9, 0.7, 0.2, 0.7}), 2);
  EXPECT_EQ(samples_of(set.per_class[0]), (std::vector<int>{0, 1}));
  set = select_top_k(two_class_table({0.7, 0.2, 0.7, 0.9}), 2);
  EXPECT_EQ(samples_of(set.per_class[0]), (std::vector<int>{3, 0}));
}

TEST(SelectTopK, RejectsNonPositiveK) {
  ScoreTable table = two_class_table({0.9});
  EXPECT_THROW((void)select_top_k(table, 0), ValidationError);
  EXPECT_THROW((void)select_top_k(table, -3), ValidationError);
}

TEST(SelectTopK, RankBySimilarityDiffersFromProbability) {
  // Sample 0 has the higher raw similarity for class 0, sample 1 the larger
  // softmax margin.
  ScoreTable table;
  table.similarities = Matrix{{0.30, 0.29, -1.0}, {0.20, 0.0, 0.0}};
  table.probabilities = softmax_probs(table.similarities, 0.01);
  EXPECT_EQ(samples_of(select_top_k(table, 1, RankBy::kProbability).per_class[0]),
            std::vector<int>{1});
  EXPECT_EQ(samples_of(select_top_k(table, 1, RankBy::kSimilarity).per_class[0]),
            std::vector<int>{0});
}

TEST(SelectTopK, InvariantsOnRandomTables) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 50);
    const int c = 1 + static_cast<int>(rng() % 5);
    const int k = 1 + static_cast<int>(rng() % 8);
    ScoreTable table;
    table.similarities = testing::random_matrix(rng, n, c) * 0.3;
    table.probabilities = softmax_probs(table.similarities, 0.05);
    PseudoLabelSet set = select_top_k(table, k);
    auto labels = argmax_labels(table.probabilities);
    std::set<int> seen;
    for (std::size_t cls = 0; cls < set.per_class.size(); ++cls) {
      const auto& list = set.per_class[cls];
      EXPECT_LE(list.size(), static_cast<std::size_t>(k));
      for (std::size_t i = 0; i < list.size(); ++i) {
        EXPECT_TRUE(seen.insert(list[i].sample).second);
        EXPECT_EQ(labels[static_cast<std::size_t>(list[i].sample)], static_cast<int>(cls));
        if (i > 0) EXPECT_GE(list[i - 1].confidence, list[i].confidence);
      }
    }
  }
}

TEST(PseudoLabelJson, RoundTripAndKeys) {
  PseudoLabelSet set = select_top_k(two_class_table({0.9, 0.8, 0.3, 0.2, 0.1}), 2);
  set.labeling_backbone = "vitb16";
  const std::string text = to_json(set);
  auto j = nlohmann::json::parse(text);
  EXPECT_EQ(j["k"], 2);
  EXPECT_EQ(j["labeling_backbone"], "vitb16");
  EXPECT_EQ(j["rank_by"], "probability");
  EXPECT_TRUE(j.contains("tau"));
  EXPECT_EQ(j["per_class"]["1"][0]["sample"], 4);

  PseudoLabelSet back = pseudo_labels_from_json(text);
  EXPECT_EQ(back.k, set.k);
  EXPECT_EQ(back.labeling_backbone, set.labeling_backbone);
  EXPECT_EQ(back.per_class, set.per_class);
  EXPECT_EQ(to_json(back), text);
}

TEST(PseudoLabelJson, RejectsBadClassKeys) {
  EXPECT_THROW((void)pseudo_labels_from_json(
                   R"({"k":1,"labeling_backbone":"a","tau":0.01,"rank_by":"probability","per_class":{"5":[]}})"),
               ValidationError);
  EXPECT_THROW((void)pseudo_labels_from_json("{"), ValidationError);
}

}  // namespace
}  // namespace protoadapt
