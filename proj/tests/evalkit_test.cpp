#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "hwssl/common.hpp"
#include "hwssl/evalkit.hpp"

using namespace hwssl;

namespace {

Embedding emb(std::vector<float> v, WriterId w, std::uint32_t s) { return {std::move(v), "test", {w, s}}; }

}  // namespace

TEST(Cosine, KnownValues) {
  const std::vector<double> a{1, 0}, b{0, 1}, c{1, 2, 3}, d{4, 5, 6};
  EXPECT_NEAR(cosine(a, b), 0.0, 1e-12);
  EXPECT_NEAR(cosine(c, d), 0.974632, 1e-6);
  EXPECT_NEAR(cosine(c, c), 1.0, 1e-12);
}

TEST(Cosine, ZeroVectorIsUndefined) {
  const std::vector<double> z{0, 0, 0}, c{1, 2, 3};
  try {
    cosine(z, c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("undefined cosine"), std::string::npos);
  }
}

TEST(Cosine, ScaleInvariantAndBounded) {
  std::mt19937 rng(3);
  std::normal_distribution<float> n;
  for (int t = 0; t < 200; ++t) {
    std::vector<float> a(16), b(16), a2(16);
    for (int i = 0; i < 16; ++i) {
      a[i] = n(rng);
      b[i] = n(rng);
      a2[i] = a[i] * 3.5f;
    }
    const double c = cosine(a, b);
    EXPECT_LE(std::abs(c), 1.0);
    EXPECT_NEAR(cosine(a2, b), c, 1e-6);
    EXPECT_NEAR(cosine(b, a), c, 1e-12);
  }
}

TEST(SeparationReport, IdenticalEmbeddingsHaveNoSeparation) {
  std::vector<Embedding> es;
  for (WriterId w = 1; w <= 3; ++w)
    for (std::uint32_t s = 0; s < 4; ++s) es.push_back(emb({1, 2, 3}, w, s));
  const SeparationReport r = separation_report(es, 1, {.compute_2d = false});
  EXPECT_NEAR(r.intra_nd, 1.0, 1e-9);
  EXPECT_NEAR(r.inter_nd, 1.0, 1e-9);
  EXPECT_NEAR(r.separation_nd, 0.0, 1e-9);
  EXPECT_EQ(r.n_intra_pairs, 3u * 6u);
  EXPECT_EQ(r.n_inter_pairs, r.n_intra_pairs);
  EXPECT_FALSE(r.has_2d);
}

TEST(SeparationReport, OrthogonalWriterClusters) {
  std::vector<Embedding> es;
  for (std::uint32_t s = 0; s < 5; ++s) {
    es.push_back(emb({1, 0, 0, 0}, 1, s));
    es.push_back(emb({0, 0, 2, 0}, 2, s));
  }
  const SeparationReport r = separation_report(es, 9);
  EXPECT_NEAR(r.intra_nd, 1.0, 1e-9);
  EXPECT_NEAR(r.inter_nd, 0.0, 1e-9);
  EXPECT_NEAR(r.separation_nd, 1.0, 1e-9);
  EXPECT_TRUE(r.has_2d);
  EXPECT_EQ(r.method, "test");
  EXPECT_NEAR(r.separation_2d, r.intra_2d - r.inter_2d, 1e-12);
}

TEST(SeparationReport, MatchesBruteForceWhenAllCrossPairsFit) {
  // 2 writers x 3 samples: 6 intra pairs, 9 cross pairs of which 6 are sampled.
  std::mt19937 rng(5);
  std::normal_distribution<float> n;
  std::vector<Embedding> es;
  for (WriterId w = 1; w <= 2; ++w)
    for (std::uint32_t s = 0; s < 3; ++s) es.push_back(emb({n(rng), n(rng), n(rng)}, w, s));
  double intra = 0;
  for (int w = 0; w < 2; ++w)
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j) intra += cosine(es[w * 3 + i], es[w * 3 + j]);
  double lo = 1, hi = -1;
  for (int i = 0; i < 3; ++i)
    for (int j = 3; j < 6; ++j) {
      lo = std::min(lo, cosine(es[i], es[j]));
      hi = std::max(hi, cosine(es[i], es[j]));
    }
  const SeparationReport r = separation_report(es, 2, {.compute_2d = false});
  EXPECT_NEAR(r.intra_nd, intra / 6, 1e-9);
  EXPECT_GE(r.inter_nd, lo - 1e-9);
  EXPECT_LE(r.inter_nd, hi + 1e-9);
  EXPECT_EQ(r.n_inter_pairs, 6u);
}

TEST(SeparationReport, DegenerateInputsAreErrors) {
  std::vector<Embedding> one_writer{emb({1, 0}, 1, 0), emb({0, 1}, 1, 1)};
  EXPECT_THROW(separation_report(one_writer, 0), Error);
  std::vector<Embedding> singleton{emb({1, 0}, 1, 0), emb({0, 1}, 1, 1), emb({1, 1}, 2, 0)};
  EXPECT_THROW(separation_report(singleton, 0), Error);
}

TEST(Reduce2d, DeterministicAndSeparatesClusters) {
  std::mt19937 rng(11);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix pts(60, 64);
  std::vector<int> labels(60);
  for (std::size_t i = 0; i < 60; ++i) {
    labels[i] = i < 30 ? 0 : 1;
    for (std::size_t d = 0; d < 64; ++d) pts(i, d) = n(rng) + (labels[i] == 1 && d < 8 ? 12.0 : 0.0);
  }
  const Matrix a = reduce_2d(pts, 4);
  const Matrix b = reduce_2d(pts, 4);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.rows, 60u);
  ASSERT_EQ(a.cols, 2u);
  EXPECT_GT(silhouette_score(a, labels), 0.5);
  EXPECT_THROW(reduce_2d(Matrix(2, 3), 0), Error);
}

TEST(Silhouette, ClosedFormOnTinySet) {
  // Points 0, 1 (label 0) and 10, 11 (label 1) on a line.
  Matrix pts(4, 1);
  pts(0, 0) = 0;
  pts(1, 0) = 1;
  pts(2, 0) = 10;
  pts(3, 0) = 11;
  const std::vector<int> labels{0, 0, 1, 1};
  // Point 0: a = 1, b = 10.5, s = 1 - 1/10.5; point 1: a = 1, b = 9.5, s = 1 - 1/9.5; symmetric for the others.
  const double expected = (2 * (1 - 1 / 10.5) + 2 * (1 - 1 / 9.5)) / 4;
  EXPECT_NEAR(silhouette_score(pts, labels), expected, 1e-12);
}

TEST(ClassificationMetrics, PerfectAndAllPositive) {
  const std::vector<int> labels{1, 0, 1, 0, 1, 0};
  const auto perfect = classification_metrics(labels, labels);
  EXPECT_DOUBLE_EQ(perfect.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(perfect.precision, 1.0);
  EXPECT_DOUBLE_EQ(perfect.recall, 1.0);
  EXPECT_DOUBLE_EQ(perfect.f1, 1.0);
  const std::vector<int> ones(6, 1);
  const auto all_pos = classification_metrics(labels, ones);
  EXPECT_DOUBLE_EQ(all_pos.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(all_pos.recall, 1.0);
  EXPECT_DOUBLE_EQ(all_pos.precision, 0.5);
  EXPECT_NEAR(all_pos.f1, 2.0 / 3.0, 1e-12);
  EXPECT_FALSE(all_pos.undefined);
}

TEST(ClassificationMetrics, ZeroDenominatorsAreFlagged) {
  const std::vector<int> labels{0, 0, 1}, none{0, 0, 0};
  const auto m = classification_metrics(labels, none);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_EQ(m.f1, 0.0);
  EXPECT_TRUE(m.undefined);
  EXPECT_THROW(classification_metrics(labels, std::vector<int>{1}), Error);
  EXPECT_THROW(classification_metrics(std::vector<int>{}, std::vector<int>{}), Error);
}

TEST(ClassificationMetrics, MatchesConfusionOracleOnRandomCases) {
  std::mt19937 rng(1000);
  for (int t = 0; t < 1000; ++t) {
    const int n = 1 + static_cast<int>(rng() % 40);
    std::vector<int> y(n), p(n);
    for (int i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng() % 2);
      p[i] = static_cast<int>(rng() % 2);
    }
    double tp = 0, fp = 0, tn = 0, fn = 0;
    for (int i = 0; i < n; ++i) (y[i] ? (p[i] ? tp : fn) : (p[i] ? fp : tn)) += 1;
    const auto m = classification_metrics(y, p);
    EXPECT_EQ(m.total(), static_cast<std::size_t>(n));
    EXPECT_NEAR(m.accuracy, (tp + tn) / n, 1e-12);
    const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    EXPECT_NEAR(m.precision, prec, 1e-12);
    EXPECT_NEAR(m.recall, rec, 1e-12);
    EXPECT_NEAR(m.f1, f1, 1e-12);
    EXPECT_LE(m.f1, std::max(m.precision, m.recall) + 1e-12);
  }
}
