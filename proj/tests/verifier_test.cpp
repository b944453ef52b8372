#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "hwssl/verifier.hpp"

using namespace hwssl;
using namespace hwssl::verifier;

namespace {

/// Balanced pair set over `writers` writers with `per` samples each.
PairSet toy_pairs(WriterId first, int writers, int per, std::uint64_t seed) {
  std::vector<HandwritingSample> samples;
  for (int w = 0; w < writers; ++w)
    for (int s = 0; s < per; ++s) samples.push_back({static_cast<WriterId>(first + w), static_cast<std::uint32_t>(s), RawImage{1, 1, 1, {255}}, ""});
  Corpus c("toy", samples);
  return generate_pairs(c, c.writers(), seed);
}

/// Writer centroid plus small noise: same-writer absdiff is near zero.
FeatureTable clustered_features(const PairSet& pairs, int dim, double noise, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n01;
  std::map<WriterId, std::vector<float>> centre;
  FeatureTable t;
  for (const auto& p : pairs.pairs)
    for (const auto& k : {p.known, p.questioned}) {
      if (t.count(k)) continue;
      auto& c = centre[k.writer_id];
      if (c.empty())
        for (int d = 0; d < dim; ++d) c.push_back(n01(rng) * 2.0f);
      Embedding e;
      e.sample = k;
      e.method = "toy";
      for (int d = 0; d < dim; ++d) e.values.push_back(c[d] + static_cast<float>(noise) * n01(rng));
      t[k] = e;
    }
  return t;
}

VerifierConfig small_config() {
  VerifierConfig c;
  c.fc1 = 32;
  c.fc2 = 16;
  c.batch_size = 32;
  c.lr = 3e-3;
  c.max_epochs = 20;
  c.patience = 20;
  return c;
}

}  // namespace

TEST(Combine, ConcatAndAbsdiff) {
  std::vector<float> a{1, -2, 3}, b{0.5f, 1, 3};
  EXPECT_EQ(combine_pair(a, b, Combine::concat), (std::vector<float>{1, -2, 3, 0.5f, 1, 3}));
  EXPECT_EQ(combine_pair(a, b, Combine::absdiff), (std::vector<float>{0.5f, 3, 0}));
  EXPECT_EQ(combine_pair(a, b, Combine::absdiff), combine_pair(b, a, Combine::absdiff));
  EXPECT_THROW(combine_pair(a, std::vector<float>{1}, Combine::concat), Error);
  EXPECT_EQ(combine_from_string(to_string(Combine::absdiff)), Combine::absdiff);
  EXPECT_THROW(combine_from_string("sum"), Error);

  auto ta = torch::randn({4, 3}), tb = torch::randn({4, 3});
  EXPECT_TRUE(torch::equal(combine_pair(ta, tb, Combine::absdiff), combine_pair(tb, ta, Combine::absdiff)));
  EXPECT_EQ(combine_pair(ta, tb, Combine::concat).size(1), 6);
}

TEST(EarlyStopping, StopsAfterPatienceNonImprovingEpochs) {
  EarlyStopping s{5, 0.001};
  EXPECT_TRUE(s.improved(0.5));
  int epochs = 1;
  while (!s.should_stop()) {
    EXPECT_FALSE(s.improved(0.5005));  // below min_delta
    ++epochs;
  }
  EXPECT_EQ(epochs, 6);
  EarlyStopping r{2, 0.0};
  r.improved(0.1);
  r.improved(0.1);
  EXPECT_TRUE(r.improved(0.2));
  EXPECT_FALSE(r.should_stop());
}

TEST(Head, ParameterCountAndSoftmax) {
  for (int64_t d : {8, 512, 1024, 8192}) {
    VerifierHead h(d, 256, 128);
    int64_t n = 0;
    for (const auto& p : h->parameters()) n += p.numel();
    EXPECT_EQ(n, head_parameter_count(d));
    EXPECT_EQ(n, d * 256 + 256 + 256 * 128 + 128 + 128 * 2 + 2);
  }
  torch::manual_seed(0);
  VerifierHead h(16, 8, 4);
  auto p = h->probabilities(torch::randn({10, 16}) * 5);
  EXPECT_TRUE(torch::allclose(p.sum(1), torch::ones({10})));
  EXPECT_TRUE((p >= 0).all().item<bool>());
}

TEST(SplitValidation, StratifiedByKnownWriter) {
  auto pairs = toy_pairs(1, 6, 5, 3);
  auto [train, val] = split_validation(pairs, 0.1, 7);
  EXPECT_EQ(train.pairs.size() + val.pairs.size(), pairs.pairs.size());
  std::set<WriterId> val_known;
  for (const auto& p : val.pairs) val_known.insert(p.known.writer_id);
  EXPECT_EQ(val_known.size(), 6u);
  auto [t2, v2] = split_validation(pairs, 0.1, 7);
  EXPECT_EQ(v2.pairs, val.pairs);
}

TEST(TrainVerifier, SeparableFeaturesReachHighF1) {
  auto train = toy_pairs(1, 8, 6, 1);
  auto test = toy_pairs(20, 4, 6, 2);
  FeatureTable f = clustered_features(train, 8, 0.05, 3);
  auto ft = clustered_features(test, 8, 0.05, 4);
  f.insert(ft.begin(), ft.end());
  auto cfg = small_config();
  cfg.combine = Combine::absdiff;
  auto m = train_verifier(train, f, cfg);
  EXPECT_LE(m.best_epoch, 20);
  std::vector<int> y, pred;
  auto fit = predict_proba(m, train, f).argmax(1);
  for (std::size_t i = 0; i < train.pairs.size(); ++i) {
    y.push_back(train.pairs[i].label);
    pred.push_back(static_cast<int>(fit[static_cast<int64_t>(i)].item<int64_t>()));
  }
  EXPECT_GE(classification_metrics(y, pred).f1, 0.99);
  EXPECT_GE(evaluate_verifier(m, test, f).f1, 0.9);
  EXPECT_EQ(m.train_writers.size(), 8u);
}

TEST(TrainVerifier, ConstantFeaturesGiveChanceAccuracy) {
  auto train = toy_pairs(1, 6, 6, 1);
  auto test = toy_pairs(20, 4, 6, 2);
  FeatureTable f;
  for (const auto* ps : {&train, &test})
    for (const auto& p : ps->pairs)
      for (const auto& k : {p.known, p.questioned}) f[k] = Embedding{std::vector<float>(4, 1.0f), "const", k};
  auto cfg = small_config();
  cfg.patience = 5;
  auto m = train_verifier(train, f, cfg);
  EXPECT_NEAR(evaluate_verifier(m, test, f).accuracy, 0.5, 1e-9);
  auto p = predict_proba(m, test, f);
  EXPECT_NEAR((std::get<0>(p.max(0)) - std::get<0>(p.min(0))).abs().max().item<double>(), 0.0, 1e-6);
}

TEST(TrainVerifier, RejectsSeenWritersAndRoundTrips) {
  auto train = toy_pairs(1, 6, 4, 1);
  auto test = toy_pairs(20, 3, 4, 2);
  FeatureTable f = clustered_features(train, 6, 0.1, 3);
  auto ft = clustered_features(test, 6, 0.1, 4);
  f.insert(ft.begin(), ft.end());
  auto cfg = small_config();
  cfg.standardize = true;
  cfg.max_epochs = 3;
  auto m = train_verifier(train, f, cfg);
  EXPECT_THROW(check_unseen(m, train), ProtocolViolation);
  EXPECT_THROW(evaluate_verifier(m, train, f), ProtocolViolation);
  EXPECT_NO_THROW(check_unseen(m, test));

  auto path = std::filesystem::temp_directory_path() / "hwssl_verifier_test.ckpt";
  save_verifier(m, path);
  auto back = load_verifier(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.train_writers, m.train_writers);
  EXPECT_EQ(back.history, m.history);
  EXPECT_EQ(nlohmann::json(back.config), nlohmann::json(m.config));
  EXPECT_TRUE(torch::equal(predict_proba(back, test, f), predict_proba(m, test, f)));
}

TEST(TrainVerifier, SupervisedSiameseRuns) {
  auto corpus = synthesize_corpus(3, 6, 4, 64);
  auto split = split_unseen_writers(corpus, 4, 1.0, 0);
  auto train = generate_pairs(corpus, split.train_writers, 1);
  auto test = generate_pairs(corpus, split.test_writers, 2);
  auto cfg = small_config();
  cfg.feature_source = "supervised:resnet18";
  cfg.resnet = {3, 4, 7};
  cfg.input = {32, 3};
  cfg.max_epochs = 2;
  cfg.batch_size = 8;
  auto m = train_verifier(train, corpus, cfg);
  EXPECT_EQ(m.embed_dim, 32);
  auto metrics = evaluate_verifier(m, test, corpus);
  EXPECT_EQ(metrics.total(), test.pairs.size());
  cfg.feature_source = "supervised:vit";
  cfg.vit = {32, 8, 3, 16, 1, 2, 2.0};
  auto v = train_verifier(train, corpus, cfg);
  EXPECT_EQ(v.embed_dim, 16);
}

TEST(Features, SourcesResolve) {
  auto corpus = synthesize_corpus(3, 2, 2, 64);
  std::vector<std::size_t> idx{0, 1, 2, 3};
  EXPECT_EQ(compute_features(corpus, idx, "gsc").begin()->second.dim(), kGscDim);
  EXPECT_EQ(compute_features(corpus, idx, "hog").begin()->second.dim(), kHogDim);
  EXPECT_EQ(compute_features(corpus, idx, "raw").size(), 4u);
  EXPECT_THROW(compute_features(corpus, idx, "sift"), Error);
  EXPECT_THROW(compute_features(corpus, idx, "checkpoint:/nonexistent/x.ckpt"), Error);
}
