#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "hwssl/corpus.hpp"
#include "hwssl/evalkit.hpp"
#include "hwssl/handcrafted.hpp"

namespace fs = std::filesystem;
using namespace hwssl;

namespace {

RawImage tiny_image(std::uint8_t v = 128) { return RawImage{2, 2, 1, std::vector<std::uint8_t>(4, v)}; }

Corpus tiny_corpus(const std::map<WriterId, int>& counts) {
  std::vector<HandwritingSample> samples;
  for (const auto& [w, n] : counts)
    for (int s = 0; s < n; ++s) samples.push_back({w, static_cast<std::uint32_t>(s), tiny_image(), {}});
  return Corpus("tiny", std::move(samples));
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("hwssl_corpus_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(LoadCorpus, TwoWritersThreeFilesEach) {
  TempDir dir;
  for (WriterId w : {2u, 1u})
    for (int s = 0; s < 3; ++s) write_image(dir.path / (std::to_string(w) + "_" + std::to_string(s) + ".png"), tiny_image(static_cast<std::uint8_t>(40 * s)));
  const Corpus c = load_corpus(dir.path);
  EXPECT_EQ(c.size(), 6u);
  EXPECT_EQ(c.writers(), (std::set<WriterId>{1, 2}));
  for (std::size_t i = 1; i < c.size(); ++i) EXPECT_LT(c[i - 1].key(), c[i].key());
  EXPECT_EQ(c[1].image.pixels[0], 40);
}

TEST(LoadCorpus, EmptyDirectoryIsAnError) {
  TempDir dir;
  try {
    load_corpus(dir.path);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("no samples found"), std::string::npos);
  }
}

TEST(LoadCorpus, MissingDirectoryIsAnError) { EXPECT_THROW(load_corpus("/nonexistent/hwssl/corpus"), Error); }

TEST(LoadCorpus, UndecodableImageNamesThePath) {
  TempDir dir;
  std::ofstream(dir.path / "1_0.png") << "not an image";
  try {
    load_corpus(dir.path);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("1_0.png"), std::string::npos);
  }
}

TEST(LoadCorpus, ManifestOverridesFileNames) {
  TempDir dir;
  write_image(dir.path / "alpha.png", tiny_image());
  write_image(dir.path / "beta.png", tiny_image());
  std::ofstream(dir.path / "m.csv") << "filename,writer_id,sample_index\nalpha.png,7,0\nbeta.png,3,4\n";
  const Corpus c = load_corpus(dir.path, dir.path / "m.csv");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].key(), (SampleKey{3, 4}));
  EXPECT_EQ(c[1].key(), (SampleKey{7, 0}));
}

TEST(LoadCorpus, DuplicateKeysAreRejected) {
  TempDir dir;
  write_image(dir.path / "a.png", tiny_image());
  write_image(dir.path / "b.png", tiny_image());
  std::ofstream(dir.path / "m.csv") << "filename,writer_id,sample_index\na.png,1,0\nb.png,1,0\n";
  EXPECT_THROW(load_corpus(dir.path, dir.path / "m.csv"), Error);
}

TEST(SplitUnseenWriters, FullFractionIsAnExhaustivePartition) {
  std::map<WriterId, int> counts;
  for (WriterId w = 1; w <= 10; ++w) counts[w] = 2;
  const auto split = split_unseen_writers(tiny_corpus(counts), 5, 1.0);
  EXPECT_EQ(split.train_writers, (std::set<WriterId>{1, 2, 3, 4, 5}));
  EXPECT_EQ(split.test_writers, (std::set<WriterId>{6, 7, 8, 9, 10}));
}

TEST(SplitUnseenWriters, TenPercentOfTwelveHundredIsSeededAndExact) {
  std::map<WriterId, int> counts;
  for (WriterId w = 1; w <= 1300; ++w) counts[w] = 1;
  const Corpus c = tiny_corpus(counts);
  const auto a = split_unseen_writers(c, 1200, 0.1, 11);
  const auto b = split_unseen_writers(c, 1200, 0.1, 11);
  const auto other = split_unseen_writers(c, 1200, 0.1, 12);
  EXPECT_EQ(a.train_writers.size(), 120u);
  EXPECT_EQ(a.train_writers, b.train_writers);
  EXPECT_NE(a.train_writers, other.train_writers);
  EXPECT_EQ(a.test_writers.size(), 100u);
  for (WriterId w : a.train_writers) {
    EXPECT_LE(w, 1200u);
    EXPECT_FALSE(a.test_writers.contains(w));
  }
}

TEST(SplitUnseenWriters, RejectsBadArguments) {
  const Corpus c = tiny_corpus({{1, 2}, {2, 2}, {3, 2}});
  EXPECT_THROW(split_unseen_writers(c, 3, 1.0), Error);   // no test writers
  EXPECT_THROW(split_unseen_writers(c, 0, 1.0), Error);   // no train writers
  EXPECT_THROW(split_unseen_writers(c, 2, 0.0), Error);
  EXPECT_THROW(split_unseen_writers(c, 2, 1.5), Error);
}

TEST(GeneratePairs, TwoWritersTwoSamplesEach) {
  const Corpus c = tiny_corpus({{1, 2}, {2, 2}});
  const PairSet ps = generate_pairs(c, {1, 2}, 3);
  // Brute force: C(2,2) per writer = 2 same pairs; 2x2 = 4 cross pairs of which 2 are drawn.
  ASSERT_EQ(ps.pairs.size(), 4u);
  EXPECT_EQ(ps.positives(), 2u);
  EXPECT_EQ(ps.negatives(), 2u);
}

TEST(GeneratePairs, SingleWriterIsAnError) {
  const Corpus c = tiny_corpus({{1, 5}});
  EXPECT_THROW(generate_pairs(c, {1}, 0), Error);
}

TEST(GeneratePairs, InsufficientCrossPairsIsAnError) {
  // 10 samples of writer 1 give 45 same pairs; one sample of writer 2 gives only 10 cross pairs.
  const Corpus c = tiny_corpus({{1, 10}, {2, 1}});
  EXPECT_THROW(generate_pairs(c, {1, 2}, 0), Error);
}

TEST(GeneratePairs, PropertiesOnRandomCorpora) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    std::map<WriterId, int> counts;
    const int writers = std::uniform_int_distribution<int>(3, 7)(rng);
    for (int w = 1; w <= writers; ++w) counts[static_cast<WriterId>(w * 3)] = std::uniform_int_distribution<int>(2, 5)(rng);
    const Corpus c = tiny_corpus(counts);
    std::set<WriterId> chosen;
    for (const auto& [w, n] : counts)
      if (chosen.size() < counts.size() - 1) chosen.insert(w);
    const std::uint64_t seed = rng();

    std::size_t expected_same = 0, cross = 0;
    for (WriterId w : chosen)
      for (int i = 0; i < counts[w]; ++i) {
        for (int j = i + 1; j < counts[w]; ++j) ++expected_same;
        for (WriterId v : chosen)
          if (v > w) cross += counts[v];
      }
    if (cross < expected_same) {
      EXPECT_THROW(generate_pairs(c, chosen, seed), Error);
      continue;
    }
    const PairSet ps = generate_pairs(c, chosen, seed);
    EXPECT_EQ(ps.positives(), expected_same);
    EXPECT_EQ(ps.positives(), ps.negatives());

    std::set<std::pair<SampleKey, SampleKey>> seen;
    for (const Pair& p : ps.pairs) {
      EXPECT_NE(p.known, p.questioned);
      EXPECT_TRUE(chosen.contains(p.known.writer_id));
      EXPECT_TRUE(chosen.contains(p.questioned.writer_id));
      EXPECT_EQ(p.label, p.known.writer_id == p.questioned.writer_id ? 1 : 0);
      auto key = std::minmax(p.known, p.questioned);
      EXPECT_TRUE(seen.insert({key.first, key.second}).second);
    }
    EXPECT_EQ(generate_pairs(c, chosen, seed).pairs, ps.pairs);
  }
}

TEST(GeneratePairs, PairsBuiltFromOneSideStayOnThatSide) {
  std::map<WriterId, int> counts;
  for (WriterId w = 1; w <= 20; ++w) counts[w] = 3;
  const Corpus c = tiny_corpus(counts);
  const auto split = split_unseen_writers(c, 12, 0.5, 9);
  const auto train = generate_pairs(c, split.train_writers, 1);
  const auto test = generate_pairs(c, split.test_writers, 1);
  for (WriterId w : train.referenced_writers()) EXPECT_TRUE(split.train_writers.contains(w));
  for (WriterId w : test.referenced_writers()) EXPECT_TRUE(split.test_writers.contains(w));
}

TEST(PairSetIo, BinaryRoundTripAndCsvHeader) {
  TempDir dir;
  const Corpus c = tiny_corpus({{1, 3}, {2, 3}, {4, 2}});
  const PairSet ps = generate_pairs(c, {1, 2, 4}, 5);
  write_pairs_binary(ps, dir.path / "p.bin");
  const PairSet back = read_pairs_binary(dir.path / "p.bin");
  EXPECT_EQ(back.pairs, ps.pairs);
  EXPECT_EQ(back.writers, ps.writers);

  write_pairs_csv(ps, c, dir.path / "p.csv");
  std::ifstream in(dir.path / "p.csv");
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(header, "known_path,questioned_path,label");
  EXPECT_EQ(std::count(first.begin(), first.end(), ','), 2);
}

TEST(SynthesizeCorpus, CountsAndDeterminism) {
  const Corpus a = synthesize_corpus(7, 50, 10, 64);
  EXPECT_EQ(a.size(), 500u);
  EXPECT_EQ(a.writers().size(), 50u);
  const Corpus b = synthesize_corpus(7, 50, 10, 64);
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i].image.pixels, b[i].image.pixels);
  const Corpus other = synthesize_corpus(8, 50, 10, 64);
  EXPECT_NE(a[0].image.pixels, other[0].image.pixels);
}

TEST(SynthesizeCorpus, SameWriterImagesAreCloserThanDifferentWriterImages) {
  const Corpus c = synthesize_corpus(7, 50, 10, 64);
  std::vector<Embedding> raw;
  for (const auto& s : c.samples()) {
    Embedding e = raw_pixel_features(invert(resize_pad(s.image, 64)));
    e.sample = s.key();
    raw.push_back(std::move(e));
  }
  const SeparationReport r = separation_report(raw, 7, {.compute_2d = false});
  EXPECT_GT(r.intra_nd, r.inter_nd);
}

TEST(SynthesizeCorpus, RejectsDegenerateCounts) {
  EXPECT_THROW(synthesize_corpus(1, 1, 10, 64), Error);
  EXPECT_THROW(synthesize_corpus(1, 5, 1, 64), Error);
  EXPECT_THROW(synthesize_corpus(1, 5, 5, 0), Error);
}
