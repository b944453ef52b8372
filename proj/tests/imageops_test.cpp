#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "hwssl/common.hpp"
#include "hwssl/corpus.hpp"
#include "hwssl/imageops.hpp"

using namespace hwssl;

namespace {

RawImage constant_raw(int h, int w, int c, std::uint8_t v) {
  return RawImage{h, w, c, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w * c, v)};
}

// Otsu by direct within-class variance minimisation over all cut points.
double otsu_oracle(const std::vector<int>& levels) {
  double best = std::numeric_limits<double>::infinity();
  int best_t = -1;
  for (int t = 0; t < 255; ++t) {
    double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
    for (int v : levels) (v <= t ? (n0 += 1, s0 += v) : (n1 += 1, s1 += v));
    if (n0 == 0 || n1 == 0) continue;
    const double m0 = s0 / n0, m1 = s1 / n1;
    double var = 0;
    for (int v : levels) var += v <= t ? (v - m0) * (v - m0) : (v - m1) * (v - m1);
    if (var < best - 1e-9) {
      best = var;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace

TEST(ResizePad, TallImageIsCentredWithSixteenColumnsEachSide) {
  const ProcessedImage out = resize_pad(constant_raw(128, 64, 1, 0), 64);
  ASSERT_EQ(out.height, 64);
  ASSERT_EQ(out.width, 64);
  EXPECT_EQ(out.provenance, Provenance::resized64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const bool content = x >= 16 && x < 48;
      ASSERT_FLOAT_EQ(out.at(0, y, x), content ? 0.0f : 1.0f) << y << "," << x;
    }
}

TEST(ResizePad, SquareInputAtTargetSizeIsUnchanged) {
  RawImage img = constant_raw(64, 64, 1, 0);
  std::mt19937 rng(3);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() % 256);
  const ProcessedImage out = resize_pad(img, 64);
  EXPECT_EQ(to_raw(out).pixels, img.pixels);
}

TEST(ResizePad, ContrastiveTargetAndChannels) {
  const ProcessedImage out = resize_pad(constant_raw(40, 100, 3, 200), 224);
  EXPECT_EQ(out.height, 224);
  EXPECT_EQ(out.width, 224);
  EXPECT_EQ(out.channels, 3);
  EXPECT_EQ(out.provenance, Provenance::resized224);
  // 40x100 scales to 90x224: 67 rows of padding on top.
  EXPECT_FLOAT_EQ(out.at(1, 66, 100), 1.0f);
  EXPECT_NEAR(out.at(1, 67, 100), 200 / 255.0f, 1e-5);
  EXPECT_NEAR(out.at(1, 156, 100), 200 / 255.0f, 1e-5);
  EXPECT_FLOAT_EQ(out.at(1, 157, 100), 1.0f);
}

TEST(ResizePad, RejectsOtherTargetsAndEmptyInput) {
  EXPECT_THROW(resize_pad(constant_raw(10, 10, 1, 0), 100), Error);
  EXPECT_THROW(resize_pad(RawImage{}, 64), Error);
}

TEST(ResizePad, UpscalesProcessedImagesWithBlackPadding) {
  ProcessedImage small(1, 32, 64, 0.5f, Provenance::inverted);
  const ProcessedImage big = resize_pad(small, 224);
  EXPECT_EQ(big.height, 224);
  EXPECT_FLOAT_EQ(big.at(0, 0, 0), 0.0f);
  EXPECT_NEAR(big.at(0, 112, 112), 0.5f, 1e-6);
}

TEST(Invert, WhitePageBecomesZeroAndInvolution) {
  ProcessedImage white(1, 64, 64, 1.0f);
  const ProcessedImage inv = invert(white);
  for (float v : inv.pixels) ASSERT_EQ(v, 0.0f);
  EXPECT_EQ(inv.provenance, Provenance::inverted);

  ProcessedImage r(3, 8, 8);
  std::mt19937 rng(1);
  std::uniform_real_distribution<float> u(0, 1);
  for (auto& v : r.pixels) v = u(rng);
  const ProcessedImage back = invert(invert(r));
  for (std::size_t i = 0; i < r.pixels.size(); ++i) EXPECT_NEAR(back.pixels[i], r.pixels[i], 1e-6);
}

TEST(Grayscale, LuminanceWeights) {
  ProcessedImage rgb(3, 1, 1);
  rgb.at(0, 0, 0) = 1.0f;
  rgb.at(1, 0, 0) = 0.5f;
  rgb.at(2, 0, 0) = 0.25f;
  EXPECT_NEAR(grayscale(rgb).pixels[0], 0.299 + 0.587 * 0.5 + 0.114 * 0.25, 1e-6);
  EXPECT_EQ(grayscale(rgb).channels, 1);
}

TEST(Otsu, MatchesVarianceMinimisationOracle) {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    std::normal_distribution<double> dark(40 + trial, 15), light(200 - trial, 20);
    std::vector<int> levels;
    std::vector<float> values;
    for (int i = 0; i < 500; ++i) {
      const int v = std::clamp(static_cast<int>(std::lround(i % 4 == 0 ? dark(rng) : light(rng))), 0, 255);
      levels.push_back(v);
      values.push_back(v / 255.0f);
    }
    const double expected = otsu_oracle(levels);
    EXPECT_NEAR(otsu_threshold(values) * 255.0, expected, 1e-6) << "trial " << trial;
  }
}

TEST(Binarize, ConstantImageGivesZerosAndWarning) {
  const ProcessedImage out = binarize(ProcessedImage(1, 64, 64, 0.7f));
  EXPECT_TRUE(out.warning);
  for (float v : out.pixels) ASSERT_EQ(v, 0.0f);
}

TEST(Binarize, ForegroundMatchesGroundTruthStrokeMask) {
  for (WriterId w = 1; w <= 10; ++w) {
    const WriterStyle style = sample_writer_style(5, w);
    const SyntheticRender r = render_synthetic(style, 1000 + w, 224);
    const ProcessedImage bin = binarize(to_processed(r.image));
    EXPECT_EQ(bin.provenance, Provenance::binarized);
    EXPECT_FALSE(bin.warning);
    double fg = 0, truth = 0;
    for (float v : bin.pixels) fg += v;
    for (auto m : r.ink_mask) truth += m;
    ASSERT_GT(truth, 0);
    EXPECT_NEAR(fg, truth, 0.05 * truth) << "writer " << w;
  }
}

TEST(Binarize, PolarityFollowsProvenance) {
  const SyntheticRender r = render_synthetic(sample_writer_style(5, 3), 77, 64);
  const ProcessedImage page = to_processed(r.image);
  const ProcessedImage a = binarize(page);
  const ProcessedImage b = binarize(invert(page));
  std::size_t differ = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) differ += a.pixels[i] != b.pixels[i];
  // Quantisation can move a handful of pixels across the threshold.
  EXPECT_LT(differ, a.pixels.size() / 100);
}

TEST(Binarize, Deterministic) {
  const SyntheticRender r = render_synthetic(sample_writer_style(9, 1), 4, 64);
  EXPECT_EQ(binarize(to_processed(r.image)).pixels, binarize(to_processed(r.image)).pixels);
}
