#include <random>

#include <gtest/gtest.h>

#include "hwssl/augment.hpp"
#include "hwssl/common.hpp"
#include "hwssl/corpus.hpp"

using namespace hwssl;

namespace {

ProcessedImage glyph(int size = 64) {
  const SyntheticRender r = render_synthetic(sample_writer_style(1, 2), 3, size);
  ProcessedImage im = invert(to_processed(r.image));
  return im;
}

AugmentationPolicy identity_policy(int size) {
  AugmentationPolicy p = build_policy("simclr", {{"output_size", std::to_string(size)}});
  for (auto& op : p.ops) op.probability = 0.0;
  return p;
}

}  // namespace

TEST(BuildPolicy, SimclrDefaults) {
  const AugmentationPolicy p = build_policy("simclr");
  EXPECT_EQ(p.output_size, 224);
  ASSERT_NE(p.find(AugOpId::crop_resize), nullptr);
  ASSERT_NE(p.find(AugOpId::jitter), nullptr);
  ASSERT_NE(p.find(AugOpId::blur), nullptr);
  ASSERT_NE(p.find(AugOpId::hflip), nullptr);
  EXPECT_EQ(p.find(AugOpId::rotate), nullptr);
  EXPECT_EQ(p.find(AugOpId::crop_resize)->lo, kMinCropArea);
}

TEST(BuildPolicy, EveryMethodUsesTheContrastiveCropSize) {
  for (const char* m : {"moco", "simclr", "byol", "simsiam", "fastsiam", "dino", "barlowtwins", "vicreg"})
    EXPECT_EQ(build_policy(m).output_size, 224) << m;
  EXPECT_EQ(build_policy("dino").local_crops, 4);
}

TEST(BuildPolicy, RotationBeyondBoundIsRejected) {
  EXPECT_THROW(build_policy("simclr", {{"rotate.max", "90"}}), Error);
  const AugmentationPolicy ok = build_policy("simclr", {{"rotate.p", "1"}, {"rotate.max", "15"}});
  EXPECT_EQ(ok.find(AugOpId::rotate)->lo, -15.0);
}

TEST(BuildPolicy, OtherInvalidOverrides) {
  EXPECT_THROW(build_policy("simclr", {{"crop_resize.min", "0.2"}}), Error);
  EXPECT_THROW(build_policy("simclr", {{"hflip.p", "1.5"}}), Error);
  EXPECT_THROW(build_policy("simclr", {{"output_size", "100"}}), Error);
  EXPECT_THROW(build_policy("simclr", {{"sharpen.p", "0.5"}}), Error);
  EXPECT_THROW(build_policy("simclr", {{"hflip.p", "often"}}), Error);
  EXPECT_THROW(build_policy("supervised"), Error);
}

TEST(BuildPolicy, JsonRoundTrip) {
  const AugmentationPolicy p = build_policy("fastsiam", {{"output_size", "64"}, {"perspective.p", "0.3"}, {"perspective.max", "0.2"}});
  nlohmann::json j = p;
  const AugmentationPolicy back = j.get<AugmentationPolicy>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(back.ops.size(), p.ops.size());
  j["ops"][0]["p"] = 2.0;
  EXPECT_THROW(j.get<AugmentationPolicy>(), Error);
}

TEST(MakeViews, IdentityPolicyGivesCopiesOfTheResizedInput) {
  const ProcessedImage im = glyph(64);
  std::mt19937_64 rng(5);
  const auto views = make_views(im, identity_policy(64), rng, 3);
  ASSERT_EQ(views.size(), 3u);
  for (const auto& v : views) {
    EXPECT_EQ(v.pixels, im.pixels);
    EXPECT_EQ(v.provenance, Provenance::augmented);
  }
  std::mt19937_64 rng2(5);
  const auto big = make_views(im, identity_policy(224), rng2, 2);
  EXPECT_EQ(big[0].height, 224);
  EXPECT_EQ(big[0].pixels, big[1].pixels);
}

TEST(MakeViews, FixedSeedIsDeterministic) {
  const ProcessedImage im = glyph();
  const AugmentationPolicy p = build_policy("vicreg", {{"output_size", "64"}});
  std::mt19937_64 a(42), b(42), c(43);
  const auto va = make_views(im, p, a, 2);
  const auto vb = make_views(im, p, b, 2);
  const auto vc = make_views(im, p, c, 2);
  EXPECT_EQ(va[0].pixels, vb[0].pixels);
  EXPECT_EQ(va[1].pixels, vb[1].pixels);
  EXPECT_NE(va[0].pixels, vc[0].pixels);
}

TEST(MakeViews, CertainHflipMatchesMirrorOracle) {
  const ProcessedImage im = glyph();
  AugmentationPolicy p = identity_policy(64);
  for (auto& op : p.ops)
    if (op.id == AugOpId::hflip) op.probability = 1.0;
  std::mt19937_64 rng(1);
  const ViewBatch vb = make_views_traced(im, p, rng, 2);
  for (int v = 0; v < 2; ++v) {
    EXPECT_TRUE(vb.traces[v].flipped_h);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) ASSERT_EQ(vb.views[v].at(0, y, x), im.at(0, y, 63 - x));
  }
}

TEST(MakeViews, InvariantsHoldAcrossSeeds) {
  const ProcessedImage im = glyph();
  for (const char* method : {"simclr", "simsiam", "dino"}) {
    const AugmentationPolicy p = build_policy(method, {{"output_size", "64"}, {"local_size", "32"}});
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      std::mt19937_64 rng(seed);
      const ViewBatch vb = make_views_traced(im, p, rng, 2);
      ASSERT_EQ(vb.views.size(), 2u + p.local_crops);
      for (std::size_t v = 0; v < vb.views.size(); ++v) {
        const int expected = v < 2 ? 64 : 32;
        EXPECT_EQ(vb.views[v].height, expected);
        EXPECT_GE(vb.traces[v].crop_area, kMinCropArea - 0.02);
        EXPECT_FALSE(vb.traces[v].inverted);
        for (float x : vb.views[v].pixels) ASSERT_TRUE(x >= 0.0f && x <= 1.0f);
      }
    }
  }
}

TEST(MakeViews, RotationOnlyKeepsInkMassRoughly) {
  // A bounded rotation of a centred glyph moves but does not destroy ink.
  const ProcessedImage im = glyph();
  AugmentationPolicy p = identity_policy(64);
  p.ops.push_back({AugOpId::rotate, 1.0, -15.0, 15.0});
  validate(p);
  double before = 0;
  for (float v : im.pixels) before += v;
  std::mt19937_64 rng(8);
  for (const auto& v : make_views(im, p, rng, 4)) {
    double after = 0;
    for (float x : v.pixels) after += x;
    EXPECT_NEAR(after, before, 0.1 * before);
  }
}

TEST(MakeViews, RejectsSingleView) {
  std::mt19937_64 rng(0);
  EXPECT_THROW(make_views(glyph(), build_policy("simclr"), rng, 1), Error);
}
