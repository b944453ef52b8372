#include <gtest/gtest.h>

#include "hwssl/checkpoint.hpp"
#include "hwssl/nn/resnet.hpp"
#include "hwssl/nn/vit.hpp"
#include "hwssl/tensor.hpp"

using namespace hwssl;

TEST(ResNet, PaperBackboneParameterCount) {
  nn::ResNet18 net(nn::ResNetConfig{3, 64, 7});
  const double n = static_cast<double>(nn::count_parameters(*net));
  EXPECT_NEAR(n, 11.2e6, 0.02 * 11.2e6);
}

TEST(ResNet, OutputShapesAndStems) {
  torch::manual_seed(0);
  nn::ResNet18 big(nn::ResNetConfig{3, 8, 7});
  EXPECT_EQ(big->forward(torch::rand({2, 3, 64, 64})).sizes(), torch::IntArrayRef({2, 64}));
  nn::ResNet18 small(nn::ResNetConfig{1, 8, 3});
  EXPECT_EQ(small->forward(torch::rand({2, 1, 32, 32})).sizes(), torch::IntArrayRef({2, 64}));
  EXPECT_EQ(small->stem->options.kernel_size()->at(0), 3);
}

TEST(ResNet, DecoderProducesImageInUnitRange) {
  torch::manual_seed(0);
  nn::ResNetDecoder dec(16, nn::ResNetConfig{3, 8, 7}, 64);
  auto y = dec->forward(torch::randn({2, 16}));
  EXPECT_EQ(y.sizes(), torch::IntArrayRef({2, 3, 64, 64}));
  EXPECT_GE(y.min().item<float>(), 0.0f);
  EXPECT_LE(y.max().item<float>(), 1.0f);
}

TEST(Mlp, LayerShapes) {
  auto m = nn::mlp({512, 1024, 256});
  // Linear(no bias) + BN + ReLU + Linear(bias)
  EXPECT_EQ(nn::count_parameters(*m), 512 * 1024 + 2 * 1024 + 1024 * 256 + 256);
  auto with_bn = nn::mlp({8, 4}, true);
  EXPECT_EQ(nn::count_parameters(*with_bn), 8 * 4 + 2 * 4);
}

TEST(Vit, PatchifyRoundTripAndCount) {
  auto x = torch::rand({2, 3, 224, 224});
  auto p = nn::patchify(x, 32);
  EXPECT_EQ(p.sizes(), torch::IntArrayRef({2, 49, 32 * 32 * 3}));
  EXPECT_TRUE(torch::equal(nn::unpatchify(p, 32, 3), x));
  // first patch is the top-left 32x32 block, pixels row-major, channel fastest
  EXPECT_FLOAT_EQ(p[0][0][1 * 3 + 2].item<float>(), x[0][2][0][1].item<float>());
  EXPECT_FLOAT_EQ(p[1][8][(3 * 32 + 5) * 3].item<float>(), x[1][0][32 + 3][32 + 5].item<float>());
}

TEST(Vit, BlockParameterFormula) {
  const int64_t d = 64;
  nn::TransformerBlock block(d, 4, 4.0);
  const int64_t h = 4 * d;
  const int64_t oracle = (3 * d * d + 3 * d) + (d * d + d) + (d * h + h) + (h * d + d) + 4 * d;
  EXPECT_EQ(nn::count_parameters(*block), oracle);
  EXPECT_EQ(nn::transformer_block_parameters(d, 4.0), oracle);
}

TEST(Vit, CausalMaskBlocksFuture) {
  torch::manual_seed(0);
  nn::Transformer t(16, 2, 2, 2.0);
  t->eval();
  auto x = torch::randn({1, 5, 16});
  auto mask = nn::causal_mask(5);
  auto y1 = t->forward(x, mask);
  auto x2 = x.clone();
  x2[0][4] += 1.0;
  auto y2 = t->forward(x2, mask);
  EXPECT_TRUE(torch::allclose(y1.slice(1, 0, 4), y2.slice(1, 0, 4), 1e-5, 1e-6));
  EXPECT_FALSE(torch::allclose(y1[0][4], y2[0][4]));
}

TEST(Tensor, CanonicalInputIsInvertedAndConforms) {
  RawImage white;
  white.width = 30;
  white.height = 20;
  white.channels = 1;
  white.pixels.assign(600, 255);
  auto x = model_input(white, InputSpec{32, 3});
  EXPECT_EQ(x.sizes(), torch::IntArrayRef({3, 32, 32}));
  EXPECT_NEAR(x.abs().max().item<float>(), 0.0f, 1e-6);
  auto c = torch::rand({2, 1, 64, 64});
  EXPECT_EQ(conform(c, InputSpec{224, 3}).sizes(), torch::IntArrayRef({2, 3, 224, 224}));
  EXPECT_TRUE(torch::equal(conform(c, InputSpec{64, 1}), c));
}

TEST(Checkpoint, FileRoundTrip) {
  torch::manual_seed(1);
  nn::ResNet18 net(nn::ResNetConfig{1, 4, 3});
  EncoderCheckpoint c;
  c.method = "vicreg";
  c.weights = serialize_module(*net);
  c.embed_dim = 32;
  c.train_config = {{"model", {{"a", 1}}}};
  c.epoch = 2;
  c.metric_history = {{1, "loss", 2.5}, {2, "loss", 1.5}};
  auto path = std::filesystem::temp_directory_path() / "hwssl_ckpt_test.bin";
  save_checkpoint(c, path);
  auto r = load_checkpoint(path);
  EXPECT_EQ(r.method, c.method);
  EXPECT_EQ(r.weights, c.weights);
  EXPECT_EQ(r.train_config, c.train_config);
  EXPECT_EQ(r.metric_history, c.metric_history);
  EXPECT_EQ(r.metric("loss"), (std::vector<double>{2.5, 1.5}));

  torch::manual_seed(2);
  nn::ResNet18 other(nn::ResNetConfig{1, 4, 3});
  deserialize_module(*other, r.weights);
  net->eval();
  other->eval();
  auto x = torch::rand({2, 1, 16, 16});
  EXPECT_TRUE(torch::equal(net->forward(x), other->forward(x)));
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), Error);
}
