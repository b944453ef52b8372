#include "hwssl/nn/resnet.hpp"

#include <cmath>

namespace hwssl::nn {

namespace {

torch::nn::Conv2d conv(int64_t in, int64_t out, int64_t k, int64_t stride = 1, bool bias = false) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2).bias(bias));
}

torch::nn::Sequential stage(int64_t in, int64_t out, int64_t stride) {
  return torch::nn::Sequential(BasicBlock(in, out, stride), BasicBlock(out, out, 1));
}

}  // namespace

void to_json(nlohmann::json& j, const ResNetConfig& c) {
  j = {{"in_channels", c.in_channels}, {"width", c.width}, {"stem_kernel", c.stem_kernel}};
}

void from_json(const nlohmann::json& j, ResNetConfig& c) {
  c.in_channels = j.value("in_channels", 3);
  c.width = j.value("width", 64);
  c.stem_kernel = j.value("stem_kernel", 7);
}

BasicBlockImpl::BasicBlockImpl(int64_t in, int64_t out, int64_t stride) {
  conv1 = register_module("conv1", conv(in, out, 3, stride));
  bn1 = register_module("bn1", torch::nn::BatchNorm2d(out));
  conv2 = register_module("conv2", conv(out, out, 3));
  bn2 = register_module("bn2", torch::nn::BatchNorm2d(out));
  if (stride != 1 || in != out)
    downsample = register_module("downsample", torch::nn::Sequential(conv(in, out, 1, stride), torch::nn::BatchNorm2d(out)));
}

torch::Tensor BasicBlockImpl::forward(torch::Tensor x) {
  auto identity = downsample ? downsample->forward(x) : x;
  auto y = torch::relu(bn1(conv1(x)));
  y = bn2(conv2(y));
  return torch::relu(y + identity);
}

ResNet18Impl::ResNet18Impl(ResNetConfig c) : cfg(c) {
  TORCH_CHECK(cfg.stem_kernel == 7 || cfg.stem_kernel == 3, "stem_kernel must be 7 or 3");
  const int64_t w = cfg.width;
  stem = register_module("stem", conv(cfg.in_channels, w, cfg.stem_kernel, cfg.stem_kernel == 7 ? 2 : 1));
  stem_bn = register_module("stem_bn", torch::nn::BatchNorm2d(w));
  layer1 = register_module("layer1", stage(w, w, 1));
  layer2 = register_module("layer2", stage(w, 2 * w, 2));
  layer3 = register_module("layer3", stage(2 * w, 4 * w, 2));
  layer4 = register_module("layer4", stage(4 * w, 8 * w, 2));
  for (auto& m : modules(false))
    if (auto* c2 = m->as<torch::nn::Conv2d>())
      torch::nn::init::kaiming_normal_(c2->weight, 0.0, torch::kFanOut, torch::kReLU);
}

torch::Tensor ResNet18Impl::forward(torch::Tensor x) {
  x = torch::relu(stem_bn(stem(x)));
  if (cfg.stem_kernel == 7) x = torch::max_pool2d(x, 3, 2, 1);
  x = layer4->forward(layer3->forward(layer2->forward(layer1->forward(x))));
  return torch::adaptive_avg_pool2d(x, {1, 1}).flatten(1);
}

DecoderBlockImpl::DecoderBlockImpl(int64_t in, int64_t out, bool up) : upsample(up) {
  conv1 = register_module("conv1", conv(in, out, 3));
  bn1 = register_module("bn1", torch::nn::BatchNorm2d(out));
  conv2 = register_module("conv2", conv(out, out, 3));
  bn2 = register_module("bn2", torch::nn::BatchNorm2d(out));
  if (up || in != out) {
    skip = register_module("skip", conv(in, out, 1));
    skip_bn = register_module("skip_bn", torch::nn::BatchNorm2d(out));
  }
}

torch::Tensor DecoderBlockImpl::forward(torch::Tensor x) {
  if (upsample)
    x = torch::nn::functional::interpolate(
        x, torch::nn::functional::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
  auto identity = skip ? skip_bn(skip(x)) : x;
  auto y = torch::relu(bn1(conv1(x)));
  y = bn2(conv2(y));
  return torch::relu(y + identity);
}

ResNetDecoderImpl::ResNetDecoderImpl(int64_t latent_dim, ResNetConfig c, int64_t size) : cfg(c), image_size(size) {
  TORCH_CHECK(image_size >= 8, "decoder image size too small");
  const int64_t w = cfg.width;
  fc = register_module("fc", torch::nn::Linear(latent_dim, 8 * w * 4 * 4));
  const int steps = static_cast<int>(std::ceil(std::log2(static_cast<double>(image_size) / 4.0) - 1e-9));
  std::vector<int64_t> widths{8 * w, 4 * w, 2 * w, w};
  blocks = torch::nn::Sequential();
  int64_t ch = 8 * w;
  for (int i = 0; i < steps; ++i) {
    const int64_t next = i + 1 < static_cast<int>(widths.size()) ? widths[i + 1] : w;
    blocks->push_back(DecoderBlock(ch, next, true));
    ch = next;
  }
  register_module("blocks", blocks);
  out = register_module("out", conv(ch, cfg.in_channels, 3, 1, true));
}

torch::Tensor ResNetDecoderImpl::forward(torch::Tensor z) {
  auto x = fc(z).view({z.size(0), 8 * cfg.width, 4, 4});
  x = blocks->forward(x);
  if (x.size(2) != image_size)
    x = torch::nn::functional::interpolate(
        x, torch::nn::functional::InterpolateFuncOptions()
               .size(std::vector<int64_t>{image_size, image_size})
               .mode(torch::kBilinear)
               .align_corners(false));
  return torch::sigmoid(out(x));
}

torch::nn::Sequential mlp(const std::vector<int64_t>& widths, bool last_bn) {
  TORCH_CHECK(widths.size() >= 2, "mlp needs at least input and output widths");
  torch::nn::Sequential seq;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = i + 2 == widths.size();
    seq->push_back(torch::nn::Linear(torch::nn::LinearOptions(widths[i], widths[i + 1]).bias(last && !last_bn)));
    if (!last || last_bn) seq->push_back(torch::nn::BatchNorm1d(widths[i + 1]));
    if (!last) seq->push_back(torch::nn::ReLU());
  }
  return seq;
}

int64_t count_parameters(const torch::nn::Module& m) {
  int64_t n = 0;
  for (const auto& p : m.parameters()) n += p.numel();
  return n;
}

}  // namespace hwssl::nn
