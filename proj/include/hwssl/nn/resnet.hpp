#pragma once

#include <vector>

#include <json.hpp>
#include <torch/torch.h>

namespace hwssl::nn {

struct ResNetConfig {
  int in_channels = 3;
  int width = 64;        // first stage; the four stages use width, 2w, 4w, 8w channels
  int stem_kernel = 7;   // 7: 7x7 stride-2 conv + max pool; 3: 3x3 stride-1, no pool
  bool operator==(const ResNetConfig&) const = default;
};

void to_json(nlohmann::json& j, const ResNetConfig& c);
void from_json(const nlohmann::json& j, ResNetConfig& c);

struct BasicBlockImpl : torch::nn::Module {
  BasicBlockImpl(int64_t in, int64_t out, int64_t stride);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
  torch::nn::Sequential downsample{nullptr};
};
TORCH_MODULE(BasicBlock);

/// ResNet-18 trunk with global average pooling and no classifier: N x C x H x W -> N x 8w.
struct ResNet18Impl : torch::nn::Module {
  explicit ResNet18Impl(ResNetConfig cfg = {});
  torch::Tensor forward(torch::Tensor x);
  int64_t out_dim() const { return 8 * cfg.width; }

  ResNetConfig cfg;
  torch::nn::Conv2d stem{nullptr};
  torch::nn::BatchNorm2d stem_bn{nullptr};
  torch::nn::Sequential layer1{nullptr}, layer2{nullptr}, layer3{nullptr}, layer4{nullptr};
};
TORCH_MODULE(ResNet18);

/// Upsampling residual block used by the decoder.
struct DecoderBlockImpl : torch::nn::Module {
  DecoderBlockImpl(int64_t in, int64_t out, bool upsample);
  torch::Tensor forward(torch::Tensor x);

  bool upsample;
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, skip{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, skip_bn{nullptr};
};
TORCH_MODULE(DecoderBlock);

/// Mirror of the ResNet-18 trunk: latent -> 8w x 4 x 4 -> ... -> C x size x size in [0, 1].
struct ResNetDecoderImpl : torch::nn::Module {
  ResNetDecoderImpl(int64_t latent_dim, ResNetConfig cfg, int64_t image_size);
  torch::Tensor forward(torch::Tensor z);

  ResNetConfig cfg;
  int64_t image_size;
  torch::nn::Linear fc{nullptr};
  torch::nn::Sequential blocks{nullptr};
  torch::nn::Conv2d out{nullptr};
};
TORCH_MODULE(ResNetDecoder);

/// Linear layers of the given widths; hidden layers get batch norm and ReLU.
torch::nn::Sequential mlp(const std::vector<int64_t>& widths, bool last_bn = false);

int64_t count_parameters(const torch::nn::Module& m);

}  // namespace hwssl::nn
