#pragma once

#include <json.hpp>
#include <torch/torch.h>

namespace hwssl::nn {

struct VitConfig {
  int image_size = 224;
  int patch_size = 32;
  int in_channels = 3;
  int dim = 768;
  int depth = 12;
  int heads = 12;
  double mlp_ratio = 4.0;
  int num_patches() const { return (image_size / patch_size) * (image_size / patch_size); }
  int patch_dim() const { return patch_size * patch_size * in_channels; }
  bool operator==(const VitConfig&) const = default;
};

void to_json(nlohmann::json& j, const VitConfig& c);
void from_json(const nlohmann::json& j, VitConfig& c);

/// N x C x H x W -> N x L x (p*p*C), patches in raster order, pixels (row, col, channel).
torch::Tensor patchify(const torch::Tensor& images, int64_t patch);
torch::Tensor unpatchify(const torch::Tensor& patches, int64_t patch, int64_t channels);

/// Upper-triangular -inf mask for L tokens (token t attends to 0..t).
torch::Tensor causal_mask(int64_t length, torch::Dtype dtype = torch::kFloat32);

struct AttentionImpl : torch::nn::Module {
  AttentionImpl(int64_t dim, int64_t heads);
  torch::Tensor forward(torch::Tensor x, const torch::Tensor& mask = {});

  int64_t heads;
  double scale;
  torch::nn::Linear qkv{nullptr}, proj{nullptr};
};
TORCH_MODULE(Attention);

/// Pre-norm transformer block.
struct TransformerBlockImpl : torch::nn::Module {
  TransformerBlockImpl(int64_t dim, int64_t heads, double mlp_ratio);
  torch::Tensor forward(torch::Tensor x, const torch::Tensor& mask = {});

  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
  Attention attn{nullptr};
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(TransformerBlock);

/// Stack of blocks followed by a final layer norm.
struct TransformerImpl : torch::nn::Module {
  TransformerImpl(int64_t dim, int64_t depth, int64_t heads, double mlp_ratio);
  torch::Tensor forward(torch::Tensor x, const torch::Tensor& mask = {});

  torch::nn::ModuleList blocks{nullptr};
  torch::nn::LayerNorm norm{nullptr};
};
TORCH_MODULE(Transformer);

/// Parameters of one block: attention (4d^2 + 4d), MLP (2*r*d^2 + r*d + d), two layer norms (4d).
int64_t transformer_block_parameters(int64_t dim, double mlp_ratio);

/// Patch-embedding ViT encoder with learned positions and optional causal
/// attention; returns the mean over output tokens.
struct VitEncoderImpl : torch::nn::Module {
  VitEncoderImpl(VitConfig cfg, bool causal);
  torch::Tensor tokens(const torch::Tensor& images);
  torch::Tensor forward(const torch::Tensor& images) { return tokens(images).mean(1); }

  VitConfig cfg;
  bool causal;
  torch::nn::Linear embed{nullptr};
  torch::Tensor pos;
  Transformer body{nullptr};
};
TORCH_MODULE(VitEncoder);

}  // namespace hwssl::nn
