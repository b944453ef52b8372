#include "hwssl/nn/vit.hpp"

#include <cmath>
#include <limits>

namespace hwssl::nn {

void to_json(nlohmann::json& j, const VitConfig& c) {
  j = {{"image_size", c.image_size}, {"patch_size", c.patch_size}, {"in_channels", c.in_channels},
       {"dim", c.dim},               {"depth", c.depth},           {"heads", c.heads},
       {"mlp_ratio", c.mlp_ratio}};
}

void from_json(const nlohmann::json& j, VitConfig& c) {
  c.image_size = j.value("image_size", 224);
  c.patch_size = j.value("patch_size", 32);
  c.in_channels = j.value("in_channels", 3);
  c.dim = j.value("dim", 768);
  c.depth = j.value("depth", 12);
  c.heads = j.value("heads", 12);
  c.mlp_ratio = j.value("mlp_ratio", 4.0);
}

torch::Tensor patchify(const torch::Tensor& images, int64_t p) {
  TORCH_CHECK(images.dim() == 4, "patchify expects N x C x H x W");
  const auto n = images.size(0), c = images.size(1), h = images.size(2), w = images.size(3);
  TORCH_CHECK(h % p == 0 && w % p == 0, "image size must be a multiple of the patch size");
  return images.reshape({n, c, h / p, p, w / p, p})
      .permute({0, 2, 4, 3, 5, 1})
      .reshape({n, (h / p) * (w / p), p * p * c});
}

torch::Tensor unpatchify(const torch::Tensor& patches, int64_t p, int64_t c) {
  const auto n = patches.size(0), l = patches.size(1);
  const auto g = static_cast<int64_t>(std::lround(std::sqrt(static_cast<double>(l))));
  TORCH_CHECK(g * g == l, "unpatchify expects a square patch grid");
  return patches.reshape({n, g, g, p, p, c}).permute({0, 5, 1, 3, 2, 4}).reshape({n, c, g * p, g * p});
}

torch::Tensor causal_mask(int64_t length, torch::Dtype dtype) {
  return torch::full({length, length}, -std::numeric_limits<double>::infinity(), torch::TensorOptions().dtype(dtype))
      .triu(1);
}

AttentionImpl::AttentionImpl(int64_t dim, int64_t h) : heads(h) {
  TORCH_CHECK(dim % heads == 0, "dim must be divisible by heads");
  scale = 1.0 / std::sqrt(static_cast<double>(dim / heads));
  qkv = register_module("qkv", torch::nn::Linear(dim, 3 * dim));
  proj = register_module("proj", torch::nn::Linear(dim, dim));
}

torch::Tensor AttentionImpl::forward(torch::Tensor x, const torch::Tensor& mask) {
  const auto b = x.size(0), n = x.size(1), c = x.size(2);
  auto qkv_out = qkv(x).reshape({b, n, 3, heads, c / heads}).permute({2, 0, 3, 1, 4});
  auto q = qkv_out[0], k = qkv_out[1], v = qkv_out[2];
  auto attn = torch::matmul(q, k.transpose(-2, -1)) * scale;
  if (mask.defined()) attn = attn + mask.to(attn.dtype());
  attn = attn.softmax(-1);
  return proj(torch::matmul(attn, v).transpose(1, 2).reshape({b, n, c}));
}

TransformerBlockImpl::TransformerBlockImpl(int64_t dim, int64_t heads, double mlp_ratio) {
  const auto hidden = static_cast<int64_t>(dim * mlp_ratio);
  norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}).eps(1e-6)));
  attn = register_module("attn", Attention(dim, heads));
  norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}).eps(1e-6)));
  fc1 = register_module("fc1", torch::nn::Linear(dim, hidden));
  fc2 = register_module("fc2", torch::nn::Linear(hidden, dim));
}

torch::Tensor TransformerBlockImpl::forward(torch::Tensor x, const torch::Tensor& mask) {
  x = x + attn(norm1(x), mask);
  return x + fc2(torch::gelu(fc1(norm2(x))));
}

TransformerImpl::TransformerImpl(int64_t dim, int64_t depth, int64_t heads, double mlp_ratio) {
  blocks = register_module("blocks", torch::nn::ModuleList());
  for (int64_t i = 0; i < depth; ++i) blocks->push_back(TransformerBlock(dim, heads, mlp_ratio));
  norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}).eps(1e-6)));
  for (auto& m : modules(false))
    if (auto* lin = m->as<torch::nn::Linear>()) {
      torch::nn::init::xavier_uniform_(lin->weight);
      torch::nn::init::zeros_(lin->bias);
    }
}

torch::Tensor TransformerImpl::forward(torch::Tensor x, const torch::Tensor& mask) {
  for (const auto& block : *blocks) x = block->as<TransformerBlock>()->forward(x, mask);
  return norm(x);
}

int64_t transformer_block_parameters(int64_t d, double mlp_ratio) {
  const auto h = static_cast<int64_t>(d * mlp_ratio);
  return (3 * d * d + 3 * d) + (d * d + d) + (d * h + h) + (h * d + d) + 4 * d;
}

VitEncoderImpl::VitEncoderImpl(VitConfig c, bool causal_) : cfg(c), causal(causal_) {
  TORCH_CHECK(cfg.image_size % cfg.patch_size == 0, "image size must be a multiple of the patch size");
  embed = register_module("embed", torch::nn::Linear(cfg.patch_dim(), cfg.dim));
  pos = register_parameter("pos", torch::randn({1, cfg.num_patches(), cfg.dim}) * 0.02);
  body = register_module("body", Transformer(cfg.dim, cfg.depth, cfg.heads, cfg.mlp_ratio));
}

torch::Tensor VitEncoderImpl::tokens(const torch::Tensor& images) {
  auto x = embed(patchify(images, cfg.patch_size)) + pos;
  return body(x, causal ? causal_mask(x.size(1)) : torch::Tensor());
}

}  // namespace hwssl::nn
