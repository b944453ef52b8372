#pragma once

#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "hwssl/gssl/losses.hpp"
#include "hwssl/nn/resnet.hpp"
#include "hwssl/nn/vit.hpp"
#include "hwssl/tensor.hpp"

namespace hwssl::gssl {

// ---- VAE ------------------------------------------------------------------

struct VaeConfig {
  InputSpec input{64, 3};
  int width = 64;  // ResNet-18 width; encoder output is 8 * width
  int latent = 256;
  double beta = 1.0;
};

void to_json(nlohmann::json& j, const VaeConfig& c);
void from_json(const nlohmann::json& j, VaeConfig& c);

struct VaeImpl : torch::nn::Module {
  explicit VaeImpl(VaeConfig cfg = {});
  VaeOutput forward(const torch::Tensor& x);
  /// Posterior mean.
  torch::Tensor embed(const torch::Tensor& x);

  VaeConfig cfg;
  nn::ResNet18 encoder{nullptr};
  torch::nn::Linear fc_mu{nullptr}, fc_log_var{nullptr};
  nn::ResNetDecoder decoder{nullptr};
};
TORCH_MODULE(Vae);

// ---- AIM ------------------------------------------------------------------

struct AimConfig {
  nn::VitConfig vit;
};

void to_json(nlohmann::json& j, const AimConfig& c);
void from_json(const nlohmann::json& j, AimConfig& c);

/// Autoregressive image model. For a permutation `order` of the patches, step t
/// sees the patches order[0..t-1] (a start token at t = 0) plus a query
/// embedding of position order[t], and predicts patch order[t].
struct AimImpl : torch::nn::Module {
  explicit AimImpl(AimConfig cfg = {});
  /// Predictions for every patch, in raster order (N x L x P).
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& order);
  /// Mean of final-layer features under raster order.
  torch::Tensor embed(const torch::Tensor& x);
  torch::Tensor features(const torch::Tensor& x, const torch::Tensor& order);

  AimConfig cfg;
  torch::nn::Linear patch_embed{nullptr}, head{nullptr};
  torch::Tensor pos, query_pos, start;
  nn::Transformer body{nullptr};
};
TORCH_MODULE(Aim);

// ---- MAE ------------------------------------------------------------------

struct MaeConfig {
  nn::VitConfig vit;
  int decoder_dim = 512;
  int decoder_depth = 4;
  int decoder_heads = 16;
  double mask_ratio = 0.2;
};

void to_json(nlohmann::json& j, const MaeConfig& c);
void from_json(const nlohmann::json& j, MaeConfig& c);

struct MaeOutput {
  torch::Tensor reconstruction;  // N x L x P
  torch::Tensor mask;            // N x L, true = masked
};

struct MaeImpl : torch::nn::Module {
  explicit MaeImpl(MaeConfig cfg = {});
  /// Draws a fresh random mask with exactly masked_count(L, ratio) patches per image.
  MaeOutput forward(const torch::Tensor& x);
  MaeOutput forward(const torch::Tensor& x, const torch::Tensor& mask);
  /// Mean-pooled encoder features with no masking.
  torch::Tensor embed(const torch::Tensor& x);
  torch::Tensor random_mask(int64_t n) const;

  MaeConfig cfg;
  torch::nn::Linear patch_embed{nullptr}, decoder_embed{nullptr}, predict{nullptr};
  torch::Tensor pos, decoder_pos, mask_token;
  nn::Transformer encoder{nullptr}, decoder{nullptr};
};
TORCH_MODULE(Mae);

// ---- BiGAN ----------------------------------------------------------------

struct BiganConfig {
  InputSpec input{64, 3};
  int latent = 100;
  std::vector<int64_t> encoder_widths{1024, 512, 256, 128, 64};
  std::vector<int64_t> discriminator_widths{1024, 512, 256};
};

void to_json(nlohmann::json& j, const BiganConfig& c);
void from_json(const nlohmann::json& j, BiganConfig& c);

struct BiganImpl : torch::nn::Module {
  explicit BiganImpl(BiganConfig cfg = {});
  torch::Tensor encode(const torch::Tensor& x);
  torch::Tensor generate(const torch::Tensor& z);
  /// Probability that (x, z) is an encoder pair.
  torch::Tensor discriminate(const torch::Tensor& x, const torch::Tensor& z);
  torch::Tensor embed(const torch::Tensor& x) { return encode(x); }

  BiganConfig cfg;
  torch::nn::Sequential encoder{nullptr}, generator{nullptr}, discriminator{nullptr};
};
TORCH_MODULE(Bigan);

/// One alternating update: discriminator first, then encoder and generator jointly.
BiganLosses bigan_step(const torch::Tensor& x, Bigan& model, torch::optim::Optimizer& opt_d,
                       torch::optim::Optimizer& opt_ge);

}  // namespace hwssl::gssl
