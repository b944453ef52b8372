#include "hwssl/gssl/models.hpp"

#include "hwssl/common.hpp"

namespace hwssl::gssl {

// ---- VAE ------------------------------------------------------------------

void to_json(nlohmann::json& j, const VaeConfig& c) {
  j = {{"input", c.input}, {"width", c.width}, {"latent", c.latent}, {"beta", c.beta}};
}

void from_json(const nlohmann::json& j, VaeConfig& c) {
  c = VaeConfig{};
  if (j.contains("input")) c.input = j.at("input").get<InputSpec>();
  c.width = j.value("width", c.width);
  c.latent = j.value("latent", c.latent);
  c.beta = j.value("beta", c.beta);
}

VaeImpl::VaeImpl(VaeConfig c) : cfg(c) {
  const nn::ResNetConfig rc{cfg.input.channels, cfg.width, 7};
  encoder = register_module("encoder", nn::ResNet18(rc));
  fc_mu = register_module("fc_mu", torch::nn::Linear(encoder->out_dim(), cfg.latent));
  fc_log_var = register_module("fc_log_var", torch::nn::Linear(encoder->out_dim(), cfg.latent));
  decoder = register_module("decoder", nn::ResNetDecoder(cfg.latent, rc, cfg.input.size));
}

VaeOutput VaeImpl::forward(const torch::Tensor& x) {
  auto h = encoder(x);
  VaeOutput out;
  out.mu = fc_mu(h);
  out.log_var = fc_log_var(h);
  out.z = is_training() ? out.mu + torch::randn_like(out.mu) * (0.5 * out.log_var).exp() : out.mu;
  out.reconstruction = decoder(out.z);
  return out;
}

torch::Tensor VaeImpl::embed(const torch::Tensor& x) { return fc_mu(encoder(x)); }

// ---- AIM ------------------------------------------------------------------

void to_json(nlohmann::json& j, const AimConfig& c) { j = {{"vit", c.vit}}; }

void from_json(const nlohmann::json& j, AimConfig& c) {
  c = AimConfig{};
  if (j.contains("vit")) c.vit = j.at("vit").get<nn::VitConfig>();
}

AimImpl::AimImpl(AimConfig c) : cfg(c) {
  const auto& v = cfg.vit;
  TORCH_CHECK(v.image_size % v.patch_size == 0, "image size must be a multiple of the patch size");
  patch_embed = register_module("patch_embed", torch::nn::Linear(v.patch_dim(), v.dim));
  pos = register_parameter("pos", torch::randn({1, v.num_patches(), v.dim}) * 0.02);
  query_pos = register_parameter("query_pos", torch::randn({1, v.num_patches(), v.dim}) * 0.02);
  start = register_parameter("start", torch::randn({1, 1, v.dim}) * 0.02);
  body = register_module("body", nn::Transformer(v.dim, v.depth, v.heads, v.mlp_ratio));
  head = register_module("head", torch::nn::Linear(v.dim, v.patch_dim()));
}

torch::Tensor AimImpl::features(const torch::Tensor& x, const torch::Tensor& order) {
  const int64_t l = cfg.vit.num_patches();
  auto patches = nn::patchify(x, cfg.vit.patch_size);
  TORCH_CHECK(patches.size(1) == l, "unexpected patch count");
  TORCH_CHECK(order.numel() == l, "order must be a permutation of the patches");
  auto tokens = (patch_embed(patches) + pos).index_select(1, order);
  auto seq = torch::cat({start.expand({x.size(0), 1, cfg.vit.dim}), tokens.slice(1, 0, l - 1)}, 1) +
             query_pos.index_select(1, order);
  return body(seq, nn::causal_mask(l, seq.scalar_type()));
}

torch::Tensor AimImpl::forward(const torch::Tensor& x, const torch::Tensor& order) {
  auto pred = head(features(x, order));
  return pred.index_select(1, torch::argsort(order));
}

torch::Tensor AimImpl::embed(const torch::Tensor& x) {
  return features(x, torch::arange(cfg.vit.num_patches(), torch::kLong)).mean(1);
}

// ---- MAE ------------------------------------------------------------------

void to_json(nlohmann::json& j, const MaeConfig& c) {
  j = {{"vit", c.vit},
       {"decoder_dim", c.decoder_dim},
       {"decoder_depth", c.decoder_depth},
       {"decoder_heads", c.decoder_heads},
       {"mask_ratio", c.mask_ratio}};
}

void from_json(const nlohmann::json& j, MaeConfig& c) {
  c = MaeConfig{};
  if (j.contains("vit")) c.vit = j.at("vit").get<nn::VitConfig>();
  c.decoder_dim = j.value("decoder_dim", c.decoder_dim);
  c.decoder_depth = j.value("decoder_depth", c.decoder_depth);
  c.decoder_heads = j.value("decoder_heads", c.decoder_heads);
  c.mask_ratio = j.value("mask_ratio", c.mask_ratio);
}

MaeImpl::MaeImpl(MaeConfig c) : cfg(c) {
  const auto& v = cfg.vit;
  masked_count(v.num_patches(), cfg.mask_ratio);  // validates the ratio
  patch_embed = register_module("patch_embed", torch::nn::Linear(v.patch_dim(), v.dim));
  pos = register_parameter("pos", torch::randn({1, v.num_patches(), v.dim}) * 0.02);
  encoder = register_module("encoder", nn::Transformer(v.dim, v.depth, v.heads, v.mlp_ratio));
  decoder_embed = register_module("decoder_embed", torch::nn::Linear(v.dim, cfg.decoder_dim));
  mask_token = register_parameter("mask_token", torch::randn({1, 1, cfg.decoder_dim}) * 0.02);
  decoder_pos = register_parameter("decoder_pos", torch::randn({1, v.num_patches(), cfg.decoder_dim}) * 0.02);
  decoder = register_module("decoder", nn::Transformer(cfg.decoder_dim, cfg.decoder_depth, cfg.decoder_heads, v.mlp_ratio));
  predict = register_module("predict", torch::nn::Linear(cfg.decoder_dim, v.patch_dim()));
}

torch::Tensor MaeImpl::random_mask(int64_t n) const {
  const int64_t l = cfg.vit.num_patches();
  const int64_t m = masked_count(l, cfg.mask_ratio);
  auto ids = torch::argsort(torch::rand({n, l}), int64_t{1});
  return torch::zeros({n, l}, torch::kBool).scatter(1, ids.slice(1, 0, m), true);
}

MaeOutput MaeImpl::forward(const torch::Tensor& x) { return forward(x, random_mask(x.size(0))); }

MaeOutput MaeImpl::forward(const torch::Tensor& x, const torch::Tensor& mask) {
  const int64_t n = x.size(0), l = cfg.vit.num_patches();
  TORCH_CHECK(mask.sizes() == torch::IntArrayRef({n, l}), "mask must be N x L");
  const auto counts = mask.sum(1);
  const int64_t m = counts[0].item<int64_t>();
  TORCH_CHECK((counts == m).all().item<bool>(), "every image must mask the same number of patches");
  if (m == 0) throw Error("MAE mask is empty");

  auto tokens = patch_embed(nn::patchify(x, cfg.vit.patch_size)) + pos;
  // Stable sort puts visible (false) patches first, in raster order.
  auto ids = std::get<1>(torch::sort(mask.to(torch::kInt), /*stable=*/true, 1, false));
  auto keep = ids.slice(1, 0, l - m);
  auto visible = tokens.gather(1, keep.unsqueeze(-1).expand({-1, -1, cfg.vit.dim}));
  auto encoded = decoder_embed(encoder(visible));

  auto full = mask_token.expand({n, l, cfg.decoder_dim}).clone();
  full = full.scatter(1, keep.unsqueeze(-1).expand({-1, -1, cfg.decoder_dim}), encoded) + decoder_pos;
  return {predict(decoder(full)), mask};
}

torch::Tensor MaeImpl::embed(const torch::Tensor& x) {
  return encoder(patch_embed(nn::patchify(x, cfg.vit.patch_size)) + pos).mean(1);
}

// ---- BiGAN ----------------------------------------------------------------

void to_json(nlohmann::json& j, const BiganConfig& c) {
  j = {{"input", c.input},
       {"latent", c.latent},
       {"encoder_widths", c.encoder_widths},
       {"discriminator_widths", c.discriminator_widths}};
}

void from_json(const nlohmann::json& j, BiganConfig& c) {
  c = BiganConfig{};
  if (j.contains("input")) c.input = j.at("input").get<InputSpec>();
  c.latent = j.value("latent", c.latent);
  c.encoder_widths = j.value("encoder_widths", c.encoder_widths);
  c.discriminator_widths = j.value("discriminator_widths", c.discriminator_widths);
}

BiganImpl::BiganImpl(BiganConfig c) : cfg(std::move(c)) {
  TORCH_CHECK(!cfg.encoder_widths.empty() && !cfg.discriminator_widths.empty(), "BiGAN widths must not be empty");
  const int64_t d = static_cast<int64_t>(cfg.input.channels) * cfg.input.size * cfg.input.size;
  auto lrelu = [] { return torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)); };

  torch::nn::Sequential enc, gen, disc;
  int64_t in = d;
  for (auto w : cfg.encoder_widths) {
    enc->push_back(torch::nn::Linear(in, w));
    enc->push_back(lrelu());
    in = w;
  }
  enc->push_back(torch::nn::Linear(in, cfg.latent));

  in = cfg.latent;
  for (auto it = cfg.encoder_widths.rbegin(); it != cfg.encoder_widths.rend(); ++it) {
    gen->push_back(torch::nn::Linear(in, *it));
    gen->push_back(lrelu());
    in = *it;
  }
  gen->push_back(torch::nn::Linear(in, d));
  gen->push_back(torch::nn::Sigmoid());

  in = d + cfg.latent;
  for (auto w : cfg.discriminator_widths) {
    disc->push_back(torch::nn::Linear(in, w));
    disc->push_back(lrelu());
    in = w;
  }
  disc->push_back(torch::nn::Linear(in, 1));
  disc->push_back(torch::nn::Sigmoid());

  encoder = register_module("encoder", enc);
  generator = register_module("generator", gen);
  discriminator = register_module("discriminator", disc);
}

torch::Tensor BiganImpl::encode(const torch::Tensor& x) { return encoder->forward(x.flatten(1)); }

torch::Tensor BiganImpl::generate(const torch::Tensor& z) {
  return generator->forward(z).view({z.size(0), cfg.input.channels, cfg.input.size, cfg.input.size});
}

torch::Tensor BiganImpl::discriminate(const torch::Tensor& x, const torch::Tensor& z) {
  return discriminator->forward(torch::cat({x.flatten(1), z}, 1)).squeeze(1);
}

BiganLosses bigan_step(const torch::Tensor& x, Bigan& model, torch::optim::Optimizer& opt_d,
                       torch::optim::Optimizer& opt_ge) {
  auto z_real = model->encode(x);
  auto z = torch::randn({x.size(0), model->cfg.latent}, x.options());
  auto x_fake = model->generate(z);

  auto d = bigan_losses(model->discriminate(x, z_real.detach()), model->discriminate(x_fake.detach(), z));
  opt_d.zero_grad();
  d.loss_d.backward();
  opt_d.step();

  auto ge = bigan_losses(model->discriminate(x, z_real), model->discriminate(x_fake, z));
  opt_ge.zero_grad();
  ge.loss_ge.backward();
  opt_ge.step();
  return {d.loss_d.detach(), ge.loss_ge.detach()};
}

}  // namespace hwssl::gssl
