#include "hwssl/gssl/losses.hpp"

#include <cmath>

#include "hwssl/common.hpp"

namespace hwssl::gssl {

namespace {

void require_finite(const torch::Tensor& t, const char* what) {
  if (!torch::isfinite(t).all().item<bool>()) throw Error(std::string(what) + ": non-finite input");
}

}  // namespace

VaeLoss vae_loss(const torch::Tensor& x, const VaeOutput& out, double beta) {
  TORCH_CHECK(x.sizes() == out.reconstruction.sizes(), "vae_loss: reconstruction shape mismatch");
  TORCH_CHECK(out.mu.sizes() == out.log_var.sizes(), "vae_loss: mu/log_var shape mismatch");
  TORCH_CHECK(beta >= 0.0, "vae_loss: beta must be non-negative");
  require_finite(x, "vae_loss");
  require_finite(out.mu, "vae_loss");
  require_finite(out.log_var, "vae_loss");
  VaeLoss l;
  l.recon = (x - out.reconstruction).pow(2).mean();
  l.kl = (0.5 * (out.mu.pow(2) + out.log_var.exp() - 1.0 - out.log_var)).sum(1).mean();
  l.total = l.recon + beta * l.kl;
  return l;
}

torch::Tensor normalize_patches(const torch::Tensor& patches, double eps) {
  auto mean = patches.mean(-1, true);
  auto var = patches.var(-1, false, true);
  return (patches - mean) / (var + eps).sqrt();
}

torch::Tensor aim_loss(const torch::Tensor& patches, const torch::Tensor& predictions, int64_t expected_length) {
  TORCH_CHECK(patches.dim() == 3, "aim_loss expects N x L x P patches");
  TORCH_CHECK(patches.sizes() == predictions.sizes(), "aim_loss: prediction shape mismatch");
  if (expected_length > 0 && patches.size(1) != expected_length)
    throw Error("aim_loss: expected " + std::to_string(expected_length) + " patches, got " +
                std::to_string(patches.size(1)));
  return (predictions - normalize_patches(patches)).pow(2).mean();
}

int64_t masked_count(int64_t length, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error("masking ratio must lie in (0, 1)");
  return std::min<int64_t>(length, static_cast<int64_t>(std::ceil(length * ratio - 1e-9)));
}

torch::Tensor mae_loss(const torch::Tensor& patches, const torch::Tensor& mask, const torch::Tensor& reconstruction) {
  TORCH_CHECK(patches.sizes() == reconstruction.sizes(), "mae_loss: reconstruction shape mismatch");
  TORCH_CHECK(mask.dim() == 2 && mask.size(0) == patches.size(0) && mask.size(1) == patches.size(1),
              "mae_loss: mask must be N x L");
  const auto m = mask.to(patches.dtype());
  const auto n = m.sum();
  if (n.item<double>() == 0.0) throw Error("mae_loss: empty mask");
  const auto per_patch = (reconstruction - patches).pow(2).mean(-1);
  return (per_patch * m).sum() / n;
}

torch::Tensor bce(const torch::Tensor& prob, double target) {
  const double eps = prob.scalar_type() == torch::kDouble ? 1e-12 : 1e-7;
  const auto p = prob.clamp(eps, 1.0 - eps);
  return -(target * p.log() + (1.0 - target) * (1.0 - p).log()).mean();
}

BiganLosses bigan_losses(const torch::Tensor& d_real, const torch::Tensor& d_fake) {
  require_finite(d_real, "bigan_losses");
  require_finite(d_fake, "bigan_losses");
  return {0.5 * (bce(d_real, 1.0) + bce(d_fake, 0.0)), 0.5 * (bce(d_real, 0.0) + bce(d_fake, 1.0))};
}

}  // namespace hwssl::gssl
