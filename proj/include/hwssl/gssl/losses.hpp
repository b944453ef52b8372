#pragma once

#include <torch/torch.h>

namespace hwssl::gssl {

struct VaeOutput {
  torch::Tensor reconstruction;  // N x C x H x W
  torch::Tensor mu;              // N x latent
  torch::Tensor log_var;         // N x latent
  torch::Tensor z;               // N x latent
};

struct VaeLoss {
  torch::Tensor recon;
  torch::Tensor kl;
  torch::Tensor total;
};

/// recon = MSE(x, reconstruction); kl = batch mean of sum_d 0.5 (mu^2 + exp(lv) - 1 - lv);
/// total = recon + beta * kl.
VaeLoss vae_loss(const torch::Tensor& x, const VaeOutput& out, double beta = 1.0);

/// Standardise every patch (last dimension) to zero mean and unit variance.
torch::Tensor normalize_patches(const torch::Tensor& patches, double eps = 1e-6);

/// MSE between predictions and per-patch normalised targets, both N x L x P.
/// `expected_length` > 0 additionally checks L.
torch::Tensor aim_loss(const torch::Tensor& patches, const torch::Tensor& predictions, int64_t expected_length = -1);

/// Number of masked patches out of `length` at `ratio` (ceiling).
int64_t masked_count(int64_t length, double ratio);

/// MSE over masked patches only; `mask` is N x L boolean (true = masked).
torch::Tensor mae_loss(const torch::Tensor& patches, const torch::Tensor& mask, const torch::Tensor& reconstruction);

struct BiganLosses {
  torch::Tensor loss_d;
  torch::Tensor loss_ge;
};

/// Binary cross-entropy of probabilities against a constant target.
torch::Tensor bce(const torch::Tensor& prob, double target);

/// Discriminator probabilities on (x, E(x)) and (G(z), z): loss_d treats the
/// encoder pairs as valid and generator pairs as fake, loss_ge flips the targets.
/// Each loss is the mean of its two BCE terms.
BiganLosses bigan_losses(const torch::Tensor& d_real, const torch::Tensor& d_fake);

}  // namespace hwssl::gssl
