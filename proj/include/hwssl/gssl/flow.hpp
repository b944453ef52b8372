#pragma once

#include <memory>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

namespace hwssl::gssl {

struct FlowConfig {
  int image_size = 64;  // single channel, multiple of 4
  bool variational = true;
  int dequant_couplings = 4;
  int dequant_hidden = 16;
  int checker_couplings = 2;
  int checker_hidden = 32;
  int scale1_couplings = 2;
  int scale1_hidden = 48;
  int scale2_couplings = 4;
  int scale2_hidden = 64;
  int gated_layers = 2;
  // Identity flow: uniform dequantisation to [0,1], no layers, unit-uniform prior.
  bool identity = false;
};

void to_json(nlohmann::json& j, const FlowConfig& c);
void from_json(const nlohmann::json& j, FlowConfig& c);

/// Per-pass bookkeeping: log-dets layer by layer, latents removed by splits.
struct FlowTrace {
  std::vector<torch::Tensor> layer_ldj;     // N each, one per invertible layer
  std::vector<torch::Tensor> split_latents;
  torch::Tensor ldj;                        // running sum of layer_ldj
  torch::Tensor split_log_prior;            // log-density of split latents
  void add(const torch::Tensor& contribution);
};

struct ConcatEluImpl : torch::nn::Module {
  torch::Tensor forward(const torch::Tensor& x);
};
TORCH_MODULE(ConcatElu);

struct LayerNormChannelsImpl : torch::nn::Module {
  explicit LayerNormChannelsImpl(int64_t channels, double eps = 1e-5);
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor gamma, beta;
  double eps;
};
TORCH_MODULE(LayerNormChannels);

struct GatedConvImpl : torch::nn::Module {
  GatedConvImpl(int64_t channels, int64_t hidden);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Sequential net{nullptr};
};
TORCH_MODULE(GatedConv);

/// Residual gated conv network; the last conv starts at zero so every coupling starts as the identity.
struct GatedConvNetImpl : torch::nn::Module {
  GatedConvNetImpl(int64_t in, int64_t hidden, int64_t out, int64_t layers);
  torch::Tensor forward(const torch::Tensor& x);
  torch::nn::Sequential net{nullptr};
};
TORCH_MODULE(GatedConvNet);

/// Invertible layer acting on N x C x H x W tensors.
struct FlowStep : torch::nn::Module {
  virtual torch::Tensor forward(const torch::Tensor& z, FlowTrace& trace, const torch::Tensor& cond) = 0;
  virtual torch::Tensor inverse(const torch::Tensor& z, FlowTrace& trace, const torch::Tensor& cond) = 0;
};

torch::Tensor checkerboard_mask(int64_t h, int64_t w, bool invert);
torch::Tensor channel_mask(int64_t channels, bool invert);

/// Affine coupling z' = (z + t) * exp(s) on the unmasked part, s = tanh(s / e^c) * e^c.
struct Coupling : FlowStep {
  Coupling(int64_t channels, int64_t cond_channels, torch::Tensor mask, int64_t hidden, int64_t layers);
  torch::Tensor forward(const torch::Tensor& z, FlowTrace& trace, const torch::Tensor& cond) override;
  torch::Tensor inverse(const torch::Tensor& z, FlowTrace& trace, const torch::Tensor& cond) override;
  std::pair<torch::Tensor, torch::Tensor> scale_shift(const torch::Tensor& z, const torch::Tensor& cond);

  GatedConvNet net{nullptr};
  torch::Tensor mask, scaling;
};

struct Squeeze : FlowStep {
  torch::Tensor forward(const torch::Tensor& z, FlowTrace& trace, const torch::Tensor& cond) override;
  torch::Tensor inverse(const torch::Tensor& z, FlowTrace& trace, const torch::Tensor& cond) override;
};

/// Moves half of the channels out of the flow; they are scored under the standard normal prior.
struct Split : FlowStep {
  torch::Tensor forward(const torch::Tensor& z, FlowTrace& trace, const torch::Tensor& cond) override;
  torch::Tensor inverse(const torch::Tensor& z, FlowTrace& trace, const torch::Tensor& cond) override;
};

struct FlowNll {
  torch::Tensor nll;  // nats per image
  torch::Tensor bpd;  // per image
};

struct FlowModelImpl : torch::nn::Module {
  explicit FlowModelImpl(FlowConfig cfg = {});

  /// Dequantise integer pixels (values 0..255 stored as floats) into the flow's data space.
  /// `noise` in [0,1) per pixel; pass 0.5 everywhere for a deterministic pass.
  torch::Tensor dequantize(const torch::Tensor& x_int, const torch::Tensor& noise, FlowTrace& trace);
  torch::Tensor quantize(const torch::Tensor& v) const;

  torch::Tensor forward_continuous(const torch::Tensor& v, FlowTrace& trace);
  torch::Tensor inverse_continuous(const torch::Tensor& z, FlowTrace& trace);

  torch::Tensor log_prior(const torch::Tensor& z) const;
  FlowNll nll(const torch::Tensor& x_int, bool deterministic = false);
  /// Final latent and all split latents, flattened: N x (image_size^2).
  torch::Tensor embed(const torch::Tensor& images01);

  FlowConfig cfg;
  std::vector<std::shared_ptr<Coupling>> dequant_flows;
  std::vector<std::shared_ptr<FlowStep>> steps;
  static constexpr double kAlpha = 1e-5;
};
TORCH_MODULE(FlowModel);

/// Mean bits per dimension of a batch of integer-valued single-channel images.
double flow_bpd(const torch::Tensor& x_int, FlowModel& model, bool deterministic = false);

/// Pixel values in [0,1] -> integers 0..255 as floats.
torch::Tensor to_levels(const torch::Tensor& images01);

}  // namespace hwssl::gssl
