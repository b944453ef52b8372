#include "hwssl/gssl/flow.hpp"

#include <cmath>
#include <numbers>

#include "hwssl/common.hpp"

namespace hwssl::gssl {

namespace {

torch::Tensor sum_chw(const torch::Tensor& t) { return t.sum({1, 2, 3}); }

double per_image_dims(const torch::Tensor& t) { return static_cast<double>(t.size(1) * t.size(2) * t.size(3)); }

}  // namespace

void to_json(nlohmann::json& j, const FlowConfig& c) {
  j = {{"image_size", c.image_size},
       {"variational", c.variational},
       {"dequant_couplings", c.dequant_couplings},
       {"dequant_hidden", c.dequant_hidden},
       {"checker_couplings", c.checker_couplings},
       {"checker_hidden", c.checker_hidden},
       {"scale1_couplings", c.scale1_couplings},
       {"scale1_hidden", c.scale1_hidden},
       {"scale2_couplings", c.scale2_couplings},
       {"scale2_hidden", c.scale2_hidden},
       {"gated_layers", c.gated_layers},
       {"identity", c.identity}};
}

void from_json(const nlohmann::json& j, FlowConfig& c) {
  c = FlowConfig{};
  c.image_size = j.value("image_size", c.image_size);
  c.variational = j.value("variational", c.variational);
  c.dequant_couplings = j.value("dequant_couplings", c.dequant_couplings);
  c.dequant_hidden = j.value("dequant_hidden", c.dequant_hidden);
  c.checker_couplings = j.value("checker_couplings", c.checker_couplings);
  c.checker_hidden = j.value("checker_hidden", c.checker_hidden);
  c.scale1_couplings = j.value("scale1_couplings", c.scale1_couplings);
  c.scale1_hidden = j.value("scale1_hidden", c.scale1_hidden);
  c.scale2_couplings = j.value("scale2_couplings", c.scale2_couplings);
  c.scale2_hidden = j.value("scale2_hidden", c.scale2_hidden);
  c.gated_layers = j.value("gated_layers", c.gated_layers);
  c.identity = j.value("identity", c.identity);
}

void FlowTrace::add(const torch::Tensor& contribution) {
  layer_ldj.push_back(contribution);
  ldj = ldj.defined() ? ldj + contribution : contribution;
}

torch::Tensor ConcatEluImpl::forward(const torch::Tensor& x) { return torch::cat({torch::elu(x), torch::elu(-x)}, 1); }

LayerNormChannelsImpl::LayerNormChannelsImpl(int64_t channels, double e) : eps(e) {
  gamma = register_parameter("gamma", torch::ones({1, channels, 1, 1}));
  beta = register_parameter("beta", torch::zeros({1, channels, 1, 1}));
}

torch::Tensor LayerNormChannelsImpl::forward(const torch::Tensor& x) {
  auto mean = x.mean(1, true);
  auto var = x.var(1, false, true);
  return (x - mean) / (var + eps).sqrt() * gamma + beta;
}

GatedConvImpl::GatedConvImpl(int64_t channels, int64_t hidden) {
  net = register_module("net", torch::nn::Sequential(
                                   ConcatElu(), torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * channels, hidden, 3).padding(1)),
                                   ConcatElu(), torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * hidden, 2 * channels, 1))));
}

torch::Tensor GatedConvImpl::forward(const torch::Tensor& x) {
  auto parts = net->forward(x).chunk(2, 1);
  return x + parts[0] * torch::sigmoid(parts[1]);
}

GatedConvNetImpl::GatedConvNetImpl(int64_t in, int64_t hidden, int64_t out, int64_t layers) {
  net = torch::nn::Sequential(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, hidden, 3).padding(1)));
  for (int64_t i = 0; i < layers; ++i) {
    net->push_back(GatedConv(hidden, hidden));
    net->push_back(LayerNormChannels(hidden));
  }
  net->push_back(ConcatElu());
  auto last = torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * hidden, out, 3).padding(1));
  torch::NoGradGuard no_grad;
  last->weight.zero_();
  last->bias.zero_();
  net->push_back(last);
  register_module("net", net);
}

torch::Tensor GatedConvNetImpl::forward(const torch::Tensor& x) { return net->forward(x); }

torch::Tensor checkerboard_mask(int64_t h, int64_t w, bool invert) {
  auto ys = torch::arange(h).view({h, 1});
  auto xs = torch::arange(w).view({1, w});
  auto mask = ((ys + xs) % 2).to(torch::kFloat32).view({1, 1, h, w});
  return invert ? 1.0 - mask : mask;
}

torch::Tensor channel_mask(int64_t channels, bool invert) {
  auto mask = torch::cat({torch::ones(channels / 2), torch::zeros(channels - channels / 2)}).view({1, channels, 1, 1});
  return invert ? 1.0 - mask : mask;
}

Coupling::Coupling(int64_t channels, int64_t cond_channels, torch::Tensor m, int64_t hidden, int64_t layers) {
  net = register_module("net", GatedConvNet(channels + cond_channels, hidden, 2 * channels, layers));
  mask = register_buffer("mask", std::move(m));
  scaling = register_parameter("scaling", torch::zeros({channels}));
}

std::pair<torch::Tensor, torch::Tensor> Coupling::scale_shift(const torch::Tensor& z, const torch::Tensor& cond) {
  auto input = z * mask;
  if (cond.defined()) input = torch::cat({input, cond}, 1);
  auto parts = net(input).chunk(2, 1);
  auto factor = scaling.exp().view({1, -1, 1, 1});
  auto s = torch::tanh(parts[0] / factor) * factor * (1.0 - mask);
  auto t = parts[1] * (1.0 - mask);
  return {s, t};
}

torch::Tensor Coupling::forward(const torch::Tensor& z, FlowTrace& trace, const torch::Tensor& cond) {
  auto [s, t] = scale_shift(z, cond);
  trace.add(sum_chw(s));
  return (z + t) * s.exp();
}

torch::Tensor Coupling::inverse(const torch::Tensor& z, FlowTrace& trace, const torch::Tensor& cond) {
  auto [s, t] = scale_shift(z, cond);
  trace.add(-sum_chw(s));
  return z * (-s).exp() - t;
}

torch::Tensor Squeeze::forward(const torch::Tensor& z, FlowTrace&, const torch::Tensor&) {
  const auto b = z.size(0), c = z.size(1), h = z.size(2), w = z.size(3);
  TORCH_CHECK(h % 2 == 0 && w % 2 == 0, "squeeze needs even spatial size");
  return z.reshape({b, c, h / 2, 2, w / 2, 2}).permute({0, 1, 3, 5, 2, 4}).reshape({b, 4 * c, h / 2, w / 2});
}

torch::Tensor Squeeze::inverse(const torch::Tensor& z, FlowTrace&, const torch::Tensor&) {
  const auto b = z.size(0), c = z.size(1), h = z.size(2), w = z.size(3);
  return z.reshape({b, c / 4, 2, 2, h, w}).permute({0, 1, 4, 2, 5, 3}).reshape({b, c / 4, 2 * h, 2 * w});
}

namespace {

torch::Tensor normal_log_prob(const torch::Tensor& z) {
  return sum_chw(-0.5 * (z.pow(2) + std::log(2.0 * std::numbers::pi)));
}

}  // namespace

torch::Tensor Split::forward(const torch::Tensor& z, FlowTrace& trace, const torch::Tensor&) {
  auto parts = z.chunk(2, 1);
  trace.split_latents.push_back(parts[1]);
  auto lp = normal_log_prob(parts[1]);
  trace.split_log_prior = trace.split_log_prior.defined() ? trace.split_log_prior + lp : lp;
  return parts[0];
}

torch::Tensor Split::inverse(const torch::Tensor& z, FlowTrace& trace, const torch::Tensor&) {
  torch::Tensor other;
  if (trace.split_latents.empty()) {
    other = torch::randn_like(z);
  } else {
    other = trace.split_latents.back();
    trace.split_latents.pop_back();
  }
  return torch::cat({z, other}, 1);
}

FlowModelImpl::FlowModelImpl(FlowConfig c) : cfg(c) {
  const int64_t s = cfg.image_size;
  if (s < 4 || s % 4 != 0) throw Error("flow image size must be a positive multiple of 4");
  if (cfg.identity) return;
  const int64_t layers = cfg.gated_layers;
  if (cfg.variational)
    for (int i = 0; i < cfg.dequant_couplings; ++i) {
      auto f = std::make_shared<Coupling>(1, 1, checkerboard_mask(s, s, i % 2 == 1), cfg.dequant_hidden, layers);
      dequant_flows.push_back(register_module("dequant" + std::to_string(i), f));
    }
  auto add = [&](std::shared_ptr<FlowStep> step) {
    steps.push_back(register_module("step" + std::to_string(steps.size()), std::move(step)));
  };
  for (int i = 0; i < cfg.checker_couplings; ++i)
    add(std::make_shared<Coupling>(1, 0, checkerboard_mask(s, s, i % 2 == 1), cfg.checker_hidden, layers));
  add(std::make_shared<Squeeze>());
  for (int i = 0; i < cfg.scale1_couplings; ++i)
    add(std::make_shared<Coupling>(4, 0, channel_mask(4, i % 2 == 1), cfg.scale1_hidden, layers));
  add(std::make_shared<Split>());
  add(std::make_shared<Squeeze>());
  for (int i = 0; i < cfg.scale2_couplings; ++i)
    add(std::make_shared<Coupling>(8, 0, channel_mask(8, i % 2 == 1), cfg.scale2_hidden, layers));
}

namespace {

// Logit with boundary squeeze; the inverse of `sigmoid_forward`.
torch::Tensor logit_forward(torch::Tensor z, FlowTrace& trace, double alpha) {
  const double d = per_image_dims(z);
  z = z * (1.0 - alpha) + 0.5 * alpha;
  trace.add(sum_chw(-z.log() - (1.0 - z).log()) + d * std::log(1.0 - alpha));
  return z.log() - (1.0 - z).log();
}

torch::Tensor sigmoid_forward(torch::Tensor z, FlowTrace& trace, double alpha) {
  const double d = per_image_dims(z);
  trace.add(sum_chw(-z - 2.0 * torch::softplus(-z)) - d * std::log(1.0 - alpha));
  return (torch::sigmoid(z) - 0.5 * alpha) / (1.0 - alpha);
}

}  // namespace

torch::Tensor FlowModelImpl::dequantize(const torch::Tensor& x_int, const torch::Tensor& noise, FlowTrace& trace) {
  TORCH_CHECK(x_int.dim() == 4 && x_int.size(1) == 1, "flow expects N x 1 x H x W");
  TORCH_CHECK(x_int.size(2) == cfg.image_size && x_int.size(3) == cfg.image_size, "flow image size mismatch");
  const double d = per_image_dims(x_int);
  auto u = noise;
  if (!cfg.identity && cfg.variational) {
    auto cond = x_int / 255.0 * 2.0 - 1.0;
    u = logit_forward(u, trace, kAlpha);
    for (auto& f : dequant_flows) u = f->forward(u, trace, cond);
    u = sigmoid_forward(u, trace, kAlpha);
  }
  auto v = (x_int + u) / 256.0;
  trace.add(torch::full({x_int.size(0)}, -d * std::log(256.0), x_int.options()));
  if (!cfg.identity) v = logit_forward(v, trace, kAlpha);
  return v;
}

torch::Tensor FlowModelImpl::quantize(const torch::Tensor& v) const {
  auto p = v;
  if (!cfg.identity) p = (torch::sigmoid(v) - 0.5 * kAlpha) / (1.0 - kAlpha);
  return torch::floor(p * 256.0).clamp(0, 255);
}

torch::Tensor FlowModelImpl::forward_continuous(const torch::Tensor& v, FlowTrace& trace) {
  auto z = v;
  for (auto& s : steps) z = s->forward(z, trace, {});
  return z;
}

torch::Tensor FlowModelImpl::inverse_continuous(const torch::Tensor& z, FlowTrace& trace) {
  auto v = z;
  for (auto it = steps.rbegin(); it != steps.rend(); ++it) v = (*it)->inverse(v, trace, {});
  return v;
}

torch::Tensor FlowModelImpl::log_prior(const torch::Tensor& z) const {
  if (cfg.identity) {
    auto inside = ((z >= 0) & (z < 1)).all(3).all(2).all(1);
    return torch::where(inside, torch::zeros({z.size(0)}, z.options()),
                        torch::full({z.size(0)}, -std::numeric_limits<double>::infinity(), z.options()));
  }
  return normal_log_prob(z);
}

FlowNll FlowModelImpl::nll(const torch::Tensor& x_int, bool deterministic) {
  FlowTrace trace;
  auto noise = deterministic ? torch::full_like(x_int, 0.5) : torch::rand_like(x_int);
  auto z = forward_continuous(dequantize(x_int, noise, trace), trace);
  auto log_px = trace.ldj + log_prior(z);
  if (trace.split_log_prior.defined()) log_px = log_px + trace.split_log_prior;
  FlowNll out;
  out.nll = -log_px;
  out.bpd = out.nll / (per_image_dims(x_int) * std::log(2.0));
  return out;
}

torch::Tensor FlowModelImpl::embed(const torch::Tensor& images01) {
  auto x = to_levels(images01.slice(1, 0, 1));
  FlowTrace trace;
  auto z = forward_continuous(dequantize(x, torch::full_like(x, 0.5), trace), trace);
  std::vector<torch::Tensor> parts{z.flatten(1)};
  for (auto it = trace.split_latents.rbegin(); it != trace.split_latents.rend(); ++it) parts.push_back(it->flatten(1));
  return torch::cat(parts, 1);
}

double flow_bpd(const torch::Tensor& x_int, FlowModel& model, bool deterministic) {
  auto r = model->nll(x_int, deterministic);
  if (!torch::isfinite(r.bpd).all().item<bool>()) throw Error("flow: non-finite log-likelihood");
  return r.bpd.mean().item<double>();
}

torch::Tensor to_levels(const torch::Tensor& images01) { return torch::round(images01.clamp(0, 1) * 255.0); }

}  // namespace hwssl::gssl
