#pragma once

#include <functional>

#include <torch/torch.h>

namespace hwssl::testing {

/// Max-norm relative error between the autograd gradient of scalar f at x and a
/// central finite difference, both in double.
inline double grad_rel_error(const std::function<torch::Tensor(const torch::Tensor&)>& f, torch::Tensor x,
                             double h = 1e-6) {
  x = x.to(torch::kDouble).detach().clone().requires_grad_(true);
  auto y = f(x);
  auto analytic = torch::autograd::grad({y}, {x}, {}, false, false, true)[0];
  if (!analytic.defined()) analytic = torch::zeros_like(x);
  auto flat = x.detach().clone().flatten();
  auto numeric = torch::zeros_like(flat);
  torch::NoGradGuard no_grad;
  for (int64_t i = 0; i < flat.numel(); ++i) {
    const double v = flat[i].item<double>();
    flat[i] = v + h;
    const double up = f(flat.view(x.sizes())).item<double>();
    flat[i] = v - h;
    const double down = f(flat.view(x.sizes())).item<double>();
    flat[i] = v;
    numeric[i] = (up - down) / (2 * h);
  }
  const double err = (analytic.flatten() - numeric).abs().max().item<double>();
  const double scale = std::max({analytic.abs().max().item<double>(), numeric.abs().max().item<double>(), 1e-8});
  return err / scale;
}

}  // namespace hwssl::testing
