#include "hwssl/cssl/losses.hpp"

#include "hwssl/common.hpp"

namespace hwssl::cssl {

namespace {

void require_finite(const torch::Tensor& t, const char* what) {
  if (!torch::isfinite(t).all().item<bool>()) throw Error(std::string(what) + ": non-finite input");
}

void require_pair(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.dim() != 2 || a.sizes() != b.sizes()) throw Error(std::string(what) + ": views must be equal-shape B x D");
  if (a.size(0) < 2) throw Error(std::string(what) + ": needs a batch of at least 2");
}

torch::Tensor off_diagonal_sq_sum(const torch::Tensor& m) { return m.pow(2).sum() - m.diagonal().pow(2).sum(); }

}  // namespace

torch::Tensor nce_loss(const torch::Tensor& anchors, const torch::Tensor& positives, const torch::Tensor& negatives,
                       double temperature, bool normalize) {
  if (!(temperature > 0)) throw Error("nce_loss: temperature must be positive");
  if (anchors.dim() != 2 || anchors.sizes() != positives.sizes()) throw Error("nce_loss: anchor/positive mismatch");
  if (negatives.defined() && (negatives.dim() != 2 || negatives.size(1) != anchors.size(1)))
    throw Error("nce_loss: negative dimension mismatch");
  namespace F = torch::nn::functional;
  auto norm = [&](const torch::Tensor& t) { return normalize ? F::normalize(t, F::NormalizeFuncOptions().dim(1)) : t; };
  auto a = norm(anchors);
  auto p = norm(positives);
  torch::Tensor logits, target;
  if (negatives.defined()) {
    auto pos = (a * p).sum(1, true);
    logits = torch::cat({pos, a.matmul(norm(negatives).t())}, 1) / temperature;
    target = torch::zeros({a.size(0)}, torch::kLong);
  } else {
    if (a.size(0) < 2) throw Error("nce_loss: in-batch negatives need at least 2 rows");
    logits = a.matmul(p.t()) / temperature;
    target = torch::arange(a.size(0), torch::kLong);
  }
  return F::cross_entropy(logits, target);
}

VicregTerms vicreg_terms(const torch::Tensor& za, const torch::Tensor& zb, const VicregParams& p) {
  require_pair(za, zb, "vicreg_loss");
  const double n = static_cast<double>(za.size(0)), d = static_cast<double>(za.size(1));
  VicregTerms t;
  t.invariance = (za - zb).pow(2).mean();
  auto var_term = [&](const torch::Tensor& z) { return torch::relu(p.gamma - (z.var(0) + p.eps).sqrt()).mean(); };
  auto cov_term = [&](const torch::Tensor& z) {
    auto c = z - z.mean(0);
    return off_diagonal_sq_sum(c.t().matmul(c) / (n - 1)) / d;
  };
  t.variance = var_term(za) + var_term(zb);
  t.covariance = cov_term(za) + cov_term(zb);
  t.total = p.lambda * t.invariance + p.mu * t.variance + p.nu * t.covariance;
  return t;
}

torch::Tensor barlow_twins_loss(const torch::Tensor& za, const torch::Tensor& zb, double lambda) {
  require_pair(za, zb, "barlow_twins_loss");
  auto standardize = [](const torch::Tensor& z) {
    auto sd = z.std(0, false);
    if ((sd < 1e-12).any().item<bool>()) throw Error("barlow_twins_loss: zero-variance column");
    return (z - z.mean(0)) / sd;
  };
  auto c = standardize(za).t().matmul(standardize(zb)) / static_cast<double>(za.size(0));
  return (1.0 - c.diagonal()).pow(2).sum() + lambda * off_diagonal_sq_sum(c);
}

torch::Tensor negative_cosine_loss(const torch::Tensor& p, const torch::Tensor& z) {
  if (p.dim() != 2 || p.sizes() != z.sizes()) throw Error("negative_cosine_loss: shape mismatch");
  if ((p.norm(2, 1) == 0).any().item<bool>() || (z.norm(2, 1) == 0).any().item<bool>())
    throw Error("negative_cosine_loss: zero vector row");
  return -torch::cosine_similarity(p, z.detach(), 1).mean();
}

torch::Tensor dino_loss(const std::vector<torch::Tensor>& student_logits, const std::vector<torch::Tensor>& teacher_logits,
                        double teacher_temp, double student_temp, const torch::Tensor& center) {
  if (teacher_logits.empty() || student_logits.size() < teacher_logits.size())
    throw Error("dino_loss: need at least as many student views as teacher views");
  if (!(teacher_temp > 0 && student_temp > 0)) throw Error("dino_loss: temperatures must be positive");
  for (auto& t : teacher_logits) require_finite(t, "dino_loss");
  for (auto& s : student_logits) require_finite(s, "dino_loss");
  torch::Tensor total;
  int pairs = 0;
  for (std::size_t i = 0; i < teacher_logits.size(); ++i) {
    auto q = torch::softmax((teacher_logits[i].detach() - center) / teacher_temp, -1);
    for (std::size_t j = 0; j < student_logits.size(); ++j) {
      if (j == i) continue;
      auto ce = (-q * torch::log_softmax(student_logits[j] / student_temp, -1)).sum(-1).mean();
      total = total.defined() ? total + ce : ce;
      ++pairs;
    }
  }
  if (pairs == 0) throw Error("dino_loss: no cross-view pairs");
  return total / pairs;
}

torch::Tensor update_center(const torch::Tensor& center, const std::vector<torch::Tensor>& teacher_logits, double momentum) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> det;
  for (auto& t : teacher_logits) det.push_back(t.detach());
  auto mean = torch::cat(det, 0).mean(0, true);
  return center * momentum + mean * (1.0 - momentum);
}

void momentum_update(const torch::nn::Module& online, torch::nn::Module& target, double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw Error("momentum_update: m must lie in [0, 1]");
  torch::NoGradGuard no_grad;
  auto src = online.named_parameters();
  auto dst = target.named_parameters();
  if (src.size() != dst.size()) throw Error("momentum_update: parameter structure mismatch");
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto& a = src[i];
    auto& b = dst[i];
    if (a.key() != b.key() || a.value().sizes() != b.value().sizes())
      throw Error("momentum_update: parameter structure mismatch at " + a.key());
    b.value().mul_(m).add_(a.value(), 1.0 - m);
  }
  auto sb = online.named_buffers();
  auto db = target.named_buffers();
  if (sb.size() != db.size()) throw Error("momentum_update: buffer structure mismatch");
  for (std::size_t i = 0; i < sb.size(); ++i) db[i].value().copy_(sb[i].value());
}

}  // namespace hwssl::cssl
