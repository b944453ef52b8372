#pragma once

#include <vector>

#include <torch/torch.h>

namespace hwssl::cssl {

/// Cross-entropy of each anchor against its positive among the negatives:
/// -log(exp(a.p/t) / (exp(a.p/t) + sum_n exp(a.n/t))), averaged over anchors.
/// Without `negatives`, the other rows of `positives` act as negatives.
/// Rows are L2-normalised first unless `normalize` is false.
torch::Tensor nce_loss(const torch::Tensor& anchors, const torch::Tensor& positives, const torch::Tensor& negatives,
                       double temperature, bool normalize = true);

struct VicregParams {
  double lambda = 25.0;  // invariance
  double mu = 25.0;      // variance
  double nu = 1.0;       // covariance
  double gamma = 1.0;    // target std
  double eps = 0.0;      // added to the variance before the square root
};

struct VicregTerms {
  torch::Tensor invariance;  // mean squared difference
  torch::Tensor variance;    // hinge summed over both views
  torch::Tensor covariance;  // off-diagonal squares / D, summed over both views
  torch::Tensor total;
};

VicregTerms vicreg_terms(const torch::Tensor& za, const torch::Tensor& zb, const VicregParams& p = {});
inline torch::Tensor vicreg_loss(const torch::Tensor& za, const torch::Tensor& zb, const VicregParams& p = {}) {
  return vicreg_terms(za, zb, p).total;
}

/// sum_d (1 - C_dd)^2 + lambda * sum_{d != e} C_de^2 over the cross-correlation of standardised columns.
torch::Tensor barlow_twins_loss(const torch::Tensor& za, const torch::Tensor& zb, double lambda = 5e-3);

/// Mean of -cos(p_i, z_i); z is detached.
torch::Tensor negative_cosine_loss(const torch::Tensor& p, const torch::Tensor& z);

/// Teacher softmax of (t - center) / teacher_temp against student log-softmax of s / student_temp,
/// averaged over every (teacher view i, student view j != i) pair. Student views 0..T-1 are the
/// same global views the teacher saw.
torch::Tensor dino_loss(const std::vector<torch::Tensor>& student_logits, const std::vector<torch::Tensor>& teacher_logits,
                        double teacher_temp, double student_temp, const torch::Tensor& center);

/// EMA of the batch mean of teacher logits: m * center + (1 - m) * mean.
torch::Tensor update_center(const torch::Tensor& center, const std::vector<torch::Tensor>& teacher_logits, double momentum);

/// target <- m * target + (1 - m) * online for every parameter; buffers are copied.
void momentum_update(const torch::nn::Module& online, torch::nn::Module& target, double m);

}  // namespace hwssl::cssl
