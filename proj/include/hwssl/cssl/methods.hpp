#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "hwssl/augment.hpp"
#include "hwssl/checkpoint.hpp"
#include "hwssl/corpus.hpp"
#include "hwssl/nn/resnet.hpp"
#include "hwssl/tensor.hpp"
#include "hwssl/training.hpp"

namespace hwssl::cssl {

const std::vector<std::string>& method_names();

/// Heads and update rule of one contrastive method. Head widths exclude the input width.
struct MethodSpec {
  std::string method;
  std::vector<int64_t> projection_head;
  std::vector<int64_t> prediction_head;  // byol, simsiam, fastsiam
  std::optional<double> momentum;        // moco, byol, dino
  nlohmann::json loss_params = nlohmann::json::object();
  int n_views = 2;

  double param(const std::string& key) const;
};

/// Registered defaults for `method`, throws for unknown names.
MethodSpec default_method_spec(const std::string& method);
void validate(const MethodSpec& spec);

void to_json(nlohmann::json& j, const MethodSpec& s);
/// Missing keys fall back to the registered defaults of `method`.
void from_json(const nlohmann::json& j, MethodSpec& s);

struct ContrastiveConfig {
  nn::ResNetConfig backbone{3, 64, 7};
  double base_lr = 0.06;  // scaled by batch / 256, cosine decay to 0
  double weight_decay = 5e-4;
  double sgd_momentum = 0.9;
  double collapse_std = 1e-4;
  int collapse_patience = 3;
  int probe_size = 256;  // samples used to measure embedding spread each epoch
};

void to_json(nlohmann::json& j, const ContrastiveConfig& c);
void from_json(const nlohmann::json& j, ContrastiveConfig& c);

/// Backbone plus heads; target copies exist for momentum methods.
struct ContrastiveModelImpl : torch::nn::Module {
  ContrastiveModelImpl(MethodSpec spec, nn::ResNetConfig backbone);

  /// Loss on a list of view batches (n_views global views first, then local crops).
  std::map<std::string, torch::Tensor> loss(const std::vector<torch::Tensor>& views);
  /// Momentum targets follow the online networks; call after each optimiser step.
  void after_step();
  std::vector<torch::Tensor> online_parameters();

  MethodSpec spec;
  nn::ResNet18 backbone{nullptr}, target_backbone{nullptr};
  torch::nn::Sequential projector{nullptr}, target_projector{nullptr}, predictor{nullptr};
  torch::nn::Linear prototypes{nullptr}, target_prototypes{nullptr};
  torch::Tensor queue, center;

 private:
  torch::Tensor project(const torch::Tensor& x, bool target);
  torch::Tensor dino_head(const torch::Tensor& x, bool target);
  // queue and centre updates wait until after backward
  std::vector<torch::Tensor> pending_keys_, pending_teacher_;
};
TORCH_MODULE(ContrastiveModel);

/// Mean over dimensions of the per-dimension standard deviation of a N x D batch.
double mean_dimension_std(const torch::Tensor& embeddings);

/// SGD training of the method on augmented views; the checkpoint keeps only the backbone.
/// Model input size is policy.output_size; schedule.lr is unused (see ContrastiveConfig::base_lr).
/// Throws RepresentationCollapse when the probe embeddings stay flat for `collapse_patience` epochs.
EncoderCheckpoint pretrain_contrastive(const Corpus& corpus, const MethodSpec& spec, const AugmentationPolicy& policy,
                                       const ContrastiveConfig& cfg, const PretrainOptions& opt);

}  // namespace hwssl::cssl
