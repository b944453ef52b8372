#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "hwssl/checkpoint.hpp"
#include "hwssl/corpus.hpp"
#include "hwssl/evalkit.hpp"
#include "hwssl/handcrafted.hpp"
#include "hwssl/nn/resnet.hpp"
#include "hwssl/nn/vit.hpp"
#include "hwssl/tensor.hpp"

namespace hwssl::verifier {

enum class Combine { concat, absdiff };

std::string to_string(Combine c);
Combine combine_from_string(const std::string& s);

/// concat: [h_k | h_q] (2D); absdiff: |h_k - h_q| (D).
std::vector<float> combine_pair(std::span<const float> h_k, std::span<const float> h_q, Combine mode);
inline std::vector<float> combine_pair(const Embedding& k, const Embedding& q, Combine mode) {
  return combine_pair(k.values, q.values, mode);
}
torch::Tensor combine_pair(const torch::Tensor& h_k, const torch::Tensor& h_q, Combine mode);

/// Stops after `patience` consecutive evaluations that fail to beat the best value by `min_delta`.
struct EarlyStopping {
  int patience = 5;
  double min_delta = 0.001;
  double best = -std::numeric_limits<double>::infinity();
  int bad = 0;

  /// Returns true when `value` is a new best.
  bool improved(double value);
  bool should_stop() const { return bad >= patience; }
};

struct VerifierConfig {
  // gsc | hog | raw | checkpoint:<path> | supervised:resnet18 | supervised:vit
  std::string feature_source = "raw";
  Combine combine = Combine::concat;
  int fc1 = 256;
  int fc2 = 128;
  int batch_size = 256;
  double lr = 1e-3;
  int max_epochs = 100;
  int patience = 5;
  double min_delta = 0.001;
  double val_fraction = 0.1;
  bool standardize = false;  // z-score head inputs with training statistics
  std::uint64_t seed = 0;
  // supervised mode only
  nn::ResNetConfig resnet{3, 64, 7};
  nn::VitConfig vit;
  InputSpec input{224, 3};
};

void to_json(nlohmann::json& j, const VerifierConfig& c);
void from_json(const nlohmann::json& j, VerifierConfig& c);

bool is_supervised(const VerifierConfig& c);

/// D_in -> fc1 -> fc2 -> 2 with ReLU; softmax of the output gives P(different), P(same).
struct VerifierHeadImpl : torch::nn::Module {
  VerifierHeadImpl(int64_t in, int64_t fc1, int64_t fc2);
  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor probabilities(const torch::Tensor& x) { return torch::softmax(forward(x), 1); }

  torch::nn::Linear l1{nullptr}, l2{nullptr}, out{nullptr};
};
TORCH_MODULE(VerifierHead);

/// (d_in * fc1 + fc1) + (fc1 * fc2 + fc2) + (fc2 * 2 + 2)
int64_t head_parameter_count(int64_t d_in, int64_t fc1 = 256, int64_t fc2 = 128);

/// Head plus, in supervised mode, the siamese backbone; registered together for serialization.
struct VerifierNetImpl : torch::nn::Module {
  VerifierNetImpl(const VerifierConfig& cfg, int64_t embed_dim);
  /// Backbone embeddings of a batch of images (supervised mode).
  torch::Tensor embed(const torch::Tensor& images);

  std::string backbone_kind;  // "", "resnet18" or "vit"
  nn::ResNet18 resnet{nullptr};
  nn::VitEncoder vit{nullptr};
  VerifierHead head{nullptr};
};
TORCH_MODULE(VerifierNet);

struct VerifierModel {
  VerifierConfig config;
  VerifierNet net{nullptr};
  int64_t embed_dim = 0;
  std::set<WriterId> train_writers;
  torch::Tensor feature_mean, feature_std;  // head-input statistics when standardising
  std::vector<MetricPoint> history;         // val_f1 and train_loss per epoch
  int best_epoch = 0;
};

/// Sample key -> embedding for every sample a pair set references.
using FeatureTable = std::map<SampleKey, Embedding>;

/// Resolve a non-supervised feature source for the given samples.
FeatureTable compute_features(const Corpus& corpus, const std::vector<std::size_t>& indices,
                              const std::string& feature_source);
FeatureTable to_feature_table(const std::vector<Embedding>& embeddings);

/// Pairs stratified by known writer: about `fraction` of each writer's pairs go to validation.
std::pair<PairSet, PairSet> split_validation(const PairSet& pairs, double fraction, std::uint64_t seed);

/// Head over frozen features.
VerifierModel train_verifier(const PairSet& pairs, const FeatureTable& features, const VerifierConfig& cfg);
/// Siamese backbone plus head trained end to end on the corpus images.
VerifierModel train_verifier_supervised(const PairSet& pairs, const Corpus& corpus, const VerifierConfig& cfg);
/// Dispatch on cfg.feature_source.
VerifierModel train_verifier(const PairSet& pairs, const Corpus& corpus, const VerifierConfig& cfg);

/// N x 2 softmax outputs for the pairs.
torch::Tensor predict_proba(const VerifierModel& model, const PairSet& pairs, const FeatureTable& features);
torch::Tensor predict_proba(const VerifierModel& model, const PairSet& pairs, const Corpus& corpus);

/// Throws ProtocolViolation when the pairs reference any training writer.
void check_unseen(const VerifierModel& model, const PairSet& pairs);

VerificationMetrics evaluate_verifier(const VerifierModel& model, const PairSet& pairs, const FeatureTable& features);
/// Resolves features from the corpus (or runs the backbone in supervised mode).
VerificationMetrics evaluate_verifier(const VerifierModel& model, const PairSet& pairs, const Corpus& corpus);

void save_verifier(const VerifierModel& model, const std::filesystem::path& path);
VerifierModel load_verifier(const std::filesystem::path& path);

}  // namespace hwssl::verifier
