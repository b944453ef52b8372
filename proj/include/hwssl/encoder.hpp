#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "hwssl/checkpoint.hpp"
#include "hwssl/corpus.hpp"
#include "hwssl/handcrafted.hpp"
#include "hwssl/tensor.hpp"

namespace hwssl {

/// Frozen embedding function rebuilt from a checkpoint.
struct Encoder {
  std::string method;
  InputSpec input;
  int64_t embed_dim = 0;
  std::shared_ptr<torch::nn::Module> module;
  std::function<torch::Tensor(const torch::Tensor&)> embed_fn;

  /// Eval mode, no autograd: N x C x S x S model inputs -> N x embed_dim.
  torch::Tensor embed(const torch::Tensor& batch) const;
};

bool is_generative_method(const std::string& method);
bool is_contrastive_method(const std::string& method);

Encoder load_encoder(const EncoderCheckpoint& ckpt);
Encoder load_encoder(const std::filesystem::path& path);

/// Embeddings labelled "ssl:<method>" for the given corpus positions, in order.
std::vector<Embedding> extract_embeddings(const Encoder& encoder, const Corpus& corpus,
                                          const std::vector<std::size_t>& indices, int batch_size = 64);

}  // namespace hwssl
