#include "hwssl/encoder.hpp"

#include <algorithm>
#include <array>

#include "hwssl/gssl/flow.hpp"
#include "hwssl/gssl/models.hpp"
#include "hwssl/nn/resnet.hpp"

namespace hwssl {

namespace {

constexpr std::array<const char*, 5> kGenerative{"vae", "aim", "mae", "flow", "bigan"};
constexpr std::array<const char*, 8> kContrastive{"moco",     "simclr", "byol",        "simsiam",
                                                   "fastsiam", "dino",   "barlowtwins", "vicreg"};

template <class Model>
Encoder wrap(const EncoderCheckpoint& ckpt, Model model, InputSpec input) {
  deserialize_module(*model, ckpt.weights);
  model->eval();
  Encoder e;
  e.method = ckpt.method;
  e.input = input;
  e.embed_dim = ckpt.embed_dim;
  e.module = model.ptr();
  e.embed_fn = [model](const torch::Tensor& x) mutable { return model->embed(x); };
  return e;
}

}  // namespace

bool is_generative_method(const std::string& m) {
  return std::find(kGenerative.begin(), kGenerative.end(), m) != kGenerative.end();
}

bool is_contrastive_method(const std::string& m) {
  return std::find(kContrastive.begin(), kContrastive.end(), m) != kContrastive.end();
}

torch::Tensor Encoder::embed(const torch::Tensor& batch) const {
  torch::NoGradGuard no_grad;
  module->eval();
  return embed_fn(batch);
}

Encoder load_encoder(const EncoderCheckpoint& ckpt) {
  if (!ckpt.train_config.contains("model")) throw Error("checkpoint has no model config");
  const auto& m = ckpt.train_config.at("model");
  const auto& method = ckpt.method;
  if (method == "vae") {
    auto cfg = m.get<gssl::VaeConfig>();
    return wrap(ckpt, gssl::Vae(cfg), cfg.input);
  }
  if (method == "aim") {
    auto cfg = m.get<gssl::AimConfig>();
    return wrap(ckpt, gssl::Aim(cfg), InputSpec{cfg.vit.image_size, cfg.vit.in_channels});
  }
  if (method == "mae") {
    auto cfg = m.get<gssl::MaeConfig>();
    return wrap(ckpt, gssl::Mae(cfg), InputSpec{cfg.vit.image_size, cfg.vit.in_channels});
  }
  if (method == "flow") {
    auto cfg = m.get<gssl::FlowConfig>();
    return wrap(ckpt, gssl::FlowModel(cfg), InputSpec{cfg.image_size, 1});
  }
  if (method == "bigan") {
    auto cfg = m.get<gssl::BiganConfig>();
    return wrap(ckpt, gssl::Bigan(cfg), cfg.input);
  }
  if (is_contrastive_method(method)) {
    auto backbone = nn::ResNet18(m.at("backbone").get<nn::ResNetConfig>());
    deserialize_module(*backbone, ckpt.weights);
    backbone->eval();
    Encoder e;
    e.method = method;
    e.input = m.at("input").get<InputSpec>();
    e.embed_dim = ckpt.embed_dim;
    e.module = backbone.ptr();
    e.embed_fn = [backbone](const torch::Tensor& x) mutable { return backbone->forward(x); };
    return e;
  }
  throw Error("unknown encoder method: " + method);
}

Encoder load_encoder(const std::filesystem::path& path) { return load_encoder(load_checkpoint(path)); }

std::vector<Embedding> extract_embeddings(const Encoder& encoder, const Corpus& corpus,
                                          const std::vector<std::size_t>& indices, int batch_size) {
  TORCH_CHECK(batch_size > 0, "batch size must be positive");
  std::vector<Embedding> out;
  out.reserve(indices.size());
  for (std::size_t lo = 0; lo < indices.size(); lo += batch_size) {
    std::vector<std::size_t> chunk(indices.begin() + lo,
                                   indices.begin() + std::min(indices.size(), lo + batch_size));
    auto h = encoder.embed(input_batch(corpus, chunk, encoder.input)).to(torch::kFloat32).contiguous();
    TORCH_CHECK(h.dim() == 2 && h.size(1) == encoder.embed_dim, "encoder output has unexpected shape");
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      Embedding e;
      e.method = "ssl:" + encoder.method;
      e.sample = corpus[chunk[r]].key();
      const float* p = h[r].data_ptr<float>();
      e.values.assign(p, p + h.size(1));
      out.push_back(std::move(e));
    }
  }
  return out;
}

}  // namespace hwssl
