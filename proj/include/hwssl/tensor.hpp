#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "hwssl/corpus.hpp"
#include "hwssl/imageops.hpp"

namespace hwssl {

/// Image geometry a model consumes: square, inverted (ink = 1), `channels` copies of the gray plane.
struct InputSpec {
  int size = 64;
  int channels = 3;
  bool operator==(const InputSpec&) const = default;
};

/// C x H x W float tensor sharing no memory with the image.
torch::Tensor to_tensor(const ProcessedImage& image);
ProcessedImage from_tensor(const torch::Tensor& chw);

/// Canonical model input: resize_pad to 64 on white, grayscale, invert,
/// then rescale to spec.size and replicate to spec.channels. Training and
/// extraction both go through the 64 px canonical image.
ProcessedImage canonical_image(const RawImage& image, int size = 64);
torch::Tensor model_input(const RawImage& image, const InputSpec& spec);

/// N x C x S x S batch for the given corpus positions.
torch::Tensor input_batch(const Corpus& corpus, const std::vector<std::size_t>& indices, const InputSpec& spec);

/// N x 1 x 64 x 64 canonical images, the cache that training reshapes per batch.
torch::Tensor canonical_batch(const Corpus& corpus, const std::vector<std::size_t>& indices);
/// Resize a canonical batch to spec.size and replicate it to spec.channels.
torch::Tensor conform(const torch::Tensor& canonical, const InputSpec& spec);

/// Resize a N x C x H x W batch to size x size (area when shrinking, bilinear otherwise).
torch::Tensor resize_batch(const torch::Tensor& batch, int size);

/// Seeds torch's global generator; training code also pins one intra-op thread.
void seed_everything(std::uint64_t seed);

void to_json(nlohmann::json& j, const InputSpec& s);
void from_json(const nlohmann::json& j, InputSpec& s);

}  // namespace hwssl
