#include "hwssl/tensor.hpp"

#include <algorithm>

#include "hwssl/common.hpp"

namespace hwssl {

torch::Tensor to_tensor(const ProcessedImage& image) {
  if (image.pixels.empty()) throw Error("to_tensor: empty image");
  return torch::from_blob(const_cast<float*>(image.pixels.data()), {image.channels, image.height, image.width},
                          torch::kFloat32)
      .clone();
}

ProcessedImage from_tensor(const torch::Tensor& chw) {
  TORCH_CHECK(chw.dim() == 3, "from_tensor expects C x H x W");
  const auto t = chw.detach().to(torch::kFloat32).contiguous();
  ProcessedImage out(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), static_cast<int>(t.size(2)), 0.0f,
                     Provenance::augmented);
  std::copy_n(t.data_ptr<float>(), out.pixels.size(), out.pixels.begin());
  return out;
}

ProcessedImage canonical_image(const RawImage& image, int size) {
  return invert(grayscale(resize_pad(image, size)));
}

torch::Tensor resize_batch(const torch::Tensor& batch, int size) {
  if (batch.size(2) == size && batch.size(3) == size) return batch;
  namespace F = torch::nn::functional;
  auto opts = F::InterpolateFuncOptions().size(std::vector<int64_t>{size, size});
  if (batch.size(2) > size) return F::interpolate(batch, opts.mode(torch::kArea));
  return F::interpolate(batch, opts.mode(torch::kBilinear).align_corners(false));
}

torch::Tensor model_input(const RawImage& image, const InputSpec& spec) {
  if (spec.size <= 0 || spec.channels <= 0) throw Error("model_input: invalid input spec");
  torch::Tensor t = to_tensor(canonical_image(image, 64));
  return resize_batch(t.unsqueeze(0), spec.size).squeeze(0).expand({spec.channels, spec.size, spec.size}).contiguous();
}

torch::Tensor input_batch(const Corpus& corpus, const std::vector<std::size_t>& indices, const InputSpec& spec) {
  std::vector<torch::Tensor> items;
  items.reserve(indices.size());
  for (std::size_t i : indices) items.push_back(model_input(corpus[i].image, spec));
  if (items.empty()) return torch::empty({0, spec.channels, spec.size, spec.size});
  return torch::stack(items);
}

torch::Tensor canonical_batch(const Corpus& corpus, const std::vector<std::size_t>& indices) {
  return input_batch(corpus, indices, {64, 1});
}

torch::Tensor conform(const torch::Tensor& canonical, const InputSpec& spec) {
  auto t = resize_batch(canonical, spec.size);
  return t.size(1) == spec.channels ? t : t.expand({-1, spec.channels, -1, -1}).contiguous();
}

void seed_everything(std::uint64_t seed) {
  torch::manual_seed(seed);
  at::set_num_threads(1);
}

void to_json(nlohmann::json& j, const InputSpec& s) { j = {{"size", s.size}, {"channels", s.channels}}; }

void from_json(const nlohmann::json& j, InputSpec& s) {
  s.size = j.value("size", 64);
  s.channels = j.value("channels", 3);
}

}  // namespace hwssl
