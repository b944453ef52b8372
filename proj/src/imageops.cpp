#include "hwssl/imageops.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <opencv2/imgproc.hpp>

#include "hwssl/common.hpp"

namespace hwssl {
namespace {

Provenance resized_provenance(int target) {
  return target == 224 ? Provenance::resized224 : Provenance::resized64;
}

// Resize one float plane into `out` at offset, scaling to (new_h, new_w).
void resize_plane(const cv::Mat& src, int new_h, int new_w, ProcessedImage& out, int c, int top,
                  int left) {
  cv::Mat dst;
  if (src.rows == new_h && src.cols == new_w) {
    dst = src;
  } else {
    const bool shrinking = new_h * new_w < src.rows * src.cols;
    cv::resize(src, dst, cv::Size(new_w, new_h), 0, 0, shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  }
  for (int y = 0; y < new_h; ++y) {
    const float* row = dst.ptr<float>(y);
    for (int x = 0; x < new_w; ++x) out.at(c, top + y, left + x) = std::clamp(row[x], 0.0f, 1.0f);
  }
}

ProcessedImage resize_planes(const std::vector<cv::Mat>& planes, int target, Background background) {
  if (target != 64 && target != 224) throw Error("resize_pad: target must be 64 or 224");
  const int h = planes.front().rows;
  const int w = planes.front().cols;
  const double scale = static_cast<double>(target) / std::max(h, w);
  const int new_h = std::clamp(static_cast<int>(std::lround(h * scale)), 1, target);
  const int new_w = std::clamp(static_cast<int>(std::lround(w * scale)), 1, target);
  const int top = (target - new_h) / 2;
  const int left = (target - new_w) / 2;

  const float fill = background == Background::white ? 1.0f : 0.0f;
  ProcessedImage out(static_cast<int>(planes.size()), target, target, fill, resized_provenance(target));
  for (int c = 0; c < out.channels; ++c) resize_plane(planes[c], new_h, new_w, out, c, top, left);
  return out;
}

}  // namespace

ProcessedImage to_processed(const RawImage& image) {
  if (image.empty()) throw Error("empty image");
  ProcessedImage out(image.channels, image.height, image.width);
  for (int c = 0; c < image.channels; ++c)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) out.at(c, y, x) = image.at(y, x, c) / 255.0f;
  return out;
}

RawImage to_raw(const ProcessedImage& image) {
  RawImage out{image.height, image.width, image.channels, {}};
  out.pixels.resize(static_cast<std::size_t>(image.height) * image.width * image.channels);
  for (int c = 0; c < image.channels; ++c)
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x) {
        const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
        out.pixels[(static_cast<std::size_t>(y) * image.width + x) * image.channels + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
  return out;
}

ProcessedImage resize_pad(const RawImage& image, int target, Background background) {
  if (image.empty()) throw Error("resize_pad: empty image");
  return resize_pad(to_processed(image), target, background);
}

ProcessedImage resize_pad(const ProcessedImage& image, int target, Background background) {
  if (image.height <= 0 || image.width <= 0 || image.pixels.empty())
    throw Error("resize_pad: empty image");
  std::vector<cv::Mat> planes;
  for (int c = 0; c < image.channels; ++c) {
    cv::Mat plane(image.height, image.width, CV_32F);
    std::copy_n(image.channel(c).data(), image.plane(), plane.ptr<float>());
    planes.push_back(std::move(plane));
  }
  return resize_planes(planes, target, background);
}

ProcessedImage invert(const ProcessedImage& image) {
  ProcessedImage out = image;
  for (auto& v : out.pixels) v = 1.0f - v;
  out.provenance = Provenance::inverted;
  return out;
}

ProcessedImage grayscale(const ProcessedImage& image) {
  if (image.channels == 1) return image;
  if (image.channels != 3) throw Error("grayscale: expected 1 or 3 channels");
  ProcessedImage out(1, image.height, image.width, 0.0f, Provenance::grayscale);
  const auto r = image.channel(0), g = image.channel(1), b = image.channel(2);
  for (std::size_t i = 0; i < out.pixels.size(); ++i)
    out.pixels[i] = std::clamp(0.299f * r[i] + 0.587f * g[i] + 0.114f * b[i], 0.0f, 1.0f);
  return out;
}

double otsu_threshold(std::span<const float> values) {
  std::array<double, 256> hist{};
  for (float v : values) hist[std::clamp(static_cast<int>(std::lround(v * 255.0f)), 0, 255)] += 1.0;
  const double total = static_cast<double>(values.size());
  int occupied = 0;
  double sum_all = 0.0;
  for (int i = 0; i < 256; ++i) {
    if (hist[i] > 0) ++occupied;
    sum_all += i * hist[i];
  }
  if (occupied < 2) return -1.0;

  double weight_dark = 0.0, sum_dark = 0.0, best = -1.0;
  int best_t = 0;
  for (int t = 0; t < 255; ++t) {
    weight_dark += hist[t];
    sum_dark += t * hist[t];
    const double weight_light = total - weight_dark;
    if (weight_dark == 0.0 || weight_light == 0.0) continue;
    const double mean_dark = sum_dark / weight_dark;
    const double mean_light = (sum_all - sum_dark) / weight_light;
    const double between = weight_dark * weight_light * (mean_dark - mean_light) * (mean_dark - mean_light);
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  return best_t / 255.0;
}

ProcessedImage binarize(const ProcessedImage& image) {
  const ProcessedImage gray = grayscale(image);
  // Inverted and already-binarized images carry bright ink.
  const bool bright_ink =
      image.provenance == Provenance::inverted || image.provenance == Provenance::binarized;
  ProcessedImage out(1, gray.height, gray.width, 0.0f, Provenance::binarized);
  const double threshold = otsu_threshold(gray.pixels);
  if (threshold < 0.0) {
    out.warning = true;
    return out;
  }
  for (std::size_t i = 0; i < gray.pixels.size(); ++i) {
    const double q = std::lround(gray.pixels[i] * 255.0f) / 255.0;
    const bool dark = q <= threshold + 1e-9;
    out.pixels[i] = (bright_ink ? !dark : dark) ? 1.0f : 0.0f;
  }
  return out;
}

}  // namespace hwssl
