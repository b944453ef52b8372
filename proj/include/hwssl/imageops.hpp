#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace hwssl {

/// Decoded 8-bit image, row-major, channels interleaved (HWC).
struct RawImage {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  bool empty() const { return height <= 0 || width <= 0 || pixels.empty(); }
  std::uint8_t at(int y, int x, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

enum class Provenance { resized64, resized224, binarized, inverted, grayscale, augmented };

/// Float image in planar (C, H, W) layout with values in [0, 1].
struct ProcessedImage {
  int channels = 1;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;
  Provenance provenance = Provenance::resized64;
  // Set by binarize() when the threshold was undefined.
  bool warning = false;

  ProcessedImage() = default;
  ProcessedImage(int c, int h, int w, float fill = 0.0f, Provenance p = Provenance::resized64)
      : channels(c), height(h), width(w),
        pixels(static_cast<std::size_t>(c) * h * w, fill), provenance(p) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  float& at(int c, int y, int x) { return pixels[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  float at(int c, int y, int x) const { return pixels[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  std::span<const float> channel(int c) const { return {pixels.data() + c * plane(), plane()}; }
  bool operator==(const ProcessedImage& o) const {
    return channels == o.channels && height == o.height && width == o.width && pixels == o.pixels;
  }
};

enum class Background { white, black };

/// Scale the longest side to `target` (64 or 224) and pad the short side
/// symmetrically with the background colour. Channel count is preserved.
ProcessedImage resize_pad(const RawImage& image, int target, Background background = Background::white);

/// Same as resize_pad for an already normalised image (used for 64 -> 224 upscaling).
ProcessedImage resize_pad(const ProcessedImage& image, int target, Background background = Background::black);

/// Pixelwise 1 - v.
ProcessedImage invert(const ProcessedImage& image);

/// Luminance conversion (0.299, 0.587, 0.114); single-channel input is returned unchanged.
ProcessedImage grayscale(const ProcessedImage& image);

/// Grayscale followed by a global Otsu threshold. Output is {0,1} with 1 = ink,
/// where ink is the darker class of an ink-on-white image.
ProcessedImage binarize(const ProcessedImage& image);

/// Otsu threshold over a 256-bin histogram of values in [0,1]; returns -1 for a
/// constant image. Pixels with value <= threshold belong to the dark class.
double otsu_threshold(std::span<const float> values);

/// Convert an 8-bit raw image to [0,1] floats without resizing.
ProcessedImage to_processed(const RawImage& image);

/// Quantise back to 8 bits (round to nearest), planar -> interleaved.
RawImage to_raw(const ProcessedImage& image);

}  // namespace hwssl
