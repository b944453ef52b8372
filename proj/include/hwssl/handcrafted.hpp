#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hwssl/common.hpp"
#include "hwssl/imageops.hpp"

namespace hwssl {

/// Fixed-length feature vector for one sample. `method` is one of
/// "gsc", "hog", "raw" or "ssl:<method-id>".
struct Embedding {
  std::vector<float> values;
  std::string method;
  SampleKey sample;

  std::size_t dim() const { return values.size(); }
};

inline constexpr std::size_t kGscDim = 512;
inline constexpr std::size_t kHogDim = 1764;
inline constexpr std::size_t kRawDim = 4096;

/// Thresholds of the GSC bit predicates. Counts are per 16x16 cell of a 64x64 image.
///
/// Directions are Sobel gradients (towards ink, y pointing up) quantised into
/// twelve 30-degree sectors centred on multiples of 30 degrees (sector 0 is
/// centred on 0, sector 3 on 90).
///
/// Gradient (12 bits per cell): bit d is set when at least
///   `gradient_min_count` pixels of the cell lie in sector d.
/// Structural (12 bits per cell): rules over an edge pixel and two of its
///   neighbours. With up = {2,3,4}, down = {8,9,10}, right = {11,0,1},
///   left = {5,6,7}:
///     0/1 horizontal run: pixel, E and W all up / all down;
///     2/3 vertical run: pixel, N and S all right / all left;
///     4/5 rising diagonal run: pixel, NE and SW all in {4,5} / {10,11};
///     6/7 falling diagonal run: pixel, NW and SE all in {1,2} / {7,8};
///     8  E up and S right;   9  W up and S left;
///     10 E down and N right; 11 W down and N left (corners, pixel is any edge).
///   Bit r is set when at least `structural_min_count` pixels satisfy rule r.
/// Concavity (8 bits per cell):
///   0 ink density >= `density_min_fraction` of the cell,
///   1 a horizontal ink run of length >= `stroke_min_run` inside the cell,
///   2 the same for vertical runs,
///   3-6 background pixels whose rays (up, down, left, right, to the image
///       border) hit ink in every direction except up / down / left / right,
///   7 background pixels whose rays hit ink in all four directions (holes).
///   Bits 3-7 are set when at least `concavity_min_count` such pixels exist.
struct GscThresholds {
  int gradient_min_count = 8;
  int structural_min_count = 2;
  double density_min_fraction = 0.1;
  int stroke_min_run = 12;
  int concavity_min_count = 6;
};

/// Sobel direction sector (0-11) of pixel (y, x) of a binary image, or -1 when
/// the gradient vanishes. Out-of-range neighbours read as background.
int gsc_direction(const ProcessedImage& binary, int y, int x);

/// 512 binary features on a 4x4 grid: 192 gradient, 192 structural and 128
/// concavity bits, ordered [gradient | structural | concavity], each block
/// cell-major (row, column) then bit.
Embedding gsc_features(const ProcessedImage& binary_image, const GscThresholds& thresholds = {});

/// HOG over a 64x64 window: 8x8 cells, 16x16 blocks with stride 8, 9 unsigned
/// orientation bins of 20 degrees (hard assignment), centred-difference
/// gradients with replicated borders, L2-Hys block normalisation (clip 0.2).
/// Output is block-major (row, column), then cell (row-major), then bin.
Embedding hog_features(const ProcessedImage& gray_image);

inline constexpr double kHogEpsilon = 1e-3;
inline constexpr double kHogClip = 0.2;

/// Row-major flatten of a 64x64 single-channel image.
Embedding raw_pixel_features(const ProcessedImage& gray_image);

/// "gsc" (binarised), "hog" or "raw" (grayscale) features of a raw image at 64 px.
Embedding handcrafted_features(const std::string& method, const RawImage& image);

inline constexpr int kEmbeddingFormatVersion = 1;

/// Columnar text file: a `#hwssl-embeddings format_version=1` line, a header
/// `writer_id,sample_index,method,dim,v0,...`, then one row per sample.
void write_embeddings(const std::vector<Embedding>& embeddings, const std::filesystem::path& path);
std::vector<Embedding> read_embeddings(const std::filesystem::path& path);

}  // namespace hwssl
