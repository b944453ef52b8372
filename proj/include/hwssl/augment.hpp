#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "hwssl/imageops.hpp"

namespace hwssl {

enum class AugOpId { crop_resize, center_crop, vflip, hflip, rotate, perspective, blur, jitter, invert };

std::string to_string(AugOpId id);
AugOpId aug_op_from_string(const std::string& name);

/// One step of an augmentation pipeline. The meaning of [lo, hi] depends on the op:
///   crop_resize  retained area fraction (aspect ratio drawn from [3/4, 4/3])
///   center_crop  retained area fraction
///   rotate       angle in degrees
///   perspective  distortion scale (corner displacement as a fraction of half the side)
///   blur         Gaussian sigma in output pixels
///   jitter       brightness and contrast factors drawn from [1 - hi, 1 + hi]
///   flips, invert  unused
struct AugOp {
  AugOpId id = AugOpId::hflip;
  double probability = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

inline constexpr double kMaxRotationDegrees = 15.0;
inline constexpr double kMinCropArea = 0.5;

struct AugmentationPolicy {
  std::vector<AugOp> ops;
  int output_size = 224;
  std::uint64_t seed_stream = 0;
  // Extra small crops for multi-crop methods.
  int local_crops = 0;
  int local_size = 96;
  // Fill value for rotated / warped borders (models consume inverted images).
  float background = 0.0f;

  const AugOp* find(AugOpId id) const;
};

/// Throws when a probability, rotation bound, crop area bound or output size is invalid.
void validate(const AugmentationPolicy& policy);

/// Registered default policy of a contrastive method merged with `overrides`.
/// Override keys: output_size, seed_stream, local_crops, local_size, background,
/// and `<op>.p`, `<op>.min`, `<op>.max` for any op name.
AugmentationPolicy build_policy(const std::string& method_id,
                                const std::map<std::string, std::string>& overrides = {});

/// Sampled parameters of one view, kept for invariant checks.
struct ViewTrace {
  double crop_area = 1.0;
  bool flipped_h = false;
  bool inverted = false;
};

struct ViewBatch {
  std::vector<ProcessedImage> views;  // n_views global views, then policy.local_crops local views
  std::vector<ViewTrace> traces;
};

ViewBatch make_views_traced(const ProcessedImage& image, const AugmentationPolicy& policy, std::mt19937_64& rng,
                            int n_views);

inline std::vector<ProcessedImage> make_views(const ProcessedImage& image, const AugmentationPolicy& policy,
                                              std::mt19937_64& rng, int n_views) {
  return make_views_traced(image, policy, rng, n_views).views;
}

void to_json(nlohmann::json& j, const AugmentationPolicy& policy);
void from_json(const nlohmann::json& j, AugmentationPolicy& policy);

}  // namespace hwssl
