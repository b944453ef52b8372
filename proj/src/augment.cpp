#include "hwssl/augment.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgproc.hpp>

#include "hwssl/common.hpp"

namespace hwssl {
namespace {

const std::vector<std::pair<AugOpId, std::string>>& op_names() {
  static const std::vector<std::pair<AugOpId, std::string>> names{
      {AugOpId::crop_resize, "crop_resize"}, {AugOpId::center_crop, "center_crop"},
      {AugOpId::vflip, "vflip"},             {AugOpId::hflip, "hflip"},
      {AugOpId::rotate, "rotate"},           {AugOpId::perspective, "perspective"},
      {AugOpId::blur, "blur"},               {AugOpId::jitter, "jitter"},
      {AugOpId::invert, "invert"}};
  return names;
}

using Planes = std::vector<cv::Mat>;

Planes to_planes(const ProcessedImage& image) {
  Planes planes;
  for (int c = 0; c < image.channels; ++c) {
    cv::Mat m(image.height, image.width, CV_32F);
    std::copy_n(image.channel(c).data(), image.plane(), m.ptr<float>());
    planes.push_back(m);
  }
  return planes;
}

ProcessedImage from_planes(const Planes& planes) {
  ProcessedImage out(static_cast<int>(planes.size()), planes[0].rows, planes[0].cols, 0.0f, Provenance::augmented);
  for (int c = 0; c < out.channels; ++c) {
    cv::Mat m = planes[c].isContinuous() ? planes[c] : planes[c].clone();
    const float* src = m.ptr<float>();
    std::transform(src, src + out.plane(), out.pixels.begin() + c * out.plane(),
                   [](float v) { return std::clamp(v, 0.0f, 1.0f); });
  }
  return out;
}

template <typename F>
void each(Planes& planes, F&& f) {
  for (auto& p : planes) {
    cv::Mat dst;
    f(p, dst);
    p = dst;
  }
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo == hi ? lo : std::uniform_real_distribution<double>(lo, hi)(rng);
}

bool fires(std::mt19937_64& rng, double p) {
  // Always consume one draw so that the stream layout does not depend on p.
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return u < p;
}

// Random resized crop with the retained area constrained to [lo, hi].
cv::Rect sample_crop(std::mt19937_64& rng, int h, int w, double lo, double hi, double& area_out) {
  const double total = static_cast<double>(h) * w;
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double area = total * uniform(rng, lo, hi);
    const double ratio = std::exp(uniform(rng, std::log(3.0 / 4.0), std::log(4.0 / 3.0)));
    const int cw = static_cast<int>(std::lround(std::sqrt(area * ratio)));
    const int ch = static_cast<int>(std::lround(std::sqrt(area / ratio)));
    if (cw <= 0 || ch <= 0 || cw > w || ch > h) continue;
    if (static_cast<double>(cw) * ch < lo * total) continue;
    const int y = std::uniform_int_distribution<int>(0, h - ch)(rng);
    const int x = std::uniform_int_distribution<int>(0, w - cw)(rng);
    area_out = static_cast<double>(cw) * ch / total;
    return {x, y, cw, ch};
  }
  area_out = 1.0;
  return {0, 0, w, h};
}

ProcessedImage one_view(const ProcessedImage& image, const AugmentationPolicy& policy, std::mt19937_64& rng,
                        int size, double crop_lo, double crop_hi, ViewTrace& trace) {
  Planes planes = to_planes(image);
  const float bg = policy.background;
  each(planes, [&](const cv::Mat& s, cv::Mat& d) {
    if (s.rows == size && s.cols == size) d = s.clone();
    else cv::resize(s, d, cv::Size(size, size), 0, 0, s.rows > size ? cv::INTER_AREA : cv::INTER_LINEAR);
  });

  for (const AugOp& op : policy.ops) {
    if (!fires(rng, op.probability)) continue;
    switch (op.id) {
      case AugOpId::crop_resize: {
        double area = 1.0;
        const cv::Rect r = sample_crop(rng, size, size, std::max(op.lo, crop_lo), std::min(op.hi, crop_hi), area);
        trace.crop_area = std::min(trace.crop_area, area);
        each(planes, [&](const cv::Mat& s, cv::Mat& d) { cv::resize(s(r), d, cv::Size(size, size), 0, 0, cv::INTER_LINEAR); });
        break;
      }
      case AugOpId::center_crop: {
        const double area = uniform(rng, op.lo, op.hi);
        const int side = std::max(1, static_cast<int>(std::lround(size * std::sqrt(area))));
        const int off = (size - side) / 2;
        trace.crop_area = std::min(trace.crop_area, static_cast<double>(side) * side / (static_cast<double>(size) * size));
        const cv::Rect r(off, off, side, side);
        each(planes, [&](const cv::Mat& s, cv::Mat& d) { cv::resize(s(r), d, cv::Size(size, size), 0, 0, cv::INTER_LINEAR); });
        break;
      }
      case AugOpId::vflip:
        each(planes, [](const cv::Mat& s, cv::Mat& d) { cv::flip(s, d, 0); });
        break;
      case AugOpId::hflip:
        trace.flipped_h = !trace.flipped_h;
        each(planes, [](const cv::Mat& s, cv::Mat& d) { cv::flip(s, d, 1); });
        break;
      case AugOpId::rotate: {
        const double angle = uniform(rng, op.lo, op.hi);
        const cv::Mat m = cv::getRotationMatrix2D(cv::Point2f(size / 2.0f - 0.5f, size / 2.0f - 0.5f), angle, 1.0);
        each(planes, [&](const cv::Mat& s, cv::Mat& d) {
          cv::warpAffine(s, d, m, s.size(), cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar(bg));
        });
        break;
      }
      case AugOpId::perspective: {
        const double scale = uniform(rng, op.lo, op.hi);
        const float half = size / 2.0f, reach = static_cast<float>(scale) * half;
        auto jitter = [&]() { return static_cast<float>(uniform(rng, 0.0, reach)); };
        const float e = size - 1.0f;
        const cv::Point2f src[4] = {{0, 0}, {e, 0}, {e, e}, {0, e}};
        const cv::Point2f dst[4] = {{jitter(), jitter()}, {e - jitter(), jitter()}, {e - jitter(), e - jitter()},
                                    {jitter(), e - jitter()}};
        const cv::Mat m = cv::getPerspectiveTransform(src, dst);
        each(planes, [&](const cv::Mat& s, cv::Mat& d) {
          cv::warpPerspective(s, d, m, s.size(), cv::INTER_LINEAR, cv::BORDER_CONSTANT, cv::Scalar(bg));
        });
        break;
      }
      case AugOpId::blur: {
        const double sigma = uniform(rng, op.lo, op.hi);
        const int k = 2 * static_cast<int>(std::ceil(3.0 * sigma)) + 1;
        each(planes, [&](const cv::Mat& s, cv::Mat& d) {
          cv::GaussianBlur(s, d, cv::Size(k, k), sigma, sigma, cv::BORDER_REFLECT);
        });
        break;
      }
      case AugOpId::jitter: {
        const double brightness = uniform(rng, 1.0 - op.hi, 1.0 + op.hi);
        const double contrast = uniform(rng, 1.0 - op.hi, 1.0 + op.hi);
        double mean = 0.0;
        for (const auto& p : planes) mean += cv::mean(p)[0];
        mean /= static_cast<double>(planes.size());
        each(planes, [&](const cv::Mat& s, cv::Mat& d) {
          cv::Mat b = s * brightness;
          d = (b - mean * brightness) * contrast + mean * brightness;
          cv::min(cv::max(d, 0.0), 1.0, d);
        });
        break;
      }
      case AugOpId::invert:
        trace.inverted = !trace.inverted;
        each(planes, [](const cv::Mat& s, cv::Mat& d) { d = 1.0 - s; });
        break;
    }
  }
  return from_planes(planes);
}

}  // namespace

std::string to_string(AugOpId id) {
  for (const auto& [op, name] : op_names())
    if (op == id) return name;
  return "?";
}

AugOpId aug_op_from_string(const std::string& name) {
  for (const auto& [op, n] : op_names())
    if (n == name) return op;
  throw Error("unknown augmentation op: " + name);
}

const AugOp* AugmentationPolicy::find(AugOpId id) const {
  for (const auto& op : ops)
    if (op.id == id) return &op;
  return nullptr;
}

void validate(const AugmentationPolicy& policy) {
  if (policy.output_size != 64 && policy.output_size != 224)
    throw Error("augment: output_size must be 64 or 224");
  if (policy.local_crops < 0) throw Error("augment: local_crops must be non-negative");
  if (policy.local_crops > 0 && policy.local_size <= 0) throw Error("augment: local_size must be positive");
  for (const auto& op : policy.ops) {
    const std::string name = to_string(op.id);
    if (!(op.probability >= 0.0 && op.probability <= 1.0))
      throw Error("augment: probability of " + name + " outside [0, 1]");
    if (op.lo > op.hi) throw Error("augment: " + name + " range is empty");
    switch (op.id) {
      case AugOpId::rotate:
        if (std::abs(op.lo) > kMaxRotationDegrees || std::abs(op.hi) > kMaxRotationDegrees)
          throw Error("augment: rotation exceeds +/-15 degrees");
        break;
      case AugOpId::crop_resize:
      case AugOpId::center_crop:
        if (op.lo < kMinCropArea || op.hi > 1.0) throw Error("augment: " + name + " must keep 50-100% of the area");
        break;
      case AugOpId::blur:
        if (op.lo <= 0.0) throw Error("augment: blur sigma must be positive");
        break;
      case AugOpId::jitter:
      case AugOpId::perspective:
        if (op.lo < 0.0 || op.hi > 1.0) throw Error("augment: " + name + " strength outside [0, 1]");
        break;
      default:
        break;
    }
  }
}

AugmentationPolicy build_policy(const std::string& method, const std::map<std::string, std::string>& overrides) {
  static const std::vector<std::string> known{"moco",     "simclr", "byol",        "simsiam",
                                              "fastsiam", "dino",   "barlowtwins", "vicreg"};
  if (std::find(known.begin(), known.end(), method) == known.end())
    throw Error("augment: unknown contrastive method '" + method + "'");

  AugmentationPolicy p;
  p.ops = {{AugOpId::crop_resize, 1.0, 0.5, 1.0},
           {AugOpId::hflip, 0.5, 0.0, 0.0},
           {AugOpId::jitter, 0.8, 0.0, 0.4},
           {AugOpId::blur, 0.5, 0.1, 2.0}};
  if (method == "simsiam" || method == "fastsiam") p.ops.push_back({AugOpId::rotate, 0.5, -10.0, 10.0});
  if (method == "dino") p.local_crops = 4;

  for (const auto& [key, value] : overrides) {
    double v = 0.0;
    try {
      v = std::stod(value);
    } catch (const std::exception&) {
      throw Error("augment: override " + key + " is not numeric");
    }
    if (key == "output_size") p.output_size = static_cast<int>(v);
    else if (key == "seed_stream") p.seed_stream = static_cast<std::uint64_t>(v);
    else if (key == "local_crops") p.local_crops = static_cast<int>(v);
    else if (key == "local_size") p.local_size = static_cast<int>(v);
    else if (key == "background") p.background = static_cast<float>(v);
    else {
      const auto dot = key.find('.');
      if (dot == std::string::npos) throw Error("augment: unknown override key " + key);
      const AugOpId id = aug_op_from_string(key.substr(0, dot));
      const std::string field = key.substr(dot + 1);
      auto it = std::find_if(p.ops.begin(), p.ops.end(), [&](const AugOp& o) { return o.id == id; });
      if (it == p.ops.end()) {
        p.ops.push_back({id, 0.0, 0.0, 0.0});
        it = std::prev(p.ops.end());
      }
      if (field == "p") it->probability = v;
      else if (field == "min") it->lo = v;
      else if (field == "max") it->hi = v;
      else throw Error("augment: unknown override field " + key);
      // A symmetric rotation bound may be given through max alone.
      if (id == AugOpId::rotate && field == "max" && !overrides.contains("rotate.min")) it->lo = -v;
    }
  }
  validate(p);
  return p;
}

ViewBatch make_views_traced(const ProcessedImage& image, const AugmentationPolicy& policy, std::mt19937_64& rng,
                            int n_views) {
  if (n_views < 2) throw Error("make_views needs at least 2 views");
  if (image.pixels.empty()) throw Error("make_views: empty image");
  ViewBatch out;
  for (int v = 0; v < n_views + policy.local_crops; ++v) {
    const bool local = v >= n_views;
    ViewTrace trace;
    out.views.push_back(one_view(image, policy, rng, local ? policy.local_size : policy.output_size,
                                 kMinCropArea, 1.0, trace));
    out.traces.push_back(trace);
  }
  return out;
}

void to_json(nlohmann::json& j, const AugmentationPolicy& p) {
  j = nlohmann::json{{"output_size", p.output_size}, {"seed_stream", p.seed_stream},
                     {"local_crops", p.local_crops},  {"local_size", p.local_size},
                     {"background", p.background},    {"ops", nlohmann::json::array()}};
  for (const auto& op : p.ops)
    j["ops"].push_back({{"op", to_string(op.id)}, {"p", op.probability}, {"min", op.lo}, {"max", op.hi}});
}

void from_json(const nlohmann::json& j, AugmentationPolicy& p) {
  p = AugmentationPolicy{};
  p.output_size = j.value("output_size", 224);
  p.seed_stream = j.value("seed_stream", std::uint64_t{0});
  p.local_crops = j.value("local_crops", 0);
  p.local_size = j.value("local_size", 96);
  p.background = j.value("background", 0.0f);
  for (const auto& o : j.at("ops"))
    p.ops.push_back({aug_op_from_string(o.at("op")), o.at("p"), o.value("min", 0.0), o.value("max", 0.0)});
  validate(p);
}

}  // namespace hwssl
