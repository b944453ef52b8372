#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "hwssl/corpus.hpp"

namespace hwssl {
namespace {

struct Point {
  double x = 0.0;
  double y = 0.0;
};
using Stroke = std::vector<Point>;

constexpr double kPi = std::numbers::pi;

Stroke ellipse(double cx, double cy, double rx, double ry, double from, double to, int steps = 28) {
  Stroke s;
  for (int i = 0; i <= steps; ++i) {
    const double t = from + (to - from) * i / steps;
    s.push_back({cx + rx * std::cos(t), cy + ry * std::sin(t)});
  }
  return s;
}

Stroke line(Point a, Point b, int steps = 6) {
  Stroke s;
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    s.push_back({a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t});
  }
  return s;
}

// Skeleton of the word "and" in x-height units (baseline y = 0, y up).
std::vector<Stroke> word_skeleton(const WriterStyle& st) {
  std::vector<Stroke> strokes;
  const double w = 0.9 * st.letter_width;
  const double round = std::clamp(st.curvature, 0.4, 1.6);
  const double gap = 0.25 * st.spacing;

  // a: open bowl plus a short stem with an exit tail
  double x0 = 0.0;
  strokes.push_back(ellipse(x0 + 0.5 * w, 0.5, 0.45 * w * round, 0.5, 0.35 * kPi, 2.15 * kPi));
  strokes.push_back(line({x0 + 0.95 * w, 1.0}, {x0 + 0.95 * w, 0.05}));
  strokes.push_back(line({x0 + 0.95 * w, 0.05}, {x0 + (1.05 + 0.2 * st.spacing) * w, 0.25 * round}, 3));

  // n: stem and arch
  x0 += w + gap;
  strokes.push_back(line({x0, 0.0}, {x0, 1.0}));
  {
    Stroke arch;
    const double arch_w = 0.8 * w;
    for (int i = 0; i <= 24; ++i) {
      const double t = kPi * i / 24.0;
      arch.push_back({x0 + arch_w * 0.5 * (1.0 - std::cos(t)),
                      0.62 + 0.38 * round * std::sin(t) + 0.1 * (1.0 - round) * t / kPi});
    }
    strokes.push_back(arch);
    strokes.push_back(line({x0 + arch_w, 0.62}, {x0 + arch_w, 0.0}));
  }

  // d: closed bowl and ascender
  x0 += 0.8 * w + gap;
  strokes.push_back(ellipse(x0 + 0.5 * w, 0.5, 0.45 * w * round, 0.5, 0.0, 2.0 * kPi, 32));
  const double top = 1.0 + 0.9 * st.ascender;
  strokes.push_back(line({x0 + 0.95 * w, top}, {x0 + 0.95 * w, 0.0}, 10));
  return strokes;
}

double segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
  return std::sqrt(ex * ex + ey * ey);
}

double perturb(std::mt19937_64& rng, double value, double rel) {
  std::normal_distribution<double> n(0.0, rel);
  return value * (1.0 + n(rng));
}

}  // namespace

WriterStyle sample_writer_style(std::uint64_t seed, WriterId writer) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + writer);
  auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  WriterStyle s;
  s.slant = u(-0.45, 0.45);
  s.stroke_width = u(1.0, 3.4);
  s.curvature = u(0.55, 1.45);
  s.baseline_jitter = u(0.0, 0.25);
  s.letter_width = u(0.7, 1.3);
  s.letter_height = u(0.75, 1.25);
  s.spacing = u(0.4, 1.8);
  s.ascender = u(0.5, 1.3);
  s.ink = u(0.75, 1.0);
  return s;
}

SyntheticRender render_synthetic(const WriterStyle& writer, std::uint64_t sample_seed, int image_size) {
  if (image_size <= 0) throw Error("image size must be positive");
  std::mt19937_64 rng(sample_seed);
  WriterStyle st = writer;
  st.slant = writer.slant + std::normal_distribution<double>(0.0, 0.04)(rng);
  st.stroke_width = perturb(rng, writer.stroke_width, 0.06);
  st.curvature = perturb(rng, writer.curvature, 0.05);
  st.letter_width = perturb(rng, writer.letter_width, 0.05);
  st.letter_height = perturb(rng, writer.letter_height, 0.05);
  st.spacing = perturb(rng, writer.spacing, 0.08);
  st.ascender = perturb(rng, writer.ascender, 0.06);
  const double phase = std::uniform_real_distribution<double>(0.0, 2.0 * kPi)(rng);

  auto strokes = word_skeleton(st);
  // Slant, vertical scale and baseline wobble in word units.
  for (auto& s : strokes)
    for (auto& p : s) {
      p.y *= st.letter_height;
      p.y += st.baseline_jitter * std::sin(1.7 * p.x + phase);
      p.x += st.slant * p.y;
    }

  double min_x = 1e9, max_x = -1e9, min_y = 1e9, max_y = -1e9;
  for (const auto& s : strokes)
    for (const auto& p : s) {
      min_x = std::min(min_x, p.x), max_x = std::max(max_x, p.x);
      min_y = std::min(min_y, p.y), max_y = std::max(max_y, p.y);
    }
  const double px_scale = image_size / 64.0;
  const double width = st.stroke_width * px_scale;
  const double margin = 0.08 * image_size + width;
  const double avail = image_size - 2.0 * margin;
  const double scale = std::min(avail / (max_x - min_x), avail / (max_y - min_y)) * perturb(rng, 1.0, 0.04);
  std::uniform_real_distribution<double> shift(-0.05 * image_size, 0.05 * image_size);
  const double off_x = 0.5 * image_size - 0.5 * (max_x + min_x) * scale + shift(rng);
  const double off_y = 0.5 * image_size + 0.5 * (max_y + min_y) * scale + shift(rng);
  for (auto& s : strokes)
    for (auto& p : s) p = {off_x + p.x * scale, off_y - p.y * scale};

  std::vector<double> dist(static_cast<std::size_t>(image_size) * image_size, 1e9);
  const double reach = width / 2.0 + 1.0;
  for (const auto& s : strokes)
    for (std::size_t k = 0; k + 1 < s.size(); ++k) {
      const Point a = s[k], b = s[k + 1];
      const int x_lo = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - reach)));
      const int x_hi = std::min(image_size - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + reach)));
      const int y_lo = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - reach)));
      const int y_hi = std::min(image_size - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + reach)));
      for (int y = y_lo; y <= y_hi; ++y)
        for (int x = x_lo; x <= x_hi; ++x) {
          double& d = dist[static_cast<std::size_t>(y) * image_size + x];
          d = std::min(d, segment_distance({x + 0.5, y + 0.5}, a, b));
        }
    }

  SyntheticRender out;
  out.image = RawImage{image_size, image_size, 1, std::vector<std::uint8_t>(dist.size())};
  out.ink_mask.resize(dist.size());
  for (std::size_t i = 0; i < dist.size(); ++i) {
    const double coverage = std::clamp(width / 2.0 + 0.5 - dist[i], 0.0, 1.0);
    out.image.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * (1.0 - st.ink * coverage)));
    out.ink_mask[i] = dist[i] <= width / 2.0 ? 1 : 0;
  }
  return out;
}

Corpus synthesize_corpus(std::uint64_t seed, int n_writers, int samples_per_writer, int image_size) {
  if (n_writers < 2) throw Error("synthesize_corpus needs at least 2 writers");
  if (samples_per_writer < 2) throw Error("synthesize_corpus needs at least 2 samples per writer");
  if (image_size <= 0) throw Error("image size must be positive");
  std::vector<HandwritingSample> samples;
  samples.reserve(static_cast<std::size_t>(n_writers) * samples_per_writer);
  for (int w = 1; w <= n_writers; ++w) {
    const WriterStyle style = sample_writer_style(seed, static_cast<WriterId>(w));
    for (int s = 0; s < samples_per_writer; ++s) {
      const std::uint64_t sample_seed =
          seed * 0xD1B54A32D192ED03ULL + static_cast<std::uint64_t>(w) * 0x9E3779B97F4A7C15ULL + s;
      samples.push_back({static_cast<WriterId>(w), static_cast<std::uint32_t>(s),
                         render_synthetic(style, sample_seed, image_size).image, {}});
    }
  }
  return Corpus("synthetic-" + std::to_string(seed), std::move(samples));
}

}  // namespace hwssl
