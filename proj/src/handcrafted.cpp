#include "hwssl/handcrafted.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace hwssl {
namespace {

constexpr int kSize = 64;
constexpr int kGrid = 4;
constexpr int kCell = kSize / kGrid;

void require_shape(const ProcessedImage& image, const char* what) {
  if (image.channels != 1 || image.height != kSize || image.width != kSize)
    throw Error(std::string(what) + ": expected a 64x64 single-channel image");
}

bool in_set(int dir, std::initializer_list<int> set) {
  return dir >= 0 && std::find(set.begin(), set.end(), dir) != set.end();
}

}  // namespace

int gsc_direction(const ProcessedImage& binary, int y, int x) {
  auto px = [&](int yy, int xx) -> double {
    if (yy < 0 || xx < 0 || yy >= binary.height || xx >= binary.width) return 0.0;
    return binary.at(0, yy, xx);
  };
  const double gx = (px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1)) -
                    (px(y - 1, x - 1) + 2 * px(y, x - 1) + px(y + 1, x - 1));
  // Image rows grow downwards; flip so that positive gy points up.
  const double gy = (px(y - 1, x - 1) + 2 * px(y - 1, x) + px(y - 1, x + 1)) -
                    (px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1));
  if (gx == 0.0 && gy == 0.0) return -1;
  double deg = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
  if (deg < 0.0) deg += 360.0;
  return static_cast<int>(std::floor((deg + 15.0) / 30.0)) % 12;
}

Embedding gsc_features(const ProcessedImage& image, const GscThresholds& th) {
  require_shape(image, "gsc_features");
  for (float v : image.pixels)
    if (v != 0.0f && v != 1.0f) throw Error("gsc_features: input must be binary");

  std::array<std::array<int, kSize>, kSize> dir{};
  std::array<std::array<bool, kSize>, kSize> ink{};
  for (int y = 0; y < kSize; ++y)
    for (int x = 0; x < kSize; ++x) {
      dir[y][x] = gsc_direction(image, y, x);
      ink[y][x] = image.at(0, y, x) == 1.0f;
    }
  auto d = [&](int y, int x) { return (y < 0 || x < 0 || y >= kSize || x >= kSize) ? -1 : dir[y][x]; };

  // Ray maps: does a ray from (y, x) in the given direction meet ink?
  std::array<std::array<bool, kSize>, kSize> up{}, down{}, left{}, right{};
  for (int x = 0; x < kSize; ++x) {
    for (int y = 1; y < kSize; ++y) up[y][x] = up[y - 1][x] || ink[y - 1][x];
    for (int y = kSize - 2; y >= 0; --y) down[y][x] = down[y + 1][x] || ink[y + 1][x];
  }
  for (int y = 0; y < kSize; ++y) {
    for (int x = 1; x < kSize; ++x) left[y][x] = left[y][x - 1] || ink[y][x - 1];
    for (int x = kSize - 2; x >= 0; --x) right[y][x] = right[y][x + 1] || ink[y][x + 1];
  }

  const std::initializer_list<int> kUp{2, 3, 4}, kDown{8, 9, 10}, kRight{11, 0, 1}, kLeft{5, 6, 7};

  Embedding out;
  out.method = "gsc";
  out.values.assign(kGscDim, 0.0f);
  for (int cy = 0; cy < kGrid; ++cy)
    for (int cx = 0; cx < kGrid; ++cx) {
      std::array<int, 12> grad{}, rule{};
      std::array<int, 5> concave{};
      int density = 0, h_run_best = 0, v_run_best = 0;
      for (int y = cy * kCell; y < (cy + 1) * kCell; ++y) {
        int run = 0;
        for (int x = cx * kCell; x < (cx + 1) * kCell; ++x) {
          run = ink[y][x] ? run + 1 : 0;
          h_run_best = std::max(h_run_best, run);
          if (ink[y][x]) ++density;
          else {
            const bool u = up[y][x], dn = down[y][x], l = left[y][x], r = right[y][x];
            if (!u && dn && l && r) ++concave[0];
            if (u && !dn && l && r) ++concave[1];
            if (u && dn && !l && r) ++concave[2];
            if (u && dn && l && !r) ++concave[3];
            if (u && dn && l && r) ++concave[4];
          }
          const int p = dir[y][x];
          if (p < 0) continue;
          ++grad[p];
          rule[0] += in_set(p, kUp) && in_set(d(y, x + 1), kUp) && in_set(d(y, x - 1), kUp);
          rule[1] += in_set(p, kDown) && in_set(d(y, x + 1), kDown) && in_set(d(y, x - 1), kDown);
          rule[2] += in_set(p, kRight) && in_set(d(y - 1, x), kRight) && in_set(d(y + 1, x), kRight);
          rule[3] += in_set(p, kLeft) && in_set(d(y - 1, x), kLeft) && in_set(d(y + 1, x), kLeft);
          rule[4] += in_set(p, {4, 5}) && in_set(d(y - 1, x + 1), {4, 5}) && in_set(d(y + 1, x - 1), {4, 5});
          rule[5] += in_set(p, {10, 11}) && in_set(d(y - 1, x + 1), {10, 11}) && in_set(d(y + 1, x - 1), {10, 11});
          rule[6] += in_set(p, {1, 2}) && in_set(d(y - 1, x - 1), {1, 2}) && in_set(d(y + 1, x + 1), {1, 2});
          rule[7] += in_set(p, {7, 8}) && in_set(d(y - 1, x - 1), {7, 8}) && in_set(d(y + 1, x + 1), {7, 8});
          rule[8] += in_set(d(y, x + 1), kUp) && in_set(d(y + 1, x), kRight);
          rule[9] += in_set(d(y, x - 1), kUp) && in_set(d(y + 1, x), kLeft);
          rule[10] += in_set(d(y, x + 1), kDown) && in_set(d(y - 1, x), kRight);
          rule[11] += in_set(d(y, x - 1), kDown) && in_set(d(y - 1, x), kLeft);
        }
      }
      for (int x = cx * kCell; x < (cx + 1) * kCell; ++x) {
        int run = 0;
        for (int y = cy * kCell; y < (cy + 1) * kCell; ++y) {
          run = ink[y][x] ? run + 1 : 0;
          v_run_best = std::max(v_run_best, run);
        }
      }

      const int cell = cy * kGrid + cx;
      float* g = out.values.data() + cell * 12;
      float* s = out.values.data() + 192 + cell * 12;
      float* c = out.values.data() + 384 + cell * 8;
      for (int k = 0; k < 12; ++k) {
        g[k] = grad[k] >= th.gradient_min_count ? 1.0f : 0.0f;
        s[k] = rule[k] >= th.structural_min_count ? 1.0f : 0.0f;
      }
      c[0] = density >= th.density_min_fraction * kCell * kCell ? 1.0f : 0.0f;
      c[1] = h_run_best >= th.stroke_min_run ? 1.0f : 0.0f;
      c[2] = v_run_best >= th.stroke_min_run ? 1.0f : 0.0f;
      for (int k = 0; k < 5; ++k) c[3 + k] = concave[k] >= th.concavity_min_count ? 1.0f : 0.0f;
    }
  return out;
}

Embedding hog_features(const ProcessedImage& image) {
  require_shape(image, "hog_features");
  constexpr int kHogCell = 8, kCells = kSize / kHogCell, kBins = 9, kBlocks = kCells - 1;

  std::vector<double> hist(static_cast<std::size_t>(kCells) * kCells * kBins, 0.0);
  auto px = [&](int y, int x) -> double {
    return image.at(0, std::clamp(y, 0, kSize - 1), std::clamp(x, 0, kSize - 1));
  };
  for (int y = 0; y < kSize; ++y)
    for (int x = 0; x < kSize; ++x) {
      const double gx = px(y, x + 1) - px(y, x - 1);
      const double gy = px(y + 1, x) - px(y - 1, x);
      const double mag = std::sqrt(gx * gx + gy * gy);
      if (mag == 0.0) continue;
      double deg = std::atan2(gy, gx) * 180.0 / std::numbers::pi;
      if (deg < 0.0) deg += 180.0;
      if (deg >= 180.0) deg -= 180.0;
      const int bin = std::min(kBins - 1, static_cast<int>(deg / 20.0));
      hist[((y / kHogCell) * kCells + x / kHogCell) * kBins + bin] += mag;
    }

  Embedding out;
  out.method = "hog";
  out.values.reserve(kHogDim);
  std::array<double, 4 * kBins> block{};
  for (int by = 0; by < kBlocks; ++by)
    for (int bx = 0; bx < kBlocks; ++bx) {
      int k = 0;
      for (int cy = by; cy < by + 2; ++cy)
        for (int cx = bx; cx < bx + 2; ++cx)
          for (int b = 0; b < kBins; ++b) block[k++] = hist[(cy * kCells + cx) * kBins + b];
      double norm = kHogEpsilon * kHogEpsilon;
      for (double v : block) norm += v * v;
      norm = std::sqrt(norm);
      for (double& v : block) v = std::min(v / norm, kHogClip);
      norm = kHogEpsilon * kHogEpsilon;
      for (double v : block) norm += v * v;
      norm = std::sqrt(norm);
      for (double v : block) out.values.push_back(static_cast<float>(v / norm));
    }
  return out;
}

Embedding raw_pixel_features(const ProcessedImage& image) {
  require_shape(image, "raw_pixel_features");
  return {image.pixels, "raw", {}};
}

Embedding handcrafted_features(const std::string& method, const RawImage& image) {
  auto gray = grayscale(resize_pad(image, 64));
  if (method == "gsc") return gsc_features(binarize(gray));
  if (method == "hog") return hog_features(gray);
  if (method == "raw") return raw_pixel_features(gray);
  throw Error("unknown handcrafted feature: " + method);
}

// ---------------------------------------------------------------------------

void write_embeddings(const std::vector<Embedding>& embeddings, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "#hwssl-embeddings format_version=" << kEmbeddingFormatVersion << '\n';
  const std::size_t dim = embeddings.empty() ? 0 : embeddings.front().dim();
  out << "writer_id,sample_index,method,dim";
  for (std::size_t i = 0; i < dim; ++i) out << ",v" << i;
  out << '\n';
  char buf[32];
  for (const auto& e : embeddings) {
    if (e.dim() != dim) throw Error("write_embeddings: mixed dimensions");
    out << e.sample.writer_id << ',' << e.sample.sample_index << ',' << e.method << ',' << e.dim();
    for (float v : e.values) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
      out << ',' << buf;
    }
    out << '\n';
  }
}

std::vector<Embedding> read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  const std::string tag = "#hwssl-embeddings format_version=";
  if (line.rfind(tag, 0) != 0) throw Error("not an embedding file: " + path.string());
  if (std::stoi(line.substr(tag.size())) != kEmbeddingFormatVersion)
    throw Error("unsupported embedding format version in " + path.string());
  std::getline(in, line);  // header

  std::vector<Embedding> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    Embedding e;
    std::getline(row, cell, ',');
    e.sample.writer_id = static_cast<WriterId>(std::stoul(cell));
    std::getline(row, cell, ',');
    e.sample.sample_index = static_cast<std::uint32_t>(std::stoul(cell));
    std::getline(row, e.method, ',');
    std::getline(row, cell, ',');
    const auto dim = std::stoul(cell);
    e.values.reserve(dim);
    while (std::getline(row, cell, ',')) e.values.push_back(std::strtof(cell.c_str(), nullptr));
    if (e.values.size() != dim) throw Error("embedding row has wrong length in " + path.string());
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace hwssl
