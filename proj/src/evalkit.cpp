#include "hwssl/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <unordered_set>

namespace hwssl {

Matrix to_matrix(const std::vector<Embedding>& embeddings) {
  if (embeddings.empty()) return {};
  Matrix m(embeddings.size(), embeddings.front().dim());
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].dim() != m.cols) throw Error("to_matrix: mixed embedding dimensions");
    std::copy(embeddings[i].values.begin(), embeddings[i].values.end(), m.data.begin() + i * m.cols);
  }
  return m;
}

namespace {

template <typename T>
double cosine_impl(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw Error("cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error("undefined cosine: zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

}  // namespace

double cosine(std::span<const double> a, std::span<const double> b) { return cosine_impl(a, b); }
double cosine(std::span<const float> a, std::span<const float> b) { return cosine_impl(a, b); }

SeparationReport separation_report(const std::vector<Embedding>& embeddings, std::uint64_t seed,
                                   const SeparationOptions& options) {
  std::map<WriterId, std::vector<std::size_t>> by_writer;
  for (std::size_t i = 0; i < embeddings.size(); ++i) by_writer[embeddings[i].sample.writer_id].push_back(i);
  if (by_writer.size() < 2) throw Error("separation_report needs at least 2 writers");
  for (const auto& [w, idx] : by_writer)
    if (idx.size() < 2) throw Error("separation_report needs at least 2 embeddings per writer");

  std::vector<std::pair<std::size_t, std::size_t>> intra, inter;
  for (const auto& [w, idx] : by_writer)
    for (std::size_t a = 0; a < idx.size(); ++a)
      for (std::size_t b = a + 1; b < idx.size(); ++b) intra.emplace_back(idx[a], idx[b]);

  const std::size_t n = embeddings.size();
  const std::size_t total = n * (n - 1) / 2;
  const std::size_t cross = total - intra.size();
  const std::size_t wanted = std::min(intra.size(), cross);
  std::mt19937_64 rng(seed);
  if (cross <= 4'000'000) {
    std::vector<std::pair<std::size_t, std::size_t>> all;
    all.reserve(cross);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (embeddings[i].sample.writer_id != embeddings[j].sample.writer_id) all.emplace_back(i, j);
    for (std::size_t k = 0; k < wanted; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, all.size() - 1);
      std::swap(all[k], all[pick(rng)]);
    }
    all.resize(wanted);
    inter = std::move(all);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::unordered_set<std::uint64_t> seen;
    while (inter.size() < wanted) {
      std::size_t i = pick(rng), j = pick(rng);
      if (embeddings[i].sample.writer_id == embeddings[j].sample.writer_id) continue;
      if (i > j) std::swap(i, j);
      const std::uint64_t code = static_cast<std::uint64_t>(i) * n + j;
      if (!seen.insert(code).second) continue;
      inter.emplace_back(i, j);
    }
  }

  auto mean_cos = [](const auto& pairs, auto&& cos_of) {
    double s = 0.0;
    for (const auto& [i, j] : pairs) s += cos_of(i, j);
    return s / static_cast<double>(pairs.size());
  };

  SeparationReport r;
  r.method = embeddings.front().method;
  r.n_intra_pairs = intra.size();
  r.n_inter_pairs = inter.size();
  auto cos_nd = [&](std::size_t i, std::size_t j) { return cosine(embeddings[i], embeddings[j]); };
  r.intra_nd = mean_cos(intra, cos_nd);
  r.inter_nd = mean_cos(inter, cos_nd);
  r.separation_nd = r.intra_nd - r.inter_nd;

  if (options.compute_2d && n >= 3) {
    const Matrix reduced = reduce_2d(to_matrix(embeddings), seed, options.tsne_iterations);
    auto cos_2d = [&](std::size_t i, std::size_t j) {
      const auto a = reduced.row(i), b = reduced.row(j);
      const double na = std::hypot(a[0], a[1]), nb = std::hypot(b[0], b[1]);
      if (na == 0.0 || nb == 0.0) return 0.0;
      return std::clamp((a[0] * b[0] + a[1] * b[1]) / (na * nb), -1.0, 1.0);
    };
    r.intra_2d = mean_cos(intra, cos_2d);
    r.inter_2d = mean_cos(inter, cos_2d);
    r.separation_2d = r.intra_2d - r.inter_2d;
    r.has_2d = true;
  }
  return r;
}

// ---------------------------------------------------------------------------
// t-SNE

namespace {

// Row-conditional affinities with entropy matched to log(perplexity).
std::vector<double> conditional_affinities(const std::vector<double>& sq_dist, std::size_t n, double perplexity) {
  std::vector<double> p(n * n, 0.0);
  const double target = std::log(perplexity);
  for (std::size_t i = 0; i < n; ++i) {
    double beta = 1.0, lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
    const double* d = sq_dist.data() + i * n;
    double* row = p.data() + i * n;
    for (int iter = 0; iter < 200; ++iter) {
      double min_d = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) min_d = std::min(min_d, d[j]);
      double sum = 0.0, weighted = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        row[j] = j == i ? 0.0 : std::exp(-beta * (d[j] - min_d));
        sum += row[j];
        weighted += row[j] * (d[j] - min_d);
      }
      const double entropy = std::log(sum) + beta * weighted / sum;
      for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
      const double diff = entropy - target;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = std::isinf(lo) ? beta / 2.0 : 0.5 * (beta + lo);
      }
    }
  }
  return p;
}

}  // namespace

Matrix reduce_2d(const Matrix& points, std::uint64_t seed, int iterations) {
  const std::size_t n = points.rows;
  if (n < 3) throw Error("reduce_2d needs at least 3 points");
  const double perplexity = std::min(30.0, (static_cast<double>(n) - 1.0) / 3.0);

  std::vector<double> sq(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < points.cols; ++k) {
        const double t = points(i, k) - points(j, k);
        s += t * t;
      }
      sq[i * n + j] = sq[j * n + i] = s;
    }
  // unit max distance
  double max_sq = 0.0;
  for (double v : sq) max_sq = std::max(max_sq, v);
  if (max_sq > 0.0)
    for (double& v : sq) v /= max_sq;

  std::vector<double> p = conditional_affinities(sq, n, perplexity);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = std::max((p[i * n + j] + p[j * n + i]) / (2.0 * n), 1e-12);
      p[i * n + j] = p[j * n + i] = v;
    }

  Matrix y(n, 2);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> init(0.0, 1e-4);
  for (double& v : y.data) v = init(rng);

  std::vector<double> update(n * 2, 0.0), gains(n * 2, 1.0), grad(n * 2), num(n * n);
  constexpr double kLearningRate = 200.0;
  constexpr int kExaggerationIters = 250;
  for (int it = 0; it < iterations; ++it) {
    const double exaggeration = it < kExaggerationIters ? 12.0 : 1.0;
    const double momentum = it < kExaggerationIters ? 0.5 : 0.8;
    double sum_num = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      num[i * n + i] = 0.0;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
        const double v = 1.0 / (1.0 + dx * dx + dy * dy);
        num[i * n + j] = num[j * n + i] = v;
        sum_num += 2.0 * v;
      }
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double w = (exaggeration * p[i * n + j] - num[i * n + j] / sum_num) * num[i * n + j];
        grad[2 * i] += 4.0 * w * (y(i, 0) - y(j, 0));
        grad[2 * i + 1] += 4.0 * w * (y(i, 1) - y(j, 1));
      }
    for (std::size_t k = 0; k < n * 2; ++k) {
      gains[k] = (grad[k] > 0.0) != (update[k] > 0.0) ? gains[k] + 0.2 : gains[k] * 0.8;
      gains[k] = std::max(gains[k], 0.01);
      update[k] = momentum * update[k] - kLearningRate * gains[k] * grad[k];
      y.data[k] += update[k];
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) mx += y(i, 0), my += y(i, 1);
    mx /= n, my /= n;
    for (std::size_t i = 0; i < n; ++i) y(i, 0) -= mx, y(i, 1) -= my;
  }
  return y;
}

double silhouette_score(const Matrix& points, std::span<const int> labels) {
  if (labels.size() != points.rows) throw Error("silhouette_score: label count mismatch");
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  if (counts.size() < 2) throw Error("silhouette_score needs at least 2 clusters");
  double total = 0.0;
  for (std::size_t i = 0; i < points.rows; ++i) {
    std::map<int, double> sums;
    for (std::size_t j = 0; j < points.rows; ++j) {
      if (i == j) continue;
      double s = 0.0;
      for (std::size_t k = 0; k < points.cols; ++k) s += (points(i, k) - points(j, k)) * (points(i, k) - points(j, k));
      sums[labels[j]] += std::sqrt(s);
    }
    const std::size_t own = counts[labels[i]];
    if (own < 2) continue;
    const double a = sums[labels[i]] / static_cast<double>(own - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [l, c] : counts)
      if (l != labels[i]) b = std::min(b, sums[l] / static_cast<double>(c));
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(points.rows);
}

VerificationMetrics classification_metrics(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size()) throw Error("classification_metrics: length mismatch");
  if (labels.empty()) throw Error("classification_metrics: no samples");
  VerificationMetrics m;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool y = labels[i] == 1, p = predictions[i] == 1;
    if (y && p) ++m.true_positive;
    else if (!y && p) ++m.false_positive;
    else if (!y && !p) ++m.true_negative;
    else ++m.false_negative;
  }
  auto ratio = [&](std::size_t num, std::size_t den) {
    if (den == 0) {
      m.undefined = true;
      return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
  };
  m.accuracy = ratio(m.true_positive + m.true_negative, labels.size());
  m.precision = ratio(m.true_positive, m.true_positive + m.false_positive);
  m.recall = ratio(m.true_positive, m.true_positive + m.false_negative);
  if (m.precision + m.recall > 0.0) m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  else m.undefined = true;
  return m;
}

}  // namespace hwssl
