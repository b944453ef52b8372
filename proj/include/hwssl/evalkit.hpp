#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hwssl/handcrafted.hpp"

namespace hwssl {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  bool operator==(const Matrix&) const = default;
};

Matrix to_matrix(const std::vector<Embedding>& embeddings);

double cosine(std::span<const double> a, std::span<const double> b);
double cosine(std::span<const float> a, std::span<const float> b);
inline double cosine(const Embedding& k, const Embedding& q) { return cosine(k.values, q.values); }

struct SeparationReport {
  double intra_nd = 0.0;
  double inter_nd = 0.0;
  double intra_2d = 0.0;
  double inter_2d = 0.0;
  double separation_nd = 0.0;
  double separation_2d = 0.0;
  std::size_t n_intra_pairs = 0;
  std::size_t n_inter_pairs = 0;
  std::string method;
  bool has_2d = false;
};

struct SeparationOptions {
  bool compute_2d = true;
  int tsne_iterations = 1000;
};

/// Mean cosine over every within-writer pair and over an equally sized,
/// seeded sample of cross-writer pairs, on the full embeddings and on their
/// 2-D reduction.
SeparationReport separation_report(const std::vector<Embedding>& embeddings, std::uint64_t seed,
                                   const SeparationOptions& options = {});

/// Exact t-SNE to two dimensions; perplexity min(30, (n-1)/3).
Matrix reduce_2d(const Matrix& points, std::uint64_t seed, int iterations = 1000);

/// Mean silhouette coefficient (Euclidean) of a labelled point set.
double silhouette_score(const Matrix& points, std::span<const int> labels);

struct VerificationMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t true_positive = 0;
  std::size_t false_positive = 0;
  std::size_t true_negative = 0;
  std::size_t false_negative = 0;
  // Set when precision, recall or F1 had a zero denominator and was reported as 0.
  bool undefined = false;

  std::size_t total() const { return true_positive + false_positive + true_negative + false_negative; }
};

/// Positive class is label 1 ("same writer").
VerificationMetrics classification_metrics(std::span<const int> labels, std::span<const int> predictions);

}  // namespace hwssl
