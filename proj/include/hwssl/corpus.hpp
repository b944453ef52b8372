#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hwssl/common.hpp"
#include "hwssl/imageops.hpp"

namespace hwssl {

struct HandwritingSample {
  WriterId writer_id = 0;
  std::uint32_t sample_index = 0;
  RawImage image;
  std::string source_path;  // empty for synthetic samples

  SampleKey key() const { return {writer_id, sample_index}; }
};

/// Immutable, ordered collection of samples (sorted by writer id, then sample index).
class Corpus {
 public:
  Corpus(std::string name, std::vector<HandwritingSample> samples);

  const std::string& name() const { return name_; }
  const std::vector<HandwritingSample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  const HandwritingSample& operator[](std::size_t i) const { return samples_[i]; }

  std::set<WriterId> writers() const;
  /// Position of `key` in samples(); throws when absent.
  std::size_t index_of(const SampleKey& key) const;
  /// Positions of all samples written by `writers`.
  std::vector<std::size_t> indices_of(const std::set<WriterId>& writers) const;
  /// Display path for a sample: its source path or "<writer>_<sample>".
  std::string path_of(const SampleKey& key) const;

 private:
  std::string name_;
  std::vector<HandwritingSample> samples_;
};

/// Load every image under `root`. Writer ids come from the optional CSV
/// manifest (`filename,writer_id,sample_index`, header required) or from
/// file names of the form `<writer>_<sample>.<ext>`.
Corpus load_corpus(const std::filesystem::path& root,
                   const std::optional<std::filesystem::path>& manifest = std::nullopt);

/// Decode a single image file into 8-bit gray or RGB.
RawImage read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const RawImage& image);

/// Write samples as `<writer>_<sample>.png` plus a manifest.csv.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);

struct WriterSplit {
  std::set<WriterId> train_writers;
  std::set<WriterId> test_writers;
  double train_fraction_of_train_writers = 1.0;
};

/// Writers above `train_writer_cutoff` form the test side; a seeded subset of
/// size ceil(fraction * eligible) of the remaining writers forms the train side.
WriterSplit split_unseen_writers(const Corpus& corpus, WriterId train_writer_cutoff,
                                 double train_fraction, std::uint64_t seed = 0);

struct Pair {
  SampleKey known;
  SampleKey questioned;
  int label = 0;  // 1 = same writer

  bool operator==(const Pair&) const = default;
};

struct PairSet {
  std::vector<Pair> pairs;
  std::set<WriterId> writers;

  std::size_t positives() const;
  std::size_t negatives() const { return pairs.size() - positives(); }
  /// Writers referenced by any pair.
  std::set<WriterId> referenced_writers() const;
};

/// All unordered within-writer pairs (label 1) plus an equal number of
/// cross-writer pairs drawn uniformly without replacement (label 0), shuffled.
PairSet generate_pairs(const Corpus& corpus, const std::set<WriterId>& writers, std::uint64_t seed);

void write_pairs_csv(const PairSet& pairs, const Corpus& corpus, const std::filesystem::path& path);

inline constexpr std::uint32_t kPairFormatVersion = 1;
void write_pairs_binary(const PairSet& pairs, const std::filesystem::path& path);
PairSet read_pairs_binary(const std::filesystem::path& path);

/// Per-writer rendering parameters of the synthetic generator.
struct WriterStyle {
  double slant = 0.0;         // horizontal shear per unit height
  double stroke_width = 2.0;  // pixels at 64 px scale
  double curvature = 1.0;     // bowl / arch roundness
  double baseline_jitter = 0.0;
  double letter_width = 1.0;
  double letter_height = 1.0;
  double spacing = 1.0;
  double ascender = 1.0;
  double ink = 0.9;  // darkness of the stroke core
};

WriterStyle sample_writer_style(std::uint64_t seed, WriterId writer);

struct SyntheticRender {
  RawImage image;
  std::vector<std::uint8_t> ink_mask;  // 1 where the stroke core covers the pixel centre
};

/// Render one "and" fragment for `style`, perturbed by `sample_seed`.
SyntheticRender render_synthetic(const WriterStyle& style, std::uint64_t sample_seed, int image_size);

Corpus synthesize_corpus(std::uint64_t seed, int n_writers, int samples_per_writer, int image_size);

}  // namespace hwssl
