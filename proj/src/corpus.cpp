#include "hwssl/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <unordered_set>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace fs = std::filesystem;

namespace hwssl {

Corpus::Corpus(std::string name, std::vector<HandwritingSample> samples)
    : name_(std::move(name)), samples_(std::move(samples)) {
  if (samples_.empty()) throw Error("no samples found");
  std::sort(samples_.begin(), samples_.end(),
            [](const auto& a, const auto& b) { return a.key() < b.key(); });
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto& s = samples_[i];
    if (s.writer_id < 1) throw Error("writer id must be >= 1 (" + s.source_path + ")");
    if (s.image.empty()) throw Error("empty image for sample " + to_string(s.key()));
    if (i > 0 && samples_[i - 1].key() == s.key())
      throw Error("duplicate (writer_id, sample_index) " + to_string(s.key()));
  }
}

std::set<WriterId> Corpus::writers() const {
  std::set<WriterId> out;
  for (const auto& s : samples_) out.insert(s.writer_id);
  return out;
}

std::size_t Corpus::index_of(const SampleKey& key) const {
  auto it = std::lower_bound(samples_.begin(), samples_.end(), key,
                             [](const HandwritingSample& s, const SampleKey& k) { return s.key() < k; });
  if (it == samples_.end() || it->key() != key) throw Error("sample not in corpus: " + to_string(key));
  return static_cast<std::size_t>(it - samples_.begin());
}

std::vector<std::size_t> Corpus::indices_of(const std::set<WriterId>& writers) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples_.size(); ++i)
    if (writers.contains(samples_[i].writer_id)) out.push_back(i);
  return out;
}

std::string Corpus::path_of(const SampleKey& key) const {
  const auto& s = samples_[index_of(key)];
  return s.source_path.empty() ? to_string(key) : s.source_path;
}

// ---------------------------------------------------------------------------
// I/O

RawImage read_image(const fs::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw Error("undecodable image: " + path.string());
  if (m.depth() != CV_8U) {
    cv::Mat scaled;
    double max_value = m.depth() == CV_16U ? 65535.0 : 1.0;
    m.convertTo(scaled, CV_8U, 255.0 / max_value);
    m = scaled;
  }
  if (m.channels() == 4) cv::cvtColor(m, m, cv::COLOR_BGRA2RGB);
  else if (m.channels() == 3) cv::cvtColor(m, m, cv::COLOR_BGR2RGB);
  else if (m.channels() != 1) throw Error("unsupported channel count in " + path.string());

  RawImage out{m.rows, m.cols, m.channels(), {}};
  out.pixels.resize(static_cast<std::size_t>(m.rows) * m.cols * m.channels());
  for (int y = 0; y < m.rows; ++y)
    std::copy_n(m.ptr<std::uint8_t>(y), static_cast<std::size_t>(m.cols) * m.channels(),
                out.pixels.data() + static_cast<std::size_t>(y) * m.cols * m.channels());
  return out;
}

void write_image(const fs::path& path, const RawImage& image) {
  cv::Mat m(image.height, image.width, image.channels == 3 ? CV_8UC3 : CV_8UC1,
            const_cast<std::uint8_t*>(image.pixels.data()));
  cv::Mat out = m;
  if (image.channels == 3) cv::cvtColor(m, out, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), out)) throw Error("cannot write image: " + path.string());
}

namespace {

bool is_image_file(const fs::path& p) {
  static const std::set<std::string> exts{".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp", ".pgm", ".pbm"};
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return exts.contains(ext);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

std::optional<SampleKey> key_from_filename(const fs::path& p) {
  const std::string stem = p.stem().string();
  const auto sep = stem.find('_');
  if (sep == std::string::npos) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto w = std::stoul(stem.substr(0, sep), &used);
    if (used != sep) return std::nullopt;
    const std::string rest = stem.substr(sep + 1);
    const auto s = std::stoul(rest, &used);
    if (used != rest.size()) return std::nullopt;
    return SampleKey{static_cast<WriterId>(w), static_cast<std::uint32_t>(s)};
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

Corpus load_corpus(const fs::path& root, const std::optional<fs::path>& manifest) {
  if (!fs::is_directory(root)) throw Error("corpus directory does not exist: " + root.string());

  std::vector<std::pair<fs::path, SampleKey>> entries;
  if (manifest) {
    std::ifstream in(*manifest);
    if (!in) throw Error("cannot open manifest: " + manifest->string());
    std::string line;
    if (!std::getline(in, line)) throw Error("manifest is empty: " + manifest->string());
    const auto header = split_csv_line(line);
    if (header != std::vector<std::string>{"filename", "writer_id", "sample_index"})
      throw Error("manifest header must be filename,writer_id,sample_index");
    std::size_t row = 1;
    while (std::getline(in, line)) {
      ++row;
      if (line.empty() || line == "\r") continue;
      const auto cells = split_csv_line(line);
      if (cells.size() != 3) throw Error("malformed manifest row " + std::to_string(row));
      try {
        entries.emplace_back(root / cells[0], SampleKey{static_cast<WriterId>(std::stoul(cells[1])),
                                                        static_cast<std::uint32_t>(std::stoul(cells[2]))});
      } catch (const std::exception&) {
        throw Error("malformed manifest row " + std::to_string(row));
      }
    }
  } else {
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (!e.is_regular_file() || !is_image_file(e.path())) continue;
      auto key = key_from_filename(e.path());
      if (!key) throw Error("cannot recover writer id from file name: " + e.path().string());
      entries.emplace_back(e.path(), *key);
    }
  }
  if (entries.empty()) throw Error("no samples found");

  std::vector<HandwritingSample> samples;
  samples.reserve(entries.size());
  for (auto& [path, key] : entries)
    samples.push_back({key.writer_id, key.sample_index, read_image(path), path.string()});
  return Corpus(root.filename().string(), std::move(samples));
}

void save_corpus(const Corpus& corpus, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv");
  manifest << "filename,writer_id,sample_index\n";
  for (const auto& s : corpus.samples()) {
    const std::string name = to_string(s.key()) + ".png";
    write_image(dir / name, s.image);
    manifest << name << ',' << s.writer_id << ',' << s.sample_index << '\n';
  }
}

// ---------------------------------------------------------------------------
// Splits and pairs

WriterSplit split_unseen_writers(const Corpus& corpus, WriterId cutoff, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("train fraction must lie in (0, 1]");
  const auto writers = corpus.writers();
  std::vector<WriterId> eligible;
  WriterSplit split;
  split.train_fraction_of_train_writers = fraction;
  for (WriterId w : writers) {
    if (w <= cutoff) eligible.push_back(w);
    else split.test_writers.insert(w);
  }
  if (eligible.empty() || split.test_writers.empty())
    throw Error("cutoff " + std::to_string(cutoff) + " outside observed writer range [" +
                std::to_string(*writers.begin()) + ", " + std::to_string(*writers.rbegin()) + ")");

  // The 1e-9 guard keeps e.g. 0.1 * 1200 from rounding up to 121.
  const auto count = static_cast<std::size_t>(
      std::max(1.0, std::ceil(fraction * static_cast<double>(eligible.size()) - 1e-9)));
  if (count < eligible.size()) {
    std::mt19937_64 rng(seed);
    std::shuffle(eligible.begin(), eligible.end(), rng);
    eligible.resize(count);
  }
  split.train_writers.insert(eligible.begin(), eligible.end());
  return split;
}

std::size_t PairSet::positives() const {
  return static_cast<std::size_t>(std::count_if(pairs.begin(), pairs.end(), [](const Pair& p) { return p.label == 1; }));
}

std::set<WriterId> PairSet::referenced_writers() const {
  std::set<WriterId> out;
  for (const auto& p : pairs) {
    out.insert(p.known.writer_id);
    out.insert(p.questioned.writer_id);
  }
  return out;
}

PairSet generate_pairs(const Corpus& corpus, const std::set<WriterId>& writers, std::uint64_t seed) {
  std::map<WriterId, std::vector<SampleKey>> by_writer;
  for (const auto& s : corpus.samples())
    if (writers.contains(s.writer_id)) by_writer[s.writer_id].push_back(s.key());
  if (by_writer.size() < 2) throw Error("generate_pairs needs at least 2 writers with samples");

  PairSet out;
  out.writers = writers;
  for (const auto& [w, keys] : by_writer)
    for (std::size_t i = 0; i < keys.size(); ++i)
      for (std::size_t j = i + 1; j < keys.size(); ++j) out.pairs.push_back({keys[i], keys[j], 1});
  const std::size_t needed = out.pairs.size();
  if (needed == 0) throw Error("generate_pairs: no writer has 2 samples");

  std::vector<SampleKey> all;
  std::uint64_t same = 0;
  for (const auto& [w, keys] : by_writer) {
    all.insert(all.end(), keys.begin(), keys.end());
    same += keys.size() * (keys.size() - 1) / 2;
  }
  const std::uint64_t n = all.size();
  const std::uint64_t total = n * (n - 1) / 2;
  const std::uint64_t cross = total - same;
  if (cross < needed)
    throw Error("insufficient cross-writer combinations to balance " + std::to_string(needed) + " pairs");

  std::mt19937_64 rng(seed);
  if (cross <= 4'000'000) {
    // Enumerate and take a uniform prefix of a partial Fisher-Yates shuffle.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> candidates;
    candidates.reserve(cross);
    for (std::uint32_t i = 0; i < n; ++i)
      for (std::uint32_t j = i + 1; j < n; ++j)
        if (all[i].writer_id != all[j].writer_id) candidates.emplace_back(i, j);
    for (std::size_t k = 0; k < needed; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, candidates.size() - 1);
      std::swap(candidates[k], candidates[pick(rng)]);
      out.pairs.push_back({all[candidates[k].first], all[candidates[k].second], 0});
    }
  } else {
    // Rejection sampling over unordered index pairs; uniform over cross pairs.
    std::unordered_set<std::uint64_t> taken;
    std::uniform_int_distribution<std::uint64_t> pick(0, n - 1);
    while (taken.size() < needed) {
      std::uint64_t i = pick(rng), j = pick(rng);
      if (i == j || all[i].writer_id == all[j].writer_id) continue;
      if (i > j) std::swap(i, j);
      if (!taken.insert(i * n + j).second) continue;
      out.pairs.push_back({all[i], all[j], 0});
    }
  }
  std::shuffle(out.pairs.begin(), out.pairs.end(), rng);
  return out;
}

void write_pairs_csv(const PairSet& pairs, const Corpus& corpus, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "known_path,questioned_path,label\n";
  for (const auto& p : pairs.pairs)
    out << corpus.path_of(p.known) << ',' << corpus.path_of(p.questioned) << ',' << p.label << '\n';
}

namespace {

constexpr char kPairMagic[4] = {'H', 'W', 'P', 'S'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw Error("truncated pair manifest");
  return v;
}

}  // namespace

void write_pairs_binary(const PairSet& pairs, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(kPairMagic, 4);
  put<std::uint32_t>(out, kPairFormatVersion);
  put<std::uint64_t>(out, pairs.writers.size());
  for (WriterId w : pairs.writers) put<std::uint32_t>(out, w);
  put<std::uint64_t>(out, pairs.pairs.size());
  for (const auto& p : pairs.pairs) {
    put<std::uint32_t>(out, p.known.writer_id);
    put<std::uint32_t>(out, p.known.sample_index);
    put<std::uint32_t>(out, p.questioned.writer_id);
    put<std::uint32_t>(out, p.questioned.sample_index);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(p.label));
  }
}

PairSet read_pairs_binary(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kPairMagic)) throw Error("not a pair manifest: " + path.string());
  const auto version = get<std::uint32_t>(in);
  if (version != kPairFormatVersion) throw Error("unsupported pair manifest version " + std::to_string(version));
  PairSet out;
  const auto n_writers = get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n_writers; ++i) out.writers.insert(get<std::uint32_t>(in));
  const auto n = get<std::uint64_t>(in);
  out.pairs.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    Pair p;
    p.known.writer_id = get<std::uint32_t>(in);
    p.known.sample_index = get<std::uint32_t>(in);
    p.questioned.writer_id = get<std::uint32_t>(in);
    p.questioned.sample_index = get<std::uint32_t>(in);
    p.label = get<std::uint8_t>(in);
    out.pairs.push_back(p);
  }
  return out;
}

}  // namespace hwssl
