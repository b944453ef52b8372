#include "hwssl/checkpoint.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace hwssl {

namespace {

constexpr char kMagic[4] = {'H', 'W', 'C', 'K'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

void put_blob(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_blob(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

}  // namespace

std::vector<double> EncoderCheckpoint::metric(const std::string& name) const {
  std::vector<double> out;
  for (const auto& m : metric_history)
    if (m.name == name) out.push_back(m.value);
  return out;
}

void save_checkpoint(const EncoderCheckpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json meta = {{"format_version", kCheckpointFormatVersion},
                         {"method", ckpt.method},
                         {"embed_dim", ckpt.embed_dim},
                         {"train_config", ckpt.train_config},
                         {"epoch", ckpt.epoch},
                         {"metric_history", nlohmann::json::array()}};
  for (const auto& m : ckpt.metric_history)
    meta["metric_history"].push_back({{"epoch", m.epoch}, {"name", m.name}, {"value", m.value}});
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointFormatVersion);
  put_blob(out, meta.dump());
  put_blob(out, ckpt.weights);
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

EncoderCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint not found: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || !std::equal(magic, magic + 4, kMagic)) throw Error("not a checkpoint file: " + path.string());
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointFormatVersion)
    throw Error("unsupported checkpoint format version " + std::to_string(version) + " in " + path.string());
  const auto meta = nlohmann::json::parse(get_blob(in));
  EncoderCheckpoint ckpt;
  ckpt.weights = get_blob(in);
  if (!in) throw Error("truncated checkpoint " + path.string());
  ckpt.method = meta.at("method");
  ckpt.embed_dim = meta.at("embed_dim");
  ckpt.train_config = meta.at("train_config");
  ckpt.epoch = meta.at("epoch");
  for (const auto& m : meta.at("metric_history")) ckpt.metric_history.push_back({m.at("epoch"), m.at("name"), m.at("value")});
  return ckpt;
}

void write_metric_history_csv(const EncoderCheckpoint& ckpt, const std::filesystem::path& path) {
  std::vector<std::string> names;
  std::map<int, std::map<std::string, double>> rows;
  for (const auto& m : ckpt.metric_history) {
    if (std::find(names.begin(), names.end(), m.name) == names.end()) names.push_back(m.name);
    rows[m.epoch][m.name] = m.value;
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  char buf[32];
  for (const auto& [epoch, values] : rows) {
    out << epoch;
    for (const auto& n : names) {
      out << ',';
      if (auto it = values.find(n); it != values.end()) {
        std::snprintf(buf, sizeof buf, "%.9g", it->second);
        out << buf;
      }
    }
    out << '\n';
  }
}

std::string serialize_module(const torch::nn::Module& module) {
  torch::serialize::OutputArchive archive;
  module.save(archive);
  std::ostringstream os;
  archive.save_to(os);
  return os.str();
}

void deserialize_module(torch::nn::Module& module, const std::string& bytes) {
  torch::serialize::InputArchive archive;
  std::istringstream is(bytes);
  archive.load_from(is);
  module.load(archive);
}

void to_json(nlohmann::json& j, const TrainSchedule& s) {
  j = {{"epochs", s.epochs}, {"batch_size", s.batch_size}, {"lr", s.lr}, {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, TrainSchedule& s) {
  s.epochs = j.value("epochs", 10);
  s.batch_size = j.value("batch_size", 256);
  s.lr = j.value("lr", 1e-3);
  s.seed = j.value("seed", std::uint64_t{0});
}

}  // namespace hwssl
