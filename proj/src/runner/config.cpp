#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "hwssl/cssl/methods.hpp"
#include "hwssl/encoder.hpp"
#include "hwssl/runner.hpp"

namespace hwssl::runner {

void to_json(nlohmann::json& j, const CorpusSpec& c) {
  if (c.synthetic())
    j = {{"synthetic", {{"seed", c.seed}, {"writers", c.writers}, {"samples_per_writer", c.samples_per_writer},
                        {"image_size", c.image_size}}}};
  else
    j = {{"path", c.path}, {"manifest", c.manifest}};
}

void from_json(const nlohmann::json& j, CorpusSpec& c) {
  c = CorpusSpec{};
  if (j.contains("path")) {
    c.path = j.at("path").get<std::string>();
    c.manifest = j.value("manifest", std::string{});
    if (c.path.empty()) throw Error("config: corpus.path is empty");
    return;
  }
  const auto& s = j.contains("synthetic") ? j.at("synthetic") : j;
  c.seed = s.value("seed", c.seed);
  c.writers = s.value("writers", c.writers);
  c.samples_per_writer = s.value("samples_per_writer", c.samples_per_writer);
  c.image_size = s.value("image_size", c.image_size);
}

void to_json(nlohmann::json& j, const SplitSpec& c) {
  j = {{"cutoff", c.cutoff}, {"fraction", c.fraction}};
  j["seed"] = c.seed ? nlohmann::json(*c.seed) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, SplitSpec& c) {
  c = SplitSpec{};
  c.cutoff = j.value("cutoff", c.cutoff);
  c.fraction = j.value("fraction", c.fraction);
  if (j.contains("seed") && !j.at("seed").is_null()) c.seed = j.at("seed").get<std::uint64_t>();
}

void to_json(nlohmann::json& j, const MethodConfig& c) {
  j = {{"kind", c.kind}, {"name", c.name}, {"params", c.params}, {"schedule", c.schedule},
       {"checkpoint", c.checkpoint}};
}

void from_json(const nlohmann::json& j, MethodConfig& c) {
  c = MethodConfig{};
  c.kind = j.value("kind", c.kind);
  c.name = j.value("name", c.name);
  if (j.contains("params")) c.params = j.at("params");
  if (j.contains("schedule")) c.schedule = j.at("schedule").get<TrainSchedule>();
  c.checkpoint = j.value("checkpoint", c.checkpoint);
}

void to_json(nlohmann::json& j, const ReportSpec& c) {
  j = {{"separation_2d", c.separation_2d}, {"tsne_iterations", c.tsne_iterations}, {"scatter", c.scatter}};
}

void from_json(const nlohmann::json& j, ReportSpec& c) {
  c = ReportSpec{};
  c.separation_2d = j.value("separation_2d", c.separation_2d);
  c.tsne_iterations = j.value("tsne_iterations", c.tsne_iterations);
  c.scatter = j.value("scatter", c.scatter);
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"name", c.name},         {"corpus", c.corpus},     {"split", c.split},   {"method", c.method},
       {"augment", c.augment},   {"verifier", c.verifier}, {"report", c.report}, {"stages", c.stages},
       {"seed", c.seed},         {"output_dir", c.output_dir}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c = ExperimentConfig{};
  if (!j.contains("seed")) throw Error("config: seed is required");
  c.seed = j.at("seed").get<std::uint64_t>();
  c.name = j.value("name", c.name);
  if (j.contains("corpus")) c.corpus = j.at("corpus").get<CorpusSpec>();
  if (j.contains("split")) c.split = j.at("split").get<SplitSpec>();
  if (j.contains("method")) c.method = j.at("method").get<MethodConfig>();
  if (j.contains("augment"))
    for (auto& [k, v] : j.at("augment").items()) c.augment[k] = v.is_string() ? v.get<std::string>() : v.dump();
  if (j.contains("verifier")) c.verifier = j.at("verifier").get<verifier::VerifierConfig>();
  if (j.contains("report")) c.report = j.at("report").get<ReportSpec>();
  if (j.contains("stages")) c.stages = j.at("stages").get<std::vector<std::string>>();
  c.output_dir = j.value("output_dir", c.output_dir);
}

void validate(const ExperimentConfig& c) {
  const auto& m = c.method;
  const auto& n = m.name;
  if (m.kind == "handcrafted") {
    if (n != "gsc" && n != "hog" && n != "raw") throw Error("config: unknown handcrafted feature '" + n + "'");
  } else if (m.kind == "gssl") {
    if (!is_generative_method(n)) throw Error("config: unknown generative method '" + n + "'");
  } else if (m.kind == "cssl") {
    if (!is_contrastive_method(n)) throw Error("config: unknown contrastive method '" + n + "'");
  } else if (m.kind == "supervised") {
    if (n != "resnet18" && n != "vit") throw Error("config: unknown supervised backbone '" + n + "'");
  } else {
    throw Error("config: unknown method kind '" + m.kind + "'");
  }
  if (!m.checkpoint.empty() && m.kind != "gssl" && m.kind != "cssl")
    throw Error("config: only gssl and cssl methods take a checkpoint");
  if (!(c.split.fraction > 0.0 && c.split.fraction <= 1.0)) throw Error("config: split.fraction must be in (0, 1]");
  if (c.corpus.synthetic() && (c.corpus.writers < 2 || c.corpus.samples_per_writer < 2))
    throw Error("config: synthetic corpus needs at least 2 writers with 2 samples");
  if (c.stages.empty()) throw Error("config: no stages selected");
  for (const auto& s : c.stages)
    if (std::find(kStages.begin(), kStages.end(), s) == kStages.end()) throw Error("config: unknown stage '" + s + "'");
  if (c.output_dir.empty()) throw Error("config: output_dir is empty");
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("config " + path.string() + ": " + e.what());
  }
  auto c = j.get<ExperimentConfig>();
  validate(c);
  return c;
}

void save_config(const ExperimentConfig& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << nlohmann::json(c).dump(2) << "\n";
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned i = 0; i < len; ++i) {
    s += hex[digest[i] >> 4];
    s += hex[digest[i] & 15];
  }
  return s;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> optional_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

std::optional<double> MetricsRow::separation_nd() const {
  if (!intra_nd || !inter_nd) return std::nullopt;
  return *intra_nd - *inter_nd;
}

std::optional<double> MetricsRow::separation_2d() const {
  if (!intra_2d || !inter_2d) return std::nullopt;
  return *intra_2d - *inter_2d;
}

void to_json(nlohmann::json& j, const MetricsRow& r) {
  const auto& v = r.verification;
  j = {{"model", r.model},
       {"intra_nd", optional_json(r.intra_nd)},
       {"inter_nd", optional_json(r.inter_nd)},
       {"intra_2d", optional_json(r.intra_2d)},
       {"inter_2d", optional_json(r.inter_2d)},
       {"separation_nd", optional_json(r.separation_nd())},
       {"separation_2d", optional_json(r.separation_2d())},
       {"accuracy", v.accuracy},
       {"precision", v.precision},
       {"recall", v.recall},
       {"f1", v.f1},
       {"confusion", {{"tp", v.true_positive}, {"fp", v.false_positive}, {"tn", v.true_negative}, {"fn", v.false_negative}}},
       {"undefined", v.undefined},
       {"test_pairs", r.test_pairs}};
}

void from_json(const nlohmann::json& j, MetricsRow& r) {
  r = MetricsRow{};
  r.model = j.at("model").get<std::string>();
  r.intra_nd = optional_from(j, "intra_nd");
  r.inter_nd = optional_from(j, "inter_nd");
  r.intra_2d = optional_from(j, "intra_2d");
  r.inter_2d = optional_from(j, "inter_2d");
  auto& v = r.verification;
  v.accuracy = j.at("accuracy").get<double>();
  v.precision = j.at("precision").get<double>();
  v.recall = j.at("recall").get<double>();
  v.f1 = j.at("f1").get<double>();
  const auto& c = j.at("confusion");
  v.true_positive = c.at("tp").get<std::size_t>();
  v.false_positive = c.at("fp").get<std::size_t>();
  v.true_negative = c.at("tn").get<std::size_t>();
  v.false_negative = c.at("fn").get<std::size_t>();
  v.undefined = j.value("undefined", false);
  r.test_pairs = j.value("test_pairs", std::size_t{0});
}

void to_json(nlohmann::json& j, const StageRecord& s) {
  nlohmann::json arts = nlohmann::json::array();
  for (const auto& a : s.artifacts) arts.push_back({{"path", a.path}, {"sha256", a.sha256}});
  j = {{"name", s.name}, {"key", s.key}, {"status", s.status}, {"seconds", s.seconds}, {"artifacts", arts}};
  if (!s.error.empty()) j["error"] = s.error;
}

void from_json(const nlohmann::json& j, StageRecord& s) {
  s = StageRecord{};
  s.name = j.at("name").get<std::string>();
  s.key = j.value("key", std::string{});
  s.status = j.value("status", std::string{});
  s.seconds = j.value("seconds", 0.0);
  for (const auto& a : j.value("artifacts", nlohmann::json::array()))
    s.artifacts.push_back({a.at("path").get<std::string>(), a.at("sha256").get<std::string>()});
  s.error = j.value("error", std::string{});
}

void to_json(nlohmann::json& j, const RunManifest& m) {
  j = {{"version", m.version}, {"config_hash", m.config_hash}, {"config", m.config}, {"stages", m.stages}};
  j["metrics"] = m.metrics ? nlohmann::json(*m.metrics) : nlohmann::json(nullptr);
  if (!m.failed_stage.empty()) j["failed_stage"] = m.failed_stage;
}

void from_json(const nlohmann::json& j, RunManifest& m) {
  m = RunManifest{};
  m.version = j.value("version", m.version);
  m.config_hash = j.value("config_hash", std::string{});
  m.config = j.value("config", nlohmann::json::object());
  m.stages = j.value("stages", std::vector<StageRecord>{});
  if (j.contains("metrics") && !j.at("metrics").is_null()) m.metrics = j.at("metrics").get<MetricsRow>();
  m.failed_stage = j.value("failed_stage", std::string{});
}

const StageRecord* RunManifest::stage(const std::string& name) const {
  for (const auto& s : stages)
    if (s.name == name) return &s;
  return nullptr;
}

RunManifest load_manifest(const std::filesystem::path& path) {
  auto p = std::filesystem::is_directory(path) ? path / "manifest.json" : path;
  std::ifstream in(p);
  if (!in) throw Error("cannot read manifest " + p.string());
  return nlohmann::json::parse(in).get<RunManifest>();
}

}  // namespace hwssl::runner
