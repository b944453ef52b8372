#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hwssl/corpus.hpp"
#include "hwssl/evalkit.hpp"
#include "hwssl/training.hpp"
#include "hwssl/verifier.hpp"

namespace hwssl::runner {

inline constexpr const char* kToolkitVersion = "0.1.0";

/// Either a directory of images or the synthetic generator.
struct CorpusSpec {
  std::string path;      // empty = synthetic
  std::string manifest;  // optional CSV manifest for `path`
  std::uint64_t seed = 7;
  int writers = 50;
  int samples_per_writer = 10;
  int image_size = 64;

  bool synthetic() const { return path.empty(); }
};

struct SplitSpec {
  WriterId cutoff = 35;
  double fraction = 0.1;
  std::optional<std::uint64_t> seed;  // defaults to the global seed
};

/// kind: handcrafted (gsc, hog, raw), gssl (vae, aim, mae, flow, bigan),
/// cssl (simclr, moco, byol, simsiam, fastsiam, barlowtwins, vicreg, dino)
/// or supervised (resnet18, vit).
struct MethodConfig {
  std::string kind = "handcrafted";
  std::string name = "raw";
  // gssl: model config; cssl: {"spec": MethodSpec fields, "contrastive": ContrastiveConfig fields}
  nlohmann::json params = nlohmann::json::object();
  TrainSchedule schedule;
  std::string checkpoint;  // reuse a pretrained encoder instead of training one
};

struct ReportSpec {
  bool separation_2d = true;
  int tsne_iterations = 1000;
  bool scatter = false;
};

inline const std::vector<std::string> kStages{"ingest", "pretrain", "extract", "finetune", "evaluate"};

struct ExperimentConfig {
  std::string name;  // report label; defaults to the method name
  CorpusSpec corpus;
  SplitSpec split;
  MethodConfig method;
  std::map<std::string, std::string> augment;  // policy overrides for cssl methods
  verifier::VerifierConfig verifier;
  ReportSpec report;
  std::vector<std::string> stages = kStages;
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";

  std::string label() const { return name.empty() ? method.name : name; }
};

void to_json(nlohmann::json& j, const CorpusSpec& c);
void from_json(const nlohmann::json& j, CorpusSpec& c);
void to_json(nlohmann::json& j, const SplitSpec& c);
void from_json(const nlohmann::json& j, SplitSpec& c);
void to_json(nlohmann::json& j, const MethodConfig& c);
void from_json(const nlohmann::json& j, MethodConfig& c);
void to_json(nlohmann::json& j, const ReportSpec& c);
void from_json(const nlohmann::json& j, ReportSpec& c);
void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// Throws on an unknown kind, method, stage or an invalid split.
void validate(const ExperimentConfig& c);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& c, const std::filesystem::path& path);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// One row of the results table; separation columns are absent for supervised runs.
struct MetricsRow {
  std::string model;
  std::optional<double> intra_nd, inter_nd, intra_2d, inter_2d;
  VerificationMetrics verification;
  std::size_t test_pairs = 0;

  std::optional<double> separation_nd() const;
  std::optional<double> separation_2d() const;
};

void to_json(nlohmann::json& j, const MetricsRow& r);
void from_json(const nlohmann::json& j, MetricsRow& r);

struct Artifact {
  std::string path;  // relative to the run directory
  std::string sha256;
  bool operator==(const Artifact&) const = default;
};

struct StageRecord {
  std::string name;
  std::string key;     // hash of the stage config and upstream artifact hashes
  std::string status;  // ran | cached | not_applicable | failed
  double seconds = 0.0;
  std::vector<Artifact> artifacts;
  std::string error;
};

struct RunManifest {
  std::string version = kToolkitVersion;
  std::string config_hash;
  nlohmann::json config;
  std::vector<StageRecord> stages;
  std::optional<MetricsRow> metrics;
  std::string failed_stage;

  const StageRecord* stage(const std::string& name) const;
};

void to_json(nlohmann::json& j, const StageRecord& s);
void from_json(const nlohmann::json& j, StageRecord& s);
void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);

RunManifest load_manifest(const std::filesystem::path& path);

/// Raised when a stage fails; the partial manifest is already on disk.
class StageFailed : public Error {
 public:
  StageFailed(std::string stage, const std::string& what) : Error(stage + ": " + what), stage(std::move(stage)) {}
  std::string stage;
};

struct RunOptions {
  std::vector<std::string> only;  // restrict to these stages (still in pipeline order)
  bool force = false;             // ignore cached stage outputs
};

/// Execute the selected stages in order inside config.output_dir; cached stages are skipped
/// when their key matches and every recorded artifact still hashes the same.
RunManifest run(const ExperimentConfig& config, const RunOptions& options = {});

/// Rebuild the configured corpus (synthetic or from disk).
Corpus build_corpus(const CorpusSpec& spec);

/// Write `synthetic` corpus images plus manifest.csv into `dir`.
void write_synthetic_corpus(const CorpusSpec& spec, const std::filesystem::path& dir);

struct ReportOptions {
  bool scatter = false;
};

/// results.csv (model,intra_nd,inter_nd,intra_2d,inter_2d,accuracy sorted by accuracy, best first),
/// results.txt with separation columns and, optionally, one scatter SVG per run.
std::vector<std::filesystem::path> emit_report(const std::vector<std::filesystem::path>& manifests,
                                               const std::filesystem::path& out_dir,
                                               const ReportOptions& options = {});

}  // namespace hwssl::runner
