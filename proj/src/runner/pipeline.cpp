#include <chrono>
#include <fstream>
#include <functional>

#include "hwssl/cssl/methods.hpp"
#include "hwssl/encoder.hpp"
#include "hwssl/gssl/pretrain.hpp"
#include "hwssl/runner.hpp"

namespace fs = std::filesystem;

namespace hwssl::runner {

Corpus build_corpus(const CorpusSpec& spec) {
  if (spec.synthetic()) return synthesize_corpus(spec.seed, spec.writers, spec.samples_per_writer, spec.image_size);
  if (!fs::exists(spec.path)) throw Error("corpus directory not found: " + spec.path);
  std::optional<fs::path> manifest;
  if (!spec.manifest.empty()) manifest = spec.manifest;
  return load_corpus(spec.path, manifest);
}

void write_synthetic_corpus(const CorpusSpec& spec, const fs::path& dir) {
  if (!spec.synthetic()) throw Error("synth: corpus spec is not synthetic");
  save_corpus(build_corpus(spec), dir);
}

namespace {

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  return nlohmann::json::parse(in);
}

/// Seeds and derived fields filled in so the snapshot describes exactly what ran.
ExperimentConfig resolve(ExperimentConfig c) {
  if (!c.split.seed) c.split.seed = c.seed;
  c.method.schedule.seed = c.seed;
  c.verifier.seed = c.seed;
  if (c.method.kind == "handcrafted") c.verifier.feature_source = c.method.name;
  if (c.method.kind == "supervised") c.verifier.feature_source = "supervised:" + c.method.name;
  if (c.method.kind == "gssl" || c.method.kind == "cssl")
    c.verifier.feature_source = "checkpoint:" + (c.method.checkpoint.empty() ? "pretrain/encoder.ckpt" : c.method.checkpoint);
  return c;
}

bool pretrains(const ExperimentConfig& c) { return c.method.kind == "gssl" || c.method.kind == "cssl"; }

std::vector<std::size_t> train_side_indices(const Corpus& corpus, WriterId cutoff) {
  std::set<WriterId> ws;
  for (auto w : corpus.writers())
    if (w <= cutoff) ws.insert(w);
  return corpus.indices_of(ws);
}

std::set<WriterId> writers_from(const nlohmann::json& j) { return j.get<std::set<WriterId>>(); }

class Pipeline {
 public:
  Pipeline(const ExperimentConfig& config, const RunOptions& options)
      : cfg_(resolve(config)), opt_(options), dir_(cfg_.output_dir) {
    validate(cfg_);
    fs::create_directories(dir_);
    const auto snapshot = nlohmann::json(cfg_);
    manifest_.config = snapshot;
    manifest_.config_hash = sha256_hex(snapshot.dump());
    if (fs::exists(dir_ / "manifest.json")) {
      try {
        previous_ = load_manifest(dir_ / "manifest.json");
      } catch (const std::exception&) {
        previous_.reset();
      }
    }
  }

  RunManifest run() {
    const std::vector<std::pair<std::string, std::function<void(StageRecord&)>>> stages{
        {"ingest", [this](StageRecord& r) { ingest(r); }},
        {"pretrain", [this](StageRecord& r) { pretrain(r); }},
        {"extract", [this](StageRecord& r) { extract(r); }},
        {"finetune", [this](StageRecord& r) { finetune(r); }},
        {"evaluate", [this](StageRecord& r) { evaluate(r); }},
    };
    for (const auto& [name, body] : stages) {
      const bool configured = std::find(cfg_.stages.begin(), cfg_.stages.end(), name) != cfg_.stages.end();
      const bool requested = opt_.only.empty() || std::find(opt_.only.begin(), opt_.only.end(), name) != opt_.only.end();
      if (!configured || !requested) {
        if (const auto* old = previous_record(name)) manifest_.stages.push_back(*old);
        continue;
      }
      StageRecord rec;
      rec.name = name;
      const auto t0 = std::chrono::steady_clock::now();
      try {
        rec.key = stage_key(name);
        if (!applicable(name)) {
          rec.status = "not_applicable";
        } else if (const auto* old = reusable(name, rec.key)) {
          rec = *old;
          rec.status = "cached";
        } else {
          fs::remove_all(dir_ / name);
          fs::create_directories(dir_ / name);
          body(rec);
          rec.status = "ran";
          rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
      } catch (const std::exception& e) {
        rec.status = "failed";
        rec.error = e.what();
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        manifest_.stages.push_back(rec);
        manifest_.failed_stage = name;
        save();
        throw StageFailed(name, e.what());
      }
      manifest_.stages.push_back(rec);
      save();
    }
    if (const auto* ev = manifest_.stage("evaluate"); ev && (ev->status == "ran" || ev->status == "cached"))
      manifest_.metrics = read_json(dir_ / "evaluate" / "metrics.json").get<MetricsRow>();
    save();
    return manifest_;
  }

 private:
  const StageRecord* previous_record(const std::string& name) const {
    return previous_ ? previous_->stage(name) : nullptr;
  }

  const StageRecord* reusable(const std::string& name, const std::string& key) const {
    if (opt_.force) return nullptr;
    const auto* old = previous_record(name);
    if (!old || old->key != key || (old->status != "ran" && old->status != "cached")) return nullptr;
    for (const auto& a : old->artifacts)
      if (!fs::exists(dir_ / a.path) || sha256_file(dir_ / a.path) != a.sha256) return nullptr;
    return old;
  }

  bool applicable(const std::string& stage) const {
    if (stage == "pretrain") return pretrains(cfg_) && cfg_.method.checkpoint.empty();
    if (stage == "extract") return cfg_.method.kind != "supervised";
    return true;
  }

  /// Finished record of an upstream stage (from this run or an earlier one).
  const StageRecord& upstream(const std::string& name) const {
    const auto* r = manifest_.stage(name);
    if (!r) r = previous_record(name);
    if (!r || (r->status != "ran" && r->status != "cached" && r->status != "not_applicable"))
      throw Error("upstream stage '" + name + "' has not completed");
    return *r;
  }

  std::string artifact_digest(const std::string& name) const {
    const auto& r = upstream(name);
    std::string s = r.name + ":" + r.key;
    for (const auto& a : r.artifacts) s += "|" + a.path + "=" + a.sha256;
    return s;
  }

  std::string stage_key(const std::string& stage) const {
    nlohmann::json k;
    k["stage"] = stage;
    k["version"] = kToolkitVersion;
    if (stage == "ingest") {
      k["corpus"] = cfg_.corpus;
      k["split"] = cfg_.split;
      k["seed"] = cfg_.seed;
    } else if (stage == "pretrain") {
      k["corpus"] = cfg_.corpus;
      k["cutoff"] = cfg_.split.cutoff;
      k["method"] = cfg_.method;
      if (cfg_.method.kind == "cssl") k["augment"] = cfg_.augment;
    } else if (stage == "extract") {
      k["ingest"] = artifact_digest("ingest");
      k["method"] = {{"kind", cfg_.method.kind}, {"name", cfg_.method.name}};
      if (pretrains(cfg_)) {
        if (cfg_.method.checkpoint.empty()) {
          k["pretrain"] = artifact_digest("pretrain");
        } else {
          if (!fs::exists(cfg_.method.checkpoint)) throw Error("checkpoint not found: " + cfg_.method.checkpoint);
          k["checkpoint"] = sha256_file(cfg_.method.checkpoint);
        }
      }
      k["report"] = cfg_.report;
      k["seed"] = cfg_.seed;
    } else if (stage == "finetune") {
      k["ingest"] = artifact_digest("ingest");
      if (cfg_.method.kind == "supervised")
        k["corpus"] = cfg_.corpus;
      else
        k["extract"] = artifact_digest("extract");
      k["verifier"] = cfg_.verifier;
    } else if (stage == "evaluate") {
      k["ingest"] = artifact_digest("ingest");
      k["finetune"] = artifact_digest("finetune");
      if (cfg_.method.kind != "supervised") k["extract"] = artifact_digest("extract");
      k["model"] = cfg_.label();
    }
    return sha256_hex(k.dump());
  }

  void add(StageRecord& rec, const fs::path& relative) const {
    rec.artifacts.push_back({relative.generic_string(), sha256_file(dir_ / relative)});
  }

  const Corpus& corpus() {
    if (!corpus_) corpus_ = build_corpus(cfg_.corpus);
    return *corpus_;
  }

  PairSet pairs(const std::string& which) const { return read_pairs_binary(dir_ / "ingest" / (which + "_pairs.bin")); }

  std::set<WriterId> test_writers() const {
    return writers_from(read_json(dir_ / "ingest" / "split.json").at("test_writers"));
  }

  void save() const { write_json(manifest_, dir_ / "manifest.json"); }

  // ---- stages ---------------------------------------------------------------

  void ingest(StageRecord& rec) {
    const auto& c = corpus();
    const auto seed = *cfg_.split.seed;
    auto split = split_unseen_writers(c, cfg_.split.cutoff, cfg_.split.fraction, seed);
    auto train = generate_pairs(c, split.train_writers, seed + 1);
    auto test = generate_pairs(c, split.test_writers, seed + 2);
    write_json({{"corpus", c.name()},
                {"samples", c.size()},
                {"cutoff", cfg_.split.cutoff},
                {"fraction", cfg_.split.fraction},
                {"seed", seed},
                {"train_writers", split.train_writers},
                {"test_writers", split.test_writers},
                {"train_pairs", train.pairs.size()},
                {"test_pairs", test.pairs.size()}},
               dir_ / "ingest" / "split.json");
    write_pairs_binary(train, dir_ / "ingest" / "train_pairs.bin");
    write_pairs_binary(test, dir_ / "ingest" / "test_pairs.bin");
    write_pairs_csv(train, c, dir_ / "ingest" / "train_pairs.csv");
    write_pairs_csv(test, c, dir_ / "ingest" / "test_pairs.csv");
    for (const char* f : {"split.json", "train_pairs.bin", "test_pairs.bin", "train_pairs.csv", "test_pairs.csv"})
      add(rec, fs::path("ingest") / f);
  }

  void pretrain(StageRecord& rec) {
    const auto& c = corpus();
    const auto& m = cfg_.method;
    PretrainOptions o;
    o.schedule = m.schedule;
    o.indices = train_side_indices(c, cfg_.split.cutoff);
    EncoderCheckpoint ck;
    try {
      if (m.kind == "gssl") {
        ck = gssl::pretrain_generative(c, m.name, m.params, o);
      } else {
        auto spec_json = m.params.value("spec", nlohmann::json::object());
        spec_json["method"] = m.name;
        auto spec = spec_json.get<cssl::MethodSpec>();
        auto ccfg = m.params.value("contrastive", nlohmann::json::object()).get<cssl::ContrastiveConfig>();
        auto policy = build_policy(m.name, cfg_.augment);
        ck = cssl::pretrain_contrastive(c, spec, policy, ccfg, o);
      }
    } catch (const TrainingDiverged& e) {
      save_checkpoint(e.last_good, dir_ / "pretrain" / "last_good.ckpt");
      add(rec, "pretrain/last_good.ckpt");
      throw;
    }
    save_checkpoint(ck, dir_ / "pretrain" / "encoder.ckpt");
    write_metric_history_csv(ck, dir_ / "pretrain" / "history.csv");
    add(rec, "pretrain/encoder.ckpt");
    add(rec, "pretrain/history.csv");
  }

  void extract(StageRecord& rec) {
    const auto& c = corpus();
    auto train = pairs("train"), test = pairs("test");
    std::set<SampleKey> keys;
    for (const auto* ps : {&train, &test})
      for (const auto& p : ps->pairs) {
        keys.insert(p.known);
        keys.insert(p.questioned);
      }
    const auto tw = test_writers();
    for (auto i : c.indices_of(tw)) keys.insert(c[i].key());
    std::vector<std::size_t> idx;
    for (const auto& k : keys) idx.push_back(c.index_of(k));

    std::vector<Embedding> rows;
    if (cfg_.method.kind == "handcrafted") {
      for (auto& [k, e] : verifier::compute_features(c, idx, cfg_.method.name)) rows.push_back(std::move(e));
    } else {
      const fs::path ck = cfg_.method.checkpoint.empty() ? dir_ / "pretrain" / "encoder.ckpt" : fs::path(cfg_.method.checkpoint);
      if (!fs::exists(ck)) throw Error("checkpoint not found: " + ck.string());
      rows = extract_embeddings(load_encoder(ck), c, idx);
    }
    write_embeddings(rows, dir_ / "extract" / "features.csv");
    add(rec, "extract/features.csv");

    std::vector<Embedding> probe;
    for (const auto& e : rows)
      if (tw.count(e.sample.writer_id)) probe.push_back(e);
    SeparationOptions so;
    so.compute_2d = cfg_.report.separation_2d;
    so.tsne_iterations = cfg_.report.tsne_iterations;
    auto sep = separation_report(probe, cfg_.seed, so);
    nlohmann::json j = {{"method", sep.method},
                        {"intra_nd", sep.intra_nd},
                        {"inter_nd", sep.inter_nd},
                        {"separation_nd", sep.separation_nd},
                        {"n_intra_pairs", sep.n_intra_pairs},
                        {"n_inter_pairs", sep.n_inter_pairs}};
    if (sep.has_2d) {
      j["intra_2d"] = sep.intra_2d;
      j["inter_2d"] = sep.inter_2d;
      j["separation_2d"] = sep.separation_2d;
    }
    write_json(j, dir_ / "extract" / "separation.json");
    add(rec, "extract/separation.json");

    if (cfg_.report.scatter) {
      auto xy = reduce_2d(to_matrix(probe), cfg_.seed, cfg_.report.tsne_iterations);
      std::ofstream out(dir_ / "extract" / "embedding_2d.csv");
      out << "writer_id,sample_index,x,y\n";
      char buf[64];
      for (std::size_t i = 0; i < probe.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f", xy(i, 0), xy(i, 1));
        out << probe[i].sample.writer_id << "," << probe[i].sample.sample_index << "," << buf << "\n";
      }
      out.close();
      add(rec, "extract/embedding_2d.csv");
    }
  }

  void finetune(StageRecord& rec) {
    auto train = pairs("train");
    verifier::VerifierModel model;
    if (cfg_.method.kind == "supervised")
      model = verifier::train_verifier(train, corpus(), cfg_.verifier);
    else
      model = verifier::train_verifier(train, verifier::to_feature_table(read_embeddings(dir_ / "extract" / "features.csv")),
                                       cfg_.verifier);
    verifier::save_verifier(model, dir_ / "finetune" / "verifier.ckpt");
    std::ofstream out(dir_ / "finetune" / "history.csv");
    out << "epoch,train_loss,val_f1\n";
    std::map<int, std::map<std::string, double>> by_epoch;
    for (const auto& p : model.history) by_epoch[p.epoch][p.name] = p.value;
    for (const auto& [e, v] : by_epoch) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f", e, v.count("train_loss") ? v.at("train_loss") : 0.0,
                    v.count("val_f1") ? v.at("val_f1") : 0.0);
      out << buf << "\n";
    }
    out.close();
    add(rec, "finetune/verifier.ckpt");
    add(rec, "finetune/history.csv");
  }

  void evaluate(StageRecord& rec) {
    auto test = pairs("test");
    auto model = verifier::load_verifier(dir_ / "finetune" / "verifier.ckpt");
    MetricsRow row;
    row.model = cfg_.label();
    row.test_pairs = test.pairs.size();
    if (cfg_.method.kind == "supervised") {
      row.verification = verifier::evaluate_verifier(model, test, corpus());
    } else {
      auto table = verifier::to_feature_table(read_embeddings(dir_ / "extract" / "features.csv"));
      row.verification = verifier::evaluate_verifier(model, test, table);
      auto sep = read_json(dir_ / "extract" / "separation.json");
      row.intra_nd = sep.at("intra_nd").get<double>();
      row.inter_nd = sep.at("inter_nd").get<double>();
      if (sep.contains("intra_2d")) {
        row.intra_2d = sep.at("intra_2d").get<double>();
        row.inter_2d = sep.at("inter_2d").get<double>();
      }
    }
    write_json(row, dir_ / "evaluate" / "metrics.json");
    std::ofstream out(dir_ / "evaluate" / "verification.csv");
    const auto& v = row.verification;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.4f,%.4f,%.4f,%.4f", v.accuracy, v.precision, v.recall, v.f1);
    out << "model,accuracy,precision,recall,f1\n" << row.model << "," << buf << "\n";
    out.close();
    add(rec, "evaluate/metrics.json");
    add(rec, "evaluate/verification.csv");
  }

  ExperimentConfig cfg_;
  RunOptions opt_;
  fs::path dir_;
  RunManifest manifest_;
  std::optional<RunManifest> previous_;
  std::optional<Corpus> corpus_;
};

}  // namespace

RunManifest run(const ExperimentConfig& config, const RunOptions& options) {
  for (const auto& s : options.only)
    if (std::find(kStages.begin(), kStages.end(), s) == kStages.end()) throw Error("unknown stage '" + s + "'");
  return Pipeline(config, options).run();
}

}  // namespace hwssl::runner
