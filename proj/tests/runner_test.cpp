#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "hwssl/runner.hpp"

namespace fs = std::filesystem;
using namespace hwssl;
using namespace hwssl::runner;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("hwssl_runner_" + name);
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig tiny(const std::string& name, const std::string& kind, const std::string& method) {
  ExperimentConfig c;
  c.name = name;
  c.corpus.writers = 8;
  c.corpus.samples_per_writer = 4;
  c.split.cutoff = 5;
  c.split.fraction = 1.0;
  c.method.kind = kind;
  c.method.name = method;
  c.verifier.fc1 = 16;
  c.verifier.fc2 = 8;
  c.verifier.batch_size = 16;
  c.verifier.max_epochs = 3;
  c.report.tsne_iterations = 100;
  c.seed = 3;
  c.output_dir = scratch_dir(name).string();
  return c;
}

}  // namespace

TEST(Config, RoundTripsLosslessly) {
  auto c = tiny("rt", "cssl", "vicreg");
  c.method.params = {{"spec", {{"projection_head", {64, 64}}}}, {"contrastive", {{"base_lr", 0.3}}}};
  c.augment = {{"output_size", "64"}, {"hflip.p", "0"}};
  c.split.seed = 11;
  c.stages = {"ingest", "pretrain"};
  nlohmann::json j = c;
  auto back = j.get<ExperimentConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(back.augment, c.augment);

  ExperimentConfig disk = tiny("disk", "handcrafted", "hog");
  disk.corpus.path = "/data/and";
  disk.corpus.manifest = "/data/and/manifest.csv";
  auto p = fs::temp_directory_path() / "hwssl_runner_config.json";
  save_config(disk, p);
  EXPECT_EQ(nlohmann::json(load_config(p)), nlohmann::json(disk));
  fs::remove(p);
}

TEST(Config, ValidationAndRequiredSeed) {
  EXPECT_THROW(nlohmann::json({{"method", {{"kind", "handcrafted"}}}}).get<ExperimentConfig>(), Error);
  auto c = tiny("v", "handcrafted", "sift");
  EXPECT_THROW(validate(c), Error);
  c = tiny("v", "gssl", "vicreg");
  EXPECT_THROW(validate(c), Error);
  c = tiny("v", "cssl", "vicreg");
  c.stages = {"ingest", "train"};
  EXPECT_THROW(validate(c), Error);
  c = tiny("v", "handcrafted", "raw");
  c.split.fraction = 0.0;
  EXPECT_THROW(validate(c), Error);
  c = tiny("v", "handcrafted", "raw");
  c.method.checkpoint = "x.ckpt";
  EXPECT_THROW(validate(c), Error);
}

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Run, HandcraftedEndToEndIsIdempotent) {
  auto c = tiny("raw", "handcrafted", "raw");
  auto m = run(c);
  ASSERT_EQ(m.stages.size(), 5u);
  EXPECT_EQ(m.stage("pretrain")->status, "not_applicable");
  for (const char* s : {"ingest", "extract", "finetune", "evaluate"}) EXPECT_EQ(m.stage(s)->status, "ran") << s;
  ASSERT_TRUE(m.metrics.has_value());
  EXPECT_EQ(m.metrics->model, "raw");
  EXPECT_TRUE(m.metrics->intra_nd && m.metrics->intra_2d);
  EXPECT_EQ(m.metrics->verification.total(), m.metrics->test_pairs);
  EXPECT_EQ(m.version, "0.1.0");
  EXPECT_EQ(m.config_hash, sha256_hex(m.config.dump()));

  // every produced file is listed
  std::set<std::string> listed;
  for (const auto& s : m.stages)
    for (const auto& a : s.artifacts) listed.insert(a.path);
  for (const auto& e : fs::recursive_directory_iterator(c.output_dir)) {
    if (!e.is_regular_file()) continue;
    auto rel = fs::relative(e.path(), c.output_dir).generic_string();
    if (rel != "manifest.json") EXPECT_TRUE(listed.count(rel)) << rel;
  }

  auto again = run(c);
  for (const auto& s : again.stages)
    if (s.name != "pretrain") EXPECT_EQ(s.status, "cached") << s.name;
  EXPECT_EQ(nlohmann::json(*again.metrics), nlohmann::json(*m.metrics));
  EXPECT_EQ(load_manifest(c.output_dir).config_hash, m.config_hash);

  // a changed verifier section reruns finetune and evaluate only
  c.verifier.max_epochs = 2;
  auto third = run(c);
  EXPECT_EQ(third.stage("ingest")->status, "cached");
  EXPECT_EQ(third.stage("extract")->status, "cached");
  EXPECT_EQ(third.stage("finetune")->status, "ran");
  EXPECT_EQ(third.stage("evaluate")->status, "ran");
}

TEST(Run, SeedDeterminesMetrics) {
  auto a = tiny("seed_a", "handcrafted", "hog");
  auto b = tiny("seed_b", "handcrafted", "hog");
  b.name = a.name;
  auto ma = run(a), mb = run(b);
  EXPECT_EQ(nlohmann::json(*ma.metrics), nlohmann::json(*mb.metrics));
  EXPECT_EQ(slurp(fs::path(a.output_dir) / "extract/features.csv"), slurp(fs::path(b.output_dir) / "extract/features.csv"));
}

TEST(Run, SingleStagesAndUpstreamCheck) {
  auto c = tiny("stages", "handcrafted", "gsc");
  RunOptions only_extract;
  only_extract.only = {"extract"};
  try {
    run(c, only_extract);
    FAIL() << "expected StageFailed";
  } catch (const StageFailed& e) {
    EXPECT_EQ(e.stage, "extract");
  }
  RunOptions only_ingest;
  only_ingest.only = {"ingest"};
  auto m = run(c, only_ingest);
  EXPECT_EQ(m.stage("ingest")->status, "ran");
  EXPECT_FALSE(m.metrics.has_value());
  auto rest = run(c);
  EXPECT_EQ(rest.stage("ingest")->status, "cached");
  EXPECT_TRUE(rest.metrics.has_value());
}

TEST(Run, MissingCheckpointNamesPath) {
  auto c = tiny("missing", "cssl", "vicreg");
  c.method.checkpoint = "/nonexistent/dir/encoder.ckpt";
  try {
    run(c);
    FAIL() << "expected StageFailed";
  } catch (const StageFailed& e) {
    EXPECT_EQ(e.stage, "extract");
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/encoder.ckpt"), std::string::npos);
  }
  auto m = load_manifest(c.output_dir);
  EXPECT_EQ(m.failed_stage, "extract");
  EXPECT_EQ(m.stage("ingest")->status, "ran");
  EXPECT_EQ(m.stage("extract")->status, "failed");
}

TEST(Run, ContrastivePretrainingAndCheckpointReuse) {
  auto c = tiny("vicreg", "cssl", "vicreg");
  c.method.params = {{"spec", {{"projection_head", {32, 32}}}}, {"contrastive", {{"backbone", {{"width", 4}}}}}};
  c.method.schedule.epochs = 1;
  c.method.schedule.batch_size = 8;
  c.augment = {{"output_size", "64"}};
  auto m = run(c);
  EXPECT_EQ(m.stage("pretrain")->status, "ran");
  ASSERT_TRUE(m.metrics.has_value());
  EXPECT_EQ(m.config.at("verifier").at("feature_source"), "checkpoint:pretrain/encoder.ckpt");

  auto reuse = tiny("vicreg_reuse", "cssl", "vicreg");
  reuse.method.checkpoint = (fs::path(c.output_dir) / "pretrain/encoder.ckpt").string();
  auto r = run(reuse);
  EXPECT_EQ(r.stage("pretrain")->status, "not_applicable");
  EXPECT_EQ(slurp(fs::path(reuse.output_dir) / "extract/features.csv"), slurp(fs::path(c.output_dir) / "extract/features.csv"));
}

TEST(Run, GenerativeAndSupervisedKinds) {
  auto g = tiny("vae", "gssl", "vae");
  g.method.params = {{"latent", 16}, {"width", 4}, {"input", {{"size", 32}, {"channels", 1}}}};
  g.method.schedule.epochs = 1;
  g.method.schedule.batch_size = 8;
  EXPECT_TRUE(run(g).metrics.has_value());

  auto s = tiny("supervised", "supervised", "resnet18");
  s.verifier.resnet = {3, 4, 7};
  s.verifier.input = {32, 3};
  s.verifier.max_epochs = 1;
  auto m = run(s);
  EXPECT_EQ(m.stage("extract")->status, "not_applicable");
  ASSERT_TRUE(m.metrics.has_value());
  EXPECT_FALSE(m.metrics->intra_nd.has_value());
}

TEST(Report, SortedCsvAndByteIdenticalRegeneration) {
  auto a = tiny("rep_raw", "handcrafted", "raw");
  auto b = tiny("rep_hog", "handcrafted", "hog");
  a.report.scatter = b.report.scatter = true;
  auto ma = run(a), mb = run(b);
  auto out = scratch_dir("report");
  ReportOptions o;
  o.scatter = true;
  auto files = emit_report({a.output_dir, b.output_dir}, out, o);
  EXPECT_EQ(files.size(), 4u);

  std::istringstream csv(slurp(out / "results.csv"));
  std::string header, first, second;
  std::getline(csv, header);
  std::getline(csv, first);
  std::getline(csv, second);
  EXPECT_EQ(header, "model,intra_nd,inter_nd,intra_2d,inter_2d,accuracy");
  const double acc_raw = ma.metrics->verification.accuracy, acc_hog = mb.metrics->verification.accuracy;
  const std::string expected_first = acc_raw > acc_hog ? "rep_raw" : "rep_hog";  // ties break by name
  EXPECT_EQ(first.substr(0, first.find(',')), expected_first);
  EXPECT_NE(second.find(','), std::string::npos);
  EXPECT_NE(slurp(out / "results.txt").find("separation_nd"), std::string::npos);

  const auto csv1 = slurp(out / "results.csv"), txt1 = slurp(out / "results.txt");
  emit_report({b.output_dir, a.output_dir}, out, o);
  EXPECT_EQ(slurp(out / "results.csv"), csv1);
  EXPECT_EQ(slurp(out / "results.txt"), txt1);
  EXPECT_THROW(emit_report({}, out), Error);
}
