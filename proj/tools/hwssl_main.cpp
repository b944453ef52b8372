#include <iostream>

#include <CLI11.hpp>

#include "hwssl/runner.hpp"

namespace fs = std::filesystem;
using namespace hwssl;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string stage;
  bool force = false;
};

runner::ExperimentConfig load(const Common& c) {
  if (c.config.empty()) throw Error("--config is required");
  auto cfg = runner::load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  return cfg;
}

void print_summary(const runner::RunManifest& m, const std::string& dir) {
  for (const auto& s : m.stages) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-9s %-15s %8.1fs", s.name.c_str(), s.status.c_str(), s.seconds);
    std::cout << buf << "\n";
  }
  if (m.metrics) {
    const auto& r = *m.metrics;
    std::printf("%s: accuracy %.4f f1 %.4f", r.model.c_str(), r.verification.accuracy, r.verification.f1);
    if (r.separation_nd()) std::printf(" separation_nd %.4f", *r.separation_nd());
    std::printf("\n");
  }
  std::cout << "manifest: " << (fs::path(dir) / "manifest.json").string() << std::endl;
}

int run_stages(const Common& c, std::vector<std::string> only) {
  auto cfg = load(c);
  if (!c.stage.empty()) only = {c.stage};
  runner::RunOptions opt;
  opt.only = only;
  opt.force = c.force;
  print_summary(runner::run(cfg, opt), cfg.output_dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised handwriting verification toolkit"};
  app.set_version_flag("--version", std::string(runner::kToolkitVersion));
  app.require_subcommand(1);
  Common common;

  auto add_common = [&](CLI::App* sub, bool with_stage) {
    sub->add_option("--config", common.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "override the global seed");
    sub->add_option("--out", common.out, "override the output directory");
    sub->add_flag("--force", common.force, "ignore cached stage outputs");
    if (with_stage) sub->add_option("--stage", common.stage, "run only this stage")->check(CLI::IsMember(runner::kStages));
  };

  std::string current_stage = "cli";
  std::function<int()> action;

  for (const auto& stage : runner::kStages) {
    auto* sub = app.add_subcommand(stage, "run the " + stage + " stage");
    add_common(sub, false);
    sub->callback([&, stage] {
      current_stage = stage;
      action = [&, stage] { return run_stages(common, {stage}); };
    });
  }

  auto* run = app.add_subcommand("run", "run every configured stage in order");
  add_common(run, true);
  run->callback([&] {
    current_stage = common.stage.empty() ? "run" : common.stage;
    action = [&] { return run_stages(common, {}); };
  });

  std::vector<std::string> runs;
  bool scatter = false;
  auto* report = app.add_subcommand("report", "tabulate finished runs");
  report->add_option("runs", runs, "run directories or manifest files")->required();
  report->add_option("--out", common.out, "report directory")->required();
  report->add_flag("--scatter", scatter, "write 2-D scatter plots when available");
  report->callback([&] {
    current_stage = "report";
    action = [&] {
      std::vector<fs::path> paths(runs.begin(), runs.end());
      runner::ReportOptions o;
      o.scatter = scatter;
      for (const auto& p : runner::emit_report(paths, common.out, o)) std::cout << p.string() << "\n";
      return 0;
    };
  });

  runner::CorpusSpec synth_spec;
  auto* synth = app.add_subcommand("synth", "write a synthetic corpus as images plus manifest.csv");
  synth->add_option("--config", common.config, "take the corpus section from this config")->check(CLI::ExistingFile);
  synth->add_option("--seed", common.seed, "generator seed");
  synth->add_option("--writers", synth_spec.writers, "number of writers");
  synth->add_option("--samples", synth_spec.samples_per_writer, "samples per writer");
  synth->add_option("--size", synth_spec.image_size, "image side in pixels");
  synth->add_option("--out", common.out, "output directory")->required();
  synth->callback([&] {
    current_stage = "synth";
    action = [&] {
      auto spec = common.config.empty() ? synth_spec : runner::load_config(common.config).corpus;
      if (common.seed) spec.seed = *common.seed;
      runner::write_synthetic_corpus(spec, common.out);
      std::cout << "wrote " << spec.writers * spec.samples_per_writer << " samples to " << common.out << std::endl;
      return 0;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    return action ? action() : 0;
  } catch (const runner::StageFailed& e) {
    std::cerr << "stage " << e.what() << std::endl;
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "stage " << current_stage << " failed: " << e.what() << std::endl;
    return 1;
  }
}
