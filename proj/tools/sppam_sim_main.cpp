#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "sppam_sim/harness.hpp"
#include "sppam_sim/trace.hpp"

namespace hn = sppam_sim::harness;
namespace tr = sppam_sim::trace;

namespace {

void write_or_print(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + out_path);
  out << text;
}

hn::Format parse_format(const std::string& s) {
  const auto f = hn::format_from_string(s);
  if (!f) throw CLI::ValidationError("--format", "expected text or csv");
  return *f;
}

void apply_overrides(hn::RunConfig& cfg, const std::string& trace_path,
                     const std::string& prefetcher, int64_t seed) {
  if (!trace_path.empty()) cfg.trace.file = trace_path;
  if (!prefetcher.empty()) {
    cfg.prefetcher = prefetcher;
    cfg.label.clear();
  }
  if (seed >= 0) {
    cfg.seed = static_cast<uint64_t>(seed);
    cfg.trace.generator.seed = cfg.seed;
    cfg.trace.perturbation.seed = cfg.seed + 1;
  }
  if (cfg.label.empty()) cfg.label = cfg.derived_label();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trace-driven L2-prefetcher simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string trace_path;
  std::string prefetcher;
  std::string format_name = "text";
  std::string out_path;
  std::string out_dir = "reports";
  int64_t seed = -1;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  bool use_default_suite = false;

  auto* gen = app.add_subcommand("gen", "Generate a binary trace file");
  gen->add_option("--config", config_path, "Run config JSON holding the generator spec")
      ->required();
  gen->add_option("--out", out_path, "Output trace path")->required();
  gen->add_option("--seed", seed, "Override the run seed");

  auto* run = app.add_subcommand("run", "Run a single config and emit its report");
  run->add_option("--config", config_path, "Run config JSON")->required();
  run->add_option("--trace", trace_path, "Override: read this trace file");
  run->add_option("--prefetcher", prefetcher, "Override the prefetcher name");
  run->add_option("--seed", seed, "Override the run seed");
  run->add_option("--format", format_name, "Report format: text|csv");
  run->add_option("--out", out_path, "Report path (stdout when omitted)");

  auto* suite = app.add_subcommand("suite", "Run a list of configs");
  suite->add_option("--config", config_path, "JSON array of run configs");
  suite->add_flag("--default", use_default_suite, "Run the built-in default suite");
  suite->add_option("--out", out_dir, "Directory for per-run reports");
  suite->add_option("--format", format_name, "Report format: text|csv");
  suite->add_option("--jobs", jobs, "Parallel workers");
  suite->add_option("--seed", seed, "Override every run seed");

  auto* cmp = app.add_subcommand("compare", "Compare prefetchers over a shared trace set");
  cmp->add_option("--config", config_path, "JSON array of run configs")->required();
  cmp->add_option("--format", format_name, "Table format: text|csv");
  cmp->add_option("--out", out_path, "Table path (stdout when omitted)");
  cmp->add_option("--jobs", jobs, "Parallel workers");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      hn::RunConfig cfg = hn::load_run_config(config_path);
      apply_overrides(cfg, "", "", seed);
      tr::GeneratorSpec spec = cfg.trace.generator;
      if (spec.length == 0) spec.length = cfg.warmup_events + cfg.measured_events;
      auto src = tr::make_generator(spec);
      const auto& p = cfg.trace.perturbation;
      std::unique_ptr<tr::EventSource> stream = std::move(src);
      if (p.shuffle_window > 1 || p.decimation_rate > 0.0)
        stream = tr::make_perturbed(std::move(stream), p);
      tr::Trace t;
      while (auto ev = stream->next()) t.push_back(*ev);
      tr::write_trace(t, out_path);
      std::cout << "wrote " << t.size() << " events to " << out_path << "\n";
      return 0;
    }

    if (run->parsed()) {
      hn::RunConfig cfg = hn::load_run_config(config_path);
      apply_overrides(cfg, trace_path, prefetcher, seed);
      const auto report = hn::run(cfg);
      write_or_print(hn::emit(report, parse_format(format_name)), out_path);
      return 0;
    }

    if (suite->parsed()) {
      std::vector<hn::RunConfig> cfgs;
      if (use_default_suite) {
        cfgs = hn::default_suite();
      } else if (!config_path.empty()) {
        cfgs = hn::load_run_configs(config_path);
      } else {
        std::cerr << "suite: provide --config or --default\n";
        return 1;
      }
      if (seed >= 0) {
        for (auto& c : cfgs) apply_overrides(c, "", "", seed);
      }
      const auto fmt = parse_format(format_name);
      const auto reports = hn::run_suite(cfgs, jobs);
      std::filesystem::create_directories(out_dir);
      std::string summary = hn::csv_header() + "\n";
      for (size_t i = 0; i < reports.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "run_%03zu.%s", i,
                      fmt == hn::Format::csv ? "csv" : "json");
        const auto path = std::filesystem::path(out_dir) / name;
        std::ofstream out(path, std::ios::binary);
        out << hn::emit(reports[i], fmt);
        const std::string csv = hn::emit(reports[i], hn::Format::csv);
        summary += csv.substr(csv.find('\n') + 1);
      }
      std::ofstream sum(std::filesystem::path(out_dir) / "summary.csv", std::ios::binary);
      sum << summary;
      std::cout << "wrote " << reports.size() << " reports to " << out_dir << "\n";
      return 0;
    }

    if (cmp->parsed()) {
      const auto cfgs = hn::load_run_configs(config_path);
      const auto table = hn::compare(cfgs, jobs);
      write_or_print(hn::emit(table, parse_format(format_name)), out_path);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
