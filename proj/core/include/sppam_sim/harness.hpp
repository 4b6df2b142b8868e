#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sppam_sim/memsys.hpp"
#include "sppam_sim/sppam.hpp"
#include "sppam_sim/trace.hpp"

namespace sppam_sim::harness {

struct TraceSourceConfig {
  std::optional<std::string> file;  // takes precedence over the generator
  trace::GeneratorSpec generator{};
  trace::PerturbationSpec perturbation{};
};

struct RunConfig {
  std::string label;  // derived when empty
  uint64_t seed = 1;
  uint64_t warmup_events = 1'000'000;
  uint64_t measured_events = 9'000'000;
  std::string prefetcher = "sppam";
  TraceSourceConfig trace{};
  memsys::HierarchyConfig caches{};
  sppam::SppamConfig sppam_cfg{};

  std::string derived_label() const;
};

struct MetricsReport {
  RunConfig config;

  uint64_t demand_accesses = 0;
  uint64_t loads = 0;
  uint64_t stores = 0;
  uint64_t prefetch_hints = 0;
  uint64_t l1_hits = 0, l1_misses = 0;
  uint64_t l2_hits = 0, l2_misses = 0;
  uint64_t llc_hits = 0, llc_misses = 0;

  uint64_t prefetches_issued = 0;
  uint64_t issued_l2 = 0, issued_llc = 0;
  uint64_t prefetches_dropped = 0;
  uint64_t prefetches_filtered = 0;
  uint64_t prefetches_rejected = 0;
  uint64_t prefetches_useful = 0;
  uint64_t useful_l2 = 0, useful_llc = 0;
  uint64_t prefetches_useless = 0;
  uint64_t useless_l2 = 0, useless_llc = 0;
  uint64_t prefetches_late = 0;
  uint64_t resident_at_end = 0;
  uint64_t resident_l2 = 0, resident_llc = 0;
  uint64_t inflight_at_end = 0;

  uint64_t dram_transactions = 0;
  uint64_t stall_cycle_proxy = 0;
  uint64_t baseline_l2_demand_misses = 0;
  double coverage = 0.0;  // covered L2 demand misses / baseline misses
  double accuracy = 0.0;  // useful / (useful + useless)

  uint64_t cross_region_violations = 0;
  uint64_t duplicate_violations = 0;

  uint64_t warmup_events_applied = 0;
  uint64_t measured_events_applied = 0;

  friend bool operator==(const MetricsReport&, const MetricsReport&);
};

enum class Format : uint8_t { text, csv };
std::optional<Format> format_from_string(std::string_view s);

// Runs the config, including an internal no-prefetch pass of the same trace
// for the coverage denominator. Deterministic in the config.
MetricsReport run(const RunConfig& cfg);

// Same, with the baseline L2 demand-miss count supplied by the caller
// (0 means "not available": coverage reads 0 unless prefetcher is none).
MetricsReport run_with_baseline(const RunConfig& cfg, uint64_t baseline_l2_misses);

// Independent runs, one worker per job; baseline passes are deduplicated by
// trace identity. Reports come back in config order.
std::vector<MetricsReport> run_suite(const std::vector<RunConfig>& cfgs, unsigned jobs);

struct ComparisonTable {
  std::vector<std::string> prefetchers;  // column order; [0] is the baseline
  std::vector<std::string> traces;       // row order
  // Indexed [trace][prefetcher].
  std::vector<std::vector<double>> coverage;
  std::vector<std::vector<double>> accuracy;
  std::vector<std::vector<uint64_t>> stall;
  // Ratios vs the baseline prefetcher: coverage uses (1+c_i)/(1+c_0) so a
  // zero-coverage baseline stays well-defined; stall uses (s_0+1)/(s_i+1)
  // (a speedup-style proxy, higher is better).
  std::vector<std::vector<double>> coverage_ratio;
  std::vector<std::vector<double>> stall_ratio;
  std::vector<double> geomean_coverage_ratio;  // per prefetcher, across traces
  std::vector<double> geomean_stall_ratio;
};

ComparisonTable compare(const std::vector<RunConfig>& cfgs, unsigned jobs = 1);

std::string emit(const MetricsReport& report, Format format);
MetricsReport parse_report(const std::string& text);
std::string emit(const ComparisonTable& table, Format format);
std::string csv_header();

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::vector<RunConfig> parse_run_configs(const std::string& json_text);
std::vector<RunConfig> load_run_configs(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& cfg);

// The shipped experiment grid: six generator families crossed with
// {no shuffle, window-8 shuffle} x {no decimation, rate-0.3 decimation},
// 1M warmup + 9M measured events, prefetcher sppam.
std::vector<RunConfig> default_suite();

}  // namespace sppam_sim::harness
