#include "sppam_sim/harness.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "sppam_sim/baselines.hpp"

namespace sppam_sim::harness {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr uint8_t tag_warmup = 1;
constexpr uint8_t tag_measured = 2;

}  // namespace

bool operator==(const MetricsReport& a, const MetricsReport& b) {
  return emit(a, Format::text) == emit(b, Format::text);
}

std::optional<Format> format_from_string(std::string_view s) {
  if (s == "text" || s == "json") return Format::text;
  if (s == "csv") return Format::csv;
  return std::nullopt;
}

namespace {

std::string trace_label(const TraceSourceConfig& trace_cfg) {
  std::string out;
  if (trace_cfg.file) {
    out = std::filesystem::path(*trace_cfg.file).stem().string();
  } else {
    out = trace::to_string(trace_cfg.generator.pattern);
    if (trace_cfg.generator.pattern == trace::PatternFamily::stride)
      out += std::to_string(trace_cfg.generator.stride);
    if (trace_cfg.generator.pattern == trace::PatternFamily::interleaved)
      out += std::to_string(trace_cfg.generator.streams);
  }
  out += "/w" + std::to_string(trace_cfg.perturbation.shuffle_window);
  std::ostringstream rate;
  rate << trace_cfg.perturbation.decimation_rate;
  out += "/d" + rate.str();
  return out;
}

}  // namespace

std::string RunConfig::derived_label() const {
  return prefetcher + "/" + trace_label(trace);
}

// ---------------------------------------------------------------------------
// Config JSON

namespace {

template <typename T>
void read_field(const ordered_json& j, const char* key, T& into) {
  if (auto it = j.find(key); it != j.end()) into = it->get<T>();
}

void read_level(const ordered_json& j, memsys::LevelConfig& lc) {
  read_field(j, "sets", lc.sets);
  read_field(j, "ways", lc.ways);
  read_field(j, "mshr", lc.mshr_size);
  read_field(j, "latency", lc.hit_latency);
}

ordered_json level_to_json(const memsys::LevelConfig& lc) {
  return {{"sets", lc.sets}, {"ways", lc.ways}, {"mshr", lc.mshr_size}, {"latency", lc.hit_latency}};
}

void read_generator(const ordered_json& j, trace::GeneratorSpec& g, bool& seed_given) {
  if (auto it = j.find("pattern"); it != j.end()) {
    auto f = trace::pattern_family_from_string(it->get<std::string>());
    if (!f) throw std::invalid_argument("unknown generator pattern: " + it->get<std::string>());
    g.pattern = *f;
  }
  read_field(j, "stride", g.stride);
  read_field(j, "burst_len", g.burst_len);
  read_field(j, "burst_gap", g.burst_gap);
  read_field(j, "streams", g.streams);
  read_field(j, "mask", g.mask);
  read_field(j, "mask_len", g.mask_len);
  read_field(j, "length", g.length);
  read_field(j, "region_span", g.region_span);
  read_field(j, "base_region", g.base_region);
  if (auto it = j.find("seed"); it != j.end()) {
    g.seed = it->get<uint64_t>();
    seed_given = true;
  }
}

ordered_json generator_to_json(const trace::GeneratorSpec& g) {
  ordered_json j;
  j["pattern"] = trace::to_string(g.pattern);
  j["stride"] = g.stride;
  j["burst_len"] = g.burst_len;
  j["burst_gap"] = g.burst_gap;
  j["streams"] = g.streams;
  j["mask"] = g.mask;
  j["mask_len"] = g.mask_len;
  j["length"] = g.length;
  j["region_span"] = g.region_span;
  j["base_region"] = g.base_region;
  j["seed"] = g.seed;
  return j;
}

void read_perturbation(const ordered_json& j, trace::PerturbationSpec& p, bool& seed_given) {
  read_field(j, "shuffle_window", p.shuffle_window);
  read_field(j, "decimation_rate", p.decimation_rate);
  if (auto it = j.find("seed"); it != j.end()) {
    p.seed = it->get<uint64_t>();
    seed_given = true;
  }
}

ordered_json perturbation_to_json(const trace::PerturbationSpec& p) {
  ordered_json j;
  j["shuffle_window"] = p.shuffle_window;
  j["decimation_rate"] = p.decimation_rate;
  j["seed"] = p.seed;
  return j;
}

template <size_t N>
void read_array(const ordered_json& j, const char* key, std::array<uint8_t, N>& into) {
  if (auto it = j.find(key); it != j.end()) {
    if (!it->is_array() || it->size() != N)
      throw std::invalid_argument(std::string(key) + " must be an array of " +
                                  std::to_string(N));
    for (size_t i = 0; i < N; ++i) into[i] = (*it)[i].get<uint8_t>();
  }
}

void read_sppam(const ordered_json& j, sppam::SppamConfig& c) {
  read_array(j, "prefetch_degrees", c.throttle.prefetch_degrees);
  read_array(j, "drop_chance", c.throttle.drop_chance);
  read_array(j, "bandwidth_reduction", c.throttle.bandwidth_reduction);
  read_field(j, "lookahead_decay", c.throttle.lookahead_decay);
  read_field(j, "lookahead_cutoff", c.throttle.lookahead_cutoff);
  read_field(j, "scan_distance", c.throttle.scan_distance);
  read_field(j, "prefetch_drop_cutoff", c.throttle.prefetch_drop_cutoff);
  read_field(j, "lifespan_cutoff", c.throttle.lifespan_cutoff);
  read_field(j, "region_sets", c.region.sets);
  read_field(j, "region_ways", c.region.ways);
  read_field(j, "scrape_access_threshold", c.region.scrape_access_threshold);
  read_field(j, "scrape_time_threshold", c.region.scrape_time_threshold);
  read_field(j, "llc_region_sets", c.llc_region.sets);
  read_field(j, "llc_region_ways", c.llc_region.ways);
  read_field(j, "min_confidence", c.pattern.min_confidence);
  read_field(j, "max_confidence", c.pattern.max_confidence);
  read_field(j, "pattern_usefulness_sample", c.pattern.usefulness_sample);
  read_field(j, "initial_pattern_usefulness", c.pattern.initial_usefulness);
  read_field(j, "global_usefulness_sample", c.global_usefulness_sample);
  read_field(j, "initial_global_usefulness", c.initial_global_usefulness);
  read_field(j, "lifespan_sample", c.lifespan_sample);
  read_field(j, "initial_lifespan", c.initial_lifespan);
  read_field(j, "cross_page_entries", c.cross_page_entries);
  read_field(j, "max_streams", c.max_streams);
  read_field(j, "llc_clear_on_l2_evict", c.llc_clear_on_l2_evict);
  read_field(j, "shadow_enabled", c.shadow_enabled);
}

ordered_json sppam_to_json(const sppam::SppamConfig& c) {
  ordered_json j;
  j["prefetch_degrees"] = c.throttle.prefetch_degrees;
  j["drop_chance"] = c.throttle.drop_chance;
  j["bandwidth_reduction"] = c.throttle.bandwidth_reduction;
  j["lookahead_decay"] = c.throttle.lookahead_decay;
  j["lookahead_cutoff"] = c.throttle.lookahead_cutoff;
  j["scan_distance"] = c.throttle.scan_distance;
  j["prefetch_drop_cutoff"] = c.throttle.prefetch_drop_cutoff;
  j["lifespan_cutoff"] = c.throttle.lifespan_cutoff;
  j["region_sets"] = c.region.sets;
  j["region_ways"] = c.region.ways;
  j["scrape_access_threshold"] = c.region.scrape_access_threshold;
  j["scrape_time_threshold"] = c.region.scrape_time_threshold;
  j["llc_region_sets"] = c.llc_region.sets;
  j["llc_region_ways"] = c.llc_region.ways;
  j["min_confidence"] = c.pattern.min_confidence;
  j["max_confidence"] = c.pattern.max_confidence;
  j["pattern_usefulness_sample"] = c.pattern.usefulness_sample;
  j["initial_pattern_usefulness"] = c.pattern.initial_usefulness;
  j["global_usefulness_sample"] = c.global_usefulness_sample;
  j["initial_global_usefulness"] = c.initial_global_usefulness;
  j["lifespan_sample"] = c.lifespan_sample;
  j["initial_lifespan"] = c.initial_lifespan;
  j["cross_page_entries"] = c.cross_page_entries;
  j["max_streams"] = c.max_streams;
  j["llc_clear_on_l2_evict"] = c.llc_clear_on_l2_evict;
  j["shadow_enabled"] = c.shadow_enabled;
  return j;
}

RunConfig config_from_json(const ordered_json& j) {
  RunConfig cfg;
  read_field(j, "label", cfg.label);
  read_field(j, "seed", cfg.seed);
  read_field(j, "warmup_events", cfg.warmup_events);
  read_field(j, "measured_events", cfg.measured_events);
  read_field(j, "prefetcher", cfg.prefetcher);

  bool gen_seed_given = false;
  bool pert_seed_given = false;
  if (auto it = j.find("trace"); it != j.end()) {
    if (auto f = it->find("file"); f != it->end() && !f->is_null())
      cfg.trace.file = f->get<std::string>();
    if (auto g = it->find("generator"); g != it->end())
      read_generator(*g, cfg.trace.generator, gen_seed_given);
    if (auto p = it->find("perturbation"); p != it->end())
      read_perturbation(*p, cfg.trace.perturbation, pert_seed_given);
  }
  // Sub-seeds derive from the run seed unless given explicitly.
  if (!gen_seed_given) cfg.trace.generator.seed = cfg.seed;
  if (!pert_seed_given) cfg.trace.perturbation.seed = cfg.seed + 1;

  if (auto it = j.find("caches"); it != j.end()) {
    if (auto l = it->find("l1d"); l != it->end()) read_level(*l, cfg.caches.l1d);
    if (auto l = it->find("l2c"); l != it->end()) read_level(*l, cfg.caches.l2c);
    if (auto l = it->find("llc"); l != it->end()) read_level(*l, cfg.caches.llc);
  }
  if (auto it = j.find("dram"); it != j.end()) {
    read_field(*it, "mtps", cfg.caches.dram.mtps);
    read_field(*it, "window_cycles", cfg.caches.dram.window_cycles);
    read_field(*it, "tcas_ns", cfg.caches.dram.tcas_ns);
    read_field(*it, "trcd_ns", cfg.caches.dram.trcd_ns);
    read_field(*it, "trp_ns", cfg.caches.dram.trp_ns);
    read_field(*it, "freq_ghz", cfg.caches.dram.freq_ghz);
  }
  if (auto it = j.find("sppam"); it != j.end()) read_sppam(*it, cfg.sppam_cfg);
  if (cfg.label.empty()) cfg.label = cfg.derived_label();
  return cfg;
}

ordered_json config_to_json_obj(const RunConfig& cfg) {
  ordered_json j;
  j["label"] = cfg.label.empty() ? cfg.derived_label() : cfg.label;
  j["seed"] = cfg.seed;
  j["warmup_events"] = cfg.warmup_events;
  j["measured_events"] = cfg.measured_events;
  j["prefetcher"] = cfg.prefetcher;
  ordered_json t;
  if (cfg.trace.file) t["file"] = *cfg.trace.file;
  t["generator"] = generator_to_json(cfg.trace.generator);
  t["perturbation"] = perturbation_to_json(cfg.trace.perturbation);
  j["trace"] = std::move(t);
  ordered_json c;
  c["l1d"] = level_to_json(cfg.caches.l1d);
  c["l2c"] = level_to_json(cfg.caches.l2c);
  c["llc"] = level_to_json(cfg.caches.llc);
  j["caches"] = std::move(c);
  ordered_json d;
  d["mtps"] = cfg.caches.dram.mtps;
  d["window_cycles"] = cfg.caches.dram.window_cycles;
  d["tcas_ns"] = cfg.caches.dram.tcas_ns;
  d["trcd_ns"] = cfg.caches.dram.trcd_ns;
  d["trp_ns"] = cfg.caches.dram.trp_ns;
  d["freq_ghz"] = cfg.caches.dram.freq_ghz;
  j["dram"] = std::move(d);
  j["sppam"] = sppam_to_json(cfg.sppam_cfg);
  return j;
}

// Trace identity for deduplicating baseline passes: everything that affects
// the no-prefetch run.
std::string baseline_key(const RunConfig& cfg) {
  ordered_json j = config_to_json_obj(cfg);
  j.erase("label");
  j.erase("prefetcher");
  j.erase("sppam");
  return j.dump();
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  return config_from_json(ordered_json::parse(json_text));
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::vector<RunConfig> parse_run_configs(const std::string& json_text) {
  const auto j = ordered_json::parse(json_text);
  std::vector<RunConfig> out;
  if (j.is_array()) {
    for (const auto& item : j) out.push_back(config_from_json(item));
  } else {
    out.push_back(config_from_json(j));
  }
  return out;
}

std::vector<RunConfig> load_run_configs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_configs(ss.str());
}

std::string run_config_to_json(const RunConfig& cfg) {
  return config_to_json_obj(cfg).dump(2);
}

// ---------------------------------------------------------------------------
// Simulation loop

namespace {

std::unique_ptr<trace::EventSource> build_source(const RunConfig& cfg) {
  std::unique_ptr<trace::EventSource> src;
  if (cfg.trace.file) {
    src = trace::open_trace_reader(*cfg.trace.file);
  } else {
    trace::GeneratorSpec gen = cfg.trace.generator;
    if (gen.length == 0) gen.length = cfg.warmup_events + cfg.measured_events;
    src = trace::make_generator(gen);
  }
  const auto& p = cfg.trace.perturbation;
  if (p.shuffle_window > 1 || p.decimation_rate > 0.0) {
    src = trace::make_perturbed(std::move(src), p);
  }
  return src;
}

MetricsReport run_single(const RunConfig& cfg, uint64_t baseline_l2_misses) {
  MetricsReport m;
  m.config = cfg;
  if (m.config.label.empty()) m.config.label = cfg.derived_label();
  m.baseline_l2_demand_misses = baseline_l2_misses;

  memsys::MemoryHierarchy hier(cfg.caches);
  uint64_t cycle = 0;
  bool measured = false;

  sppam::MemsysHooks hooks;
  hooks.bandwidth_utilization = [&hier, &cycle]() {
    return hier.bandwidth_utilization(cycle);
  };
  hooks.l2_mshr_occupancy = [&hier, &cycle]() {
    return hier.mshr_occupancy(memsys::Level::l2, cycle);
  };
  hooks.l2_mshr_capacity = [&hier]() { return hier.mshr_capacity(memsys::Level::l2); };

  auto pf = baselines::make_prefetcher(cfg.prefetcher, cfg.sppam_cfg, hooks);

  hier.on_eviction([&](const memsys::Eviction& ev) {
    const uint64_t addr = ev.block << 6;
    if (ev.level == memsys::Level::l2) {
      pf->on_eviction(addr, ev.was_prefetch, ev.demand_touched);
    } else if (ev.level == memsys::Level::llc) {
      pf->on_llc_eviction(addr);
    }
    if (ev.was_prefetch && !ev.demand_touched && ev.prefetch_tag == tag_measured) {
      ++m.prefetches_useless;
      if (ev.level == memsys::Level::l2) ++m.useless_l2;
      if (ev.level == memsys::Level::llc) ++m.useless_llc;
    }
  });

  auto src = build_source(cfg);
  uint64_t events_done = 0;
  uint64_t dram_at_boundary = 0;
  sppam::EngineCounters engine_at_boundary{};
  bool boundary_captured = false;

  const auto issue_fill = [&](sppam::PrefetchRequest req) {
    const uint8_t tag = measured ? tag_measured : tag_warmup;
    auto outcome = hier.prefetch_fill(req.block << 6, req.fill_level, cycle, tag);
    if (outcome == memsys::FillOutcome::rejected_mshr_full &&
        pf->on_fill_rejected(req)) {
      outcome = hier.prefetch_fill(req.block << 6, req.fill_level, cycle, tag);
    }
    if (!measured) return;
    switch (outcome) {
      case memsys::FillOutcome::accepted:
        ++m.prefetches_issued;
        if (req.fill_level == memsys::Level::l2) ++m.issued_l2;
        else ++m.issued_llc;
        break;
      case memsys::FillOutcome::filtered:
        ++m.prefetches_filtered;
        break;
      case memsys::FillOutcome::rejected_mshr_full:
        ++m.prefetches_rejected;
        break;
    }
  };

  while (auto ev = src->next()) {
    if (!measured && events_done >= cfg.warmup_events) {
      measured = true;
      boundary_captured = true;
      dram_at_boundary = hier.dram_transactions();
      if (const auto* ec = pf->engine_counters()) engine_at_boundary = *ec;
    }
    ++cycle;  // one issue slot per trace event
    ++events_done;
    if (measured) ++m.measured_events_applied;
    else ++m.warmup_events_applied;

    if (ev->kind == trace::AccessKind::prefetch_hint) {
      if (measured) ++m.prefetch_hints;
      sppam::PrefetchRequest hint;
      hint.block = ev->block();
      hint.fill_level = memsys::Level::l2;
      hint.provenance.source = sppam::RequestSource::external;
      issue_fill(hint);
      continue;
    }

    if (measured) {
      ++m.demand_accesses;
      if (ev->kind == trace::AccessKind::load) ++m.loads;
      else ++m.stores;
    }

    const auto res = hier.demand_access(ev->addr, cycle);
    if (measured) {
      if (res.hit_level == memsys::Level::l1) {
        ++m.l1_hits;
      } else {
        ++m.l1_misses;
        if (res.hit_level == memsys::Level::l2) {
          ++m.l2_hits;
        } else {
          ++m.l2_misses;
          if (res.hit_level == memsys::Level::llc) ++m.llc_hits;
          else ++m.llc_misses;
        }
      }
      if (res.latency > cfg.caches.l1d.hit_latency)
        m.stall_cycle_proxy += res.latency - cfg.caches.l1d.hit_latency;
      if (res.late) ++m.prefetches_late;
    }
    cycle += res.mshr_wait;  // full MSHRs back-pressure the issue clock

    if (res.hit_prefetched_line) {
      pf->on_eviction(ev->addr, true, true);  // first demand touch
      if (measured && res.prefetch_tag == tag_measured) {
        ++m.prefetches_useful;
        if (res.touch_level == memsys::Level::l2) ++m.useful_l2;
        if (res.touch_level == memsys::Level::llc) ++m.useful_llc;
      }
    }

    if (res.hit_level != memsys::Level::l1) {
      // The access reached the L2: the prefetcher observes it.
      if (res.hit_level == memsys::Level::llc || res.hit_level == memsys::Level::dram)
        pf->on_llc_demand_fill(ev->addr);
      const auto reqs = pf->on_access(ev->addr, ev->pc, cycle);
      for (const auto& req : reqs) issue_fill(req);
    }
  }

  if (!boundary_captured) {
    // Degenerate config: the whole trace fell inside the warmup window.
    dram_at_boundary = hier.dram_transactions();
    if (const auto* ec = pf->engine_counters()) engine_at_boundary = *ec;
  }
  const auto snap = hier.prefetch_residency(cycle + 1, tag_measured);
  m.resident_l2 = snap.resident[1];
  m.resident_llc = snap.resident[2];
  m.resident_at_end = snap.resident[0] + snap.resident[1] + snap.resident[2];
  m.inflight_at_end = snap.in_flight[0] + snap.in_flight[1] + snap.in_flight[2];
  m.dram_transactions = hier.dram_transactions() - dram_at_boundary;

  if (const auto* ec = pf->engine_counters()) {
    m.cross_region_violations = ec->cross_region_violations;
    m.duplicate_violations = ec->duplicate_violations;
    m.prefetches_dropped = ec->dropped - engine_at_boundary.dropped;
    m.prefetches_filtered += (ec->filtered_duplicate + ec->filtered_llc) -
                             (engine_at_boundary.filtered_duplicate +
                              engine_at_boundary.filtered_llc);
  }

  // Conservation: every measured-phase prefetch line is exactly one of
  // useful, useless, still resident, or still in flight.
  const uint64_t accounted = m.prefetches_useful + m.prefetches_useless +
                             m.resident_at_end + m.inflight_at_end;
  if (m.prefetches_issued != accounted) {
    throw std::logic_error("prefetch conservation violated: issued=" +
                           std::to_string(m.prefetches_issued) +
                           " accounted=" + std::to_string(accounted));
  }

  const uint64_t denom = m.prefetches_useful + m.prefetches_useless;
  m.accuracy = denom ? static_cast<double>(m.prefetches_useful) / denom : 0.0;
  if (cfg.prefetcher != "none" && baseline_l2_misses > 0) {
    const double covered =
        baseline_l2_misses > m.l2_misses
            ? static_cast<double>(baseline_l2_misses - m.l2_misses)
            : 0.0;
    m.coverage = std::min(1.0, covered / static_cast<double>(baseline_l2_misses));
  }
  return m;
}

void parallel_for(size_t n, unsigned jobs, const std::function<void(size_t)>& fn) {
  if (n == 0) return;
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
  if (jobs == 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(jobs);
  for (unsigned w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w]() {
      try {
        for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

MetricsReport run(const RunConfig& cfg) {
  uint64_t baseline = 0;
  if (cfg.prefetcher != "none") {
    RunConfig base = cfg;
    base.prefetcher = "none";
    base.label.clear();
    baseline = run_single(base, 0).l2_misses;
  }
  return run_single(cfg, baseline);
}

MetricsReport run_with_baseline(const RunConfig& cfg, uint64_t baseline_l2_misses) {
  return run_single(cfg, baseline_l2_misses);
}

std::vector<MetricsReport> run_suite(const std::vector<RunConfig>& cfgs, unsigned jobs) {
  // Unique no-prefetch passes first, then the actual runs.
  std::vector<std::string> keys(cfgs.size());
  std::map<std::string, uint64_t> baselines;
  std::vector<std::string> unique_keys;
  std::vector<RunConfig> unique_cfgs;
  for (size_t i = 0; i < cfgs.size(); ++i) {
    keys[i] = baseline_key(cfgs[i]);
    if (cfgs[i].prefetcher == "none") continue;
    if (baselines.emplace(keys[i], 0).second) {
      unique_keys.push_back(keys[i]);
      RunConfig base = cfgs[i];
      base.prefetcher = "none";
      base.label.clear();
      unique_cfgs.push_back(base);
    }
  }
  parallel_for(unique_cfgs.size(), jobs, [&](size_t i) {
    const auto report = run_single(unique_cfgs[i], 0);
    baselines[unique_keys[i]] = report.l2_misses;  // distinct keys: no race
  });

  std::vector<MetricsReport> reports(cfgs.size());
  parallel_for(cfgs.size(), jobs, [&](size_t i) {
    const uint64_t base =
        cfgs[i].prefetcher == "none" ? 0 : baselines.at(keys[i]);
    reports[i] = run_single(cfgs[i], base);
  });
  return reports;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

ordered_json metrics_to_json(const MetricsReport& m) {
  ordered_json j;
  j["demand_accesses"] = m.demand_accesses;
  j["loads"] = m.loads;
  j["stores"] = m.stores;
  j["prefetch_hints"] = m.prefetch_hints;
  j["l1_hits"] = m.l1_hits;
  j["l1_misses"] = m.l1_misses;
  j["l2_hits"] = m.l2_hits;
  j["l2_misses"] = m.l2_misses;
  j["llc_hits"] = m.llc_hits;
  j["llc_misses"] = m.llc_misses;
  j["prefetches_issued"] = m.prefetches_issued;
  j["issued_l2"] = m.issued_l2;
  j["issued_llc"] = m.issued_llc;
  j["prefetches_dropped"] = m.prefetches_dropped;
  j["prefetches_filtered"] = m.prefetches_filtered;
  j["prefetches_rejected"] = m.prefetches_rejected;
  j["prefetches_useful"] = m.prefetches_useful;
  j["useful_l2"] = m.useful_l2;
  j["useful_llc"] = m.useful_llc;
  j["prefetches_useless"] = m.prefetches_useless;
  j["useless_l2"] = m.useless_l2;
  j["useless_llc"] = m.useless_llc;
  j["prefetches_late"] = m.prefetches_late;
  j["resident_at_end"] = m.resident_at_end;
  j["resident_l2"] = m.resident_l2;
  j["resident_llc"] = m.resident_llc;
  j["inflight_at_end"] = m.inflight_at_end;
  j["dram_transactions"] = m.dram_transactions;
  j["stall_cycle_proxy"] = m.stall_cycle_proxy;
  j["baseline_l2_demand_misses"] = m.baseline_l2_demand_misses;
  j["coverage"] = m.coverage;
  j["accuracy"] = m.accuracy;
  j["cross_region_violations"] = m.cross_region_violations;
  j["duplicate_violations"] = m.duplicate_violations;
  j["warmup_events_applied"] = m.warmup_events_applied;
  j["measured_events_applied"] = m.measured_events_applied;
  return j;
}

void metrics_from_json(const ordered_json& j, MetricsReport& m) {
  read_field(j, "demand_accesses", m.demand_accesses);
  read_field(j, "loads", m.loads);
  read_field(j, "stores", m.stores);
  read_field(j, "prefetch_hints", m.prefetch_hints);
  read_field(j, "l1_hits", m.l1_hits);
  read_field(j, "l1_misses", m.l1_misses);
  read_field(j, "l2_hits", m.l2_hits);
  read_field(j, "l2_misses", m.l2_misses);
  read_field(j, "llc_hits", m.llc_hits);
  read_field(j, "llc_misses", m.llc_misses);
  read_field(j, "prefetches_issued", m.prefetches_issued);
  read_field(j, "issued_l2", m.issued_l2);
  read_field(j, "issued_llc", m.issued_llc);
  read_field(j, "prefetches_dropped", m.prefetches_dropped);
  read_field(j, "prefetches_filtered", m.prefetches_filtered);
  read_field(j, "prefetches_rejected", m.prefetches_rejected);
  read_field(j, "prefetches_useful", m.prefetches_useful);
  read_field(j, "useful_l2", m.useful_l2);
  read_field(j, "useful_llc", m.useful_llc);
  read_field(j, "prefetches_useless", m.prefetches_useless);
  read_field(j, "useless_l2", m.useless_l2);
  read_field(j, "useless_llc", m.useless_llc);
  read_field(j, "prefetches_late", m.prefetches_late);
  read_field(j, "resident_at_end", m.resident_at_end);
  read_field(j, "resident_l2", m.resident_l2);
  read_field(j, "resident_llc", m.resident_llc);
  read_field(j, "inflight_at_end", m.inflight_at_end);
  read_field(j, "dram_transactions", m.dram_transactions);
  read_field(j, "stall_cycle_proxy", m.stall_cycle_proxy);
  read_field(j, "baseline_l2_demand_misses", m.baseline_l2_demand_misses);
  read_field(j, "coverage", m.coverage);
  read_field(j, "accuracy", m.accuracy);
  read_field(j, "cross_region_violations", m.cross_region_violations);
  read_field(j, "duplicate_violations", m.duplicate_violations);
  read_field(j, "warmup_events_applied", m.warmup_events_applied);
  read_field(j, "measured_events_applied", m.measured_events_applied);
}

}  // namespace

std::string csv_header() {
  return "label,prefetcher,seed,demand_accesses,loads,stores,prefetch_hints,"
         "l1_hits,l1_misses,l2_hits,l2_misses,llc_hits,llc_misses,"
         "prefetches_issued,issued_l2,issued_llc,prefetches_dropped,"
         "prefetches_filtered,prefetches_rejected,prefetches_useful,useful_l2,"
         "useful_llc,prefetches_useless,useless_l2,useless_llc,prefetches_late,"
         "resident_at_end,inflight_at_end,dram_transactions,stall_cycle_proxy,"
         "baseline_l2_demand_misses,coverage,accuracy,cross_region_violations,"
         "duplicate_violations,warmup_events_applied,measured_events_applied";
}

std::string emit(const MetricsReport& m, Format format) {
  if (format == Format::text) {
    ordered_json j;
    j["config"] = config_to_json_obj(m.config);
    j["metrics"] = metrics_to_json(m);
    return j.dump(2) + "\n";
  }
  std::ostringstream out;
  out << csv_header() << "\n";
  out << m.config.label << ',' << m.config.prefetcher << ',' << m.config.seed << ','
      << m.demand_accesses << ',' << m.loads << ',' << m.stores << ','
      << m.prefetch_hints << ',' << m.l1_hits << ',' << m.l1_misses << ','
      << m.l2_hits << ',' << m.l2_misses << ',' << m.llc_hits << ',' << m.llc_misses
      << ',' << m.prefetches_issued << ',' << m.issued_l2 << ',' << m.issued_llc
      << ',' << m.prefetches_dropped << ',' << m.prefetches_filtered << ','
      << m.prefetches_rejected << ',' << m.prefetches_useful << ',' << m.useful_l2
      << ',' << m.useful_llc << ',' << m.prefetches_useless << ',' << m.useless_l2
      << ',' << m.useless_llc << ',' << m.prefetches_late << ',' << m.resident_at_end
      << ',' << m.inflight_at_end << ',' << m.dram_transactions << ','
      << m.stall_cycle_proxy << ',' << m.baseline_l2_demand_misses << ','
      << m.coverage << ',' << m.accuracy << ',' << m.cross_region_violations << ','
      << m.duplicate_violations << ',' << m.warmup_events_applied << ','
      << m.measured_events_applied << "\n";
  return out.str();
}

MetricsReport parse_report(const std::string& text) {
  const auto j = ordered_json::parse(text);
  MetricsReport m;
  m.config = config_from_json(j.at("config"));
  metrics_from_json(j.at("metrics"), m);
  return m;
}

ComparisonTable compare(const std::vector<RunConfig>& cfgs, unsigned jobs) {
  if (cfgs.size() < 2) throw std::invalid_argument("compare needs at least 2 configs");

  std::vector<std::string> trace_keys(cfgs.size());
  for (size_t i = 0; i < cfgs.size(); ++i) trace_keys[i] = baseline_key(cfgs[i]);

  ComparisonTable table;
  std::vector<std::string> trace_order;
  for (size_t i = 0; i < cfgs.size(); ++i) {
    if (std::find(table.prefetchers.begin(), table.prefetchers.end(),
                  cfgs[i].prefetcher) == table.prefetchers.end())
      table.prefetchers.push_back(cfgs[i].prefetcher);
    if (std::find(trace_order.begin(), trace_order.end(), trace_keys[i]) ==
        trace_order.end())
      trace_order.push_back(trace_keys[i]);
  }

  // Every prefetcher must cover the same trace set.
  std::map<std::string, std::map<std::string, size_t>> grid;  // trace -> pf -> cfg idx
  for (size_t i = 0; i < cfgs.size(); ++i) {
    grid[trace_keys[i]][cfgs[i].prefetcher] = i;
  }
  for (const auto& tk : trace_order) {
    for (const auto& pf : table.prefetchers) {
      if (!grid.at(tk).count(pf))
        throw std::invalid_argument("compare: mismatched trace sets across configs");
    }
  }

  const auto reports = run_suite(cfgs, jobs);

  for (const auto& tk : trace_order) {
    const size_t any = grid.at(tk).begin()->second;
    table.traces.push_back(trace_label(cfgs[any].trace));
  }

  const size_t nt = trace_order.size();
  const size_t np = table.prefetchers.size();
  table.coverage.assign(nt, std::vector<double>(np, 0.0));
  table.accuracy.assign(nt, std::vector<double>(np, 0.0));
  table.stall.assign(nt, std::vector<uint64_t>(np, 0));
  table.coverage_ratio.assign(nt, std::vector<double>(np, 1.0));
  table.stall_ratio.assign(nt, std::vector<double>(np, 1.0));

  for (size_t t = 0; t < nt; ++t) {
    for (size_t p = 0; p < np; ++p) {
      const size_t idx = grid.at(trace_order[t]).at(table.prefetchers[p]);
      table.coverage[t][p] = reports[idx].coverage;
      table.accuracy[t][p] = reports[idx].accuracy;
      table.stall[t][p] = reports[idx].stall_cycle_proxy;
    }
    for (size_t p = 0; p < np; ++p) {
      table.coverage_ratio[t][p] =
          (1.0 + table.coverage[t][p]) / (1.0 + table.coverage[t][0]);
      table.stall_ratio[t][p] = static_cast<double>(table.stall[t][0] + 1) /
                                static_cast<double>(table.stall[t][p] + 1);
    }
  }

  table.geomean_coverage_ratio.assign(np, 1.0);
  table.geomean_stall_ratio.assign(np, 1.0);
  for (size_t p = 0; p < np; ++p) {
    double log_cov = 0.0, log_stall = 0.0;
    for (size_t t = 0; t < nt; ++t) {
      log_cov += std::log(table.coverage_ratio[t][p]);
      log_stall += std::log(table.stall_ratio[t][p]);
    }
    table.geomean_coverage_ratio[p] = std::exp(log_cov / static_cast<double>(nt));
    table.geomean_stall_ratio[p] = std::exp(log_stall / static_cast<double>(nt));
  }
  return table;
}

std::string emit(const ComparisonTable& table, Format format) {
  if (format == Format::text) {
    ordered_json j;
    j["prefetchers"] = table.prefetchers;
    j["traces"] = table.traces;
    j["coverage"] = table.coverage;
    j["accuracy"] = table.accuracy;
    j["stall_cycle_proxy"] = table.stall;
    j["coverage_ratio"] = table.coverage_ratio;
    j["stall_ratio"] = table.stall_ratio;
    j["geomean_coverage_ratio"] = table.geomean_coverage_ratio;
    j["geomean_stall_ratio"] = table.geomean_stall_ratio;
    return j.dump(2) + "\n";
  }
  std::ostringstream out;
  out << "trace,prefetcher,coverage,accuracy,stall_cycle_proxy,coverage_ratio,stall_ratio\n";
  for (size_t t = 0; t < table.traces.size(); ++t) {
    for (size_t p = 0; p < table.prefetchers.size(); ++p) {
      out << table.traces[t] << ',' << table.prefetchers[p] << ','
          << table.coverage[t][p] << ',' << table.accuracy[t][p] << ','
          << table.stall[t][p] << ',' << table.coverage_ratio[t][p] << ','
          << table.stall_ratio[t][p] << "\n";
    }
  }
  for (size_t p = 0; p < table.prefetchers.size(); ++p) {
    out << "geomean," << table.prefetchers[p] << ",,,," << table.geomean_coverage_ratio[p]
        << ',' << table.geomean_stall_ratio[p] << "\n";
  }
  return out.str();
}

std::vector<RunConfig> default_suite() {
  struct Family {
    const char* name;
    trace::GeneratorSpec gen;
  };
  std::vector<Family> families;
  {
    trace::GeneratorSpec g;
    g.pattern = trace::PatternFamily::stride;
    g.stride = 1;
    g.region_span = 4096;
    families.push_back({"stride1", g});
    g.stride = 4;
    families.push_back({"stride4", g});
    trace::GeneratorSpec b;
    b.pattern = trace::PatternFamily::burst;
    b.burst_len = 8;
    b.burst_gap = 24;
    b.region_span = 4096;
    families.push_back({"burst", b});
    trace::GeneratorSpec i;
    i.pattern = trace::PatternFamily::interleaved;
    i.streams = 4;
    i.region_span = 4096;
    families.push_back({"interleaved4", i});
    trace::GeneratorSpec s;
    s.pattern = trace::PatternFamily::sparse_mask;
    s.mask = 0b010101;
    s.mask_len = 6;
    s.region_span = 4096;
    families.push_back({"sparse", s});
    trace::GeneratorSpec p;
    p.pattern = trace::PatternFamily::pointer_chase;
    p.region_span = 4096;
    families.push_back({"chase", p});
  }

  std::vector<RunConfig> out;
  uint64_t family_idx = 0;
  for (const auto& fam : families) {
    for (uint64_t window : {uint64_t{1}, uint64_t{8}}) {
      for (double rate : {0.0, 0.3}) {
        RunConfig cfg;
        cfg.prefetcher = "sppam";
        cfg.seed = 1000 + family_idx * 17;
        cfg.trace.generator = fam.gen;
        cfg.trace.generator.seed = cfg.seed;
        cfg.trace.perturbation.shuffle_window = window;
        cfg.trace.perturbation.decimation_rate = rate;
        cfg.trace.perturbation.seed = cfg.seed + 1;
        std::ostringstream label;
        label << fam.name << "/w" << window << "/d" << rate;
        cfg.label = label.str();
        out.push_back(cfg);
      }
    }
    ++family_idx;
  }
  return out;
}

}  // namespace sppam_sim::harness
