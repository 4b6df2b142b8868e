#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "sppam_sim/memsys.hpp"
#include "sppam_sim/pattern_table.hpp"
#include "sppam_sim/region_table.hpp"

namespace sppam_sim::sppam {

using region_table::Direction;

struct ThrottleConfig {
  std::array<uint8_t, 16> prefetch_degrees{1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 8, 8, 12, 12, 16, 16};
  std::array<uint8_t, 16> drop_chance{123, 120, 110, 110, 80, 50, 10, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  std::array<uint8_t, 16> bandwidth_reduction{0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 4, 4, 4, 8, 8};
  uint8_t lookahead_decay = 13;
  uint8_t lookahead_cutoff = 7;
  uint8_t scan_distance = 16;
  uint8_t prefetch_drop_cutoff = 8;
  uint8_t lifespan_cutoff = 7;
};

struct SppamConfig {
  ThrottleConfig throttle;
  region_table::Config region{};
  region_table::LlcConfig llc_region{};
  pattern_table::Config pattern{};
  uint16_t global_usefulness_sample = 512;  // fits the 10-bit counters
  uint8_t initial_global_usefulness = 8;
  uint16_t lifespan_sample = 128;  // fits the 8-bit counters
  uint8_t initial_lifespan = 15;   // trust pattern feedback until proven short-lived
  uint32_t cross_page_entries = 128;
  uint32_t max_streams = 16;
  bool llc_clear_on_l2_evict = true;  // false: clear on LLC evictions instead
  bool shadow_enabled = true;
};

enum class RequestSource : uint8_t { lookahead = 0, scan = 1, external = 2 };

struct Provenance {
  RequestSource source = RequestSource::lookahead;
  Direction direction = Direction::positive;
  uint8_t pattern_index = 0;  // table index the prediction came from
  uint8_t depth = 0;          // lookahead depth, or scan distance d
};

struct PrefetchRequest {
  uint64_t block = 0;  // block address (byte address >> 6)
  memsys::Level fill_level = memsys::Level::l2;
  Provenance provenance{};
};

struct StreamTag {
  uint8_t id = 0;
  bool forward = true;
};

// Free-running 7-bit counter; prefetches at usefulness u < cutoff are dropped
// while the counter sits below drop_chance[u].
class DropThrottle {
 public:
  void tick() { counter_ = (counter_ + 1) & 0x7F; }
  uint8_t counter() const { return counter_; }
  bool should_drop(unsigned usefulness, const ThrottleConfig& cfg) const {
    if (usefulness >= cfg.prefetch_drop_cutoff) return false;
    return counter_ < cfg.drop_chance[usefulness & 0xF];
  }

 private:
  uint8_t counter_ = 0;
};

// Shared shape of the global-usefulness and region-lifespan estimators:
// two counters sampled into a 4-bit value at a threshold.
class SamplingEstimator {
 public:
  SamplingEstimator(uint16_t sample_threshold, uint8_t initial)
      : threshold_(sample_threshold), value_(initial) {}

  void record(bool positive) {
    if (positive) ++pos_;
    else ++neg_;
    if (unsigned(pos_) + neg_ >= threshold_) {
      value_ = static_cast<uint8_t>(std::min(15u, 16u * pos_ / (unsigned(pos_) + neg_)));
      pos_ = 0;
      neg_ = 0;
    }
  }

  uint8_t value() const { return value_; }
  void set_value(uint8_t v) { value_ = v & 0xF; }
  uint16_t positive_count() const { return pos_; }
  uint16_t negative_count() const { return neg_; }

 private:
  uint16_t threshold_;
  uint16_t pos_ = 0;
  uint16_t neg_ = 0;
  uint8_t value_;
};

// 128-entry FIFO of (stream id, last region, direction); consecutive regions
// seen on one stream establish predecessor/successor adjacency.
class CrossPageTracker {
 public:
  explicit CrossPageTracker(uint32_t entries = 128) : capacity_(entries) {}

  struct Adjacency {
    uint64_t prev_region = 0;
    bool forward = true;
  };

  std::optional<Adjacency> observe(uint8_t stream_id, uint64_t region, bool forward);

 private:
  struct Entry {
    uint8_t stream_id = 0;
    uint64_t region = 0;
    bool forward = true;
  };

  uint32_t capacity_;
  std::vector<Entry> entries_;
  size_t next_replace_ = 0;
};

// Stand-in for an L1-side stream source: tracks up to 16 live streams of
// consecutive regions and emits a tag when an access crosses a region
// boundary along one of them.
class StreamProvider {
 public:
  explicit StreamProvider(uint32_t max_streams = 16) : max_streams_(max_streams) {}

  std::optional<StreamTag> observe_l1_miss(uint64_t addr);

 private:
  struct Stream {
    uint8_t id = 0;
    uint64_t last_region = 0;
    int8_t direction = 0;  // 0 unknown, +1 forward, -1 backward
    uint64_t last_seen = 0;
  };

  uint32_t max_streams_;
  std::vector<Stream> streams_;
  uint8_t next_id_ = 1;
  uint64_t tick_ = 0;
};

// AMPM mirror rule: a block accessed at offset-d makes offset+d a candidate
// (and vice versa) unless the candidate is already accessed or prefetched.
// Candidates come out ordered by ascending d, forward before backward.
std::vector<unsigned> scan_candidates(uint64_t access_map, uint64_t prefetch_map,
                                      unsigned offset, unsigned distance);

struct MemsysHooks {
  std::function<unsigned()> bandwidth_utilization;  // 4-bit
  std::function<unsigned()> l2_mshr_occupancy;
  std::function<unsigned()> l2_mshr_capacity;
};

struct EngineCounters {
  uint64_t requests_emitted = 0;
  uint64_t dropped = 0;
  uint64_t filtered_duplicate = 0;
  uint64_t filtered_llc = 0;
  uint64_t redirected_to_llc = 0;
  uint64_t scrapes = 0;
  uint64_t terminal_scrapes = 0;
  uint64_t idle_scrapes = 0;
  uint64_t tallies = 0;
  uint64_t lookahead_steps = 0;
  uint64_t scan_fallbacks = 0;
  uint64_t shadow_extractions = 0;
  uint64_t pattern_feedbacks = 0;
  uint64_t cross_region_violations = 0;   // stays zero; counted defensively
  uint64_t duplicate_violations = 0;      // stays zero; counted defensively
};

class SppamPrefetcher {
 public:
  SppamPrefetcher(const SppamConfig& cfg, MemsysHooks hooks);

  // Demand access reaching the L2 (hit or miss). Returns the surviving
  // prefetch requests with fill levels already resolved.
  std::vector<PrefetchRequest> on_l2_access(uint64_t addr, std::optional<StreamTag> tag,
                                            uint64_t cycle);

  // Wired to L2 evictions and to the first demand touch of a prefetched
  // line (was_prefetch && was_used).
  void on_eviction(uint64_t addr, bool was_prefetch, bool was_used);

  // Demand L2 miss headed for the LLC: track the block in the LLC filter.
  void on_llc_demand_fill(uint64_t addr);

  // Only meaningful when llc_clear_on_l2_evict is false.
  void on_llc_eviction(uint64_t addr);

  // Applies MSHR-full redirection and the LLC-region filter to one request.
  // Returns false when the request must be dropped entirely.
  bool redirect_fill(PrefetchRequest& req);

  // A fill the cache rejected for a full MSHR gets retargeted at the LLC,
  // subject to the LLC-region filter. False: drop the request.
  bool force_llc_redirect(PrefetchRequest& req);

  bool should_drop(unsigned usefulness) const {
    return drop_throttle_.should_drop(usefulness, cfg_.throttle);
  }
  void tick_drop_counter() { drop_throttle_.tick(); }
  uint8_t drop_counter() const { return drop_throttle_.counter(); }

  std::optional<uint8_t> shadow_bits(uint64_t region, Direction dir) const;
  std::optional<uint8_t> shadow_from_entry(const region_table::RegionEntry& entry,
                                           Direction dir) const;

  uint8_t global_usefulness() const { return global_.value(); }
  uint8_t region_lifespan() const { return lifespan_.value(); }
  // Experiment knobs used by the throttling sweeps.
  void set_global_usefulness(uint8_t v) { global_.set_value(v); }
  void set_region_lifespan(uint8_t v) { lifespan_.set_value(v); }

  const EngineCounters& counters() const { return counters_; }
  const SppamConfig& config() const { return cfg_; }
  const region_table::RegionTable& regions() const { return regions_; }
  const pattern_table::DirectionalTables& patterns() const { return patterns_; }
  const region_table::LlcRegionTable& llc_regions() const { return llc_regions_; }

 private:
  void scrape_into_tables(region_table::RegionEntry& entry, bool terminal);
  void scrape_map(uint64_t map, uint64_t region);
  struct EmitContext {
    region_table::RegionEntry* entry = nullptr;
    uint64_t region = 0;
    uint64_t emitted_bits = 0;  // offsets already emitted for this access
    std::vector<PrefetchRequest>* out = nullptr;
  };
  unsigned run_lookahead(Direction dir, uint8_t start_pattern,
                         pattern_table::Prediction first, unsigned anchor,
                         unsigned budget, unsigned initial_usefulness, EmitContext& ctx,
                         bool& want_scan);
  bool try_emit(EmitContext& ctx, unsigned candidate_offset,
                unsigned effective_usefulness, const Provenance& prov);

  SppamConfig cfg_;
  MemsysHooks hooks_;
  region_table::RegionTable regions_;
  region_table::LlcRegionTable llc_regions_;
  pattern_table::DirectionalTables patterns_;
  SamplingEstimator global_;
  SamplingEstimator lifespan_;
  CrossPageTracker cross_page_;
  DropThrottle drop_throttle_;
  uint64_t l2_access_ordinal_ = 0;
  EngineCounters counters_;
};

}  // namespace sppam_sim::sppam
