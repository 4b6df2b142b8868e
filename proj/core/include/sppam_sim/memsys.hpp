#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

namespace sppam_sim::memsys {

enum class Level : uint8_t { l1 = 0, l2 = 1, llc = 2, dram = 3 };

const char* to_string(Level level);

struct LevelConfig {
  uint32_t sets = 0;
  uint32_t ways = 0;
  uint32_t mshr_size = 0;
  uint32_t hit_latency = 0;
};

struct DramConfig {
  uint32_t mtps = 4800;          // mega-transactions per second on the memory bus
  uint32_t window_cycles = 2048; // bandwidth-monitor sliding window
  double tcas_ns = 15.0;
  double trcd_ns = 15.0;
  double trp_ns = 15.0;
  double freq_ghz = 4.0;

  // Row-miss service: tRCD + tCAS converted to core cycles.
  uint64_t service_cycles() const {
    return static_cast<uint64_t>((tcas_ns + trcd_ns) * freq_ghz);
  }
  // Transactions the bus can initiate per monitor window.
  uint64_t window_capacity() const {
    return static_cast<uint64_t>(window_cycles) * mtps /
           static_cast<uint64_t>(freq_ghz * 1000.0);
  }
};

struct HierarchyConfig {
  LevelConfig l1d{64, 12, 16, 5};
  LevelConfig l2c{2048, 16, 32, 10};
  LevelConfig llc{4096, 12, 64, 35};
  DramConfig dram{};
};

struct Eviction {
  uint64_t block = 0;
  Level level = Level::l1;
  bool was_prefetch = false;
  bool demand_touched = false;
  uint8_t prefetch_tag = 0;  // caller-supplied tag from prefetch_fill
};

struct AccessResult {
  Level hit_level = Level::dram;  // dram means missed every cache level
  uint64_t latency = 0;           // includes any MSHR back-pressure wait
  uint64_t mshr_wait = 0;         // cycles the access stalled for a free MSHR
  bool hit_prefetched_line = false;  // first demand touch of a prefetched line
  uint8_t prefetch_tag = 0;          // tag of that line
  Level touch_level = Level::l1;     // level where the first touch happened
  bool late = false;                 // the touched prefetch was still in flight
  // At most one victim per traversed level.
  std::array<Eviction, 3> evictions{};
  unsigned eviction_count = 0;
};

enum class FillOutcome : uint8_t { accepted, rejected_mshr_full, filtered };

// Three-level non-inclusive hierarchy, true LRU everywhere, fill-on-miss at
// every traversed level. One instance per simulation; no internal locking.
class MemoryHierarchy {
 public:
  explicit MemoryHierarchy(const HierarchyConfig& cfg);

  using EvictionObserver = std::function<void(const Eviction&)>;
  void on_eviction(EvictionObserver obs) { observers_.push_back(std::move(obs)); }

  AccessResult demand_access(uint64_t addr, uint64_t cycle);

  // Installs a prefetched line at the requested level only. A fill aimed at
  // a level whose MSHR is fully occupied is rejected without side effects;
  // a fill for an already-resident block is filtered without an LRU update.
  FillOutcome prefetch_fill(uint64_t addr, Level fill_level, uint64_t cycle,
                            uint8_t tag = 0);

  unsigned mshr_occupancy(Level level, uint64_t cycle);
  unsigned mshr_capacity(Level level) const;

  // floor(16 * transactions-in-window / capacity), clamped to [0,15].
  unsigned bandwidth_utilization(uint64_t cycle);

  uint64_t dram_transactions() const { return dram_transactions_; }

  struct ResidencySnapshot {
    // Prefetched, never demand-touched lines at end of run, per level
    // (index by Level), split by whether the fill is still in flight.
    uint64_t resident[3] = {0, 0, 0};
    uint64_t in_flight[3] = {0, 0, 0};
  };
  // Counts only lines carrying `tag` (the caller's phase marker).
  ResidencySnapshot prefetch_residency(uint64_t cycle, uint8_t tag);

  bool block_resident(uint64_t block, Level level) const;

 private:
  struct Line {
    uint64_t tag = 0;
    bool valid = false;
    bool prefetched = false;
    bool demand_touched = false;
    uint8_t prefetch_tag = 0;
  };

  struct MshrEntry {
    uint64_t block = 0;
    uint64_t completion = 0;
    bool prefetch = false;
    uint8_t tag = 0;
  };

  struct CacheLevel {
    LevelConfig cfg;
    std::vector<Line> lines;  // sets * ways
    // Per-set recency stack: 4-bit way ids, MRU in the low nibble. True LRU
    // with O(1) touch/victim; limits ways to 16.
    std::vector<uint64_t> lru_stack;
    std::vector<MshrEntry> mshr;
  };

  Line* probe(CacheLevel& lv, uint64_t block);
  static void touch_lru(CacheLevel& lv, uint64_t set, uint32_t way);
  void install(CacheLevel& lv, Level which, uint64_t block, bool prefetched,
               uint8_t tag, AccessResult* result);
  void prune_mshr(CacheLevel& lv, uint64_t cycle);
  MshrEntry* find_mshr(CacheLevel& lv, uint64_t block);
  uint64_t dram_enqueue(uint64_t arrival_cycle);  // returns total DRAM latency
  void notify(const Eviction& ev);

  CacheLevel levels_[3];
  DramConfig dram_;
  uint64_t dram_capacity_ = 0;
  uint64_t dram_service_ = 0;
  uint64_t dram_next_free_sub_ = 0;  // sub-cycle units of 1/capacity cycle
  std::deque<uint64_t> dram_window_;  // transaction start cycles
  uint64_t dram_transactions_ = 0;
  std::vector<EvictionObserver> observers_;
};

}  // namespace sppam_sim::memsys
