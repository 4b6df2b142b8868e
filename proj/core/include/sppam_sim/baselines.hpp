#pragma once

#include <cstdint>
#include <memory>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sppam_sim/sppam.hpp"

namespace sppam_sim::baselines {

// Every prefetcher sits at the L2: on_access fires for demand accesses that
// missed the L1, eviction/fill notifications mirror what the SPPAM engine
// receives, so comparisons isolate prediction quality.
class Prefetcher {
 public:
  virtual ~Prefetcher() = default;
  virtual std::vector<sppam::PrefetchRequest> on_access(uint64_t addr, uint64_t pc,
                                                        uint64_t cycle) = 0;
  virtual void on_eviction(uint64_t addr, bool was_prefetch, bool was_used) {
    (void)addr;
    (void)was_prefetch;
    (void)was_used;
  }
  virtual void on_llc_demand_fill(uint64_t addr) { (void)addr; }
  virtual void on_llc_eviction(uint64_t addr) { (void)addr; }
  // Called when the cache rejects a fill for a full MSHR. Returning true
  // means: retry with the (possibly retargeted) request.
  virtual bool on_fill_rejected(sppam::PrefetchRequest& req) {
    (void)req;
    return false;
  }
  virtual std::string_view name() const = 0;
  virtual const sppam::EngineCounters* engine_counters() const { return nullptr; }
  virtual const sppam::SppamPrefetcher* engine() const { return nullptr; }
};

// Region-keyed access/prefetch bitmaps shared by the simple baselines: the
// same no-cross-region rule and duplicate gate SPPAM gets from its region
// table. LRU-bounded to the same geometry.
class FilterTable {
 public:
  explicit FilterTable(uint32_t sets = 128, uint32_t ways = 24);

  void record_access(uint64_t region, unsigned offset);
  // False when the block is already prefetched or demand-accessed.
  bool gate(uint64_t region, unsigned offset);
  void clear_prefetch(uint64_t region, unsigned offset);
  uint64_t access_map(uint64_t region) const;
  uint64_t prefetch_map(uint64_t region) const;

 private:
  struct Entry {
    uint64_t region = 0;
    uint64_t access_map = 0;
    uint64_t prefetch_map = 0;
    uint64_t lru_tick = 0;
    bool valid = false;
  };

  Entry* find(uint64_t region);
  const Entry* find(uint64_t region) const;
  Entry& get_or_alloc(uint64_t region);

  uint32_t sets_;
  uint32_t ways_;
  uint64_t tick_ = 0;
  std::vector<Entry> entries_;
};

std::unique_ptr<Prefetcher> make_nextline();
std::unique_ptr<Prefetcher> make_pc_stride();
std::unique_ptr<Prefetcher> make_ampm_lite();
std::unique_ptr<Prefetcher> make_spp_lite();
std::unique_ptr<Prefetcher> make_sppam(const sppam::SppamConfig& cfg,
                                       sppam::MemsysHooks hooks);
std::unique_ptr<Prefetcher> make_none();

// Names accepted in configs: none, nextline, stride, ampm-lite, spp-lite, sppam.
std::unique_ptr<Prefetcher> make_prefetcher(std::string_view name,
                                            const sppam::SppamConfig& cfg,
                                            sppam::MemsysHooks hooks);

inline constexpr std::string_view prefetcher_names[] = {"none",      "nextline",
                                                        "stride",    "ampm-lite",
                                                        "spp-lite",  "sppam"};

}  // namespace sppam_sim::baselines
