#include "sppam_sim/baselines.hpp"

#include <algorithm>
#include <array>

namespace sppam_sim::baselines {

namespace {

uint64_t region_of_addr(uint64_t addr) { return addr >> 12; }
unsigned offset_of_addr(uint64_t addr) { return static_cast<unsigned>((addr >> 6) & 63); }

sppam::PrefetchRequest make_request(uint64_t region, unsigned offset) {
  sppam::PrefetchRequest req;
  req.block = (region << 6) | offset;
  req.fill_level = memsys::Level::l2;
  req.provenance.source = sppam::RequestSource::external;
  return req;
}

}  // namespace

FilterTable::FilterTable(uint32_t sets, uint32_t ways) : sets_(sets), ways_(ways) {
  entries_.assign(static_cast<size_t>(sets_) * ways_, Entry{});
}

FilterTable::Entry* FilterTable::find(uint64_t region) {
  Entry* base = &entries_[(region % sets_) * ways_];
  for (uint32_t w = 0; w < ways_; ++w) {
    if (base[w].valid && base[w].region == region) return &base[w];
  }
  return nullptr;
}

const FilterTable::Entry* FilterTable::find(uint64_t region) const {
  return const_cast<FilterTable*>(this)->find(region);
}

FilterTable::Entry& FilterTable::get_or_alloc(uint64_t region) {
  if (Entry* e = find(region)) {
    e->lru_tick = ++tick_;
    return *e;
  }
  Entry* base = &entries_[(region % sets_) * ways_];
  Entry* victim = &base[0];
  for (uint32_t w = 0; w < ways_; ++w) {
    if (!base[w].valid) {
      victim = &base[w];
      break;
    }
    if (base[w].lru_tick < victim->lru_tick) victim = &base[w];
  }
  *victim = Entry{};
  victim->region = region;
  victim->valid = true;
  victim->lru_tick = ++tick_;
  return *victim;
}

void FilterTable::record_access(uint64_t region, unsigned offset) {
  Entry& e = get_or_alloc(region);
  e.access_map |= 1ull << offset;
  e.prefetch_map &= ~(1ull << offset);
}

bool FilterTable::gate(uint64_t region, unsigned offset) {
  Entry& e = get_or_alloc(region);
  const uint64_t bit = 1ull << offset;
  if ((e.access_map & bit) || (e.prefetch_map & bit)) return false;
  e.prefetch_map |= bit;
  return true;
}

void FilterTable::clear_prefetch(uint64_t region, unsigned offset) {
  if (Entry* e = find(region)) e->prefetch_map &= ~(1ull << offset);
}

uint64_t FilterTable::access_map(uint64_t region) const {
  const Entry* e = find(region);
  return e ? e->access_map : 0;
}

uint64_t FilterTable::prefetch_map(uint64_t region) const {
  const Entry* e = find(region);
  return e ? e->prefetch_map : 0;
}

namespace {

class NonePrefetcher final : public Prefetcher {
 public:
  std::vector<sppam::PrefetchRequest> on_access(uint64_t, uint64_t, uint64_t) override {
    return {};
  }
  std::string_view name() const override { return "none"; }
};

class NextLine final : public Prefetcher {
 public:
  std::vector<sppam::PrefetchRequest> on_access(uint64_t addr, uint64_t,
                                                uint64_t) override {
    const uint64_t region = region_of_addr(addr);
    const unsigned offset = offset_of_addr(addr);
    filter_.record_access(region, offset);
    std::vector<sppam::PrefetchRequest> out;
    if (offset == 63) return out;  // next block would leave the region
    if (filter_.gate(region, offset + 1)) out.push_back(make_request(region, offset + 1));
    return out;
  }
  void on_eviction(uint64_t addr, bool was_prefetch, bool) override {
    if (was_prefetch)
      filter_.clear_prefetch(region_of_addr(addr), offset_of_addr(addr));
  }
  std::string_view name() const override { return "nextline"; }

 private:
  FilterTable filter_;
};

class PcStride final : public Prefetcher {
 public:
  std::vector<sppam::PrefetchRequest> on_access(uint64_t addr, uint64_t pc,
                                                uint64_t) override {
    const uint64_t region = region_of_addr(addr);
    const unsigned offset = offset_of_addr(addr);
    filter_.record_access(region, offset);
    std::vector<sppam::PrefetchRequest> out;

    const int64_t block = static_cast<int64_t>(addr >> 6);
    auto [it, fresh] = table_.try_emplace(pc);
    PcEntry& e = it->second;
    if (!fresh) {
      const int64_t stride = block - e.last_block;
      if (stride != 0 && stride == e.stride) {
        if (e.confirmations < 255) ++e.confirmations;
      } else {
        e.stride = stride;
        e.confirmations = stride != 0 ? 1 : 0;
      }
      if (e.confirmations >= 2) {
        for (int mult = 1; mult <= 2; ++mult) {
          const int64_t target = block + mult * e.stride;
          if (target < 0) break;
          if ((target >> 6) != static_cast<int64_t>(region)) break;  // clip to region
          const unsigned toff = static_cast<unsigned>(target & 63);
          if (filter_.gate(region, toff)) out.push_back(make_request(region, toff));
        }
      }
    }
    e.last_block = block;
    if (table_.size() > 4096) table_.clear();  // crude bound, traces use few pcs
    return out;
  }
  void on_eviction(uint64_t addr, bool was_prefetch, bool) override {
    if (was_prefetch)
      filter_.clear_prefetch(region_of_addr(addr), offset_of_addr(addr));
  }
  std::string_view name() const override { return "stride"; }

 private:
  struct PcEntry {
    int64_t last_block = 0;
    int64_t stride = 0;
    uint8_t confirmations = 0;
  };
  std::unordered_map<uint64_t, PcEntry> table_;
  FilterTable filter_;
};

class AmpmLite final : public Prefetcher {
 public:
  std::vector<sppam::PrefetchRequest> on_access(uint64_t addr, uint64_t,
                                                uint64_t) override {
    const uint64_t region = region_of_addr(addr);
    const unsigned offset = offset_of_addr(addr);
    filter_.record_access(region, offset);
    std::vector<sppam::PrefetchRequest> out;
    const auto cands = sppam::scan_candidates(filter_.access_map(region),
                                              filter_.prefetch_map(region), offset,
                                              scan_distance);
    for (unsigned cand : cands) {
      if (out.size() >= degree) break;
      if (filter_.gate(region, cand)) out.push_back(make_request(region, cand));
    }
    return out;
  }
  void on_eviction(uint64_t addr, bool was_prefetch, bool) override {
    if (was_prefetch)
      filter_.clear_prefetch(region_of_addr(addr), offset_of_addr(addr));
  }
  std::string_view name() const override { return "ampm-lite"; }

  static constexpr unsigned scan_distance = 16;
  static constexpr unsigned degree = 2;

 private:
  FilterTable filter_;
};

// Delta-signature lookahead reduced to its essentials: a folded history of
// the last three block deltas per page indexes a delta predictor whose
// confidences multiply along the speculated path. Deliberately order
// sensitive.
class SppLite final : public Prefetcher {
 public:
  std::vector<sppam::PrefetchRequest> on_access(uint64_t addr, uint64_t,
                                                uint64_t) override {
    const uint64_t region = region_of_addr(addr);
    const unsigned offset = offset_of_addr(addr);
    filter_.record_access(region, offset);
    std::vector<sppam::PrefetchRequest> out;

    PageEntry& page = page_of(region);
    if (page.region != region) {
      page.region = region;
      page.sig = 0;
      page.last_offset = offset;
      page.warm = true;
      return out;
    }
    const int delta = static_cast<int>(offset) - static_cast<int>(page.last_offset);
    page.last_offset = offset;
    if (delta == 0) return out;
    learn(page.sig, delta);
    page.sig = fold(page.sig, delta);

    // Lookahead: multiply confidences, stop below a quarter of max.
    uint16_t sig = page.sig;
    int pos = static_cast<int>(offset);
    uint64_t conf_num = 1, conf_den = 1;
    for (unsigned depth = 0; depth < max_depth; ++depth) {
      const SigEntry& se = sig_table_[sig];
      if (se.confidence == 0) break;
      conf_num *= se.confidence;
      conf_den *= 15;
      if (4 * conf_num < conf_den) break;
      pos += se.delta;
      if (pos < 0 || pos > 63) break;
      const unsigned cand = static_cast<unsigned>(pos);
      if (filter_.gate(region, cand)) {
        auto req = make_request(region, cand);
        req.provenance.depth = static_cast<uint8_t>(depth);
        out.push_back(req);
      }
      sig = fold(sig, se.delta);
    }
    return out;
  }
  void on_eviction(uint64_t addr, bool was_prefetch, bool) override {
    if (was_prefetch)
      filter_.clear_prefetch(region_of_addr(addr), offset_of_addr(addr));
  }
  std::string_view name() const override { return "spp-lite"; }

  static constexpr unsigned max_depth = 8;

 private:
  struct PageEntry {
    uint64_t region = ~0ull;
    uint16_t sig = 0;
    unsigned last_offset = 0;
    bool warm = false;
  };
  struct SigEntry {
    int8_t delta = 0;
    uint8_t confidence = 0;  // 4-bit saturating
  };

  static uint16_t fold(uint16_t sig, int delta) {
    return static_cast<uint16_t>(((sig << 4) ^ (static_cast<unsigned>(delta) & 0xF)) & 0xFFF);
  }

  void learn(uint16_t sig, int delta) {
    SigEntry& se = sig_table_[sig];
    if (se.confidence > 0 && se.delta == static_cast<int8_t>(delta)) {
      if (se.confidence < 15) ++se.confidence;
    } else if (se.confidence > 0) {
      --se.confidence;
      if (se.confidence == 0) se.delta = static_cast<int8_t>(delta);
    } else {
      se.delta = static_cast<int8_t>(delta);
      se.confidence = 1;
    }
  }

  PageEntry& page_of(uint64_t region) { return pages_[region % pages_.size()]; }

  std::array<PageEntry, 256> pages_{};
  std::array<SigEntry, 4096> sig_table_{};
  FilterTable filter_;
};

class SppamAdapter final : public Prefetcher {
 public:
  SppamAdapter(const sppam::SppamConfig& cfg, sppam::MemsysHooks hooks)
      : engine_(cfg, std::move(hooks)), provider_(cfg.max_streams) {}

  std::vector<sppam::PrefetchRequest> on_access(uint64_t addr, uint64_t,
                                                uint64_t cycle) override {
    const auto tag = provider_.observe_l1_miss(addr);
    return engine_.on_l2_access(addr, tag, cycle);
  }
  void on_eviction(uint64_t addr, bool was_prefetch, bool was_used) override {
    engine_.on_eviction(addr, was_prefetch, was_used);
  }
  void on_llc_demand_fill(uint64_t addr) override { engine_.on_llc_demand_fill(addr); }
  void on_llc_eviction(uint64_t addr) override { engine_.on_llc_eviction(addr); }
  bool on_fill_rejected(sppam::PrefetchRequest& req) override {
    if (req.fill_level != sppam_sim::memsys::Level::l2) return false;  // LLC already full
    return engine_.force_llc_redirect(req);
  }
  std::string_view name() const override { return "sppam"; }
  const sppam::EngineCounters* engine_counters() const override {
    return &engine_.counters();
  }
  const sppam::SppamPrefetcher* engine() const override { return &engine_; }

 private:
  sppam::SppamPrefetcher engine_;
  sppam::StreamProvider provider_;
};

}  // namespace

std::unique_ptr<Prefetcher> make_none() { return std::make_unique<NonePrefetcher>(); }
std::unique_ptr<Prefetcher> make_nextline() { return std::make_unique<NextLine>(); }
std::unique_ptr<Prefetcher> make_pc_stride() { return std::make_unique<PcStride>(); }
std::unique_ptr<Prefetcher> make_ampm_lite() { return std::make_unique<AmpmLite>(); }
std::unique_ptr<Prefetcher> make_spp_lite() { return std::make_unique<SppLite>(); }

std::unique_ptr<Prefetcher> make_sppam(const sppam::SppamConfig& cfg,
                                       sppam::MemsysHooks hooks) {
  return std::make_unique<SppamAdapter>(cfg, std::move(hooks));
}

std::unique_ptr<Prefetcher> make_prefetcher(std::string_view name,
                                            const sppam::SppamConfig& cfg,
                                            sppam::MemsysHooks hooks) {
  if (name == "none") return make_none();
  if (name == "nextline") return make_nextline();
  if (name == "stride") return make_pc_stride();
  if (name == "ampm-lite") return make_ampm_lite();
  if (name == "spp-lite") return make_spp_lite();
  if (name == "sppam") return make_sppam(cfg, std::move(hooks));
  throw std::invalid_argument("unknown prefetcher: " + std::string(name));
}

}  // namespace sppam_sim::baselines
