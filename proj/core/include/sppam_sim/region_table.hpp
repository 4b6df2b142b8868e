#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <optional>
#include <vector>

namespace sppam_sim::region_table {

// Window taken before (positive) or after (negative) the anchor offset.
enum class Direction : uint8_t { positive = 0, negative = 1 };

inline constexpr unsigned pattern_bits = 6;
inline constexpr uint8_t pattern_mask = 0x3F;
inline constexpr uint64_t invalid_region = ~0ull;

inline constexpr unsigned region_tag_bits = 29;
inline constexpr unsigned llc_region_tag_bits = 30;
inline constexpr unsigned region_id_bits = 36;

struct Config {
  uint32_t sets = 128;
  uint32_t ways = 24;
  uint16_t scrape_access_threshold = 14;
  uint16_t scrape_time_threshold = 1000;  // L2 accesses; timer ticks every 2
};

struct LlcConfig {
  uint32_t sets = 64;
  uint32_t ways = 16;
};

struct RegionEntry {
  uint64_t tag = 0;        // region / sets, 29 bits
  uint64_t region_id = 0;  // full 36-bit id, kept so evicted copies stay addressable
  uint64_t access_map = 0;
  uint64_t prefetch_map = 0;
  uint8_t access_counter = 0;      // saturates at 15
  uint64_t last_access = 0;        // global L2-access ordinal; timer is derived
  uint64_t pred_region = invalid_region;  // adjacency, 36-bit ids
  uint64_t succ_region = invalid_region;
  uint8_t lru = 0;
  bool valid = false;
};

struct ScrapeTally {
  Direction direction = Direction::positive;
  uint8_t pattern = 0;    // nonzero by construction
  uint8_t following = 0;  // zero followings are tallied: they teach "stop"

  friend bool operator==(const ScrapeTally&, const ScrapeTally&) = default;
};

// Positive: bit k = map[offset-1-k] (nearest block in bit 0); negative:
// bit k = map[offset+1+k]. Out-of-range positions read from the adjacent
// region's edge bits when provided, else 0. Positive shadow bit j carries
// the predecessor's map bit 58+j; negative shadow bit j carries the
// successor's map bit j.
uint8_t extract_pattern(uint64_t access_map, unsigned offset, Direction dir,
                        std::optional<uint8_t> shadow = std::nullopt);

// Walk every anchor and emit (window -> following) pairs for nonzero
// windows. Base anchor ranges keep both window and following inside the
// region; an edge-bit argument extends the range to anchors whose window
// straddles the boundary.
std::vector<ScrapeTally> scrape_tallies(uint64_t access_map,
                                        std::optional<uint8_t> pred_edge = std::nullopt,
                                        std::optional<uint8_t> succ_edge = std::nullopt);

namespace detail {
constexpr std::array<uint8_t, 64> make_rev6_table() {
  std::array<uint8_t, 64> t{};
  for (unsigned v = 0; v < 64; ++v) {
    uint8_t r = 0;
    for (unsigned b = 0; b < 6; ++b) {
      if (v & (1u << b)) r |= static_cast<uint8_t>(1u << (5 - b));
    }
    t[v] = r;
  }
  return t;
}
inline constexpr auto rev6_table = make_rev6_table();
}  // namespace detail

// Allocation-free form of the same walk for the hot path. Interior anchors
// take the direct shift path; only boundary anchors go through the general
// shadow-aware extraction.
template <typename F>
void for_each_scrape_tally(uint64_t map, std::optional<uint8_t> pred_edge,
                           std::optional<uint8_t> succ_edge, F&& emit) {
  if (pred_edge) {
    for (int i = 0; i <= 5; ++i) {
      const uint8_t window =
          extract_pattern(map, static_cast<unsigned>(i), Direction::positive, pred_edge);
      if (window == 0) continue;
      emit(ScrapeTally{Direction::positive, window,
                       static_cast<uint8_t>((map >> i) & pattern_mask)});
    }
  }
  if (map != 0) {
    // Interior anchors can only see a nonzero window near set bits.
    const int low = std::countr_zero(map);
    const int high = 63 - std::countl_zero(map);
    const int pos_lo = std::max(6, low + 1);
    const int pos_hi = std::min(58, high + 6);
    for (int i = pos_lo; i <= pos_hi; ++i) {
      const uint8_t window = detail::rev6_table[(map >> (i - 6)) & pattern_mask];
      if (window == 0) continue;
      emit(ScrapeTally{Direction::positive, window,
                       static_cast<uint8_t>((map >> i) & pattern_mask)});
    }
    const int neg_lo = std::max(5, low - 6);
    const int neg_hi = std::min(57, high - 1);
    for (int i = neg_lo; i <= neg_hi; ++i) {
      const uint8_t window = static_cast<uint8_t>((map >> (i + 1)) & pattern_mask);
      if (window == 0) continue;
      emit(ScrapeTally{Direction::negative, window,
                       detail::rev6_table[(map >> (i - 5)) & pattern_mask]});
    }
  }
  if (succ_edge) {
    for (int i = 58; i <= 63; ++i) {
      const uint8_t window =
          extract_pattern(map, static_cast<unsigned>(i), Direction::negative, succ_edge);
      if (window == 0) continue;
      emit(ScrapeTally{Direction::negative, window,
                       detail::rev6_table[(map >> (i - 5)) & pattern_mask]});
    }
  }
}

class RegionTable {
 public:
  explicit RegionTable(const Config& cfg = {});

  struct AccessOutcome {
    RegionEntry* entry = nullptr;
    bool scrape_due = false;
    std::optional<RegionEntry> evicted;      // conflict victim, scrape terminally
    std::vector<RegionEntry*> idle_due;      // set-mates whose idle timer expired
  };

  // Sets the access bit, clears the matching prefetch bit, bumps the access
  // counter, resets the idle timer. `now` is the global L2-access ordinal.
  AccessOutcome record_access(uint64_t region, unsigned offset, uint64_t now);

  // Marks a block prefetch-resident. Returns false when the block was
  // already prefetched or demand-accessed; the caller must suppress the
  // prefetch then.
  bool record_prefetch(uint64_t region, unsigned offset);
  static bool record_prefetch(RegionEntry& entry, unsigned offset);

  void clear_prefetch_bit(uint64_t region, unsigned offset);

  RegionEntry* find(uint64_t region);
  const RegionEntry* find(uint64_t region) const;

  // Counter/timer reset after a scrape; the access map is retained.
  void reset_after_scrape(RegionEntry& entry, uint64_t now);

  uint64_t region_of(const RegionEntry& entry) const;
  uint64_t idle_ticks(const RegionEntry& entry, uint64_t now) const;

  const Config& config() const { return cfg_; }

 private:
  RegionEntry* lookup(uint64_t set, uint64_t tag);
  void touch_lru(uint64_t set, RegionEntry& entry);

  Config cfg_;
  std::vector<RegionEntry> entries_;
  std::vector<uint64_t> next_idle_check_;  // per set; conservative lower bound
};

// Fill filter for LLC-bound prefetches: tracks blocks recently accessed or
// prefetched into the LLC. Allocation on mark, whole-entry LRU eviction.
class LlcRegionTable {
 public:
  explicit LlcRegionTable(const LlcConfig& cfg = {});

  void mark(uint64_t region, unsigned offset);
  void clear(uint64_t region, unsigned offset);
  bool filter(uint64_t region, unsigned offset) const;

  const LlcConfig& config() const { return cfg_; }

 private:
  struct Entry {
    uint64_t tag = 0;  // region / sets, 30 bits
    uint64_t map = 0;
    uint8_t lru = 0;
    bool valid = false;
  };

  LlcConfig cfg_;
  std::vector<Entry> entries_;
};

}  // namespace sppam_sim::region_table
