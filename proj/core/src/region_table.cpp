#include "sppam_sim/region_table.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

namespace sppam_sim::region_table {

namespace {

constexpr std::array<uint8_t, 64> make_rev6() {
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

constexpr auto rev6 = make_rev6();

void check_offset(unsigned offset) {
  if (offset > 63) throw std::out_of_range("block offset must be in [0,63]");
}

}  // namespace

uint8_t extract_pattern(uint64_t map, unsigned offset, Direction dir,
                        std::optional<uint8_t> shadow) {
  check_offset(offset);
  if (dir == Direction::positive) {
    if (offset >= pattern_bits) {
      return rev6[(map >> (offset - pattern_bits)) & pattern_mask];
    }
    uint8_t out = 0;
    for (unsigned k = 0; k < pattern_bits; ++k) {
      const int pos = static_cast<int>(offset) - 1 - static_cast<int>(k);
      bool bit = false;
      if (pos >= 0) {
        bit = (map >> pos) & 1;
      } else if (shadow) {
        bit = (*shadow >> (pos + static_cast<int>(pattern_bits))) & 1;
      }
      if (bit) out |= static_cast<uint8_t>(1u << k);
    }
    return out;
  }
  if (offset + pattern_bits <= 63) {
    return static_cast<uint8_t>((map >> (offset + 1)) & pattern_mask);
  }
  uint8_t out = 0;
  for (unsigned k = 0; k < pattern_bits; ++k) {
    const unsigned pos = offset + 1 + k;
    bool bit = false;
    if (pos <= 63) {
      bit = (map >> pos) & 1;
    } else if (shadow) {
      bit = (*shadow >> (pos - 64)) & 1;
    }
    if (bit) out |= static_cast<uint8_t>(1u << k);
  }
  return out;
}

std::vector<ScrapeTally> scrape_tallies(uint64_t map, std::optional<uint8_t> pred_edge,
                                        std::optional<uint8_t> succ_edge) {
  std::vector<ScrapeTally> out;
  out.reserve(128);
  for_each_scrape_tally(map, pred_edge, succ_edge,
                        [&out](const ScrapeTally& t) { out.push_back(t); });
  return out;
}

RegionTable::RegionTable(const Config& cfg) : cfg_(cfg) {
  if (cfg_.sets == 0 || cfg_.ways == 0)
    throw std::invalid_argument("region table needs nonzero sets and ways");
  entries_.assign(static_cast<size_t>(cfg_.sets) * cfg_.ways, RegionEntry{});
  next_idle_check_.assign(cfg_.sets, 0);
}

RegionEntry* RegionTable::lookup(uint64_t set, uint64_t tag) {
  RegionEntry* base = &entries_[set * cfg_.ways];
  for (uint32_t w = 0; w < cfg_.ways; ++w) {
    if (base[w].valid && base[w].tag == tag) return &base[w];
  }
  return nullptr;
}

void RegionTable::touch_lru(uint64_t set, RegionEntry& entry) {
  RegionEntry* base = &entries_[set * cfg_.ways];
  const uint8_t old = entry.lru;
  for (uint32_t w = 0; w < cfg_.ways; ++w) {
    if (base[w].valid && base[w].lru < old) ++base[w].lru;
  }
  entry.lru = 0;
}

uint64_t RegionTable::region_of(const RegionEntry& entry) const {
  return entry.region_id;
}

uint64_t RegionTable::idle_ticks(const RegionEntry& entry, uint64_t now) const {
  const uint64_t ticks = (now - entry.last_access) / 2;
  return std::min<uint64_t>(ticks, 511);  // 9-bit saturating
}

RegionTable::AccessOutcome RegionTable::record_access(uint64_t region, unsigned offset,
                                                      uint64_t now) {
  check_offset(offset);
  AccessOutcome out;
  const uint64_t set = region % cfg_.sets;
  const uint64_t tag = (region / cfg_.sets) & ((1ull << region_tag_bits) - 1);
  RegionEntry* entry = lookup(set, tag);
  const uint64_t idle_threshold_ticks = cfg_.scrape_time_threshold / 2;

  // Lazy idle-scrape sweep over the set this access touches, gated by a
  // conservative earliest-possible-expiry bound so quiet sets stay O(1).
  RegionEntry* base = &entries_[set * cfg_.ways];
  if (now >= next_idle_check_[set]) {
    uint64_t min_last = now;
    for (uint32_t w = 0; w < cfg_.ways; ++w) {
      if (!base[w].valid) continue;
      if (&base[w] != entry && idle_ticks(base[w], now) >= idle_threshold_ticks) {
        out.idle_due.push_back(&base[w]);
      }
      // Due entries keep the gate open until a scrape resets their timer.
      if (base[w].last_access < min_last) min_last = base[w].last_access;
    }
    next_idle_check_[set] = min_last + cfg_.scrape_time_threshold;
  }

  bool idle_due_self = false;
  if (!entry) {
    RegionEntry* victim = nullptr;
    for (uint32_t w = 0; w < cfg_.ways; ++w) {
      if (!base[w].valid) {
        victim = &base[w];
        break;
      }
    }
    if (!victim) {
      victim = &base[0];
      for (uint32_t w = 1; w < cfg_.ways; ++w) {
        if (base[w].lru > victim->lru) victim = &base[w];
      }
      out.evicted = *victim;
      // The victim cannot also appear in idle_due.
      std::erase(out.idle_due, victim);
    }
    const uint8_t old_rank = victim->valid ? victim->lru : static_cast<uint8_t>(cfg_.ways - 1);
    for (uint32_t w = 0; w < cfg_.ways; ++w) {
      if (&base[w] != victim && base[w].valid && base[w].lru < old_rank) ++base[w].lru;
    }
    *victim = RegionEntry{};
    victim->tag = tag;
    victim->region_id = region & ((1ull << region_id_bits) - 1);
    victim->valid = true;
    victim->lru = 0;
    entry = victim;
  } else {
    idle_due_self = idle_ticks(*entry, now) >= idle_threshold_ticks;
    touch_lru(set, *entry);
  }

  entry->access_map |= 1ull << offset;
  entry->prefetch_map &= ~(1ull << offset);  // block is demand-owned now
  if (entry->access_counter < 15) ++entry->access_counter;
  entry->last_access = now;

  out.entry = entry;
  out.scrape_due =
      entry->access_counter >= cfg_.scrape_access_threshold || idle_due_self;
  return out;
}

bool RegionTable::record_prefetch(uint64_t region, unsigned offset) {
  check_offset(offset);
  const uint64_t set = region % cfg_.sets;
  const uint64_t tag = (region / cfg_.sets) & ((1ull << region_tag_bits) - 1);
  RegionEntry* entry = lookup(set, tag);
  if (!entry) {
    // Prefetch into an untracked region allocates a fresh entry so the
    // filter still applies for the rest of the generation.
    RegionEntry* base = &entries_[set * cfg_.ways];
    RegionEntry* victim = nullptr;
    for (uint32_t w = 0; w < cfg_.ways; ++w) {
      if (!base[w].valid) {
        victim = &base[w];
        break;
      }
    }
    if (!victim) {
      victim = &base[0];
      for (uint32_t w = 1; w < cfg_.ways; ++w) {
        if (base[w].lru > victim->lru) victim = &base[w];
      }
    }
    const uint8_t old_rank = victim->valid ? victim->lru : static_cast<uint8_t>(cfg_.ways - 1);
    for (uint32_t w = 0; w < cfg_.ways; ++w) {
      if (&base[w] != victim && base[w].valid && base[w].lru < old_rank) ++base[w].lru;
    }
    *victim = RegionEntry{};
    victim->tag = tag;
    victim->region_id = region & ((1ull << region_id_bits) - 1);
    victim->valid = true;
    victim->lru = 0;
    entry = victim;
  }
  return record_prefetch(*entry, offset);
}

bool RegionTable::record_prefetch(RegionEntry& entry, unsigned offset) {
  const uint64_t bit = 1ull << offset;
  if ((entry.prefetch_map & bit) || (entry.access_map & bit)) return false;
  entry.prefetch_map |= bit;
  return true;
}

void RegionTable::clear_prefetch_bit(uint64_t region, unsigned offset) {
  check_offset(offset);
  if (RegionEntry* entry = find(region)) entry->prefetch_map &= ~(1ull << offset);
}

RegionEntry* RegionTable::find(uint64_t region) {
  const uint64_t set = region % cfg_.sets;
  const uint64_t tag = (region / cfg_.sets) & ((1ull << region_tag_bits) - 1);
  return lookup(set, tag);
}

const RegionEntry* RegionTable::find(uint64_t region) const {
  return const_cast<RegionTable*>(this)->find(region);
}

void RegionTable::reset_after_scrape(RegionEntry& entry, uint64_t now) {
  entry.access_counter = 0;
  entry.last_access = now;
}

LlcRegionTable::LlcRegionTable(const LlcConfig& cfg) : cfg_(cfg) {
  if (cfg_.sets == 0 || cfg_.ways == 0)
    throw std::invalid_argument("llc region table needs nonzero sets and ways");
  entries_.assign(static_cast<size_t>(cfg_.sets) * cfg_.ways, Entry{});
}

void LlcRegionTable::mark(uint64_t region, unsigned offset) {
  check_offset(offset);
  const uint64_t set = region % cfg_.sets;
  const uint64_t tag = (region / cfg_.sets) & ((1ull << llc_region_tag_bits) - 1);
  Entry* base = &entries_[set * cfg_.ways];
  Entry* entry = nullptr;
  for (uint32_t w = 0; w < cfg_.ways; ++w) {
    if (base[w].valid && base[w].tag == tag) {
      entry = &base[w];
      break;
    }
  }
  if (!entry) {
    for (uint32_t w = 0; w < cfg_.ways; ++w) {
      if (!base[w].valid) {
        entry = &base[w];
        break;
      }
    }
    if (!entry) {
      entry = &base[0];
      for (uint32_t w = 1; w < cfg_.ways; ++w) {
        if (base[w].lru > entry->lru) entry = &base[w];
      }
    }
    const uint8_t old_rank = entry->valid ? entry->lru : static_cast<uint8_t>(cfg_.ways - 1);
    for (uint32_t w = 0; w < cfg_.ways; ++w) {
      if (&base[w] != entry && base[w].valid && base[w].lru < old_rank) ++base[w].lru;
    }
    *entry = Entry{};
    entry->tag = tag;
    entry->valid = true;
  } else {
    const uint8_t old = entry->lru;
    for (uint32_t w = 0; w < cfg_.ways; ++w) {
      if (base[w].valid && base[w].lru < old) ++base[w].lru;
    }
  }
  entry->lru = 0;
  entry->map |= 1ull << offset;
}

void LlcRegionTable::clear(uint64_t region, unsigned offset) {
  check_offset(offset);
  const uint64_t set = region % cfg_.sets;
  const uint64_t tag = (region / cfg_.sets) & ((1ull << llc_region_tag_bits) - 1);
  Entry* base = &entries_[set * cfg_.ways];
  for (uint32_t w = 0; w < cfg_.ways; ++w) {
    if (base[w].valid && base[w].tag == tag) {
      base[w].map &= ~(1ull << offset);
      return;
    }
  }
}

bool LlcRegionTable::filter(uint64_t region, unsigned offset) const {
  check_offset(offset);
  const uint64_t set = region % cfg_.sets;
  const uint64_t tag = (region / cfg_.sets) & ((1ull << llc_region_tag_bits) - 1);
  const Entry* base = &entries_[set * cfg_.ways];
  for (uint32_t w = 0; w < cfg_.ways; ++w) {
    if (base[w].valid && base[w].tag == tag) return (base[w].map >> offset) & 1;
  }
  return false;
}

}  // namespace sppam_sim::region_table
