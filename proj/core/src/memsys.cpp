#include "sppam_sim/memsys.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

namespace sppam_sim::memsys {

const char* to_string(Level level) {
  switch (level) {
    case Level::l1: return "l1";
    case Level::l2: return "l2";
    case Level::llc: return "llc";
    case Level::dram: return "dram";
  }
  return "?";
}

MemoryHierarchy::MemoryHierarchy(const HierarchyConfig& cfg) {
  levels_[0].cfg = cfg.l1d;
  levels_[1].cfg = cfg.l2c;
  levels_[2].cfg = cfg.llc;
  for (auto& lv : levels_) {
    if (lv.cfg.sets == 0 || lv.cfg.ways == 0)
      throw std::invalid_argument("cache level needs nonzero sets and ways");
    if (lv.cfg.ways > 16)
      throw std::invalid_argument("cache level supports at most 16 ways");
    lv.lines.assign(static_cast<size_t>(lv.cfg.sets) * lv.cfg.ways, Line{});
    // Initial stack order: way 0 most recent, highest way least recent.
    uint64_t stack = 0;
    for (uint32_t w = 0; w < lv.cfg.ways; ++w)
      stack |= static_cast<uint64_t>(w) << (4 * w);
    lv.lru_stack.assign(lv.cfg.sets, stack);
    lv.mshr.reserve(lv.cfg.mshr_size);
  }
  dram_ = cfg.dram;
  dram_capacity_ = dram_.window_capacity();
  dram_service_ = dram_.service_cycles();
  if (dram_capacity_ == 0) throw std::invalid_argument("dram window capacity is zero");
}

MemoryHierarchy::Line* MemoryHierarchy::probe(CacheLevel& lv, uint64_t block) {
  const uint64_t set = block % lv.cfg.sets;
  const uint64_t tag = block / lv.cfg.sets;
  Line* base = &lv.lines[set * lv.cfg.ways];
  for (uint32_t w = 0; w < lv.cfg.ways; ++w) {
    if (base[w].valid && base[w].tag == tag) return &base[w];
  }
  return nullptr;
}

void MemoryHierarchy::touch_lru(CacheLevel& lv, uint64_t set, uint32_t way) {
  uint64_t stack = lv.lru_stack[set];
  unsigned pos = 0;
  while (((stack >> (4 * pos)) & 0xF) != way) ++pos;
  const uint64_t below = stack & ((1ull << (4 * pos)) - 1);
  const uint64_t above =
      pos >= 15 ? 0 : (stack >> (4 * (pos + 1))) << (4 * (pos + 1));
  lv.lru_stack[set] = above | (below << 4) | way;
}

void MemoryHierarchy::install(CacheLevel& lv, Level which, uint64_t block,
                              bool prefetched, uint8_t tag, AccessResult* result) {
  const uint64_t set = block % lv.cfg.sets;
  const uint64_t line_tag = block / lv.cfg.sets;
  Line* base = &lv.lines[set * lv.cfg.ways];
  uint32_t way = lv.cfg.ways;
  for (uint32_t w = 0; w < lv.cfg.ways; ++w) {
    if (!base[w].valid) {
      way = w;
      break;
    }
  }
  if (way == lv.cfg.ways) {
    way = static_cast<uint32_t>((lv.lru_stack[set] >> (4 * (lv.cfg.ways - 1))) & 0xF);
    Line& victim = base[way];
    Eviction ev;
    ev.block = victim.tag * lv.cfg.sets + set;
    ev.level = which;
    ev.was_prefetch = victim.prefetched;
    ev.demand_touched = victim.demand_touched;
    ev.prefetch_tag = victim.prefetch_tag;
    if (result && result->eviction_count < result->evictions.size())
      result->evictions[result->eviction_count++] = ev;
    notify(ev);
  }
  Line& line = base[way];
  line.tag = line_tag;
  line.valid = true;
  line.prefetched = prefetched;
  line.demand_touched = !prefetched;
  line.prefetch_tag = tag;
  touch_lru(lv, set, way);
}

void MemoryHierarchy::prune_mshr(CacheLevel& lv, uint64_t cycle) {
  // Swap-remove: entry order carries no meaning.
  for (size_t i = 0; i < lv.mshr.size();) {
    if (lv.mshr[i].completion <= cycle) {
      lv.mshr[i] = lv.mshr.back();
      lv.mshr.pop_back();
    } else {
      ++i;
    }
  }
}

MemoryHierarchy::MshrEntry* MemoryHierarchy::find_mshr(CacheLevel& lv, uint64_t block) {
  for (auto& e : lv.mshr) {
    if (e.block == block) return &e;
  }
  return nullptr;
}

uint64_t MemoryHierarchy::dram_enqueue(uint64_t arrival_cycle) {
  // FCFS initiation, pipelined service: starts are spaced one bus slot
  // apart (window/capacity cycles, tracked exactly in 1/capacity units),
  // each transaction then takes the full row-miss service latency.
  const uint64_t arrival_sub = arrival_cycle * dram_capacity_;
  const uint64_t start_sub = std::max(arrival_sub, dram_next_free_sub_);
  dram_next_free_sub_ = start_sub + dram_.window_cycles;
  const uint64_t start_cycle = start_sub / dram_capacity_;
  dram_window_.push_back(start_cycle);
  ++dram_transactions_;
  return (start_cycle - arrival_cycle) + dram_service_;
}

void MemoryHierarchy::notify(const Eviction& ev) {
  for (auto& obs : observers_) obs(ev);
}

AccessResult MemoryHierarchy::demand_access(uint64_t addr, uint64_t cycle) {
  AccessResult res;
  const uint64_t block = addr >> 6;
  uint64_t path_latency = 0;

  int hit_idx = -1;
  uint64_t remaining = 0;
  bool merged_inflight = false;
  for (int i = 0; i < 3; ++i) {
    CacheLevel& lv = levels_[i];
    path_latency += lv.cfg.hit_latency;
    if (Line* line = probe(lv, block)) {
      hit_idx = i;
      if (MshrEntry* rec = find_mshr(lv, block); rec && rec->completion > cycle) {
        remaining = rec->completion - cycle;
        if (rec->prefetch && line->prefetched && !line->demand_touched) res.late = true;
      }
      if (line->prefetched && !line->demand_touched) {
        res.hit_prefetched_line = true;
        res.prefetch_tag = line->prefetch_tag;
        res.touch_level = static_cast<Level>(i);
      }
      line->demand_touched = true;
      const uint64_t set = block % lv.cfg.sets;
      touch_lru(lv, set, static_cast<uint32_t>(line - &lv.lines[set * lv.cfg.ways]));
      break;
    }
    // Block absent but its miss still in flight (line was evicted while
    // outstanding): merge with the existing transaction.
    if (MshrEntry* rec = find_mshr(levels_[i], block); rec && rec->completion > cycle) {
      hit_idx = i;
      remaining = rec->completion - cycle;
      if (rec->prefetch) res.late = true;
      merged_inflight = true;
      break;
    }
  }

  // A full MSHR at a level this access misses stalls the issue until an
  // entry frees; the wait is both added latency and clock back-pressure.
  const int deepest_miss = hit_idx < 0 ? 2 : (merged_inflight ? hit_idx : hit_idx - 1);
  uint64_t wait_total = 0;
  for (int i = 0; i <= deepest_miss; ++i) {
    CacheLevel& lv = levels_[i];
    prune_mshr(lv, cycle + wait_total);
    if (find_mshr(lv, block)) continue;  // merged: no new entry needed
    if (lv.mshr.size() >= lv.cfg.mshr_size) {
      uint64_t earliest = UINT64_MAX;
      for (const auto& e : lv.mshr) earliest = std::min(earliest, e.completion);
      if (earliest > cycle + wait_total) wait_total = earliest - cycle;
      prune_mshr(lv, cycle + wait_total);
    }
  }
  res.mshr_wait = wait_total;

  uint64_t completion;
  if (hit_idx >= 0) {
    res.hit_level = static_cast<Level>(hit_idx);
    res.latency = std::max(path_latency + wait_total, remaining);
    completion = cycle + res.latency;
  } else {
    const uint64_t dram_arrival = cycle + path_latency + wait_total;
    const uint64_t dram_latency = dram_enqueue(dram_arrival);
    res.hit_level = Level::dram;
    res.latency = path_latency + wait_total + dram_latency;
    completion = cycle + res.latency;
  }

  for (int i = 0; i <= deepest_miss; ++i) {
    CacheLevel& lv = levels_[i];
    install(lv, static_cast<Level>(i), block, false, 0, &res);
    if (!find_mshr(lv, block) && lv.mshr.size() < lv.cfg.mshr_size) {
      lv.mshr.push_back({block, completion, false, 0});
    }
  }
  return res;
}

FillOutcome MemoryHierarchy::prefetch_fill(uint64_t addr, Level fill_level,
                                           uint64_t cycle, uint8_t tag) {
  if (fill_level != Level::l2 && fill_level != Level::llc)
    throw std::invalid_argument("prefetch_fill targets l2 or llc");
  const uint64_t block = addr >> 6;
  const int idx = static_cast<int>(fill_level);
  CacheLevel& lv = levels_[idx];

  if (probe(lv, block)) return FillOutcome::filtered;

  prune_mshr(lv, cycle);
  if (lv.mshr.size() >= lv.cfg.mshr_size) return FillOutcome::rejected_mshr_full;

  uint64_t completion;
  if (fill_level == Level::l2) {
    if (Line* src = probe(levels_[2], block)) {
      CacheLevel& llc = levels_[2];
      const uint64_t set = block % llc.cfg.sets;
      touch_lru(llc, set, static_cast<uint32_t>(src - &llc.lines[set * llc.cfg.ways]));
      completion = cycle + lv.cfg.hit_latency + levels_[2].cfg.hit_latency;
    } else {
      const uint64_t arrival = cycle + lv.cfg.hit_latency + levels_[2].cfg.hit_latency;
      completion = arrival + dram_enqueue(arrival);
    }
  } else {
    const uint64_t arrival = cycle + lv.cfg.hit_latency;
    completion = arrival + dram_enqueue(arrival);
  }

  install(lv, fill_level, block, true, tag, nullptr);
  lv.mshr.push_back({block, completion, true, tag});
  return FillOutcome::accepted;
}

unsigned MemoryHierarchy::mshr_occupancy(Level level, uint64_t cycle) {
  CacheLevel& lv = levels_[static_cast<int>(level)];
  prune_mshr(lv, cycle);
  return static_cast<unsigned>(lv.mshr.size());
}

unsigned MemoryHierarchy::mshr_capacity(Level level) const {
  return levels_[static_cast<int>(level)].cfg.mshr_size;
}

unsigned MemoryHierarchy::bandwidth_utilization(uint64_t cycle) {
  const uint64_t floor_cycle =
      cycle > dram_.window_cycles ? cycle - dram_.window_cycles : 0;
  while (!dram_window_.empty() && dram_window_.front() <= floor_cycle)
    dram_window_.pop_front();
  // Start times are FCFS-ordered, so the in-window count is a binary search.
  const auto end = std::upper_bound(dram_window_.begin(), dram_window_.end(), cycle);
  const uint64_t in_window = static_cast<uint64_t>(end - dram_window_.begin());
  const uint64_t q = 16 * in_window / dram_capacity_;
  return static_cast<unsigned>(std::min<uint64_t>(q, 15));
}

MemoryHierarchy::ResidencySnapshot MemoryHierarchy::prefetch_residency(uint64_t cycle,
                                                                       uint8_t tag) {
  ResidencySnapshot snap;
  for (int i = 0; i < 3; ++i) {
    CacheLevel& lv = levels_[i];
    for (const Line& line : lv.lines) {
      if (!line.valid || !line.prefetched || line.demand_touched) continue;
      if (line.prefetch_tag != tag) continue;
      // Recover the block id from tag + position for the MSHR lookup.
      const size_t pos = static_cast<size_t>(&line - lv.lines.data());
      const uint64_t set = pos / lv.cfg.ways;
      const uint64_t full_block = line.tag * lv.cfg.sets + set;
      MshrEntry* rec = find_mshr(lv, full_block);
      if (rec && rec->completion > cycle) {
        ++snap.in_flight[i];
      } else {
        ++snap.resident[i];
      }
    }
  }
  return snap;
}

bool MemoryHierarchy::block_resident(uint64_t block, Level level) const {
  const CacheLevel& lv = levels_[static_cast<int>(level)];
  const uint64_t set = block % lv.cfg.sets;
  const uint64_t tag = block / lv.cfg.sets;
  const Line* base = &lv.lines[set * lv.cfg.ways];
  for (uint32_t w = 0; w < lv.cfg.ways; ++w) {
    if (base[w].valid && base[w].tag == tag) return true;
  }
  return false;
}

}  // namespace sppam_sim::memsys
