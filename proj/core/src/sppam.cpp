#include "sppam_sim/sppam.hpp"

#include <algorithm>
#include <cassert>

namespace sppam_sim::sppam {

namespace {

uint64_t region_of_addr(uint64_t addr) {
  return (addr >> 12) & ((1ull << region_table::region_id_bits) - 1);
}

unsigned offset_of_addr(uint64_t addr) { return static_cast<unsigned>((addr >> 6) & 63); }

}  // namespace

std::optional<CrossPageTracker::Adjacency> CrossPageTracker::observe(uint8_t stream_id,
                                                                     uint64_t region,
                                                                     bool forward) {
  for (auto& e : entries_) {
    if (e.stream_id == stream_id) {
      const uint64_t prev = e.region;
      e.region = region;
      e.forward = forward;
      if (prev == region) return std::nullopt;
      const uint64_t expected = forward ? region - 1 : region + 1;
      if (prev == expected) return Adjacency{prev, forward};
      // Stream jumped; the emission contract still guarantees the crossing
      // came from the adjacent region.
      return Adjacency{expected, forward};
    }
  }
  Entry fresh{stream_id, region, forward};
  if (entries_.size() < capacity_) {
    entries_.push_back(fresh);
  } else {
    entries_[next_replace_] = fresh;
    next_replace_ = (next_replace_ + 1) % capacity_;
  }
  // First sighting of this stream: a tagged access is by definition a
  // boundary crossing, so the neighbor is derivable from the direction.
  return Adjacency{forward ? region - 1 : region + 1, forward};
}

std::optional<StreamTag> StreamProvider::observe_l1_miss(uint64_t addr) {
  const uint64_t region = region_of_addr(addr);
  ++tick_;
  for (auto& s : streams_) {
    if (s.last_region == region) {
      s.last_seen = tick_;
      return std::nullopt;
    }
  }
  for (auto& s : streams_) {
    if (s.direction >= 0 && region == s.last_region + 1) {
      s.last_region = region;
      s.direction = 1;
      s.last_seen = tick_;
      return StreamTag{s.id, true};
    }
    if (s.direction <= 0 && region + 1 == s.last_region) {
      s.last_region = region;
      s.direction = -1;
      s.last_seen = tick_;
      return StreamTag{s.id, false};
    }
  }
  Stream fresh;
  fresh.id = next_id_;
  next_id_ = static_cast<uint8_t>(next_id_ == 255 ? 1 : next_id_ + 1);
  fresh.last_region = region;
  fresh.direction = 0;
  fresh.last_seen = tick_;
  if (streams_.size() < max_streams_) {
    streams_.push_back(fresh);
  } else {
    auto oldest = std::min_element(
        streams_.begin(), streams_.end(),
        [](const Stream& a, const Stream& b) { return a.last_seen < b.last_seen; });
    *oldest = fresh;
  }
  return std::nullopt;
}

std::vector<unsigned> scan_candidates(uint64_t access_map, uint64_t prefetch_map,
                                      unsigned offset, unsigned distance) {
  std::vector<unsigned> out;
  const uint64_t occupied = access_map | prefetch_map;
  for (unsigned d = 1; d <= distance; ++d) {
    // Source and mirror candidate must both lie inside the region.
    if (offset < d || offset + d > 63) continue;
    if (((access_map >> (offset - d)) & 1) && !((occupied >> (offset + d)) & 1))
      out.push_back(offset + d);
    if (((access_map >> (offset + d)) & 1) && !((occupied >> (offset - d)) & 1))
      out.push_back(offset - d);
  }
  return out;
}

SppamPrefetcher::SppamPrefetcher(const SppamConfig& cfg, MemsysHooks hooks)
    : cfg_(cfg),
      hooks_(std::move(hooks)),
      regions_(cfg.region),
      llc_regions_(cfg.llc_region),
      patterns_(cfg.pattern),
      global_(cfg.global_usefulness_sample, cfg.initial_global_usefulness),
      lifespan_(cfg.lifespan_sample, cfg.initial_lifespan),
      cross_page_(cfg.cross_page_entries) {}

std::optional<uint8_t> SppamPrefetcher::shadow_bits(uint64_t region, Direction dir) const {
  const region_table::RegionEntry* entry = regions_.find(region);
  if (!entry) return std::nullopt;
  return shadow_from_entry(*entry, dir);
}

std::optional<uint8_t> SppamPrefetcher::shadow_from_entry(
    const region_table::RegionEntry& entry, Direction dir) const {
  if (!cfg_.shadow_enabled) return std::nullopt;
  const uint64_t neighbor =
      dir == Direction::positive ? entry.pred_region : entry.succ_region;
  if (neighbor == region_table::invalid_region) return std::nullopt;
  const region_table::RegionEntry* nb = regions_.find(neighbor);
  if (!nb) return std::nullopt;
  if (dir == Direction::positive)
    return static_cast<uint8_t>((nb->access_map >> 58) & 0x3F);
  return static_cast<uint8_t>(nb->access_map & 0x3F);
}

void SppamPrefetcher::scrape_into_tables(region_table::RegionEntry& entry, bool terminal) {
  std::optional<uint8_t> pred_edge;
  std::optional<uint8_t> succ_edge;
  if (cfg_.shadow_enabled) {
    if (entry.pred_region != region_table::invalid_region) {
      if (const auto* nb = regions_.find(entry.pred_region)) {
        pred_edge = static_cast<uint8_t>((nb->access_map >> 58) & 0x3F);
        ++counters_.shadow_extractions;
      }
    }
    if (entry.succ_region != region_table::invalid_region) {
      if (const auto* nb = regions_.find(entry.succ_region)) {
        succ_edge = static_cast<uint8_t>(nb->access_map & 0x3F);
        ++counters_.shadow_extractions;
      }
    }
  }
  uint64_t n = 0;
  region_table::ScrapeTally pending{};
  unsigned run = 0;
  region_table::for_each_scrape_tally(
      entry.access_map, pred_edge, succ_edge, [&](const region_table::ScrapeTally& t) {
        ++n;
        if (run > 0 && t == pending) {
          ++run;
          return;
        }
        if (run > 0)
          patterns_.table(pending.direction).tally_run(pending.pattern, pending.following, run);
        pending = t;
        run = 1;
      });
  if (run > 0)
    patterns_.table(pending.direction).tally_run(pending.pattern, pending.following, run);
  counters_.tallies += n;
  ++counters_.scrapes;
  if (terminal) ++counters_.terminal_scrapes;
  regions_.reset_after_scrape(entry, l2_access_ordinal_);
}

bool SppamPrefetcher::redirect_fill(PrefetchRequest& req) {
  if (req.fill_level == memsys::Level::l2 && hooks_.l2_mshr_occupancy &&
      hooks_.l2_mshr_capacity &&
      hooks_.l2_mshr_occupancy() >= hooks_.l2_mshr_capacity()) {
    req.fill_level = memsys::Level::llc;
    ++counters_.redirected_to_llc;
  }
  if (req.fill_level == memsys::Level::llc) {
    const uint64_t region = req.block >> 6;
    const unsigned offset = static_cast<unsigned>(req.block & 63);
    if (llc_regions_.filter(region, offset)) {
      ++counters_.filtered_llc;
      return false;
    }
    llc_regions_.mark(region, offset);
  }
  return true;
}

bool SppamPrefetcher::force_llc_redirect(PrefetchRequest& req) {
  if (req.fill_level != memsys::Level::llc) {
    req.fill_level = memsys::Level::llc;
    ++counters_.redirected_to_llc;
  }
  const uint64_t region = req.block >> 6;
  const unsigned offset = static_cast<unsigned>(req.block & 63);
  if (llc_regions_.filter(region, offset)) {
    ++counters_.filtered_llc;
    return false;
  }
  llc_regions_.mark(region, offset);
  return true;
}

bool SppamPrefetcher::try_emit(EmitContext& ctx, unsigned candidate_offset,
                               unsigned effective_usefulness, const Provenance& prov) {
  if (should_drop(effective_usefulness)) {
    ++counters_.dropped;
    return false;
  }
  if (!region_table::RegionTable::record_prefetch(*ctx.entry, candidate_offset)) {
    ++counters_.filtered_duplicate;
    return false;
  }
  PrefetchRequest req;
  req.block = (ctx.region << 6) | candidate_offset;
  req.fill_level = memsys::Level::l2;
  req.provenance = prov;
  if ((req.block >> 6) != ctx.region) {
    ++counters_.cross_region_violations;  // unreachable by construction
    return false;
  }
  if (ctx.emitted_bits & (1ull << candidate_offset)) {
    ++counters_.duplicate_violations;  // record_prefetch gate failed
    return false;
  }
  if (!redirect_fill(req)) return false;
  ctx.emitted_bits |= 1ull << candidate_offset;
  ctx.out->push_back(req);
  ++counters_.requests_emitted;
  return true;
}

unsigned SppamPrefetcher::run_lookahead(Direction dir, uint8_t start_pattern,
                                        pattern_table::Prediction first,
                                        unsigned anchor_offset, unsigned budget,
                                        unsigned initial_usefulness, EmitContext& ctx,
                                        bool& want_scan) {
  unsigned used = 0;
  unsigned effective = initial_usefulness;
  uint8_t pattern = start_pattern;
  int anchor = static_cast<int>(anchor_offset);
  uint8_t depth = 0;
  bool have_first = true;
  while (budget > used) {
    const auto p = have_first ? first : patterns_.predict(dir, pattern);
    have_first = false;
    if (p.pattern == 0) {
      want_scan = true;
      break;
    }
    ++counters_.lookahead_steps;
    for (unsigned k = 0; k < 6 && used < budget; ++k) {
      if (!((p.pattern >> k) & 1)) continue;
      const int off = dir == Direction::positive ? anchor + 1 + static_cast<int>(k)
                                                 : anchor - 1 - static_cast<int>(k);
      if (off < 0 || off > 63) continue;
      Provenance prov{RequestSource::lookahead, dir, pattern, depth};
      if (try_emit(ctx, static_cast<unsigned>(off), effective, prov)) ++used;
    }
    effective = std::min<unsigned>(
        15, effective * p.usefulness / cfg_.throttle.lookahead_decay);
    if (effective < cfg_.throttle.lookahead_cutoff) break;
    pattern = p.pattern;
    anchor += dir == Direction::positive ? 6 : -6;
    if (anchor >= 63 || anchor <= 0) break;
    ++depth;
  }
  return used;
}

std::vector<PrefetchRequest> SppamPrefetcher::on_l2_access(uint64_t addr,
                                                           std::optional<StreamTag> tag,
                                                           uint64_t cycle) {
  (void)cycle;
  const uint64_t region = region_of_addr(addr);
  const unsigned offset = offset_of_addr(addr);
  ++l2_access_ordinal_;
  drop_throttle_.tick();

  auto outcome = regions_.record_access(region, offset, l2_access_ordinal_);
  if (outcome.evicted) {
    scrape_into_tables(*outcome.evicted, true);
  }
  for (region_table::RegionEntry* mate : outcome.idle_due) {
    scrape_into_tables(*mate, false);
    ++counters_.idle_scrapes;
  }
  if (outcome.scrape_due) {
    scrape_into_tables(*outcome.entry, false);
  }

  if (tag) {
    if (auto adj = cross_page_.observe(tag->id, region, tag->forward)) {
      if (adj->forward) {
        outcome.entry->pred_region = adj->prev_region;
        if (auto* prev = regions_.find(adj->prev_region)) prev->succ_region = region;
      } else {
        outcome.entry->succ_region = adj->prev_region;
        if (auto* prev = regions_.find(adj->prev_region)) prev->pred_region = region;
      }
    }
  }

  const auto pos_shadow = shadow_from_entry(*outcome.entry, Direction::positive);
  const auto neg_shadow = shadow_from_entry(*outcome.entry, Direction::negative);
  const uint8_t w_pos = region_table::extract_pattern(outcome.entry->access_map, offset,
                                                      Direction::positive, pos_shadow);
  const uint8_t w_neg = region_table::extract_pattern(outcome.entry->access_map, offset,
                                                      Direction::negative, neg_shadow);

  const auto pred_pos = patterns_.predict(Direction::positive, w_pos);
  const auto pred_neg = patterns_.predict(Direction::negative, w_neg);
  unsigned governing;
  if (lifespan_.value() >= cfg_.throttle.lifespan_cutoff) {
    if (w_pos != 0)
      governing = pred_pos.usefulness;
    else if (w_neg != 0)
      governing = pred_neg.usefulness;
    else
      governing = global_.value();
  } else {
    governing = global_.value();
  }

  const unsigned bw = hooks_.bandwidth_utilization ? (hooks_.bandwidth_utilization() & 0xF) : 0;
  const unsigned degree = cfg_.throttle.prefetch_degrees[governing & 0xF];
  const unsigned reduction = cfg_.throttle.bandwidth_reduction[bw];
  const unsigned budget = std::max(1u, degree > reduction ? degree - reduction : 0u);

  std::vector<PrefetchRequest> out;
  out.reserve(budget);
  EmitContext ctx{outcome.entry, region, 0, &out};
  bool want_scan = false;
  unsigned used = 0;
  if (w_pos != 0) {
    used += run_lookahead(Direction::positive, w_pos, pred_pos, offset, budget - used,
                          governing, ctx, want_scan);
  } else {
    want_scan = true;
  }
  if (used < budget) {
    if (w_neg != 0) {
      used += run_lookahead(Direction::negative, w_neg, pred_neg, offset, budget - used,
                            governing, ctx, want_scan);
    } else {
      want_scan = true;
    }
  }
  if (want_scan && used < budget) {
    ++counters_.scan_fallbacks;
    const auto cands = scan_candidates(outcome.entry->access_map,
                                       outcome.entry->prefetch_map, offset,
                                       cfg_.throttle.scan_distance);
    for (unsigned cand : cands) {
      if (used >= budget) break;
      Provenance prov;
      prov.source = RequestSource::scan;
      prov.direction = cand > offset ? Direction::positive : Direction::negative;
      prov.pattern_index = 0;
      prov.depth = static_cast<uint8_t>(cand > offset ? cand - offset : offset - cand);
      if (try_emit(ctx, cand, governing, prov)) ++used;
    }
  }
  return out;
}

void SppamPrefetcher::on_eviction(uint64_t addr, bool was_prefetch, bool was_used) {
  const uint64_t region = region_of_addr(addr);
  const unsigned offset = offset_of_addr(addr);
  if (cfg_.llc_clear_on_l2_evict) llc_regions_.clear(region, offset);
  if (!was_prefetch) return;

  region_table::RegionEntry* entry = regions_.find(region);
  const bool resident = entry != nullptr;
  const bool bit_set = resident && ((entry->prefetch_map >> offset) & 1);

  if (was_used) {
    if (resident && !bit_set) return;  // already handled at first touch
    global_.record(true);
  } else {
    global_.record(false);
    // Lifespan: useless evictions only; hit when the region is still tracked.
    lifespan_.record(resident);
  }

  if (resident && bit_set) {
    const auto pos_shadow = shadow_from_entry(*entry, Direction::positive);
    const auto neg_shadow = shadow_from_entry(*entry, Direction::negative);
    const uint8_t w_pos = region_table::extract_pattern(entry->access_map, offset,
                                                        Direction::positive, pos_shadow);
    const uint8_t w_neg = region_table::extract_pattern(entry->access_map, offset,
                                                        Direction::negative, neg_shadow);
    if (w_pos != 0) {
      patterns_.feedback(Direction::positive, w_pos, was_used);
      ++counters_.pattern_feedbacks;
    }
    if (w_neg != 0) {
      patterns_.feedback(Direction::negative, w_neg, was_used);
      ++counters_.pattern_feedbacks;
    }
    entry->prefetch_map &= ~(1ull << offset);
  }
}

void SppamPrefetcher::on_llc_demand_fill(uint64_t addr) {
  llc_regions_.mark(region_of_addr(addr), offset_of_addr(addr));
}

void SppamPrefetcher::on_llc_eviction(uint64_t addr) {
  if (!cfg_.llc_clear_on_l2_evict)
    llc_regions_.clear(region_of_addr(addr), offset_of_addr(addr));
}

}  // namespace sppam_sim::sppam
