#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "sppam_sim/sppam.hpp"

using namespace sppam_sim;
using namespace sppam_sim::sppam;
using region_table::Direction;

namespace {

struct StubHooks {
  unsigned bw = 0;
  unsigned occupancy = 0;
  unsigned capacity = 32;
  MemsysHooks hooks() {
    MemsysHooks h;
    h.bandwidth_utilization = [this] { return bw; };
    h.l2_mshr_occupancy = [this] { return occupancy; };
    h.l2_mshr_capacity = [this] { return capacity; };
    return h;
  }
};

uint64_t addr_of(uint64_t region, unsigned offset) {
  return (region << 12) | (uint64_t(offset) << 6);
}

uint64_t bits(std::initializer_list<int> positions) {
  uint64_t m = 0;
  for (int p : positions) m |= 1ull << p;
  return m;
}

// Drive a dense ascending walk through a region so the pattern tables learn
// the full-window transition.
void train_dense_region(SppamPrefetcher& pf, uint64_t region, uint64_t cycle_base = 0) {
  for (unsigned o = 0; o < 64; ++o) {
    pf.on_l2_access(addr_of(region, o), std::nullopt, cycle_base + o);
  }
}

}  // namespace

TEST_CASE("scan: empty map yields nothing") {
  CHECK(scan_candidates(0, 0, 30, 16).empty());
}

TEST_CASE("scan: single prior access mirrors to the other side") {
  const auto c = scan_candidates(bits({29}), 0, 30, 16);
  REQUIRE(c.size() == 1);
  CHECK(c[0] == 31);
}

TEST_CASE("scan: prefetched mirror target is filtered") {
  const auto c = scan_candidates(bits({28}), bits({32}), 30, 16);
  CHECK(c.empty());
}

TEST_CASE("scan: candidates come out by ascending distance") {
  const auto c = scan_candidates(bits({27, 29}), 0, 30, 16);
  REQUIRE(c.size() == 2);
  CHECK(c[0] == 31);  // d=1
  CHECK(c[1] == 33);  // d=3
}

TEST_CASE("scan respects the configured distance and region bounds") {
  CHECK(scan_candidates(bits({0}), 0, 20, 16).empty());  // d=20 beyond distance
  // offset近 the edge: mirror would leave the region
  CHECK(scan_candidates(bits({62}), 0, 63, 16).empty());
}

TEST_CASE("drop throttle follows the chance table against the free counter") {
  ThrottleConfig t;
  DropThrottle d;
  // counter starts at 0; tick to a known value
  for (int i = 0; i < 122; ++i) d.tick();
  CHECK(d.counter() == 122);
  CHECK(d.should_drop(0, t));  // 122 < 123
  for (int i = 0; i < 3; ++i) d.tick();
  CHECK(d.counter() == 125);
  CHECK_FALSE(d.should_drop(0, t));  // 125 >= 123
  // usefulness at or above the cutoff never drops
  CHECK_FALSE(d.should_drop(8, t));
  CHECK_FALSE(d.should_drop(9, t));
  CHECK_FALSE(d.should_drop(15, t));
  // usefulness 7 has chance 0
  CHECK_FALSE(d.should_drop(7, t));
}

TEST_CASE("drop frequency equals chance/128 over full counter cycles") {
  ThrottleConfig t;
  for (unsigned u = 0; u < 8; ++u) {
    DropThrottle d;
    unsigned drops = 0;
    for (int i = 0; i < 128 * 10; ++i) {
      d.tick();
      if (d.should_drop(u, t)) ++drops;
    }
    CHECK(drops == 10u * t.drop_chance[u]);
  }
}

TEST_CASE("cold region with one prior access falls back to the scan rule") {
  StubHooks hooks;
  SppamConfig cfg;
  SppamPrefetcher pf(cfg, hooks.hooks());
  pf.on_l2_access(addr_of(5, 29), std::nullopt, 1);
  const auto reqs = pf.on_l2_access(addr_of(5, 30), std::nullopt, 2);
  REQUIRE(!reqs.empty());
  bool found = false;
  for (const auto& r : reqs) {
    CHECK((r.block >> 6) == 5);  // never leaves the region
    if ((r.block & 63) == 31) {
      found = true;
      CHECK(r.provenance.source == RequestSource::scan);
    }
  }
  CHECK(found);
}

TEST_CASE("trained dense region drives pattern-table lookahead") {
  StubHooks hooks;
  SppamConfig cfg;
  SppamPrefetcher pf(cfg, hooks.hooks());
  for (uint64_t r = 10; r < 14; ++r) train_dense_region(pf, r, (r - 10) * 64);
  CHECK(pf.patterns().predict(Direction::positive, 63).pattern == 63);

  // Fresh region, walk enough to build a full window, then observe lookahead.
  uint64_t cycle = 1000;
  std::vector<PrefetchRequest> reqs;
  for (unsigned o = 0; o <= 6; ++o) {
    reqs = pf.on_l2_access(addr_of(99, o), std::nullopt, cycle++);
  }
  bool lookahead_seen = false;
  for (const auto& r : reqs) {
    if (r.provenance.source == RequestSource::lookahead) {
      lookahead_seen = true;
      CHECK((r.block >> 6) == 99);
      CHECK((r.block & 63) > 6);
    }
  }
  CHECK(lookahead_seen);
}

TEST_CASE("degree budget caps emissions at max(1, degree - bandwidth cut)") {
  StubHooks hooks;
  SppamConfig cfg;
  SppamPrefetcher pf(cfg, hooks.hooks());
  for (uint64_t r = 10; r < 14; ++r) train_dense_region(pf, r, (r - 10) * 64);
  // Usefulness is untrained (8) -> degree 4. Feed usefulness up via the
  // experiment knobs instead: lifespan below cutoff routes to global.
  pf.set_region_lifespan(0);
  pf.set_global_usefulness(15);

  hooks.bw = 0;
  uint64_t cycle = 5000;
  unsigned max_emitted = 0;
  for (unsigned o = 0; o <= 10; ++o) {
    const auto reqs = pf.on_l2_access(addr_of(200, o), std::nullopt, cycle++);
    max_emitted = std::max(max_emitted, unsigned(reqs.size()));
  }
  CHECK(max_emitted <= 16);
  CHECK(max_emitted >= 5);  // the full budget is reachable on a fresh region

  // With bandwidth saturated the budget shrinks to max(1, 16-8).
  hooks.bw = 15;
  unsigned max_throttled = 0;
  for (unsigned o = 0; o <= 10; ++o) {
    const auto reqs = pf.on_l2_access(addr_of(201, o), std::nullopt, cycle++);
    max_throttled = std::max(max_throttled, unsigned(reqs.size()));
  }
  CHECK(max_throttled <= 8);
}

TEST_CASE("lookahead decay examples") {
  // e=15 with step usefulness 13 is the fixed point: floor(195/13) = 15.
  CHECK(std::min(15u, 15u * 13u / 13u) == 15);
  // e=10 with step usefulness 9 decays below the cutoff: floor(90/13) = 6.
  CHECK(10u * 9u / 13u == 6);
}

TEST_CASE("lookahead terminates within the region regardless of training") {
  StubHooks hooks;
  SppamConfig cfg;
  SppamPrefetcher pf(cfg, hooks.hooks());
  for (uint64_t r = 10; r < 20; ++r) train_dense_region(pf, r, (r - 10) * 64);
  pf.set_region_lifespan(0);
  pf.set_global_usefulness(15);
  // Every retrieval stays inside the triggering region even with degree 16
  // and a fully-confident table.
  uint64_t cycle = 10000;
  for (unsigned o = 0; o < 64; ++o) {
    const auto reqs = pf.on_l2_access(addr_of(300, o), std::nullopt, cycle++);
    for (const auto& r : reqs) CHECK((r.block >> 6) == 300);
  }
  CHECK(pf.counters().cross_region_violations == 0);
  CHECK(pf.counters().duplicate_violations == 0);
}

TEST_CASE("per-generation duplicate suppression") {
  StubHooks hooks;
  SppamConfig cfg;
  SppamPrefetcher pf(cfg, hooks.hooks());
  std::mt19937_64 rng(17);
  std::set<uint64_t> emitted;
  uint64_t cycle = 0;
  for (int i = 0; i < 2000; ++i) {
    const unsigned o = unsigned(rng() % 64);
    const auto reqs = pf.on_l2_access(addr_of(7, o), std::nullopt, ++cycle);
    for (const auto& r : reqs) {
      CHECK(emitted.insert(r.block).second);  // never a repeat
    }
  }
  CHECK(pf.counters().duplicate_violations == 0);
}

TEST_CASE("eviction of a prefetched block reopens it for prefetching") {
  StubHooks hooks;
  SppamConfig cfg;
  SppamPrefetcher pf(cfg, hooks.hooks());
  pf.on_l2_access(addr_of(5, 29), std::nullopt, 1);
  auto reqs = pf.on_l2_access(addr_of(5, 30), std::nullopt, 2);
  REQUIRE(!reqs.empty());
  const uint64_t block = reqs[0].block;  // the scan mirror, offset 31
  CHECK((block & 63) == 31);
  // The block is filtered while marked: a repeat trigger re-emits nothing.
  reqs = pf.on_l2_access(addr_of(5, 30), std::nullopt, 3);
  for (const auto& r : reqs) CHECK(r.block != block);
  // ...until its L2 eviction clears the map bit.
  pf.on_eviction(block << 6, true, false);
  reqs = pf.on_l2_access(addr_of(5, 30), std::nullopt, 4);
  bool again = false;
  for (const auto& r : reqs) {
    if (r.block == block) again = true;
  }
  CHECK(again);
}

TEST_CASE("global usefulness samples at 512 outcomes") {
  StubHooks hooks;
  SppamConfig cfg;
  SppamPrefetcher pf(cfg, hooks.hooks());
  CHECK(pf.global_usefulness() == 8);
  for (int i = 0; i < 512; ++i) pf.on_eviction(addr_of(900, 0), true, true);
  CHECK(pf.global_usefulness() == 15);
  for (int i = 0; i < 512; ++i) pf.on_eviction(addr_of(900, 0), true, false);
  CHECK(pf.global_usefulness() == 0);
}

TEST_CASE("region lifespan counts useless evictions by residency") {
  StubHooks hooks;
  SppamConfig cfg;
  SppamPrefetcher pf(cfg, hooks.hooks());
  // Resident region: record an access then mark a prefetch.
  pf.on_l2_access(addr_of(40, 1), std::nullopt, 1);
  // Useless eviction for a region never seen: lifespan miss.
  for (int i = 0; i < 128; ++i) pf.on_eviction(addr_of(41, 5), true, false);
  CHECK(pf.region_lifespan() == 0);
}

TEST_CASE("useless eviction in a resident region feeds back to the tables") {
  StubHooks hooks;
  SppamConfig cfg;
  cfg.pattern.usefulness_sample = 4;  // small sample for the test
  SppamPrefetcher pf(cfg, hooks.hooks());
  pf.set_region_lifespan(0);       // keep the drop throttle out of the way
  pf.set_global_usefulness(15);
  // Build history up to offset 9; the scan marks offset 10 among others.
  for (unsigned o = 4; o <= 9; ++o) pf.on_l2_access(addr_of(60, o), std::nullopt, o);
  REQUIRE((pf.regions().find(60)->prefetch_map >> 10) & 1);
  for (int i = 0; i < 4; ++i) {
    pf.on_eviction(addr_of(60, 10), true, false);
    // Re-trigger the scan so the bit is marked again for the next round.
    pf.on_l2_access(addr_of(60, 9), std::nullopt, 100 + unsigned(i));
    REQUIRE((pf.regions().find(60)->prefetch_map >> 10) & 1);
  }
  // The positive window at offset 10 is dense: pattern 63 got useless feedback.
  CHECK(pf.patterns().table(Direction::positive).entry(63).usefulness == 0);
}

TEST_CASE("stream provider tracks ascending walks and interleaving") {
  StreamProvider sp(16);
  // Pure ascending page-by-page walk: one id, forward tags at crossings.
  std::optional<StreamTag> tag;
  uint8_t id = 0;
  for (unsigned r = 1; r <= 4; ++r) {
    for (unsigned o = 0; o < 4; ++o) {
      tag = sp.observe_l1_miss(addr_of(r, o));
      if (o == 0 && r > 1) {
        REQUIRE(tag.has_value());
        CHECK(tag->forward);
        if (id == 0) id = tag->id;
        CHECK(tag->id == id);
      } else {
        CHECK_FALSE(tag.has_value());
      }
    }
  }

  // Widely-spaced regions never extend a stream.
  StreamProvider sp2(16);
  for (unsigned i = 0; i < 20; ++i) {
    CHECK_FALSE(sp2.observe_l1_miss(addr_of(100 + i * 10, 0)).has_value());
  }

  // Two interleaved ascending walks get two distinct ids.
  StreamProvider sp3(16);
  std::set<uint8_t> ids;
  for (unsigned step = 0; step < 6; ++step) {
    auto a = sp3.observe_l1_miss(addr_of(10 + step, 0));
    auto b = sp3.observe_l1_miss(addr_of(500 + step, 0));
    if (a) ids.insert(a->id);
    if (b) ids.insert(b->id);
  }
  CHECK(ids.size() == 2);

  // Descending walk reports backward direction.
  StreamProvider sp4(16);
  sp4.observe_l1_miss(addr_of(900, 0));
  const auto back = sp4.observe_l1_miss(addr_of(899, 0));
  REQUIRE(back.has_value());
  CHECK_FALSE(back->forward);
}

TEST_CASE("cross-page adjacency and shadow bits") {
  StubHooks hooks;
  SppamConfig cfg;
  SppamPrefetcher pf(cfg, hooks.hooks());
  // Walk region 20 densely (its top bits end set), then cross into 21.
  train_dense_region(pf, 20);
  pf.on_l2_access(addr_of(21, 0), StreamTag{3, true}, 100);
  // adjacency: 21's predecessor is 20
  CHECK(pf.regions().find(21)->pred_region == 20);
  CHECK(pf.regions().find(20)->succ_region == 21);
  // shadow of 21's positive edge reads 20's top six bits
  const auto shadow = pf.shadow_bits(21, Direction::positive);
  REQUIRE(shadow.has_value());
  CHECK(*shadow == 0x3F);
  // no adjacency known: absent
  CHECK_FALSE(pf.shadow_bits(500, Direction::positive).has_value());
}

TEST_CASE("first access to the shadowed region gets a pattern prefetch") {
  StubHooks hooks;
  SppamConfig cfg;
  SppamPrefetcher pf(cfg, hooks.hooks());
  for (uint64_t r = 30; r < 33; ++r) train_dense_region(pf, r, (r - 30) * 64);
  // Establish adjacency while crossing 33 -> 34 with a dense predecessor.
  train_dense_region(pf, 33, 400);
  const auto reqs = pf.on_l2_access(addr_of(34, 0), StreamTag{5, true}, 600);
  bool pattern_driven = false;
  for (const auto& r : reqs) {
    CHECK((r.block >> 6) == 34);
    if (r.provenance.source == RequestSource::lookahead) pattern_driven = true;
  }
  CHECK(pattern_driven);
}

TEST_CASE("redirect_fill sends fills to the LLC when the L2 MSHR is full") {
  StubHooks hooks;
  SppamConfig cfg;
  SppamPrefetcher pf(cfg, hooks.hooks());

  PrefetchRequest req;
  req.block = addr_of(70, 4) >> 6;
  req.fill_level = memsys::Level::l2;
  hooks.occupancy = 0;
  CHECK(pf.redirect_fill(req));
  CHECK(req.fill_level == memsys::Level::l2);

  hooks.occupancy = hooks.capacity;
  PrefetchRequest req2;
  req2.block = addr_of(70, 5) >> 6;
  req2.fill_level = memsys::Level::l2;
  CHECK(pf.redirect_fill(req2));
  CHECK(req2.fill_level == memsys::Level::llc);
  CHECK(pf.llc_regions().filter(70, 5));  // marked on the way out

  // A block already tracked in the LLC region table is dropped.
  PrefetchRequest req3;
  req3.block = addr_of(70, 5) >> 6;
  req3.fill_level = memsys::Level::l2;
  CHECK_FALSE(pf.redirect_fill(req3));
}

TEST_CASE("force_llc_redirect applies the LLC filter") {
  StubHooks hooks;
  SppamConfig cfg;
  SppamPrefetcher pf(cfg, hooks.hooks());
  PrefetchRequest req;
  req.block = addr_of(80, 9) >> 6;
  req.fill_level = memsys::Level::l2;
  CHECK(pf.force_llc_redirect(req));
  CHECK(req.fill_level == memsys::Level::llc);
  PrefetchRequest again = req;
  again.fill_level = memsys::Level::l2;
  CHECK_FALSE(pf.force_llc_redirect(again));  // now tracked
}

TEST_CASE("llc table bits clear on L2 evictions by default") {
  StubHooks hooks;
  SppamConfig cfg;
  SppamPrefetcher pf(cfg, hooks.hooks());
  pf.on_llc_demand_fill(addr_of(90, 2));
  CHECK(pf.llc_regions().filter(90, 2));
  pf.on_eviction(addr_of(90, 2), false, true);  // any L2 eviction clears
  CHECK_FALSE(pf.llc_regions().filter(90, 2));

  // Alternate mode: LLC evictions clear instead.
  SppamConfig cfg2;
  cfg2.llc_clear_on_l2_evict = false;
  SppamPrefetcher pf2(cfg2, hooks.hooks());
  pf2.on_llc_demand_fill(addr_of(90, 2));
  pf2.on_eviction(addr_of(90, 2), false, true);
  CHECK(pf2.llc_regions().filter(90, 2));  // unaffected by L2 evictions
  pf2.on_llc_eviction(addr_of(90, 2));
  CHECK_FALSE(pf2.llc_regions().filter(90, 2));
}

TEST_CASE("governing usefulness switches on region lifespan") {
  StubHooks hooks;
  SppamConfig cfg;
  SppamPrefetcher pf(cfg, hooks.hooks());
  pf.set_global_usefulness(0);
  pf.set_region_lifespan(0);  // below cutoff 7: global governs
  // With global usefulness 0, degree is 1 and drops kick in heavily:
  // run a fresh region access and observe at most one emission.
  unsigned max_emit = 0;
  for (unsigned o = 0; o < 8; ++o) {
    const auto reqs = pf.on_l2_access(addr_of(400, o), std::nullopt, o + 1);
    max_emit = std::max(max_emit, unsigned(reqs.size()));
  }
  CHECK(max_emit <= 1);
}

TEST_CASE("cross-page tracker keeps at most its capacity") {
  CrossPageTracker t(4);
  for (uint8_t id = 1; id <= 6; ++id) {
    t.observe(id, 100 + id, true);
  }
  // Oldest entries rotated out FIFO; re-observing a live stream with a new
  // region yields its previous region.
  const auto adj = t.observe(6, 107, true);
  REQUIRE(adj.has_value());
  CHECK(adj->prev_region == 106);
}
