#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <vector>

#include "sppam_sim/region_table.hpp"

using namespace sppam_sim::region_table;

namespace {

// Independent per-bit window enumerator, deliberately free of the shift and
// reverse tricks the implementation uses.
uint8_t naive_extract(uint64_t map, int offset, Direction dir,
                      std::optional<uint8_t> shadow) {
  uint8_t out = 0;
  for (int k = 0; k < 6; ++k) {
    const int pos = dir == Direction::positive ? offset - 1 - k : offset + 1 + k;
    bool bit = false;
    if (pos >= 0 && pos <= 63) {
      bit = (map >> pos) & 1;
    } else if (shadow) {
      if (dir == Direction::positive && pos < 0) bit = (*shadow >> (pos + 6)) & 1;
      if (dir == Direction::negative && pos > 63) bit = (*shadow >> (pos - 64)) & 1;
    }
    if (bit) out |= uint8_t(1) << k;
  }
  return out;
}

std::vector<ScrapeTally> naive_scrape(uint64_t map, std::optional<uint8_t> pred,
                                      std::optional<uint8_t> succ) {
  std::vector<ScrapeTally> out;
  const int pos_lo = pred ? 0 : 6;
  for (int i = pos_lo; i <= 58; ++i) {
    const uint8_t w = naive_extract(map, i, Direction::positive, pred);
    if (w == 0) continue;
    uint8_t f = 0;
    for (int k = 0; k < 6; ++k) {
      if ((map >> (i + k)) & 1) f |= uint8_t(1) << k;
    }
    out.push_back({Direction::positive, w, f});
  }
  const int neg_hi = succ ? 63 : 57;
  for (int i = 5; i <= neg_hi; ++i) {
    const uint8_t w = naive_extract(map, i, Direction::negative, succ);
    if (w == 0) continue;
    uint8_t f = 0;
    for (int k = 0; k < 6; ++k) {
      if ((map >> (i - k)) & 1) f |= uint8_t(1) << k;
    }
    out.push_back({Direction::negative, w, f});
  }
  return out;
}

uint64_t bits(std::initializer_list<int> positions) {
  uint64_t m = 0;
  for (int p : positions) m |= 1ull << p;
  return m;
}

}  // namespace

TEST_CASE("first access to a fresh region sets one map bit") {
  RegionTable rt;
  const auto out = rt.record_access(100, 3, 1);
  REQUIRE(out.entry != nullptr);
  CHECK(out.entry->access_map == 0x8);
  CHECK(out.entry->access_counter == 1);
  CHECK_FALSE(out.scrape_due);
  CHECK_FALSE(out.evicted.has_value());
}

TEST_CASE("the 14th access makes the region scrape-due") {
  RegionTable rt;
  for (int i = 0; i < 13; ++i) {
    CHECK_FALSE(rt.record_access(100, unsigned(i), uint64_t(i + 1)).scrape_due);
  }
  CHECK(rt.record_access(100, 13, 14).scrape_due);
}

TEST_CASE("a region idle for 1000 accesses is scrape-due when inspected") {
  RegionTable rt;
  rt.record_access(100, 0, 10);
  CHECK_FALSE(rt.record_access(100, 1, 10 + 999).scrape_due);
  RegionTable rt2;
  rt2.record_access(100, 0, 10);
  CHECK(rt2.record_access(100, 1, 10 + 1000).scrape_due);
}

TEST_CASE("idle set-mates surface when their set is touched") {
  RegionTable rt;
  rt.record_access(100, 0, 1);
  // 100 and 100+128 share set 100 % 128.
  const auto out = rt.record_access(100 + 128, 0, 2000);
  REQUIRE(out.idle_due.size() == 1);
  CHECK(rt.region_of(*out.idle_due[0]) == 100);
  // After the caller scrapes and the timer resets, the mate goes quiet.
  rt.reset_after_scrape(*out.idle_due[0], 2000);
  CHECK(rt.record_access(100 + 128, 1, 2001).idle_due.empty());
}

TEST_CASE("record_prefetch marks once and suppresses afterwards") {
  RegionTable rt;
  rt.record_access(7, 0, 1);
  CHECK(rt.record_prefetch(7, 5));
  CHECK_FALSE(rt.record_prefetch(7, 5));  // already prefetched
  CHECK_FALSE(rt.record_prefetch(7, 0));  // demand-accessed
  CHECK(rt.find(7)->prefetch_map == bits({5}));
}

TEST_CASE("a demand access clears the matching prefetch bit") {
  RegionTable rt;
  rt.record_access(7, 0, 1);
  rt.record_prefetch(7, 9);
  rt.record_access(7, 9, 2);
  CHECK((rt.find(7)->prefetch_map & bits({9})) == 0);
  CHECK((rt.find(7)->access_map & bits({9})) != 0);
  // Still suppressed: the block is demand-owned now.
  CHECK_FALSE(rt.record_prefetch(7, 9));
}

TEST_CASE("conflict miss evicts the LRU entry and returns it") {
  Config cfg;
  cfg.sets = 2;
  cfg.ways = 2;
  RegionTable rt(cfg);
  rt.record_access(0, 0, 1);  // set 0
  rt.record_access(2, 0, 2);  // set 0
  rt.record_access(0, 1, 3);  // touch region 0: region 2 is now LRU
  const auto out = rt.record_access(4, 0, 4);
  REQUIRE(out.evicted.has_value());
  CHECK(rt.region_of(*out.evicted) == 2);
  CHECK(out.evicted->access_map == bits({0}));
}

TEST_CASE("access counter saturates at 15") {
  RegionTable rt;
  for (int i = 0; i < 40; ++i) rt.record_access(3, unsigned(i % 64), uint64_t(i + 1));
  CHECK(rt.find(3)->access_counter == 15);
}

TEST_CASE("extract_pattern worked examples") {
  // dense window before offset 10
  CHECK(extract_pattern(bits({4, 5, 6, 7, 8, 9}), 10, Direction::positive) == 63);
  // empty map
  CHECK(extract_pattern(0, 31, Direction::positive) == 0);
  CHECK(extract_pattern(0, 31, Direction::negative) == 0);
  // alternating bits: {5,7,9} before offset 10, nearest in bit 0
  CHECK(extract_pattern(bits({5, 7, 9}), 10, Direction::positive) == 0b010101);
  // negative mirror: {11,13,15} after offset 10
  CHECK(extract_pattern(bits({11, 13, 15}), 10, Direction::negative) == 0b010101);
}

TEST_CASE("extract_pattern shadow bits cover out-of-range positions") {
  // predecessor's top six bits all set: a positive window at offset 0 is full
  CHECK(extract_pattern(0, 0, Direction::positive, uint8_t{0x3F}) == 63);
  // without shadow the same window is empty
  CHECK(extract_pattern(0, 0, Direction::positive) == 0);
  // successor's bottom bits for a negative window at offset 63
  CHECK(extract_pattern(0, 63, Direction::negative, uint8_t{0x3F}) == 63);
  // mixed: offset 2 positive, bits {0,1} in-region, rest from shadow
  const uint64_t map = bits({0, 1});
  const uint8_t shadow = 0b101000;  // predecessor bits 61 and 63
  const uint8_t w = extract_pattern(map, 2, Direction::positive, shadow);
  CHECK(w == naive_extract(map, 2, Direction::positive, shadow));
}

TEST_CASE("extract_pattern agrees with the per-bit enumerator everywhere") {
  std::mt19937_64 rng(2718);
  for (int trial = 0; trial < 2000; ++trial) {
    const uint64_t map = rng();
    const unsigned offset = unsigned(rng() % 64);
    std::optional<uint8_t> shadow;
    if (rng() & 1) shadow = uint8_t(rng() & 0x3F);
    for (auto dir : {Direction::positive, Direction::negative}) {
      CHECK(extract_pattern(map, offset, dir, shadow) ==
            naive_extract(map, int(offset), dir, shadow));
    }
  }
}

TEST_CASE("scrape of an empty map yields no tallies") {
  CHECK(scrape_tallies(0).empty());
}

TEST_CASE("scrape of a dense prefix tallies full windows") {
  const uint64_t map = (1ull << 12) - 1;  // blocks 0..11
  const auto tallies = scrape_tallies(map);
  // anchor 6 gives the full window with a full following
  bool found = false;
  for (const auto& t : tallies) {
    if (t.direction == Direction::positive && t.pattern == 63 && t.following == 63)
      found = true;
  }
  CHECK(found);
  // positive anchors 6..11 all have window 63
  int full_windows = 0;
  for (const auto& t : tallies) {
    if (t.direction == Direction::positive && t.pattern == 63) ++full_windows;
  }
  CHECK(full_windows == 6);  // anchors 6..11; later anchors lose window bits
}

TEST_CASE("scrape equals the brute-force enumerator on random maps") {
  std::mt19937_64 rng(777);
  for (int trial = 0; trial < 500; ++trial) {
    const uint64_t map = rng();
    std::optional<uint8_t> pred, succ;
    if (trial % 3 == 1) pred = uint8_t(rng() & 0x3F);
    if (trial % 3 == 2) {
      pred = uint8_t(rng() & 0x3F);
      succ = uint8_t(rng() & 0x3F);
    }
    CHECK(scrape_tallies(map, pred, succ) == naive_scrape(map, pred, succ));
  }
}

TEST_CASE("scrape window at an anchor equals the live extraction there") {
  std::mt19937_64 rng(31337);
  for (int trial = 0; trial < 500; ++trial) {
    const uint64_t map = rng();
    const auto tallies = scrape_tallies(map);
    size_t idx = 0;
    for (int i = 6; i <= 58; ++i) {
      const auto live = extract_pattern(map, unsigned(i), Direction::positive);
      if (live == 0) continue;
      REQUIRE(idx < tallies.size());
      CHECK(tallies[idx].direction == Direction::positive);
      CHECK(tallies[idx].pattern == live);
      ++idx;
    }
  }
}

TEST_CASE("llc region table marks, filters, clears") {
  LlcRegionTable t;
  CHECK_FALSE(t.filter(9, 5));
  t.mark(9, 5);
  CHECK(t.filter(9, 5));
  t.clear(9, 5);
  CHECK_FALSE(t.filter(9, 5));
}

TEST_CASE("llc table evicts a whole entry on the 17th region in a set") {
  LlcRegionTable t;  // 64 sets, 16 ways
  // regions 1, 1+64, 1+128, ... all land in set 1
  for (int i = 0; i < 16; ++i) t.mark(1 + uint64_t(i) * 64, 0);
  CHECK(t.filter(1, 0));
  t.mark(1 + 16ull * 64, 0);  // 17th distinct region evicts the LRU (region 1)
  CHECK_FALSE(t.filter(1, 0));
  CHECK(t.filter(1 + 16ull * 64, 0));
}

TEST_CASE("scrape tallies are order-agnostic over access arrival") {
  std::mt19937_64 rng(4242);
  RegionTable a, b;
  std::vector<unsigned> offsets = {3, 9, 14, 22, 40, 41, 42, 63};
  for (unsigned o : offsets) a.record_access(50, o, 1);
  std::shuffle(offsets.begin(), offsets.end(), rng);
  for (unsigned o : offsets) b.record_access(50, o, 1);
  CHECK(scrape_tallies(a.find(50)->access_map) == scrape_tallies(b.find(50)->access_map));
}

TEST_CASE("geometry defaults and tag arithmetic") {
  RegionTable rt;
  CHECK(rt.config().sets == 128);
  CHECK(rt.config().ways == 24);
  LlcRegionTable lt;
  CHECK(lt.config().sets == 64);
  CHECK(lt.config().ways == 16);
  // index = region mod sets, tag = region / sets
  rt.record_access(128 * 5 + 17, 0, 1);
  const auto* e = rt.find(128 * 5 + 17);
  REQUIRE(e != nullptr);
  CHECK(e->tag == 5);
  CHECK(rt.region_of(*e) == 128 * 5 + 17);
}

TEST_CASE("offset out of range is rejected") {
  RegionTable rt;
  CHECK_THROWS_AS(rt.record_access(1, 64, 1), std::out_of_range);
  CHECK_THROWS_AS(rt.record_prefetch(1, 64), std::out_of_range);
  CHECK_THROWS_AS(extract_pattern(0, 64, Direction::positive), std::out_of_range);
}
