#pragma once

#include <array>
#include <cstdint>

#include "sppam_sim/region_table.hpp"

namespace sppam_sim::pattern_table {

using region_table::Direction;

struct Config {
  uint8_t min_confidence = 2;        // a single sighting never drives prefetching
  uint8_t max_confidence = 127;      // 7-bit saturating
  uint16_t usefulness_sample = 64;   // useful+useless threshold before re-estimating
  uint8_t initial_usefulness = 8;    // neutral midpoint
};

struct Prediction {
  uint8_t pattern = 0;     // 0 means no prediction / stop
  uint8_t usefulness = 0;  // 4-bit estimate of the indexed entry
};

struct Slot {
  uint8_t pattern = 0;     // 6-bit predicted following
  uint8_t confidence = 0;  // 7-bit
  bool valid = false;
};

// Slots kept as parallel byte arrays so the halving sweep stays branch-free;
// present_mask/slot_of give O(1) lookup by predicted pattern (valid slot
// patterns are mutually distinct, so the mapping is well-defined).
struct Entry {
  std::array<uint8_t, 16> patterns{};
  std::array<uint8_t, 16> confidences{};
  uint16_t valid_mask = 0;
  uint64_t present_mask = 0;           // bit f: some valid slot predicts f
  std::array<uint8_t, 64> slot_of{};   // f -> slot index, when present
  uint8_t useful_count = 0;
  uint8_t useless_count = 0;
  uint8_t usefulness = 8;

  Slot slot(unsigned i) const {
    return {patterns[i], confidences[i], static_cast<bool>((valid_mask >> i) & 1)};
  }
};

// One direct-mapped table: 64 entries indexed by the 6-bit pattern, each with
// a fully-associative set of 16 (following, confidence) predictions.
class PatternTable {
 public:
  explicit PatternTable(const Config& cfg = {});

  // window -> following observation. If any slot would exceed the confidence
  // max, every slot in the entry is floor-halved instead of incrementing.
  void tally(uint8_t pattern, uint8_t following) { tally_run(pattern, following, 1); }

  // Exactly `count` consecutive tallies of the same pair; the slot search
  // happens once.
  void tally_run(uint8_t pattern, uint8_t following, unsigned count);

  // Pure read: most-confident slot at or above the minimum confidence, ties
  // broken by lowest slot index. Always carries the entry's usefulness.
  Prediction predict(uint8_t pattern) const;

  void feedback(uint8_t pattern, bool useful);

  void reset();

  const Entry& entry(uint8_t pattern) const { return entries_[pattern & 0x3F]; }
  const Config& config() const { return cfg_; }

  static constexpr unsigned num_entries = 64;
  static constexpr unsigned slots_per_entry = 16;

 private:
  Config cfg_;
  std::array<Entry, num_entries> entries_{};
};

// The positive/negative pair SPPAM actually uses.
class DirectionalTables {
 public:
  explicit DirectionalTables(const Config& cfg = {}) : pos_(cfg), neg_(cfg) {}

  void tally(Direction dir, uint8_t pattern, uint8_t following) {
    table(dir).tally(pattern, following);
  }
  Prediction predict(Direction dir, uint8_t pattern) const {
    return dir == Direction::positive ? pos_.predict(pattern) : neg_.predict(pattern);
  }
  void feedback(Direction dir, uint8_t pattern, bool useful) {
    table(dir).feedback(pattern, useful);
  }
  void reset() {
    pos_.reset();
    neg_.reset();
  }

  PatternTable& table(Direction dir) {
    return dir == Direction::positive ? pos_ : neg_;
  }
  const PatternTable& table(Direction dir) const {
    return dir == Direction::positive ? pos_ : neg_;
  }

 private:
  PatternTable pos_;
  PatternTable neg_;
};

}  // namespace sppam_sim::pattern_table
