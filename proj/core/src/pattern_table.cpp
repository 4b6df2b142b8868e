#include "sppam_sim/pattern_table.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

namespace sppam_sim::pattern_table {

PatternTable::PatternTable(const Config& cfg) : cfg_(cfg) { reset(); }

void PatternTable::reset() {
  for (auto& e : entries_) {
    e = Entry{};
    e.usefulness = cfg_.initial_usefulness;
  }
}

void PatternTable::tally_run(uint8_t pattern, uint8_t following, unsigned count) {
  pattern &= 0x3F;
  following &= 0x3F;
  if (pattern == 0 || count == 0) return;  // index 0 is the lookahead terminator
  Entry& e = entries_[pattern];

  unsigned idx;
  if ((e.present_mask >> following) & 1) {
    idx = e.slot_of[following];
  } else {
    const uint16_t free_mask = static_cast<uint16_t>(~e.valid_mask);
    if (free_mask) {
      idx = static_cast<unsigned>(std::countr_zero(free_mask));
    } else {
      idx = 0;
      for (unsigned i = 1; i < slots_per_entry; ++i) {
        if (e.confidences[i] < e.confidences[idx]) idx = i;
      }
      e.present_mask &= ~(1ull << e.patterns[idx]);  // evicted prediction
    }
    e.patterns[idx] = following;
    e.confidences[idx] = 1;
    e.valid_mask |= static_cast<uint16_t>(1u << idx);
    e.present_mask |= 1ull << following;
    e.slot_of[following] = static_cast<uint8_t>(idx);
    --count;
  }

  while (count > 0) {
    if (e.confidences[idx] >= cfg_.max_confidence) {
      // Would exceed the max: floor-halve the whole entry instead.
      uint64_t c0, c1;
      std::memcpy(&c0, e.confidences.data(), 8);
      std::memcpy(&c1, e.confidences.data() + 8, 8);
      c0 = (c0 >> 1) & 0x7F7F7F7F7F7F7F7Full;
      c1 = (c1 >> 1) & 0x7F7F7F7F7F7F7F7Full;
      std::memcpy(e.confidences.data(), &c0, 8);
      std::memcpy(e.confidences.data() + 8, &c1, 8);
      --count;
      continue;
    }
    // Jump straight to the next halving point or the end of the run.
    const unsigned room = cfg_.max_confidence - e.confidences[idx];
    const unsigned step = std::min(count, room);
    e.confidences[idx] = static_cast<uint8_t>(e.confidences[idx] + step);
    count -= step;
  }
}

Prediction PatternTable::predict(uint8_t pattern) const {
  pattern &= 0x3F;
  const Entry& e = entries_[pattern];
  Prediction out{0, e.usefulness};
  if (pattern == 0 || e.valid_mask == 0) return out;
  unsigned best = slots_per_entry;
  uint8_t best_conf = 0;
  for (unsigned i = 0; i < slots_per_entry; ++i) {
    if (!((e.valid_mask >> i) & 1)) continue;
    if (best == slots_per_entry || e.confidences[i] > best_conf) {
      best = i;
      best_conf = e.confidences[i];
    }
  }
  if (best != slots_per_entry && best_conf >= cfg_.min_confidence)
    out.pattern = e.patterns[best];
  return out;
}

void PatternTable::feedback(uint8_t pattern, bool useful) {
  pattern &= 0x3F;
  if (pattern == 0) return;
  Entry& e = entries_[pattern];
  if (useful) {
    if (e.useful_count < 255) ++e.useful_count;
  } else {
    if (e.useless_count < 255) ++e.useless_count;
  }
  const unsigned total = unsigned(e.useful_count) + e.useless_count;
  if (total >= cfg_.usefulness_sample) {
    e.usefulness = static_cast<uint8_t>(std::min(15u, 16u * e.useful_count / total));
    e.useful_count = 0;
    e.useless_count = 0;
  }
}

}  // namespace sppam_sim::pattern_table
