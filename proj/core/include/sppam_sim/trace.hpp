#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sppam_sim::trace {

// 64-byte blocks inside aligned 4KiB regions; both are fixed so the
// per-region bitmaps are exactly 64 bits wide.
inline constexpr uint64_t block_bytes = 64;
inline constexpr uint64_t region_bytes = 4096;
inline constexpr unsigned blocks_per_region = 64;

enum class AccessKind : uint8_t { load = 0, store = 1, prefetch_hint = 2 };

struct TraceEvent {
  uint64_t seq = 0;   // program-order id, strictly increasing in generated traces
  uint64_t addr = 0;  // physical byte address
  uint64_t pc = 0;
  AccessKind kind = AccessKind::load;

  uint64_t block() const { return addr >> 6; }
  uint64_t region() const { return addr >> 12; }
  unsigned region_offset() const { return static_cast<unsigned>((addr >> 6) & 63); }

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

using Trace = std::vector<TraceEvent>;

enum class PatternFamily : uint8_t {
  stride,
  burst,
  interleaved,
  sparse_mask,
  pointer_chase,
};

const char* to_string(PatternFamily f);
std::optional<PatternFamily> pattern_family_from_string(std::string_view s);

struct GeneratorSpec {
  PatternFamily pattern = PatternFamily::stride;
  int64_t stride = 1;        // blocks per step (stride family)
  uint32_t burst_len = 8;    // blocks per burst
  uint32_t burst_gap = 24;   // blocks skipped between bursts
  uint32_t streams = 2;      // interleaved family
  uint64_t mask = 0b010101;  // sparse_mask family, tiled over region offsets
  uint32_t mask_len = 6;
  uint64_t length = 0;       // event count
  uint64_t region_span = 1;  // distinct 4KiB regions the walk covers
  uint64_t base_region = 1;  // first region number (default puts block 0 at 0x1000)
  uint64_t seed = 1;

  friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

struct PerturbationSpec {
  uint64_t shuffle_window = 1;   // window = 1 leaves order untouched
  double decimation_rate = 0.0;  // each event independently deleted with this probability
  uint64_t seed = 1;

  friend bool operator==(const PerturbationSpec&, const PerturbationSpec&) = default;
};

// Pull-based event stream so multi-million-event runs never materialize a
// whole trace. generate()/perturb() below are collect() wrappers over the
// same code paths.
class EventSource {
 public:
  virtual ~EventSource() = default;
  virtual std::optional<TraceEvent> next() = 0;
};

std::unique_ptr<EventSource> make_generator(const GeneratorSpec& spec);
std::unique_ptr<EventSource> make_perturbed(std::unique_ptr<EventSource> inner,
                                            const PerturbationSpec& spec);
std::unique_ptr<EventSource> make_vector_source(Trace events);

Trace generate(const GeneratorSpec& spec);
Trace perturb(const Trace& input, const PerturbationSpec& spec);

enum class TraceIoErrorKind : uint8_t {
  io,
  bad_magic,
  bad_version,
  truncated,
  bad_record,
};

class TraceIoError : public std::runtime_error {
 public:
  TraceIoError(TraceIoErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  TraceIoErrorKind kind() const { return kind_; }

 private:
  TraceIoErrorKind kind_;
};

// File layout: "SPTR", u16 version (LE), u64 event count (LE), then one
// 25-byte record per event: seq u64, addr u64, pc u64, kind u8, all LE.
inline constexpr uint16_t trace_format_version = 1;
inline constexpr size_t trace_header_bytes = 14;
inline constexpr size_t trace_record_bytes = 25;

void write_trace(const Trace& t, const std::filesystem::path& path);
Trace read_trace(const std::filesystem::path& path);
std::unique_ptr<EventSource> make_file_source(const std::filesystem::path& path);

// Adapter hook for external trace formats. Only "sptr" is implemented;
// anything else reports an unsupported format.
std::unique_ptr<EventSource> open_trace_reader(const std::filesystem::path& path,
                                               std::string_view format = "sptr");

}  // namespace sppam_sim::trace
