#include "sppam_sim/trace.hpp"

#include <array>
#include <cstdio>
#include <cstring>
#include <deque>
#include <random>

namespace sppam_sim::trace {

namespace {

constexpr uint64_t default_pc = 0x400100;

// Separate RNG streams for shuffling and decimation so that window order
// never changes which events survive.
constexpr uint64_t shuffle_salt = 0x9E3779B97F4A7C15ull;
constexpr uint64_t decimate_salt = 0xD1B54A32D192ED03ull;

double unit_double(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

class GeneratorSource final : public EventSource {
 public:
  explicit GeneratorSource(const GeneratorSpec& spec) : spec_(spec), rng_(spec.seed) {
    validate(spec);
    space_ = spec.region_span * blocks_per_region;
    base_block_ = spec.base_region * blocks_per_region;
    if (spec_.pattern == PatternFamily::interleaved) {
      const uint64_t chunk = spec_.region_span / spec_.streams;
      cursors_.resize(spec_.streams);
      for (uint32_t s = 0; s < spec_.streams; ++s) {
        cursors_[s] = {s * chunk * blocks_per_region, chunk * blocks_per_region};
      }
    }
  }

  static void validate(const GeneratorSpec& spec) {
    if (spec.length == 0) throw std::invalid_argument("generator: length must be > 0");
    if (spec.region_span == 0) throw std::invalid_argument("generator: region_span must be >= 1");
    switch (spec.pattern) {
      case PatternFamily::stride:
        if (spec.stride == 0) throw std::invalid_argument("generator: stride must be nonzero");
        break;
      case PatternFamily::burst:
        if (spec.burst_len == 0) throw std::invalid_argument("generator: burst_len must be >= 1");
        break;
      case PatternFamily::interleaved:
        if (spec.streams == 0) throw std::invalid_argument("generator: streams must be >= 1");
        if (spec.streams > spec.region_span)
          throw std::invalid_argument("generator: streams must not exceed region_span");
        break;
      case PatternFamily::sparse_mask:
        if (spec.mask_len == 0 || spec.mask_len > 64)
          throw std::invalid_argument("generator: mask_len must be in [1,64]");
        if ((spec.mask & ((spec.mask_len == 64) ? ~0ull : ((1ull << spec.mask_len) - 1))) == 0)
          throw std::invalid_argument("generator: mask must have at least one bit set");
        break;
      case PatternFamily::pointer_chase:
        break;
    }
  }

  std::optional<TraceEvent> next() override {
    if (emitted_ == spec_.length) return std::nullopt;
    TraceEvent ev;
    ev.seq = emitted_;
    ev.kind = AccessKind::load;
    ev.pc = default_pc;
    uint64_t idx = 0;
    switch (spec_.pattern) {
      case PatternFamily::stride: {
        const int64_t raw = static_cast<int64_t>(emitted_) * spec_.stride;
        const int64_t m = static_cast<int64_t>(space_);
        idx = static_cast<uint64_t>(((raw % m) + m) % m);
        break;
      }
      case PatternFamily::burst: {
        const uint64_t q = emitted_ / spec_.burst_len;
        const uint64_t r = emitted_ % spec_.burst_len;
        idx = (q * (spec_.burst_len + spec_.burst_gap) + r) % space_;
        break;
      }
      case PatternFamily::interleaved: {
        const uint32_t s = static_cast<uint32_t>(rng_() % spec_.streams);
        auto& cur = cursors_[s];
        idx = cur.start + cur.pos;
        cur.pos = (cur.pos + 1) % cur.len;
        ev.pc = default_pc + 8ull * s;
        break;
      }
      case PatternFamily::sparse_mask: {
        while (!masked(mask_cursor_)) mask_cursor_ = (mask_cursor_ + 1) % space_;
        idx = mask_cursor_;
        mask_cursor_ = (mask_cursor_ + 1) % space_;
        break;
      }
      case PatternFamily::pointer_chase: {
        idx = rng_() % space_;
        break;
      }
    }
    ev.addr = (base_block_ + idx) * block_bytes;
    ++emitted_;
    return ev;
  }

 private:
  bool masked(uint64_t idx) const {
    const unsigned off = static_cast<unsigned>(idx % blocks_per_region);
    return (spec_.mask >> (off % spec_.mask_len)) & 1;
  }

  struct StreamCursor {
    uint64_t start = 0;
    uint64_t len = 0;
    uint64_t pos = 0;
    StreamCursor() = default;
    StreamCursor(uint64_t s, uint64_t l) : start(s), len(l) {}
  };

  GeneratorSpec spec_;
  std::mt19937_64 rng_;
  uint64_t space_ = 0;
  uint64_t base_block_ = 0;
  uint64_t emitted_ = 0;
  uint64_t mask_cursor_ = 0;
  std::vector<StreamCursor> cursors_;
};

class PerturbSource final : public EventSource {
 public:
  PerturbSource(std::unique_ptr<EventSource> inner, const PerturbationSpec& spec)
      : inner_(std::move(inner)),
        spec_(spec),
        shuffle_rng_(spec.seed ^ shuffle_salt),
        decimate_rng_(spec.seed ^ decimate_salt) {
    if (spec.shuffle_window == 0)
      throw std::invalid_argument("perturb: shuffle_window must be >= 1");
    if (!(spec.decimation_rate >= 0.0 && spec.decimation_rate <= 1.0))
      throw std::invalid_argument("perturb: decimation_rate must be in [0,1]");
  }

  std::optional<TraceEvent> next() override {
    while (buffer_.empty()) {
      if (drained_) return std::nullopt;
      refill();
    }
    TraceEvent ev = buffer_.front();
    buffer_.pop_front();
    return ev;
  }

 private:
  void refill() {
    std::vector<TraceEvent> window;
    window.reserve(spec_.shuffle_window);
    for (uint64_t i = 0; i < spec_.shuffle_window; ++i) {
      auto ev = inner_->next();
      if (!ev) {
        drained_ = true;
        break;
      }
      window.push_back(*ev);
    }
    // Explicit Fisher-Yates: std::shuffle's draw sequence is
    // implementation-defined and golden files must stay stable.
    for (size_t i = window.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(shuffle_rng_() % i);
      std::swap(window[i - 1], window[j]);
    }
    for (const TraceEvent& ev : window) {
      const bool drop = unit_double(decimate_rng_) < spec_.decimation_rate;
      if (!drop) buffer_.push_back(ev);
    }
  }

  std::unique_ptr<EventSource> inner_;
  PerturbationSpec spec_;
  std::mt19937_64 shuffle_rng_;
  std::mt19937_64 decimate_rng_;
  std::deque<TraceEvent> buffer_;
  bool drained_ = false;
};

class VectorSource final : public EventSource {
 public:
  explicit VectorSource(Trace events) : events_(std::move(events)) {}
  std::optional<TraceEvent> next() override {
    if (pos_ == events_.size()) return std::nullopt;
    return events_[pos_++];
  }

 private:
  Trace events_;
  size_t pos_ = 0;
};

Trace collect(EventSource& src) {
  Trace out;
  while (auto ev = src.next()) out.push_back(*ev);
  return out;
}

void put_u16(std::string& buf, uint16_t v) {
  buf.push_back(static_cast<char>(v & 0xFF));
  buf.push_back(static_cast<char>((v >> 8) & 0xFF));
}

void put_u64(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

uint16_t get_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

uint64_t get_u64(const unsigned char* p) {
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

class FileSource final : public EventSource {
 public:
  explicit FileSource(const std::filesystem::path& path) {
    file_ = std::fopen(path.string().c_str(), "rb");
    if (!file_) throw TraceIoError(TraceIoErrorKind::io, "cannot open " + path.string());
    unsigned char header[trace_header_bytes];
    const size_t got = std::fread(header, 1, sizeof(header), file_);
    if (got < 4) fail(TraceIoErrorKind::truncated, "file shorter than magic");
    if (std::memcmp(header, "SPTR", 4) != 0) fail(TraceIoErrorKind::bad_magic, "bad magic");
    if (got < trace_header_bytes) fail(TraceIoErrorKind::truncated, "incomplete header");
    const uint16_t version = get_u16(header + 4);
    if (version != trace_format_version)
      fail(TraceIoErrorKind::bad_version, "unknown version " + std::to_string(version));
    remaining_ = get_u64(header + 6);
  }

  ~FileSource() override {
    if (file_) std::fclose(file_);
  }

  std::optional<TraceEvent> next() override {
    if (remaining_ == 0) return std::nullopt;
    unsigned char rec[trace_record_bytes];
    if (std::fread(rec, 1, sizeof(rec), file_) != sizeof(rec))
      fail(TraceIoErrorKind::truncated, "event records missing");
    TraceEvent ev;
    ev.seq = get_u64(rec);
    ev.addr = get_u64(rec + 8);
    ev.pc = get_u64(rec + 16);
    if (rec[24] > 2) fail(TraceIoErrorKind::bad_record, "invalid access kind");
    ev.kind = static_cast<AccessKind>(rec[24]);
    --remaining_;
    return ev;
  }

 private:
  [[noreturn]] void fail(TraceIoErrorKind kind, const std::string& what) {
    std::fclose(file_);
    file_ = nullptr;
    throw TraceIoError(kind, what);
  }

  std::FILE* file_ = nullptr;
  uint64_t remaining_ = 0;
};

}  // namespace

const char* to_string(PatternFamily f) {
  switch (f) {
    case PatternFamily::stride: return "stride";
    case PatternFamily::burst: return "burst";
    case PatternFamily::interleaved: return "interleaved";
    case PatternFamily::sparse_mask: return "sparse-mask";
    case PatternFamily::pointer_chase: return "pointer-chase";
  }
  return "?";
}

std::optional<PatternFamily> pattern_family_from_string(std::string_view s) {
  if (s == "stride") return PatternFamily::stride;
  if (s == "burst") return PatternFamily::burst;
  if (s == "interleaved") return PatternFamily::interleaved;
  if (s == "sparse-mask") return PatternFamily::sparse_mask;
  if (s == "pointer-chase") return PatternFamily::pointer_chase;
  return std::nullopt;
}

std::unique_ptr<EventSource> make_generator(const GeneratorSpec& spec) {
  return std::make_unique<GeneratorSource>(spec);
}

std::unique_ptr<EventSource> make_perturbed(std::unique_ptr<EventSource> inner,
                                            const PerturbationSpec& spec) {
  return std::make_unique<PerturbSource>(std::move(inner), spec);
}

std::unique_ptr<EventSource> make_vector_source(Trace events) {
  return std::make_unique<VectorSource>(std::move(events));
}

Trace generate(const GeneratorSpec& spec) {
  GeneratorSource src(spec);
  return collect(src);
}

Trace perturb(const Trace& input, const PerturbationSpec& spec) {
  PerturbSource src(make_vector_source(input), spec);
  return collect(src);
}

void write_trace(const Trace& t, const std::filesystem::path& path) {
  std::string buf;
  buf.reserve(trace_header_bytes + t.size() * trace_record_bytes);
  buf.append("SPTR");
  put_u16(buf, trace_format_version);
  put_u64(buf, t.size());
  for (const TraceEvent& ev : t) {
    put_u64(buf, ev.seq);
    put_u64(buf, ev.addr);
    put_u64(buf, ev.pc);
    buf.push_back(static_cast<char>(ev.kind));
  }
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw TraceIoError(TraceIoErrorKind::io, "cannot open " + path.string() + " for write");
  const size_t written = std::fwrite(buf.data(), 1, buf.size(), f);
  std::fclose(f);
  if (written != buf.size())
    throw TraceIoError(TraceIoErrorKind::io, "short write to " + path.string());
}

Trace read_trace(const std::filesystem::path& path) {
  FileSource src(path);
  return collect(src);
}

std::unique_ptr<EventSource> make_file_source(const std::filesystem::path& path) {
  return std::make_unique<FileSource>(path);
}

std::unique_ptr<EventSource> open_trace_reader(const std::filesystem::path& path,
                                               std::string_view format) {
  if (format == "sptr") return make_file_source(path);
  throw TraceIoError(TraceIoErrorKind::io,
                     "unsupported external trace format: " + std::string(format));
}

}  // namespace sppam_sim::trace
