#include "pianotx/midi.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <deque>
#include <fstream>
#include <map>

#include "pianotx/errors.hpp"

namespace pianotx {

namespace {

struct Cursor {
  const unsigned char* p;
  const unsigned char* end;

  bool done() const { return p >= end; }
  unsigned char u8() {
    if (p >= end) throw IoError("midi: truncated track data");
    return *p++;
  }
  uint32_t varint() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      const unsigned char b = u8();
      v = (v << 7) | (b & 0x7f);
      if (!(b & 0x80)) return v;
    }
    throw IoError("midi: malformed variable-length quantity");
  }
  void skip(uint32_t n) {
    if (p + n > end) throw IoError("midi: truncated event payload");
    p += n;
  }
};

uint32_t be32(const unsigned char* p) {
  return (uint32_t)p[0] << 24 | (uint32_t)p[1] << 16 | (uint32_t)p[2] << 8 | p[3];
}
uint16_t be16(const unsigned char* p) { return (uint16_t)(p[0] << 8 | p[1]); }

struct RawNote {
  long tick;
  long order;  // global parse order, breaks ties deterministically
  int pitch;
  int velocity;  // 0 = off
  bool on;
};

struct TempoChange {
  long tick;
  long order;
  double usec_per_quarter;
};

}  // namespace

std::vector<NoteEvent> parse_midi(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 14 || std::memcmp(bytes.data(), "MThd", 4) != 0)
    throw IoError("midi: missing MThd header");
  const uint32_t header_len = be32(bytes.data() + 4);
  if (header_len < 6) throw IoError("midi: malformed MThd length");
  const uint16_t format = be16(bytes.data() + 8);
  const uint16_t ntracks = be16(bytes.data() + 10);
  const uint16_t division = be16(bytes.data() + 12);
  if (format > 1) throw IoError("midi: only format 0/1 supported");
  if (division & 0x8000) throw IoError("midi: SMPTE time division not supported");
  if (division == 0) throw IoError("midi: zero ticks-per-quarter");

  std::vector<RawNote> raw;
  std::vector<TempoChange> tempos;
  long order = 0;
  size_t pos = 8 + header_len;
  for (int trk = 0; trk < ntracks; ++trk) {
    if (pos + 8 > bytes.size()) throw IoError("midi: truncated track header");
    if (std::memcmp(bytes.data() + pos, "MTrk", 4) != 0)
      throw IoError("midi: expected MTrk chunk");
    const uint32_t len = be32(bytes.data() + pos + 4);
    if (pos + 8 + len > bytes.size()) throw IoError("midi: truncated track body");
    Cursor c{bytes.data() + pos + 8, bytes.data() + pos + 8 + len};
    pos += 8 + len;

    long tick = 0;
    unsigned char running = 0;
    while (!c.done()) {
      tick += (long)c.varint();
      unsigned char status = c.u8();
      if (status < 0x80) {
        if (running == 0) throw IoError("midi: data byte without running status");
        --c.p;
        status = running;
      }
      if (status == 0xff) {
        const unsigned char type = c.u8();
        const uint32_t mlen = c.varint();
        if (type == 0x51 && mlen == 3) {
          const double usec = (double)(c.u8() << 16 | c.u8() << 8 | c.u8());
          tempos.push_back({tick, order++, usec});
        } else {
          c.skip(mlen);
        }
        running = 0;
        continue;
      }
      if (status == 0xf0 || status == 0xf7) {
        c.skip(c.varint());
        running = 0;
        continue;
      }
      running = status;
      const int kind = status >> 4;
      switch (kind) {
        case 0x9: {  // note on (velocity 0 acts as note off)
          const int pitch = c.u8(), vel = c.u8();
          raw.push_back({tick, order++, pitch, vel, vel > 0});
          break;
        }
        case 0x8: {  // note off
          const int pitch = c.u8();
          c.u8();  // release velocity
          raw.push_back({tick, order++, pitch, 0, false});
          break;
        }
        case 0xa:
        case 0xb:
        case 0xe:
          c.skip(2);
          break;
        case 0xc:
        case 0xd:
          c.skip(1);
          break;
        default:
          throw IoError("midi: unexpected status byte");
      }
    }
  }

  // tempo map: piecewise tick->seconds conversion, default 120 bpm
  std::sort(tempos.begin(), tempos.end(), [](const TempoChange& a, const TempoChange& b) {
    return a.tick != b.tick ? a.tick < b.tick : a.order < b.order;
  });
  auto tick_to_seconds = [&](long tick) {
    double seconds = 0.0;
    long prev_tick = 0;
    double usec = 500000.0;
    for (const auto& tc : tempos) {
      if (tc.tick >= tick) break;
      seconds += (double)(tc.tick - prev_tick) * usec / (1e6 * division);
      prev_tick = tc.tick;
      usec = tc.usec_per_quarter;
    }
    return seconds + (double)(tick - prev_tick) * usec / (1e6 * division);
  };

  std::sort(raw.begin(), raw.end(), [](const RawNote& a, const RawNote& b) {
    return a.tick != b.tick ? a.tick < b.tick : a.order < b.order;
  });
  long end_tick = 0;
  for (const auto& r : raw) end_tick = std::max(end_tick, r.tick);

  std::map<int, std::deque<RawNote>> open;  // FIFO per pitch
  std::vector<NoteEvent> notes;
  for (const auto& r : raw) {
    if (r.pitch < 21 || r.pitch > 108) {
      std::fprintf(stderr, "midi: skipping pitch %d outside piano range\n", r.pitch);
      continue;
    }
    if (r.on) {
      open[r.pitch].push_back(r);
    } else {
      auto it = open.find(r.pitch);
      if (it == open.end() || it->second.empty()) continue;  // stray note-off
      const RawNote on = it->second.front();
      it->second.pop_front();
      const double t0 = tick_to_seconds(on.tick), t1 = tick_to_seconds(r.tick);
      if (t1 > t0) notes.push_back({on.pitch, t0, t1, on.velocity});
    }
  }
  for (auto& [pitch, queue] : open)
    for (const auto& on : queue) {
      std::fprintf(stderr, "midi: dangling note-on pitch %d, closing at track end\n",
                   pitch);
      const double t0 = tick_to_seconds(on.tick), t1 = tick_to_seconds(end_tick);
      if (t1 > t0) notes.push_back({on.pitch, t0, t1, on.velocity});
    }

  std::sort(notes.begin(), notes.end(), [](const NoteEvent& a, const NoteEvent& b) {
    return a.onset_s != b.onset_s ? a.onset_s < b.onset_s : a.pitch < b.pitch;
  });
  return notes;
}

std::vector<NoteEvent> read_midi(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("midi: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  return parse_midi(bytes);
}

namespace {

constexpr int kTicksPerQuarter = 480;
constexpr double kTicksPerSecond = 960.0;  // 120 bpm

void push_varint(std::vector<unsigned char>& out, uint32_t v) {
  unsigned char stack[5];
  int n = 0;
  stack[n++] = v & 0x7f;
  v >>= 7;
  while (v) {
    stack[n++] = 0x80 | (v & 0x7f);
    v >>= 7;
  }
  while (n) out.push_back(stack[--n]);
}

}  // namespace

std::vector<unsigned char> notes_to_midi(const std::vector<NoteEvent>& notes) {
  struct Ev {
    long tick;
    bool on;
    int pitch, velocity;
  };
  std::vector<Ev> evs;
  for (const auto& n : notes) {
    if (!n.valid()) throw IoError("midi: invalid note event");
    evs.push_back({(long)std::llround(n.onset_s * kTicksPerSecond), true, n.pitch,
                   n.velocity});
    evs.push_back({(long)std::llround(n.offset_s * kTicksPerSecond), false, n.pitch, 0});
  }
  // offs sort before ons at the same tick so back-to-back notes chain cleanly
  std::sort(evs.begin(), evs.end(), [](const Ev& a, const Ev& b) {
    if (a.tick != b.tick) return a.tick < b.tick;
    if (a.on != b.on) return !a.on;
    return a.pitch < b.pitch;
  });

  std::vector<unsigned char> track;
  // tempo meta: 500000 usec per quarter
  push_varint(track, 0);
  for (unsigned char b : {0xff, 0x51, 0x03, 0x07, 0xa1, 0x20}) track.push_back(b);
  long tick = 0;
  for (const auto& e : evs) {
    push_varint(track, (uint32_t)(e.tick - tick));
    tick = e.tick;
    track.push_back(e.on ? 0x90 : 0x80);
    track.push_back((unsigned char)e.pitch);
    track.push_back((unsigned char)(e.on ? e.velocity : 0));
  }
  push_varint(track, 0);
  for (unsigned char b : {0xff, 0x2f, 0x00}) track.push_back(b);

  std::vector<unsigned char> out;
  auto be32_push = [&](uint32_t v) {
    out.push_back((unsigned char)(v >> 24));
    out.push_back((unsigned char)(v >> 16));
    out.push_back((unsigned char)(v >> 8));
    out.push_back((unsigned char)v);
  };
  out.insert(out.end(), {'M', 'T', 'h', 'd'});
  be32_push(6);
  out.insert(out.end(), {0, 0, 0, 1});  // format 0, one track
  out.push_back((unsigned char)(kTicksPerQuarter >> 8));
  out.push_back((unsigned char)(kTicksPerQuarter & 0xff));
  out.insert(out.end(), {'M', 'T', 'r', 'k'});
  be32_push((uint32_t)track.size());
  out.insert(out.end(), track.begin(), track.end());
  return out;
}

void write_midi(const std::string& path, const std::vector<NoteEvent>& notes) {
  const auto bytes = notes_to_midi(notes);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("midi: cannot write " + path);
  os.write((const char*)bytes.data(), (std::streamsize)bytes.size());
  if (!os) throw IoError("midi: write failed for " + path);
}

std::string notes_to_table(const std::vector<NoteEvent>& notes) {
  std::string out = "# onset_s\toffset_s\tpitch\tvelocity\n";
  char line[80];
  for (const auto& n : notes) {
    std::snprintf(line, sizeof(line), "%.6f\t%.6f\t%d\t%d\n", n.onset_s, n.offset_s,
                  n.pitch, n.velocity);
    out += line;
  }
  return out;
}

}  // namespace pianotx
