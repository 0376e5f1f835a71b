#include "pianotx/audio.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "pianotx/errors.hpp"

namespace pianotx {

namespace {

uint32_t rd_u32(const unsigned char* p) {
  return (uint32_t)p[0] | (uint32_t)p[1] << 8 | (uint32_t)p[2] << 16 |
         (uint32_t)p[3] << 24;
}
uint16_t rd_u16(const unsigned char* p) { return (uint16_t)(p[0] | p[1] << 8); }

void wr_u32(std::ofstream& os, uint32_t v) {
  unsigned char b[4] = {(unsigned char)v, (unsigned char)(v >> 8),
                        (unsigned char)(v >> 16), (unsigned char)(v >> 24)};
  os.write((const char*)b, 4);
}
void wr_u16(std::ofstream& os, uint16_t v) {
  unsigned char b[2] = {(unsigned char)v, (unsigned char)(v >> 8)};
  os.write((const char*)b, 2);
}

}  // namespace

AudioClip read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("wav: cannot open " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw IoError("wav: not a RIFF/WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  const unsigned char* data = nullptr;
  size_t data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = (const char*)bytes.data() + pos;
    const uint32_t len = rd_u32(bytes.data() + pos + 4);
    const size_t body = pos + 8;
    if (body + len > bytes.size()) throw IoError("wav: truncated chunk in " + path);
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (len < 16) throw IoError("wav: malformed fmt chunk in " + path);
      format = rd_u16(bytes.data() + body);
      channels = rd_u16(bytes.data() + body + 2);
      sample_rate = rd_u32(bytes.data() + body + 4);
      bits = rd_u16(bytes.data() + body + 14);
      if (format == 0xfffe && len >= 40)  // extensible: first subformat word
        format = rd_u16(bytes.data() + body + 24);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1);  // chunks are word-aligned
  }
  if (!data) throw IoError("wav: no data chunk in " + path);
  if (sample_rate == 0) throw IoError("wav: missing fmt chunk in " + path);
  if (channels < 1 || channels > 2)
    throw IoError("wav: only mono or stereo supported (" + path + ")");
  const bool is_float = format == 3;
  if (!(format == 1 && (bits == 16 || bits == 24)) && !(is_float && bits == 32))
    throw IoError("wav: unsupported format (PCM 16/24-bit or float 32-bit only): " +
                  path);

  const size_t bytes_per = bits / 8;
  const size_t frames = data_len / (bytes_per * channels);
  AudioClip clip;
  clip.sample_rate = (int)sample_rate;
  clip.samples.resize(frames);
  for (size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int ch = 0; ch < channels; ++ch) {
      const unsigned char* s = data + (i * channels + ch) * bytes_per;
      double v;
      if (is_float) {
        uint32_t u = rd_u32(s);
        float f;
        std::memcpy(&f, &u, 4);
        v = f;
      } else if (bits == 16) {
        v = (int16_t)rd_u16(s) / 32768.0;
      } else {
        int32_t u = (int32_t)(s[0] | s[1] << 8 | s[2] << 16);
        if (u & 0x800000) u |= ~0xffffff;  // sign extend
        v = u / 8388608.0;
      }
      acc += v;
    }
    const double v = acc / channels;
    if (!std::isfinite(v)) throw IoError("wav: non-finite sample in " + path);
    clip.samples[i] = v;
  }
  return clip;
}

void write_wav(const std::string& path, const AudioClip& clip) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("wav: cannot write " + path);
  const uint32_t n = (uint32_t)clip.samples.size();
  const uint32_t data_len = n * 4;
  os.write("RIFF", 4);
  wr_u32(os, 36 + data_len);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  wr_u32(os, 16);
  wr_u16(os, 3);  // IEEE float
  wr_u16(os, 1);
  wr_u32(os, (uint32_t)clip.sample_rate);
  wr_u32(os, (uint32_t)clip.sample_rate * 4);
  wr_u16(os, 4);
  wr_u16(os, 32);
  os.write("data", 4);
  wr_u32(os, data_len);
  for (double v : clip.samples) {
    float f = (float)v;
    uint32_t u;
    std::memcpy(&u, &f, 4);
    wr_u32(os, u);
  }
  if (!os) throw IoError("wav: write failed for " + path);
}

}  // namespace pianotx
