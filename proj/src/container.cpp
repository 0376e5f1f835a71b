#include "pianotx/container.hpp"

#include <cstring>
#include <fstream>

#include "pianotx/errors.hpp"

namespace pianotx::container {

namespace {

constexpr char kMagic[8] = {'P', 'T', 'N', 'T', 'A', '0', '0', '1'};

template <typename T>
void write_le(std::ofstream& os, T value) {
  unsigned char buf[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) buf[i] = (unsigned char)(value >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::ifstream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  T v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= (T)buf[i] << (8 * i);
  return v;
}

}  // namespace

void Archive::put_array(const std::string& name, std::vector<uint64_t> dims,
                        std::vector<double> data) {
  uint64_t n = 1;
  for (uint64_t d : dims) n *= d;
  if (n != data.size())
    throw IoError("container: array '" + name + "' size does not match dims");
  Entry e;
  e.name = name;
  e.dims = std::move(dims);
  e.f64 = std::move(data);
  entries_.push_back(std::move(e));
}

void Archive::put_text(const std::string& name, std::string text) {
  Entry e;
  e.name = name;
  e.is_text = true;
  e.dims = {text.size()};
  e.text = std::move(text);
  entries_.push_back(std::move(e));
}

const Entry* Archive::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

const Entry& Archive::at(const std::string& name) const {
  const Entry* e = find(name);
  if (!e) throw IoError("container: missing entry '" + name + "'");
  return *e;
}

void Archive::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("container: cannot write " + path);
  os.write(kMagic, sizeof(kMagic));
  write_le<uint32_t>(os, (uint32_t)entries_.size());
  for (const auto& e : entries_) {
    if (e.name.size() > 0xffff) throw IoError("container: entry name too long");
    write_le<uint16_t>(os, (uint16_t)e.name.size());
    os.write(e.name.data(), (std::streamsize)e.name.size());
    write_le<uint8_t>(os, e.is_text ? 1 : 0);
    write_le<uint8_t>(os, (uint8_t)e.dims.size());
    for (uint64_t d : e.dims) write_le<uint64_t>(os, d);
    if (e.is_text) {
      os.write(e.text.data(), (std::streamsize)e.text.size());
    } else {
      for (double v : e.f64) {
        uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        write_le<uint64_t>(os, bits);
      }
    }
  }
  if (!os) throw IoError("container: write failed for " + path);
}

Archive Archive::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("container: cannot read " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw IoError("container: bad magic in " + path);
  const uint32_t count = read_le<uint32_t>(is);
  Archive a;
  for (uint32_t i = 0; i < count; ++i) {
    Entry e;
    const uint16_t name_len = read_le<uint16_t>(is);
    e.name.resize(name_len);
    is.read(e.name.data(), name_len);
    const uint8_t kind = read_le<uint8_t>(is);
    if (kind > 1) throw IoError("container: unknown entry kind in " + path);
    e.is_text = kind == 1;
    const uint8_t ndim = read_le<uint8_t>(is);
    uint64_t n = 1;
    for (int d = 0; d < ndim; ++d) {
      e.dims.push_back(read_le<uint64_t>(is));
      n *= e.dims.back();
    }
    if (e.is_text) {
      e.text.resize(n);
      is.read(e.text.data(), (std::streamsize)n);
    } else {
      e.f64.resize(n);
      for (uint64_t j = 0; j < n; ++j) {
        const uint64_t bits = read_le<uint64_t>(is);
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        e.f64[j] = v;
      }
    }
    if (!is) throw IoError("container: truncated file " + path);
    a.entries_.push_back(std::move(e));
  }
  return a;
}

}  // namespace pianotx::container
