#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Named-array container used for feature dumps and checkpoints.
//
// Layout (all integers little-endian):
//   magic   8 bytes  "PTNTA001"
//   count   u32
//   entry*  count times:
//     name_len u16, name bytes
//     kind     u8   0 = float64 array, 1 = utf8 text
//     ndim     u8
//     dims     u64 x ndim
//     payload  raw float64 (LE) or utf8 bytes
//
// Doubles round-trip bit-exactly. The reader rejects unknown magic/kind.

namespace pianotx::container {

struct Entry {
  std::string name;
  bool is_text = false;
  std::vector<uint64_t> dims;
  std::vector<double> f64;
  std::string text;
};

class Archive {
 public:
  void put_array(const std::string& name, std::vector<uint64_t> dims,
                 std::vector<double> data);
  void put_text(const std::string& name, std::string text);

  const Entry* find(const std::string& name) const;
  const Entry& at(const std::string& name) const;  // throws IoError when absent
  const std::vector<Entry>& entries() const { return entries_; }

  void save(const std::string& path) const;
  static Archive load(const std::string& path);

 private:
  std::vector<Entry> entries_;
};

}  // namespace pianotx::container
