#include "rgbtvg/snapshot.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rgbtvg {

namespace {

constexpr char kMagic[8] = {'R', 'G', 'B', 'T', 'V', 'G', 'C', 'K'};

template <typename T>
void put(std::string& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.append(reinterpret_cast<const char*>(buf), sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw SnapshotError("snapshot truncated at byte " + std::to_string(pos_));
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_snapshot(const WeightMap& weights) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kSnapshotVersion);
  put<std::uint64_t>(out, weights.size());
  for (const auto& [name, m] : weights) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
    for (double v : m.values()) put<double>(out, v);
  }
  return out;
}

WeightMap decode_snapshot(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) throw SnapshotError("not a weight snapshot");
  if (const auto v = r.get<std::uint32_t>(); v != kSnapshotVersion)
    throw SnapshotError("unsupported snapshot version " + std::to_string(v));
  const auto count = r.get<std::uint64_t>();
  WeightMap out;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name(r.take(r.get<std::uint32_t>()));
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    Matrix m(rows, cols);
    for (std::size_t k = 0; k < m.size(); ++k) m[k] = r.get<double>();
    if (!out.emplace(std::move(name), std::move(m)).second) throw SnapshotError("duplicate entry in snapshot");
  }
  if (!r.done()) throw SnapshotError("trailing bytes after snapshot entries");
  return out;
}

void write_snapshot(const WeightMap& weights, const std::filesystem::path& path) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw SnapshotError("cannot write " + tmp.string());
    out << encode_snapshot(weights);
    if (!out) throw SnapshotError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

WeightMap read_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SnapshotError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_snapshot(ss.str());
}

std::uint64_t weights_checksum(const WeightMap& weights) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, m] : weights) {
    h = fnv1a(name, h);
    h = checksum(m, h);
  }
  return h;
}

}  // namespace rgbtvg
