#include "iaeilm/checkpoint.hpp"

#include "iaeilm/common.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace iaeilm::ckpt {

namespace {

template <class T>
void put_le(std::ostream& os, T v) {
  static_assert(std::is_integral_v<T>);
  unsigned char b[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& is, const char* what) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw IoError(std::string("checkpoint: truncated while reading ") + what);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace

std::size_t NamedTensor::numel() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void write_tensors(std::ostream& os, const std::vector<NamedTensor>& tensors) {
  os.write(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > std::numeric_limits<std::uint16_t>::max()) throw IoError("checkpoint: tensor name too long");
    if (t.dims.size() > 255) throw IoError("checkpoint: rank too large for " + t.name);
    if (t.numel() != t.data.size()) throw IoError("checkpoint: dims do not match payload for " + t.name);
    put_le<std::uint16_t>(os, static_cast<std::uint16_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put_le<std::uint8_t>(os, kDtypeF32);
    put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) put_le<std::uint32_t>(os, d);
    for (float f : t.data) put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(f));
  }
  if (!os) throw IoError("checkpoint: write failed");
}

std::vector<NamedTensor> read_tensors(std::istream& is) {
  char magic[sizeof kMagic];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw IoError("checkpoint: bad magic (expected IAEILM01)");
  }
  const auto count = get_le<std::uint32_t>(is, "tensor count");
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto len = get_le<std::uint16_t>(is, "name length");
    t.name.resize(len);
    if (!is.read(t.name.data(), len)) throw IoError("checkpoint: truncated tensor name");
    const auto dtype = get_le<std::uint8_t>(is, "dtype");
    if (dtype != kDtypeF32) throw IoError("checkpoint: unsupported dtype " + std::to_string(dtype) + " for " + t.name);
    const auto rank = get_le<std::uint8_t>(is, "rank");
    for (int r = 0; r < rank; ++r) t.dims.push_back(get_le<std::uint32_t>(is, "dims"));
    t.data.resize(t.numel());
    for (auto& f : t.data) f = std::bit_cast<float>(get_le<std::uint32_t>(is, "payload"));
    out.push_back(std::move(t));
  }
  return out;
}

void save(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot open " + tmp + " for writing");
    write_tensors(os, tensors);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

std::vector<NamedTensor> load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  try {
    return read_tensors(is);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace iaeilm::ckpt
