#pragma once

// Binary tensor container:
//   "IAEILM01" | u32 count | count x { u16 name_len | name (UTF-8) | u8 dtype (0 = f32)
//                                      | u8 rank | rank x u32 dim | f32 payload }
// All integers and floats little-endian.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace iaeilm::ckpt {

inline constexpr char kMagic[8] = {'I', 'A', 'E', 'I', 'L', 'M', '0', '1'};
inline constexpr std::uint8_t kDtypeF32 = 0;

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  std::size_t numel() const;
  bool operator==(const NamedTensor&) const = default;
};

void write_tensors(std::ostream& os, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(std::istream& is);

void save(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load(const std::filesystem::path& path);

}  // namespace iaeilm::ckpt
