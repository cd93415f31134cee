#pragma once

// Binary tensor container, little-endian:
//   "AHCT" | u16 version=1 | u8 dtype=0 (f32) | u8 rank | u8 channel_axis
//   | rank x u32 dims | prod(dims) x f32 row-major payload

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "ahcq/error.hpp"
#include "ahcq/tensor.hpp"

namespace ahcq::container {

inline constexpr char kMagic[4] = {'A', 'H', 'C', 'T'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 0;
inline constexpr std::size_t kHeaderBytes = 4 + 2 + 1 + 1 + 1;

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> write(const Tensor& t) {
  if (t.rank() > 255) throw FormatError("rank does not fit the container header");
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + 4 * t.rank() + 4 * t.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(static_cast<std::uint8_t>(kVersion & 0xff));
  out.push_back(static_cast<std::uint8_t>(kVersion >> 8));
  out.push_back(kDtypeF32);
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  out.push_back(static_cast<std::uint8_t>(t.channel_axis()));
  for (std::size_t d : t.dims()) {
    if (d > UINT32_MAX) throw FormatError("extent does not fit u32");
    detail::put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (float v : t.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline Tensor read(std::span<const std::uint8_t> in) {
  if (in.size() < kHeaderBytes) throw FormatError("truncated container header");
  if (std::memcmp(in.data(), kMagic, 4) != 0) throw FormatError("bad magic (expected AHCT)");
  const std::uint16_t version = static_cast<std::uint16_t>(in[4] | (in[5] << 8));
  if (version != kVersion) throw FormatError("unsupported container version " + std::to_string(version));
  if (in[6] != kDtypeF32) throw FormatError("unsupported dtype " + std::to_string(in[6]));
  const std::size_t rank = in[7];
  const std::size_t axis = in[8];
  if (rank == 0) throw FormatError("rank 0 container");
  if (axis >= rank) throw FormatError("channel axis out of range");
  if (in.size() < kHeaderBytes + 4 * rank) throw FormatError("truncated dims");
  std::vector<std::size_t> dims(rank);
  std::size_t count = 1;
  for (std::size_t a = 0; a < rank; ++a) {
    dims[a] = detail::get_u32(in, kHeaderBytes + 4 * a);
    if (dims[a] == 0) throw FormatError("zero extent");
    count *= dims[a];
  }
  const std::size_t payload_at = kHeaderBytes + 4 * rank;
  if (in.size() - payload_at != 4 * count)
    throw FormatError("declared size " + std::to_string(4 * count) + " bytes != payload size " +
                      std::to_string(in.size() - payload_at));
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i)
    data[i] = std::bit_cast<float>(detail::get_u32(in, payload_at + 4 * i));
  try {
    return Tensor(std::move(dims), std::move(data), axis);
  } catch (const DomainError& e) {
    throw FormatError(std::string("invalid payload: ") + e.what());
  }
}

inline void save(const std::string& path, const Tensor& t) {
  const auto bytes = write(t);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline Tensor load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return read(bytes);
}

}  // namespace ahcq::container
