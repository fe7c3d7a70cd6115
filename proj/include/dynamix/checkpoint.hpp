#pragma once

// Policy checkpoint file:
//   bytes 0..7   magic "DYNXPOL\0"
//   u32          format version
//   u32          layer count L
//   L x (u32 in, u32 out)
//   u64          policy version counter
//   body         per layer: weights [out][in] then bias [out], little-endian f64
// All integers little-endian.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "policy.hpp"

namespace dynamix {

inline constexpr std::array<char, 8> kCheckpointMagic{'D', 'Y', 'N', 'X', 'P', 'O', 'L', '\0'};
inline constexpr std::uint32_t kCheckpointFormat = 1;

class CheckpointError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

template <typename T>
T get_le(const std::string& in, std::size_t& at) {
  if (at + sizeof(T) > in.size()) throw CheckpointError("checkpoint truncated");
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), in.data() + at, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  at += sizeof(T);
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace detail

inline std::string encode_checkpoint(const PolicyParams& params) {
  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_le<std::uint32_t>(out, kCheckpointFormat);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.layers.size()));
  for (const auto& l : params.layers) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.in));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(l.out));
  }
  detail::put_le<std::uint64_t>(out, params.version);
  for (const auto& l : params.layers) {
    for (double w : l.weight) detail::put_le<double>(out, w);
    for (double b : l.bias) detail::put_le<double>(out, b);
  }
  return out;
}

// expected_input/expected_output of 0 skip the corresponding dimension check.
inline PolicyParams decode_checkpoint(const std::string& bytes, int expected_input = static_cast<int>(kStateDim),
                                      int expected_output = static_cast<int>(kNumActions)) {
  if (bytes.size() < kCheckpointMagic.size() ||
      std::memcmp(bytes.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) != 0)
    throw CheckpointError("checkpoint: bad magic");
  std::size_t at = kCheckpointMagic.size();
  const auto format = detail::get_le<std::uint32_t>(bytes, at);
  if (format != kCheckpointFormat)
    throw CheckpointError("checkpoint: unsupported format version " + std::to_string(format));
  const auto count = detail::get_le<std::uint32_t>(bytes, at);
  if (count == 0 || count > 64) throw CheckpointError("checkpoint: implausible layer count");
  PolicyParams p;
  for (std::uint32_t i = 0; i < count; ++i) {
    Layer l;
    l.in = static_cast<int>(detail::get_le<std::uint32_t>(bytes, at));
    l.out = static_cast<int>(detail::get_le<std::uint32_t>(bytes, at));
    if (l.in < 1 || l.out < 1 || l.in > (1 << 16) || l.out > (1 << 16))
      throw CheckpointError("checkpoint: implausible layer dims");
    if (i > 0 && p.layers.back().out != l.in) throw CheckpointError("checkpoint: layer dims do not chain");
    p.layers.push_back(std::move(l));
  }
  if (expected_input > 0 && p.input_dim() != expected_input)
    throw CheckpointError("checkpoint: input dim " + std::to_string(p.input_dim()) + " != expected " +
                          std::to_string(expected_input));
  if (expected_output > 0 && p.output_dim() != expected_output)
    throw CheckpointError("checkpoint: output dim " + std::to_string(p.output_dim()) + " != expected " +
                          std::to_string(expected_output));
  p.version = detail::get_le<std::uint64_t>(bytes, at);
  for (auto& l : p.layers) {
    l.weight.resize(static_cast<std::size_t>(l.in) * l.out);
    l.bias.resize(static_cast<std::size_t>(l.out));
    for (double& w : l.weight) w = detail::get_le<double>(bytes, at);
    for (double& b : l.bias) b = detail::get_le<double>(bytes, at);
  }
  if (at != bytes.size()) throw CheckpointError("checkpoint: trailing bytes");
  if (!p.all_finite()) throw CheckpointError("checkpoint: non-finite parameter");
  return p;
}

inline void save_checkpoint(const PolicyParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write checkpoint " + path);
  const std::string bytes = encode_checkpoint(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("failed writing checkpoint " + path);
}

inline PolicyParams load_checkpoint(const std::string& path, int expected_input = static_cast<int>(kStateDim),
                                    int expected_output = static_cast<int>(kNumActions)) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, expected_input, expected_output);
}

}  // namespace dynamix
