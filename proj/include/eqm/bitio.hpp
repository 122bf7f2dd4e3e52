#pragma once

#include <cstdint>
#include <span>

#include "eqm/errors.hpp"

namespace eqm {

// MSB-first bit reader over an RBSP payload (emulation prevention already
// removed). Reading past the end throws bitio.Exhausted; SPS parsing maps
// that to hevc.MalformedSps.
class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t bit() {
    if (pos_ >= bytes_.size() * 8) raise("bitio.Exhausted", "read past end of payload");
    const std::uint8_t byte = bytes_[pos_ >> 3];
    const std::uint32_t b = (byte >> (7 - (pos_ & 7))) & 1u;
    ++pos_;
    return b;
  }

  std::uint32_t bits(int n) {
    std::uint32_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 1) | bit();
    return v;
  }

  void skip(int n) {
    for (int i = 0; i < n; ++i) bit();
  }

  // Exp-Golomb ue(v).
  std::uint64_t ue() {
    int leading_zeros = 0;
    while (bit() == 0) {
      if (++leading_zeros > 32) raise("bitio.Exhausted", "oversized Exp-Golomb code");
    }
    std::uint64_t suffix = 0;
    for (int i = 0; i < leading_zeros; ++i) suffix = (suffix << 1) | bit();
    return ((1ULL << leading_zeros) - 1) + suffix;
  }

  // Exp-Golomb se(v): 0, 1, -1, 2, -2, ...
  std::int64_t se() {
    const std::uint64_t k = ue();
    const std::int64_t half = static_cast<std::int64_t>((k + 1) / 2);
    return (k % 2 == 1) ? half : -half;
  }

  std::size_t bit_position() const { return pos_; }
  std::size_t bits_left() const { return bytes_.size() * 8 - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace eqm
