#pragma once

// 16-byte descriptor shared between CPU and device.
//
//   bytes 0..8   buffer physical address, little-endian
//   bytes 8..16  metadata word, little-endian
//                  [15:0]  length in bytes
//                  24      EOP, end of packet (always set, one descriptor per packet)
//                  27      RS, request status / head write-back
//                  32      DD, descriptor done (set by the device only)
//
// Other metadata bits are reserved: encoders write 0, decoders ignore them.

#include <array>
#include <atomic>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "tinyring/error.hpp"
#include "tinyring/mem_env.hpp"

namespace tinyring {

static_assert(std::endian::native == std::endian::little,
              "in-place descriptor access assumes a little-endian host");

namespace desc_bits {
inline constexpr std::uint64_t kLengthMask = 0xFFFF;
inline constexpr std::uint64_t kEop = std::uint64_t{1} << 24;
inline constexpr std::uint64_t kRs = std::uint64_t{1} << 27;
inline constexpr std::uint64_t kDd = std::uint64_t{1} << 32;
}  // namespace desc_bits

inline constexpr std::size_t kDescriptorSize = 16;

struct Descriptor {
  PhysAddr buffer_addr;
  std::uint32_t length = 0;  // must fit 16 bits to be encodable
  bool eop = false;
  bool rs = false;
  bool dd = false;

  friend bool operator==(const Descriptor&, const Descriptor&) = default;

  std::uint64_t metadata() const {
    if (length > desc_bits::kLengthMask) {
      throw Error(ErrorKind::invalid_argument,
                  "descriptor length " + std::to_string(length) + " exceeds 16 bits");
    }
    return std::uint64_t{length} | (eop ? desc_bits::kEop : 0) | (rs ? desc_bits::kRs : 0) |
           (dd ? desc_bits::kDd : 0);
  }

  static Descriptor from_words(std::uint64_t addr, std::uint64_t metadata) noexcept {
    return {PhysAddr{addr}, static_cast<std::uint32_t>(metadata & desc_bits::kLengthMask),
            (metadata & desc_bits::kEop) != 0, (metadata & desc_bits::kRs) != 0,
            (metadata & desc_bits::kDd) != 0};
  }
};

inline std::array<std::uint8_t, kDescriptorSize> encode_descriptor(const Descriptor& d) {
  std::array<std::uint8_t, kDescriptorSize> out{};
  const std::uint64_t words[2] = {d.buffer_addr.value, d.metadata()};
  for (std::size_t w = 0; w < 2; ++w) {
    for (std::size_t b = 0; b < 8; ++b) {
      out[w * 8 + b] = static_cast<std::uint8_t>(words[w] >> (8 * b));
    }
  }
  return out;
}

inline Descriptor decode_descriptor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kDescriptorSize) {
    throw Error(ErrorKind::invalid_argument,
                "descriptor must be 16 bytes, got " + std::to_string(bytes.size()));
  }
  std::uint64_t words[2] = {0, 0};
  for (std::size_t w = 0; w < 2; ++w) {
    for (std::size_t b = 0; b < 8; ++b) {
      words[w] |= std::uint64_t{bytes[w * 8 + b]} << (8 * b);
    }
  }
  return Descriptor::from_words(words[0], words[1]);
}

/// In-place view of one descriptor slot in DMA memory.
///
/// Each 8-byte field is accessed as a single indivisible operation. Writers
/// publish the buffer before the metadata word (release); readers load the
/// metadata first (acquire) and only then touch the buffer.
class DescriptorSlot {
 public:
  explicit DescriptorSlot(std::uint8_t* base) noexcept
      : addr_(*reinterpret_cast<std::uint64_t*>(base)),
        meta_(*reinterpret_cast<std::uint64_t*>(base + 8)) {}

  std::uint64_t buffer_addr() const noexcept {
    return std::atomic_ref<std::uint64_t>(addr_).load(std::memory_order_relaxed);
  }
  void set_buffer_addr(std::uint64_t v) noexcept {
    std::atomic_ref<std::uint64_t>(addr_).store(v, std::memory_order_relaxed);
  }
  std::uint64_t metadata() const noexcept {
    return std::atomic_ref<std::uint64_t>(meta_).load(std::memory_order_acquire);
  }
  void set_metadata(std::uint64_t v) noexcept {
    std::atomic_ref<std::uint64_t>(meta_).store(v, std::memory_order_release);
  }

 private:
  std::uint64_t& addr_;
  std::uint64_t& meta_;
};

inline DescriptorSlot descriptor_at(std::span<std::uint8_t> ring, std::size_t index) noexcept {
  return DescriptorSlot(ring.data() + index * kDescriptorSize);
}

}  // namespace tinyring
