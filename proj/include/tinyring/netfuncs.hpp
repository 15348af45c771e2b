#pragma once

// Built-in in-order network functions.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "tinyring/agent.hpp"
#include "tinyring/error.hpp"

namespace tinyring {

inline Processor nf_identity() {
  return [](Packet packet, std::size_t outputs) { return OutputLengths::uniform(outputs, packet.length); };
}

/// Swaps destination and source MAC addresses. Frames shorter than an
/// Ethernet address pair pass through unchanged.
inline Processor nf_macswap() {
  return [](Packet packet, std::size_t outputs) {
    if (packet.length >= 12) {
      auto bytes = packet.data();
      std::swap_ranges(bytes.begin(), bytes.begin() + 6, bytes.begin() + 6);
    }
    return OutputLengths::uniform(outputs, packet.length);
  };
}

/// Forwards packets of at least `min_len` bytes, drops the rest on every output.
inline Processor nf_policer(std::uint16_t min_len) {
  return [min_len](Packet packet, std::size_t outputs) {
    return OutputLengths::uniform(outputs, packet.length >= min_len ? packet.length : 0);
  };
}

enum class NfKind { identity, macswap, policer };

struct ProcessorSpec {
  NfKind kind = NfKind::identity;
  std::uint16_t min_len = 0;  // policer only
};

inline ProcessorSpec parse_nf(std::string_view name, std::uint16_t policer_min_len = 100) {
  if (name == "identity") return {NfKind::identity, 0};
  if (name == "macswap") return {NfKind::macswap, 0};
  if (name == "policer") return {NfKind::policer, policer_min_len};
  throw Error(ErrorKind::invalid_argument, "unknown network function '" + std::string(name) + "'");
}

inline Processor make_processor(const ProcessorSpec& spec) {
  switch (spec.kind) {
    case NfKind::identity: return nf_identity();
    case NfKind::macswap: return nf_macswap();
    case NfKind::policer: return nf_policer(spec.min_len);
  }
  throw Error(ErrorKind::invalid_argument, "unknown network function");
}

}  // namespace tinyring
