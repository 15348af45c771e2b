#pragma once

// Classic libpcap capture files, little-endian microsecond variant only.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "tinyring/error.hpp"
#include "tinyring/nic_model.hpp"

namespace tinyring {

inline constexpr std::uint32_t kPcapMagic = 0xA1B2C3D4;
inline constexpr std::size_t kPcapGlobalHeaderSize = 24;
inline constexpr std::size_t kPcapRecordHeaderSize = 16;

namespace detail {
inline std::uint32_t load_le32(std::span<const std::uint8_t> b, std::size_t at) noexcept {
  return std::uint32_t{b[at]} | std::uint32_t{b[at + 1]} << 8 | std::uint32_t{b[at + 2]} << 16 |
         std::uint32_t{b[at + 3]} << 24;
}
inline std::uint16_t load_le16(std::span<const std::uint8_t> b, std::size_t at) noexcept {
  return static_cast<std::uint16_t>(b[at] | b[at + 1] << 8);
}
inline void store_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline void store_le16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
}  // namespace detail

/// Frames in file order. Captured bytes beyond 2048 are cut off; records with
/// no captured bytes are skipped.
inline std::vector<Frame> parse_pcap(std::span<const std::uint8_t> bytes) {
  using detail::load_le16;
  using detail::load_le32;
  if (bytes.size() < kPcapGlobalHeaderSize) {
    throw Error(ErrorKind::format_error, "pcap shorter than its global header");
  }
  const std::uint32_t magic = load_le32(bytes, 0);
  if (magic != kPcapMagic) {
    throw Error(ErrorKind::format_error,
                magic == 0xD4C3B2A1 ? "big-endian pcap files are not supported" : "bad pcap magic");
  }
  if (load_le16(bytes, 4) != 2) throw Error(ErrorKind::format_error, "unsupported pcap major version");
  const std::uint32_t snaplen = load_le32(bytes, 16);

  std::vector<Frame> frames;
  std::size_t at = kPcapGlobalHeaderSize;
  for (std::size_t record = 0; at < bytes.size(); ++record) {
    const std::string where = "record " + std::to_string(record);
    if (bytes.size() - at < kPcapRecordHeaderSize) {
      throw Error(ErrorKind::format_error, where + ": truncated header");
    }
    const std::uint32_t incl_len = load_le32(bytes, at + 8);
    const std::uint32_t orig_len = load_le32(bytes, at + 12);
    if (incl_len > snaplen || incl_len > orig_len) {
      throw Error(ErrorKind::format_error, where + ": captured length exceeds snaplen or original length");
    }
    at += kPcapRecordHeaderSize;
    if (bytes.size() - at < incl_len) {
      throw Error(ErrorKind::format_error, where + ": truncated payload");
    }
    const std::size_t keep = std::min<std::size_t>(incl_len, kMaxFrameSize);
    if (keep > 0) {
      frames.push_back(Frame{{bytes.begin() + at, bytes.begin() + at + keep}, 0, 0});
    }
    at += incl_len;
  }
  return frames;
}

/// Ethernet capture with zeroed timestamps.
inline std::vector<std::uint8_t> encode_pcap(std::span<const Frame> frames, std::uint32_t snaplen = 65535) {
  using detail::store_le16;
  using detail::store_le32;
  std::vector<std::uint8_t> out;
  store_le32(out, kPcapMagic);
  store_le16(out, 2);
  store_le16(out, 4);
  store_le32(out, 0);  // thiszone
  store_le32(out, 0);  // sigfigs
  store_le32(out, snaplen);
  store_le32(out, 1);  // LINKTYPE_ETHERNET
  for (const Frame& f : frames) {
    const auto len = static_cast<std::uint32_t>(f.payload.size());
    store_le32(out, 0);
    store_le32(out, 0);
    store_le32(out, len);
    store_le32(out, len);
    out.insert(out.end(), f.payload.begin(), f.payload.end());
  }
  return out;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io_error, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorKind::io_error, "read failed on " + path.string());
  return bytes;
}

inline std::vector<Frame> read_pcap(const std::filesystem::path& path) { return parse_pcap(read_file(path)); }

}  // namespace tinyring
