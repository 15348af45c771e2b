#pragma once

// Deterministic, explicitly stepped model of an 82599-style NIC.
//
// The device owns the modular interval [head, tail) of every ring. Software
// hands descriptors over by clearing DD and advancing the tail register; the
// device hands them back by setting DD and advancing the head. Nothing happens
// between calls to step_device().
//
// Register reference (all 32-bit, reset value 0):
//
//   RDBAL, RDBAH   receive ring base, low/high halves (16-byte aligned)
//   RDLEN          receive ring size in bytes (16 * descriptor count)
//   RDH, RDT       receive head (device-owned once enabled) and tail
//   RXEN           receive enable, 0 or 1
//   TDBAL(q) ...   same as above for transmit queue q
//   TDWBAL(q), TDWBAH(q)
//                  head write-back address; 0 disables write-back. When a
//                  descriptor with RS completes, the device stores the new
//                  head as a little-endian u32 at this address.
//   TXEN(q)        transmit enable, 0 or 1
//
// Receive registers exist for queue 0 only.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tinyring/descriptor.hpp"
#include "tinyring/error.hpp"
#include "tinyring/mem_env.hpp"

namespace tinyring {

inline constexpr std::size_t kMaxFrameSize = 2048;
inline constexpr std::size_t kMinRingSize = 2;
inline constexpr std::size_t kMaxRingSize = 65536;

/// Device-owned descriptor indices: the modular interval [head, tail).
inline std::vector<std::uint32_t> ownership(std::uint32_t head, std::uint32_t tail,
                                            std::uint32_t length) {
  if (length == 0 || head >= length || tail >= length) {
    throw Error(ErrorKind::invalid_argument, "head and tail must be below the ring length");
  }
  const std::uint32_t count = (tail + length - head) % length;
  std::vector<std::uint32_t> out(count);
  for (std::uint32_t i = 0; i < count; ++i) out[i] = (head + i) % length;
  return out;
}

inline bool valid_ring_size(std::size_t n) noexcept {
  return n >= kMinRingSize && n <= kMaxRingSize && std::has_single_bit(n);
}

enum class Reg {
  RDBAL, RDBAH, RDLEN, RDH, RDT, RXEN,
  TDBAL, TDBAH, TDLEN, TDH, TDT, TDWBAL, TDWBAH, TXEN,
};

constexpr std::string_view to_string(Reg r) noexcept {
  constexpr std::string_view names[] = {"RDBAL", "RDBAH", "RDLEN",  "RDH",    "RDT",
                                        "RXEN",  "TDBAL", "TDBAH",  "TDLEN",  "TDH",
                                        "TDT",   "TDWBAL", "TDWBAH", "TXEN"};
  return names[static_cast<int>(r)];
}

struct Frame {
  std::vector<std::uint8_t> payload;
  std::uint64_t inject_time = 0;
  std::uint64_t drain_time = 0;
};

struct RingState {
  PhysAddr base;
  std::uint32_t length = 0;  // descriptors
  std::uint32_t head = 0;
  std::uint32_t tail = 0;
  std::optional<PhysAddr> head_writeback_addr;
};

/// Unwrapped head/tail counters. They only ever grow.
struct RingCounters {
  std::uint64_t head = 0;
  std::uint64_t tail = 0;
};

struct NicConfig {
  std::size_t num_tx_queues = 1;
  /// Frames that may wait on the wire side at the end of a step; newer frames
  /// beyond this depth are tail-dropped. Unset means unbounded.
  std::optional<std::size_t> rx_fifo_depth;
};

class NicModel {
 public:
  static constexpr std::size_t kMaxTxQueues = 64;

  NicModel(MemEnv& env, NicConfig config) : env_(env), config_(config), tx_(config.num_tx_queues) {
    if (config.num_tx_queues == 0 || config.num_tx_queues > kMaxTxQueues) {
      throw Error(ErrorKind::invalid_argument, "transmit queue count must be in [1, 64]");
    }
    emitted_.resize(config.num_tx_queues);
    rx_.is_rx = true;
  }

  std::size_t num_tx_queues() const noexcept { return tx_.size(); }

  std::uint32_t reg_read(Reg reg, std::size_t queue = 0) const {
    const Ring& r = ring_for(reg, queue);
    switch (reg) {
      case Reg::RDBAL: case Reg::TDBAL: return r.base_lo;
      case Reg::RDBAH: case Reg::TDBAH: return r.base_hi;
      case Reg::RDLEN: case Reg::TDLEN: return r.len_bytes;
      case Reg::RDH: case Reg::TDH: return r.head;
      case Reg::RDT: case Reg::TDT: return r.tail;
      case Reg::RXEN: case Reg::TXEN: return r.enabled ? 1 : 0;
      case Reg::TDWBAL: return r.wb_lo;
      case Reg::TDWBAH: return r.wb_hi;
    }
    return 0;
  }

  /// Stores a register value. Tail writes publish ownership but trigger no
  /// processing; the device acts only in step_device().
  void reg_write(Reg reg, std::size_t queue, std::uint32_t value) {
    Ring& r = ring_for(reg, queue);
    switch (reg) {
      case Reg::RDBAL: case Reg::TDBAL: config_write(r, reg, r.base_lo, value); return;
      case Reg::RDBAH: case Reg::TDBAH: config_write(r, reg, r.base_hi, value); return;
      case Reg::RDLEN: case Reg::TDLEN: config_write(r, reg, r.len_bytes, value); return;
      case Reg::TDWBAL: config_write(r, reg, r.wb_lo, value); return;
      case Reg::TDWBAH: config_write(r, reg, r.wb_hi, value); return;
      case Reg::RDH: case Reg::TDH:
        if (r.enabled) {
          throw Error(ErrorKind::register_write_fault,
                      std::string(to_string(reg)) + " is device-owned while the queue is enabled");
        }
        check_index(reg, r, value);
        r.head = value;
        return;
      case Reg::RDT: case Reg::TDT: write_tail(r, reg, value); return;
      case Reg::RXEN: case Reg::TXEN: write_enable(r, reg, value); return;
    }
  }

  void inject_rx(Frame frame) {
    if (frame.payload.empty() || frame.payload.size() > kMaxFrameSize) {
      throw Error(ErrorKind::invalid_argument,
                  "frame size " + std::to_string(frame.payload.size()) + " outside [1, 2048]");
    }
    frame.inject_time = clock_;
    rx_pending_.push_back(Pending{std::move(frame), injected_++});
  }

  /// Advances the clock by one and performs up to `max_work` descriptor
  /// completions, visiting the receive engine and each transmit engine in
  /// round-robin order. A receive turn that finds frames pending but no
  /// device-owned descriptor drops the oldest frame; drops are not work.
  std::size_t step_device(std::size_t max_work) {
    if (!rx_.enabled && std::none_of(tx_.begin(), tx_.end(), [](const Ring& r) { return r.enabled; })) {
      throw Error(ErrorKind::not_ready, "no queue enabled");
    }
    ++clock_;
    const std::size_t engines = 1 + tx_.size();
    std::size_t work = 0;
    std::size_t idle_turns = 0;
    while (work < max_work && idle_turns < engines) {
      const std::size_t engine = cursor_;
      cursor_ = cursor_ + 1 == engines ? 0 : cursor_ + 1;
      const bool active = engine == 0 ? service_rx(work) : service_tx(engine - 1, work);
      idle_turns = active ? 0 : idle_turns + 1;
    }
    if (config_.rx_fifo_depth) {
      while (rx_pending_.size() > *config_.rx_fifo_depth) {
        drop_log_.push_back(rx_pending_.back().id);
        rx_pending_.pop_back();
        ++rx_dropped_;
      }
    }
    return work;
  }

  /// Returns and clears the frames emitted on `queue`, oldest first.
  std::vector<Frame> drain_tx(std::size_t queue) {
    if (queue >= emitted_.size()) {
      throw Error(ErrorKind::invalid_argument, "unknown transmit queue " + std::to_string(queue));
    }
    std::vector<Frame> out;
    out.swap(emitted_[queue]);
    return out;
  }

  std::uint64_t clock() const noexcept { return clock_; }
  std::uint64_t injected() const noexcept { return injected_; }
  std::uint64_t rx_delivered() const noexcept { return rx_delivered_; }
  std::uint64_t rx_dropped() const noexcept { return rx_dropped_; }
  std::size_t rx_pending() const noexcept { return rx_pending_.size(); }

  /// Injection indices (0-based, in injection order) of every dropped frame.
  std::span<const std::uint64_t> drop_log() const noexcept { return drop_log_; }

  RingCounters rx_counters() const noexcept { return {rx_.head_u, rx_.tail_u}; }
  RingCounters tx_counters(std::size_t queue) const { return {tx_.at(queue).head_u, tx_.at(queue).tail_u}; }

  RingState rx_ring_state() const { return state_of(rx_); }
  RingState tx_ring_state(std::size_t queue) const { return state_of(tx_.at(queue)); }

  /// True when no transmit queue has published descriptors left to complete.
  bool tx_idle() const noexcept {
    return std::all_of(tx_.begin(), tx_.end(), [](const Ring& r) { return !r.enabled || r.head == r.tail; });
  }

 private:
  struct Ring {
    bool is_rx = false;
    std::uint32_t base_lo = 0, base_hi = 0, len_bytes = 0;
    std::uint32_t head = 0, tail = 0;
    std::uint32_t wb_lo = 0, wb_hi = 0;
    bool enabled = false;
    std::uint64_t head_u = 0, tail_u = 0;
    std::uint32_t mask = 0;
    std::span<std::uint8_t> descriptors;

    std::uint64_t base() const noexcept { return (std::uint64_t{base_hi} << 32) | base_lo; }
    std::uint64_t writeback() const noexcept { return (std::uint64_t{wb_hi} << 32) | wb_lo; }
    std::uint32_t count() const noexcept { return len_bytes / kDescriptorSize; }
    std::uint32_t owned() const noexcept { return (tail - head) & mask; }
  };

  Ring& ring_for(Reg reg, std::size_t queue) {
    return const_cast<Ring&>(std::as_const(*this).ring_for(reg, queue));
  }

  const Ring& ring_for(Reg reg, std::size_t queue) const {
    const bool rx_reg = reg <= Reg::RXEN;
    if (rx_reg) {
      if (queue != 0) {
        throw Error(ErrorKind::invalid_register,
                    std::string(to_string(reg)) + " has no queue " + std::to_string(queue));
      }
      return rx_;
    }
    if (queue >= tx_.size()) {
      throw Error(ErrorKind::invalid_register, std::string(to_string(reg)) + "(" +
                                                   std::to_string(queue) + ") with " +
                                                   std::to_string(tx_.size()) + " queues");
    }
    return tx_[queue];
  }

  static void config_write(const Ring& r, Reg reg, std::uint32_t& field, std::uint32_t value) {
    if (r.enabled) {
      throw Error(ErrorKind::register_write_fault,
                  std::string(to_string(reg)) + " cannot change while the queue is enabled");
    }
    field = value;
  }

  static void check_index(Reg reg, const Ring& r, std::uint32_t value) {
    const std::uint32_t n = r.count();
    if (n == 0 ? value != 0 : value >= n) {
      throw Error(ErrorKind::invalid_argument, std::string(to_string(reg)) + " value " +
                                                   std::to_string(value) + " >= ring length " +
                                                   std::to_string(n));
    }
  }

  void write_tail(Ring& r, Reg reg, std::uint32_t value) {
    check_index(reg, r, value);
    if (!r.enabled) {
      r.tail = value;
      return;
    }
    const std::uint32_t before = r.owned();
    const std::uint32_t after = (value - r.head) & r.mask;
    if (after < before) {
      throw Error(ErrorKind::invalid_argument,
                  std::string(to_string(reg)) + " may only be incremented (write " +
                      std::to_string(value) + " would reclaim device-owned descriptors)");
    }
    r.tail = value;
    r.tail_u += after - before;
  }

  void write_enable(Ring& r, Reg reg, std::uint32_t value) {
    if (value > 1) throw Error(ErrorKind::invalid_argument, std::string(to_string(reg)) + " takes 0 or 1");
    if (value == 0) {
      r.enabled = false;
      return;
    }
    if (r.enabled) return;
    const std::uint32_t n = r.count();
    if (r.len_bytes % kDescriptorSize != 0 || !valid_ring_size(n)) {
      throw Error(ErrorKind::invalid_argument, "ring length must be a power of two in [2, 65536] descriptors");
    }
    if (r.base() % kDescriptorSize != 0) {
      throw Error(ErrorKind::invalid_argument, "ring base must be 16-byte aligned");
    }
    if (r.head >= n || r.tail >= n) throw Error(ErrorKind::invalid_argument, "head/tail outside ring");
    r.descriptors = env_.dma(PhysAddr{r.base()}, std::size_t{n} * kDescriptorSize);
    r.mask = n - 1;
    r.enabled = true;
    r.head_u = r.head;
    r.tail_u = r.head + r.owned();
  }

  bool service_rx(std::size_t& work) {
    Ring& r = rx_;
    if (!r.enabled || rx_pending_.empty()) return false;
    if (r.owned() == 0) {
      drop_log_.push_back(rx_pending_.front().id);
      rx_pending_.pop_front();
      ++rx_dropped_;
      return true;
    }
    const Frame& frame = rx_pending_.front().frame;
    DescriptorSlot slot = descriptor_at(r.descriptors, r.head);
    auto buffer = env_.dma(PhysAddr{slot.buffer_addr()}, frame.payload.size());
    std::memcpy(buffer.data(), frame.payload.data(), frame.payload.size());
    slot.set_metadata(frame.payload.size() | desc_bits::kEop | desc_bits::kDd);
    rx_pending_.pop_front();
    ++rx_delivered_;
    advance_head(r);
    ++work;
    return true;
  }

  bool service_tx(std::size_t queue, std::size_t& work) {
    Ring& r = tx_[queue];
    if (!r.enabled || r.head == r.tail) return false;
    DescriptorSlot slot = descriptor_at(r.descriptors, r.head);
    const std::uint64_t meta = slot.metadata();
    const std::size_t length = meta & desc_bits::kLengthMask;
    if (length > 0) {
      auto buffer = env_.dma(PhysAddr{slot.buffer_addr()}, length);
      emitted_[queue].push_back(Frame{{buffer.begin(), buffer.end()}, 0, clock_});
    }
    slot.set_metadata(meta | desc_bits::kDd);
    advance_head(r);
    if ((meta & desc_bits::kRs) != 0 && r.writeback() != 0) {
      auto cell = env_.dma(PhysAddr{r.writeback()}, sizeof(std::uint32_t));
      std::atomic_ref<std::uint32_t>(*reinterpret_cast<std::uint32_t*>(cell.data()))
          .store(r.head, std::memory_order_release);
    }
    ++work;
    return true;
  }

  static void advance_head(Ring& r) noexcept {
    r.head = (r.head + 1) & r.mask;
    ++r.head_u;
  }

  static RingState state_of(const Ring& r) {
    RingState s{PhysAddr{r.base()}, r.count(), r.head, r.tail, std::nullopt};
    if (!r.is_rx && r.writeback() != 0) s.head_writeback_addr = PhysAddr{r.writeback()};
    return s;
  }

  MemEnv& env_;
  NicConfig config_;
  Ring rx_;
  std::vector<Ring> tx_;
  std::vector<std::vector<Frame>> emitted_;
  struct Pending {
    Frame frame;
    std::uint64_t id;  // injection index
  };
  std::deque<Pending> rx_pending_;
  std::vector<std::uint64_t> drop_log_;
  std::uint64_t clock_ = 0;
  std::uint64_t injected_ = 0;
  std::uint64_t rx_delivered_ = 0;
  std::uint64_t rx_dropped_ = 0;
  std::size_t cursor_ = 0;
};

}  // namespace tinyring
