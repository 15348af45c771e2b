#pragma once

// The processing agent: one receive ring mirrored by N transmit rings.
//
// Descriptor i of every ring points at the same buffer, so a packet never
// moves. Slot i goes receive -> process -> transmit on all N queues, and only
// returns to the receive ring once every transmit queue is done with it. A
// transmit length of 0 tells the device to complete the descriptor without
// sending anything, which is how the processor picks its outputs.
//
// All positions below are unwrapped counters; the ring index is the counter
// masked by ring_size - 1. At any time
//
//   min tx head <= published tail <= processed <= RDH <= RDT <= min tx head + ring_size - 1
//
// and at most one packet sits between receive() and transmit().

#include <algorithm>
#include <array>
#include <atomic>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tinyring/descriptor.hpp"
#include "tinyring/error.hpp"
#include "tinyring/mem_env.hpp"
#include "tinyring/nic_model.hpp"

namespace tinyring {

inline constexpr std::size_t kMaxOutputs = 8;
inline constexpr std::size_t kBufferSize = 2048;

/// Per-output transmit lengths; 0 means "do not send on this output".
struct OutputLengths {
  std::array<std::uint16_t, kMaxOutputs> values{};
  std::size_t count = 0;

  static OutputLengths uniform(std::size_t n, std::uint16_t length) {
    if (n > kMaxOutputs) throw Error(ErrorKind::invalid_argument, "too many outputs");
    OutputLengths out;
    out.count = n;
    std::fill_n(out.values.begin(), n, length);
    return out;
  }

  std::uint16_t& operator[](std::size_t q) noexcept { return values[q]; }
  std::uint16_t operator[](std::size_t q) const noexcept { return values[q]; }
  std::span<const std::uint16_t> view() const noexcept { return {values.data(), count}; }
};

/// A received packet. `buffer` spans the whole fixed-size buffer so a
/// processor may rewrite or extend the packet in place.
struct Packet {
  std::span<std::uint8_t> buffer;
  std::uint16_t length = 0;

  std::span<std::uint8_t> data() const noexcept { return buffer.first(length); }
};

template <class F>
concept PacketProcessor = std::is_invocable_r_v<OutputLengths, F&, Packet, std::size_t>;

/// Type-erased processor, for selecting functions at run time.
using Processor = std::function<OutputLengths(Packet, std::size_t num_outputs)>;

template <std::size_t FlushPeriod = 8, std::size_t RecyclePeriod = 64>
class BasicAgent {
  static_assert(FlushPeriod >= 1 && RecyclePeriod >= FlushPeriod && RecyclePeriod % FlushPeriod == 0);

 public:
  static constexpr std::size_t kFlushPeriod = FlushPeriod;
  static constexpr std::size_t kRecyclePeriod = RecyclePeriod;
  // Consecutive iterations without any progress after which run() gives up.
  static constexpr std::size_t kIdleIterations = 2;
  static constexpr std::size_t kHeadCellStride = 64;

  BasicAgent(MemEnv& env, NicModel& nic, std::size_t ring_size, std::size_t num_outputs)
      : nic_(nic), ring_size_(ring_size), num_outputs_(num_outputs), mask_(ring_size - 1) {
    if (!valid_ring_size(ring_size)) {
      throw Error(ErrorKind::invalid_argument,
                  "ring size " + std::to_string(ring_size) + " is not a power of two in [2, 65536]");
    }
    if (num_outputs < 1 || num_outputs > kMaxOutputs) {
      throw Error(ErrorKind::invalid_argument, "output count must be in [1, 8]");
    }
    if (nic.num_tx_queues() < num_outputs) {
      throw Error(ErrorKind::invalid_argument, "device has fewer transmit queues than outputs");
    }

    const std::size_t ring_bytes = ring_size * kDescriptorSize;
    rx_region_ = env.allocate_dma(ring_bytes);
    for (std::size_t q = 0; q < num_outputs; ++q) tx_regions_.push_back(env.allocate_dma(ring_bytes));
    head_cells_ = env.allocate_dma(num_outputs * kHeadCellStride);
    buffers_ = env.allocate_dma(ring_size * kBufferSize);

    for (std::size_t i = 0; i < ring_size; ++i) {
      const PhysAddr buffer = env.virt_to_phys(buffers_.virt_base + i * kBufferSize);
      descriptor_at(rx_region_.backing, i).set_buffer_addr(buffer.value);
      for (auto& tx : tx_regions_) descriptor_at(tx.backing, i).set_buffer_addr(buffer.value);
    }

    const auto lo = [](PhysAddr a) { return static_cast<std::uint32_t>(a.value); };
    const auto hi = [](PhysAddr a) { return static_cast<std::uint32_t>(a.value >> 32); };
    const auto len = static_cast<std::uint32_t>(ring_bytes);

    nic.reg_write(Reg::RDBAL, 0, lo(rx_region_.phys_base));
    nic.reg_write(Reg::RDBAH, 0, hi(rx_region_.phys_base));
    nic.reg_write(Reg::RDLEN, 0, len);
    nic.reg_write(Reg::RDH, 0, 0);
    nic.reg_write(Reg::RDT, 0, 0);
    nic.reg_write(Reg::RXEN, 0, 1);
    for (std::size_t q = 0; q < num_outputs; ++q) {
      const PhysAddr cell = head_cells_.phys_base + q * kHeadCellStride;
      nic.reg_write(Reg::TDBAL, q, lo(tx_regions_[q].phys_base));
      nic.reg_write(Reg::TDBAH, q, hi(tx_regions_[q].phys_base));
      nic.reg_write(Reg::TDLEN, q, len);
      nic.reg_write(Reg::TDWBAL, q, lo(cell));
      nic.reg_write(Reg::TDWBAH, q, hi(cell));
      nic.reg_write(Reg::TDH, q, 0);
      nic.reg_write(Reg::TDT, q, 0);
      nic.reg_write(Reg::TXEN, q, 1);
    }
    // Everything but one guard slot goes to the device.
    receive_tail_ = ring_size - 1;
    nic.reg_write(Reg::RDT, 0, static_cast<std::uint32_t>(receive_tail_));
    tx_heads_.assign(num_outputs, 0);
  }

  BasicAgent(const BasicAgent&) = delete;
  BasicAgent& operator=(const BasicAgent&) = delete;

  /// Returns the packet at the processed position if the device has filled
  /// it. Does not advance; transmit() must follow before the next receive().
  std::optional<Packet> receive() {
    if (outstanding_) {
      throw Error(ErrorKind::protocol_violation, "receive() called with a packet still outstanding");
    }
    const std::size_t index = processed_ & mask_;
    const std::uint64_t meta = descriptor_at(rx_region_.backing, index).metadata();
    if ((meta & desc_bits::kDd) == 0) return std::nullopt;
    outstanding_ = true;
    return Packet{buffers_.backing.subspan(index * kBufferSize, kBufferSize),
                  static_cast<std::uint16_t>(meta & desc_bits::kLengthMask)};
  }

  /// Hands the outstanding packet to every transmit queue with its per-output
  /// length, then flushes and recycles on their periods.
  void transmit(const OutputLengths& lengths) {
    if (!outstanding_) throw Error(ErrorKind::protocol_violation, "transmit() without a received packet");
    if (lengths.count != num_outputs_) {
      throw Error(ErrorKind::invalid_argument, "expected " + std::to_string(num_outputs_) +
                                                   " output lengths, got " + std::to_string(lengths.count));
    }
    for (std::size_t q = 0; q < num_outputs_; ++q) {
      if (lengths[q] > kBufferSize) {
        throw Error(ErrorKind::invalid_argument,
                    "output length " + std::to_string(lengths[q]) + " exceeds buffer size");
      }
    }
    const std::size_t index = processed_ & mask_;
    const std::uint64_t rs = (processed_ + 1) % FlushPeriod == 0 ? desc_bits::kRs : 0;
    for (std::size_t q = 0; q < num_outputs_; ++q) {
      descriptor_at(tx_regions_[q].backing, index).set_metadata(lengths[q] | desc_bits::kEop | rs);
    }
    // clear DD so a later lap cannot mistake this slot for a fresh packet
    descriptor_at(rx_region_.backing, index).set_metadata(0);
    ++processed_;
    outstanding_ = false;
    if (processed_ % FlushPeriod == 0) flush();
    if (processed_ % RecyclePeriod == 0) recycle();
  }

  /// Publishes every processed packet to all transmit queues with one tail
  /// value. The last descriptor of the batch always requests a head
  /// write-back. Returns false if there was nothing to publish.
  bool flush() {
    if (published_ == processed_) return false;
    const std::size_t last = (processed_ - 1) & mask_;
    for (auto& tx : tx_regions_) {
      DescriptorSlot slot = descriptor_at(tx.backing, last);
      const std::uint64_t meta = slot.metadata();
      if ((meta & desc_bits::kRs) == 0) slot.set_metadata(meta | desc_bits::kRs);
    }
    const auto tail = static_cast<std::uint32_t>(processed_ & mask_);
    for (std::size_t q = 0; q < num_outputs_; ++q) nic_.reg_write(Reg::TDT, q, tail);
    published_ = processed_;
    return true;
  }

  /// Gives back to the receive ring every slot that all transmit queues have
  /// finished with. Returns false if the receive tail did not move.
  bool recycle() {
    std::uint64_t earliest = std::numeric_limits<std::uint64_t>::max();
    for (std::size_t q = 0; q < num_outputs_; ++q) {
      const auto* cell = reinterpret_cast<std::uint32_t*>(head_cells_.backing.data() + q * kHeadCellStride);
      const std::uint32_t head =
          std::atomic_ref<std::uint32_t>(*const_cast<std::uint32_t*>(cell)).load(std::memory_order_acquire);
      tx_heads_[q] += (head - tx_heads_[q]) & mask_;
      earliest = std::min(earliest, tx_heads_[q]);
    }
    const std::uint64_t bound = earliest + ring_size_ - 1;
    if (bound <= receive_tail_) return false;
    receive_tail_ = bound;
    nic_.reg_write(Reg::RDT, 0, static_cast<std::uint32_t>(bound & mask_));
    return true;
  }

  /// Processes every packet currently available, up to `limit`. When the
  /// receive ring runs dry, publishes the partial batch and recycles.
  template <PacketProcessor F>
  std::size_t poll(F& processor, std::size_t limit = std::numeric_limits<std::size_t>::max()) {
    std::size_t count = 0;
    last_poll_changed_ = false;
    while (count < limit) {
      auto packet = receive();
      if (!packet) break;
      transmit(processor(*packet, num_outputs_));
      ++count;
    }
    if (count < limit) {
      const bool flushed = flush();
      const bool recycled = recycle();
      last_poll_changed_ = flushed || recycled;
    }
    return count;
  }

  /// Lockstep loop: step the device, then process what it delivered. Stops
  /// after `max_packets` or once nothing moves, then drains the transmit
  /// queues. Packets arriving during the final drain stay in the receive ring
  /// for the next call.
  template <PacketProcessor F>
  std::size_t run(F& processor, std::size_t max_packets, std::size_t device_budget) {
    std::size_t total = 0;
    std::size_t idle = 0;
    while (total < max_packets && idle < kIdleIterations) {
      const std::size_t work = nic_.step_device(device_budget);
      const std::size_t got = poll(processor, max_packets - total);
      total += got;
      idle = (work == 0 && got == 0 && !last_poll_changed_) ? idle + 1 : 0;
    }
    flush();
    while (!nic_.tx_idle()) nic_.step_device(device_budget);
    recycle();
    return total;
  }

  std::size_t ring_size() const noexcept { return ring_size_; }
  std::size_t num_outputs() const noexcept { return num_outputs_; }
  std::uint64_t processed() const noexcept { return processed_; }
  std::uint64_t published() const noexcept { return published_; }
  std::uint64_t receive_tail() const noexcept { return receive_tail_; }
  std::span<const std::uint64_t> tx_heads() const noexcept { return tx_heads_; }
  bool outstanding() const noexcept { return outstanding_; }

  std::span<std::uint8_t> rx_ring() const noexcept { return rx_region_.backing; }
  std::span<std::uint8_t> tx_ring(std::size_t q) const { return tx_regions_.at(q).backing; }

  std::vector<PhysAddr> buffer_addresses() const {
    std::vector<PhysAddr> out;
    out.reserve(ring_size_);
    for (std::size_t i = 0; i < ring_size_; ++i) {
      out.push_back(PhysAddr{descriptor_at(rx_region_.backing, i).buffer_addr()});
    }
    return out;
  }

 private:
  NicModel& nic_;
  std::size_t ring_size_;
  std::size_t num_outputs_;
  std::size_t mask_;
  DmaRegion rx_region_;
  std::vector<DmaRegion> tx_regions_;
  DmaRegion head_cells_;
  DmaRegion buffers_;
  std::uint64_t processed_ = 0;
  std::uint64_t published_ = 0;
  std::uint64_t receive_tail_ = 0;
  std::vector<std::uint64_t> tx_heads_;
  bool outstanding_ = false;
  bool last_poll_changed_ = false;
};

using Agent = BasicAgent<>;

}  // namespace tinyring
