#pragma once

// Simulated DMA-capable memory: one flat, page-aligned arena handed out by a
// bump allocator, with a page map providing virtual <-> physical translation.
//
// Physical addresses are what the device sees (descriptor buffer pointers,
// ring bases). Virtual addresses are what the CPU side sees. Regions are laid
// out with an unmapped guard page between them in virtual space, so the two
// address spaces are not related by a single global offset.

#include <bit>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tinyring/error.hpp"

namespace tinyring {

struct PhysAddr {
  std::uint64_t value = 0;
  friend constexpr auto operator<=>(PhysAddr, PhysAddr) = default;
};

struct VirtAddr {
  std::uint64_t value = 0;
  friend constexpr auto operator<=>(VirtAddr, VirtAddr) = default;
};

constexpr PhysAddr operator+(PhysAddr a, std::uint64_t off) noexcept { return {a.value + off}; }
constexpr VirtAddr operator+(VirtAddr a, std::uint64_t off) noexcept { return {a.value + off}; }

struct DmaRegion {
  VirtAddr virt_base;
  PhysAddr phys_base;
  std::size_t size = 0;
  std::span<std::uint8_t> backing;  // host view of the region, zero-initialized
};

/// Injective virtual-page -> physical-page association.
class PageMap {
 public:
  explicit PageMap(std::size_t page_size) : page_size_(page_size) {
    if (page_size == 0 || !std::has_single_bit(page_size)) {
      throw Error(ErrorKind::invalid_argument, "page size must be a power of two");
    }
    shift_ = static_cast<unsigned>(std::countr_zero(page_size));
  }

  std::size_t page_size() const noexcept { return page_size_; }

  void map(std::uint64_t virt_page, std::uint64_t phys_page) {
    if (forward_.contains(virt_page) || reverse_.contains(phys_page)) {
      throw Error(ErrorKind::invalid_argument, "page already mapped");
    }
    forward_.emplace(virt_page, phys_page);
    reverse_.emplace(phys_page, virt_page);
  }

  PhysAddr to_phys(VirtAddr addr) const {
    auto it = forward_.find(addr.value >> shift_);
    if (it == forward_.end()) {
      throw Error(ErrorKind::translation_fault, "unmapped virtual address " + hex(addr.value));
    }
    return {(it->second << shift_) | (addr.value & (page_size_ - 1))};
  }

  VirtAddr to_virt(PhysAddr addr) const {
    auto it = reverse_.find(addr.value >> shift_);
    if (it == reverse_.end()) {
      throw Error(ErrorKind::translation_fault, "unmapped physical address " + hex(addr.value));
    }
    return {(it->second << shift_) | (addr.value & (page_size_ - 1))};
  }

  std::size_t size() const noexcept { return forward_.size(); }

  static std::string hex(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    do {
      out.insert(out.begin(), digits[v & 0xF]);
      v >>= 4;
    } while (v != 0);
    return "0x" + out;
  }

 private:
  std::size_t page_size_;
  unsigned shift_ = 0;
  std::unordered_map<std::uint64_t, std::uint64_t> forward_;
  std::unordered_map<std::uint64_t, std::uint64_t> reverse_;
};

struct MemEnvConfig {
  std::size_t arena_size = 16u << 20;
  std::size_t page_size = 4096;
  std::uint64_t phys_base = 0x4000'0000;
  std::uint64_t virt_base = 0x7f00'0000'0000;
};

class MemEnv {
 public:
  MemEnv() : MemEnv(MemEnvConfig{}) {}

  explicit MemEnv(const MemEnvConfig& config) : map_(config.page_size) {
    const std::size_t page = config.page_size;
    if (config.phys_base % page != 0 || config.virt_base % page != 0) {
      throw Error(ErrorKind::invalid_argument, "address space bases must be page aligned");
    }
    arena_size_ = config.arena_size / page * page;
    if (arena_size_ == 0) throw Error(ErrorKind::invalid_argument, "arena smaller than one page");
    arena_.reset(new (std::align_val_t{page}) std::uint8_t[arena_size_]());
    phys_base_ = config.phys_base;
    next_virt_ = config.virt_base;
  }

  MemEnv(const MemEnv&) = delete;
  MemEnv& operator=(const MemEnv&) = delete;

  std::size_t page_size() const noexcept { return map_.page_size(); }
  std::size_t arena_size() const noexcept { return arena_size_; }
  std::size_t bytes_used() const noexcept { return used_; }

  /// Returns a zeroed, physically contiguous, page-aligned region. Memory is
  /// never returned to the arena.
  DmaRegion allocate_dma(std::size_t size) {
    if (size == 0) throw Error(ErrorKind::invalid_argument, "zero-sized DMA allocation");
    const std::size_t page = page_size();
    const std::size_t pages = (size + page - 1) / page;
    if (pages > (arena_size_ - used_) / page) {
      throw Error(ErrorKind::out_of_memory,
                  "arena exhausted: " + std::to_string(size) + " bytes requested, " +
                      std::to_string(arena_size_ - used_) + " available");
    }
    DmaRegion region{VirtAddr{next_virt_}, PhysAddr{phys_base_ + used_}, size,
                     std::span<std::uint8_t>(arena_.get() + used_, size)};
    for (std::size_t i = 0; i < pages; ++i) {
      map_.map(region.virt_base.value / page + i, region.phys_base.value / page + i);
    }
    used_ += pages * page;
    // one unmapped guard page after each region
    next_virt_ += (pages + 1) * page;
    regions_.push_back(region);
    return region;
  }

  PhysAddr virt_to_phys(VirtAddr addr) const { return map_.to_phys(addr); }
  VirtAddr phys_to_virt(PhysAddr addr) const { return map_.to_virt(addr); }

  /// Device-side view of `len` bytes starting at a physical address.
  std::span<std::uint8_t> dma(PhysAddr addr, std::size_t len) {
    if (addr.value < phys_base_ || addr.value - phys_base_ > used_ ||
        len > used_ - (addr.value - phys_base_)) {
      throw Error(ErrorKind::translation_fault,
                  "DMA outside allocated memory at " + PageMap::hex(addr.value));
    }
    return {arena_.get() + (addr.value - phys_base_), len};
  }

  /// CPU-side view of `len` bytes starting at a virtual address.
  std::span<std::uint8_t> cpu(VirtAddr addr, std::size_t len) {
    const PhysAddr first = virt_to_phys(addr);
    if (len > 0) {
      const PhysAddr last = virt_to_phys(addr + (len - 1));
      if (last.value - first.value != len - 1) {
        throw Error(ErrorKind::translation_fault, "access crosses a region boundary");
      }
    }
    return dma(first, len);
  }

  std::span<const DmaRegion> regions() const noexcept { return regions_; }
  std::span<const std::uint8_t> arena_bytes() const noexcept { return {arena_.get(), used_}; }

 private:
  struct AlignedDelete {
    std::size_t align;
    void operator()(std::uint8_t* p) const noexcept { ::operator delete[](p, std::align_val_t{align}); }
  };

  PageMap map_;
  std::unique_ptr<std::uint8_t[], AlignedDelete> arena_{nullptr, AlignedDelete{map_.page_size()}};
  std::size_t arena_size_ = 0;
  std::size_t used_ = 0;
  std::uint64_t phys_base_ = 0;
  std::uint64_t next_virt_ = 0;
  std::vector<DmaRegion> regions_;
};

}  // namespace tinyring
