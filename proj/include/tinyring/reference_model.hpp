#pragma once

// Pool-based forwarding pipeline used as an oracle for the agent. No
// descriptors, no rings: each frame is copied into a free pool buffer,
// processed, copied to every selected output, and the buffer is freed.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tinyring/agent.hpp"
#include "tinyring/error.hpp"
#include "tinyring/nic_model.hpp"

namespace tinyring {

class BufferPool {
 public:
  using Buffer = std::array<std::uint8_t, kBufferSize>;

  explicit BufferPool(std::size_t capacity) : storage_(capacity) {
    if (capacity == 0) throw Error(ErrorKind::invalid_argument, "buffer pool capacity must be at least 1");
    free_.reserve(capacity);
    for (std::size_t i = capacity; i-- > 0;) free_.push_back(i);
  }

  std::size_t capacity() const noexcept { return storage_.size(); }
  std::size_t free_count() const noexcept { return free_.size(); }

  std::size_t acquire() {
    if (free_.empty()) throw Error(ErrorKind::out_of_memory, "buffer pool exhausted");
    const std::size_t id = free_.back();
    free_.pop_back();
    return id;
  }

  void release(std::size_t id) { free_.push_back(id); }

  Buffer& operator[](std::size_t id) noexcept { return storage_[id]; }

 private:
  std::vector<Buffer> storage_;
  std::vector<std::size_t> free_;
};

class RefPipeline {
 public:
  RefPipeline(std::size_t pool_capacity, std::size_t num_outputs, Processor processor)
      : pool_(pool_capacity), num_outputs_(num_outputs), processor_(std::move(processor)) {
    if (num_outputs < 1 || num_outputs > kMaxOutputs) {
      throw Error(ErrorKind::invalid_argument, "output count must be in [1, 8]");
    }
  }

  std::size_t num_outputs() const noexcept { return num_outputs_; }
  const BufferPool& pool() const noexcept { return pool_; }

  std::vector<std::vector<Frame>> process_trace(const std::vector<Frame>& frames) {
    std::vector<std::vector<Frame>> outputs(num_outputs_);
    for (const Frame& frame : frames) {
      const std::size_t id = pool_.acquire();
      auto& buffer = pool_[id];
      std::copy(frame.payload.begin(), frame.payload.end(), buffer.begin());
      const OutputLengths lengths =
          processor_(Packet{buffer, static_cast<std::uint16_t>(frame.payload.size())}, num_outputs_);
      for (std::size_t q = 0; q < num_outputs_; ++q) {
        if (lengths[q] == 0) continue;
        outputs[q].push_back(Frame{{buffer.begin(), buffer.begin() + lengths[q]}, 0, 0});
      }
      pool_.release(id);
    }
    return outputs;
  }

 private:
  BufferPool pool_;
  std::size_t num_outputs_;
  Processor processor_;
};

}  // namespace tinyring
