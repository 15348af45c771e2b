#pragma once

// Throughput / latency measurement on the simulated link.
//
// Loads are in packets per 1000 simulated steps; latency is in steps. Neither
// maps to physical units. With a device budget of B completions per step and
// N outputs, every packet costs 1 + N completions, so the pipeline saturates
// at 1000 * B / (1 + N) packets per 1000 steps.

#include <algorithm>
#include <cinttypes>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tinyring/agent.hpp"
#include "tinyring/error.hpp"
#include "tinyring/mem_env.hpp"
#include "tinyring/netfuncs.hpp"
#include "tinyring/nic_model.hpp"

namespace tinyring {

struct LoadPoint {
  std::uint32_t offered_load = 0;  // packets per 1000 steps
  std::uint16_t packet_size = 64;
  std::size_t trace_length = 0;
};

struct LoadPointResult {
  std::uint32_t offered_load = 0;
  std::uint64_t delivered = 0;
  std::uint64_t lost = 0;
  double loss_fraction = 0.0;
  std::uint64_t latency_p50 = 0;
  std::uint64_t latency_p99 = 0;

  friend bool operator==(const LoadPointResult&, const LoadPointResult&) = default;
};

struct BenchConfig {
  std::size_t ring_size = 256;
  std::size_t num_outputs = 1;
  std::size_t device_budget = 1;
  std::size_t rx_fifo_depth = 8;
  double warmup_fraction = 0.1;
  std::uint32_t search_granularity = 5;
  std::size_t page_size = 4096;
};

/// Saturation load of the simulated pipeline, in packets per 1000 steps.
inline std::uint32_t service_rate(std::size_t num_outputs, std::size_t device_budget) {
  return static_cast<std::uint32_t>(1000 * device_budget / (1 + num_outputs));
}

/// Deterministic frames of `size` bytes. Bytes 0..8 hold the sequence number
/// (little-endian); the rest is pseudo-random from `seed`.
inline std::vector<Frame> gen_traffic(std::size_t count, std::size_t size, std::uint64_t seed) {
  if (size < 12 || size > kMaxFrameSize) {
    throw Error(ErrorKind::invalid_argument, "packet size " + std::to_string(size) + " outside [12, 2048]");
  }
  std::mt19937_64 rng(seed);
  std::vector<Frame> frames(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto& p = frames[i].payload;
    p.resize(size);
    for (std::size_t b = 0; b < 8; ++b) p[b] = static_cast<std::uint8_t>(std::uint64_t{i} >> (8 * b));
    for (std::size_t b = 8; b < size; b += 8) {
      const std::uint64_t word = rng();
      for (std::size_t k = 0; k < 8 && b + k < size; ++k) p[b + k] = static_cast<std::uint8_t>(word >> (8 * k));
    }
  }
  return frames;
}

/// Nearest-rank percentile of an ascending sequence; 0 when empty.
inline std::uint64_t nearest_rank(std::span<const std::uint64_t> sorted, unsigned percent) {
  if (sorted.empty()) return 0;
  const std::size_t rank = std::max<std::size_t>(1, (percent * sorted.size() + 99) / 100);
  return sorted[rank - 1];
}

/// Fate of one injected frame.
struct PacketRecord {
  std::uint64_t inject_time = 0;
  bool received = false;
  std::optional<std::uint64_t> drain_time;  // first emission on any output
};

/// Statistics over records[warmup..]; earlier records are ignored entirely.
inline LoadPointResult summarize(std::uint32_t offered_load, std::span<const PacketRecord> records,
                                 std::size_t warmup) {
  LoadPointResult r;
  r.offered_load = offered_load;
  std::vector<std::uint64_t> latencies;
  for (std::size_t i = std::min(warmup, records.size()); i < records.size(); ++i) {
    const PacketRecord& rec = records[i];
    if (!rec.received) {
      ++r.lost;
      continue;
    }
    ++r.delivered;
    if (rec.drain_time) latencies.push_back(*rec.drain_time - rec.inject_time);
  }
  const std::uint64_t total = r.delivered + r.lost;
  r.loss_fraction = total == 0 ? 0.0 : static_cast<double>(r.lost) / static_cast<double>(total);
  std::sort(latencies.begin(), latencies.end());
  r.latency_p50 = nearest_rank(latencies, 50);
  r.latency_p99 = nearest_rank(latencies, 99);
  return r;
}

inline std::size_t agent_arena_size(std::size_t ring_size, std::size_t num_outputs, std::size_t page_size) {
  const auto pages = [page_size](std::size_t bytes) { return (bytes + page_size - 1) / page_size * page_size; };
  return pages(ring_size * kDescriptorSize) * (1 + num_outputs) +
         pages(num_outputs * Agent::kHeadCellStride) + pages(ring_size * kBufferSize);
}

/// Replays `frames` at `offered_load` through a fresh device and agent.
/// Frame i enters the wire at step floor(i * 1000 / offered_load).
inline LoadPointResult run_trace(std::span<const Frame> frames, std::uint32_t offered_load,
                                 const ProcessorSpec& nf, const BenchConfig& config) {
  if (offered_load == 0) throw Error(ErrorKind::invalid_argument, "offered load must be positive");
  MemEnv env(MemEnvConfig{.arena_size = agent_arena_size(config.ring_size, config.num_outputs, config.page_size),
                          .page_size = config.page_size});
  NicModel nic(env, NicConfig{config.num_outputs, config.rx_fifo_depth});
  Agent agent(env, nic, config.ring_size, config.num_outputs);

  const std::size_t n = frames.size();
  std::vector<PacketRecord> records(n);
  std::vector<bool> dropped(n, false);
  std::size_t drops_seen = 0;
  std::size_t next_received = 0;  // candidate injection index of the next packet the agent sees
  std::size_t resolved = 0;       // received or dropped
  std::vector<std::deque<std::size_t>> awaiting(config.num_outputs);

  Processor inner = make_processor(nf);
  auto processor = [&](Packet packet, std::size_t outputs) {
    while (dropped[next_received]) ++next_received;
    const std::size_t id = next_received++;
    records[id].received = true;
    const OutputLengths lengths = inner(packet, outputs);
    for (std::size_t q = 0; q < outputs; ++q) {
      if (lengths[q] > 0) awaiting[q].push_back(id);
    }
    return lengths;
  };

  const std::uint64_t step_limit = (n * 1000ull / offered_load + 1) * 8 + 100'000;
  std::size_t next = 0;
  while (true) {
    while (next < n && next * 1000ull / offered_load <= nic.clock()) {
      nic.inject_rx(frames[next]);
      records[next].inject_time = nic.clock();
      ++next;
    }
    nic.step_device(config.device_budget);
    for (auto log = nic.drop_log(); drops_seen < log.size(); ++drops_seen) {
      dropped[log[drops_seen]] = true;
      ++resolved;
    }
    resolved += agent.poll(processor);
    bool waiting = false;
    for (std::size_t q = 0; q < config.num_outputs; ++q) {
      for (const Frame& f : nic.drain_tx(q)) {
        const std::size_t id = awaiting[q].front();
        awaiting[q].pop_front();
        if (!records[id].drain_time) records[id].drain_time = f.drain_time;
      }
      waiting = waiting || !awaiting[q].empty();
    }
    if (next == n && resolved == n && !waiting) break;
    if (nic.clock() > step_limit) throw Error(ErrorKind::not_ready, "load point did not settle");
  }
  const auto warmup = static_cast<std::size_t>(static_cast<double>(n) * config.warmup_fraction);
  return summarize(offered_load, records, warmup);
}

inline LoadPointResult run_load_point(const LoadPoint& lp, const ProcessorSpec& nf, const BenchConfig& config,
                                      std::uint64_t seed) {
  const auto frames = gen_traffic(lp.trace_length, lp.packet_size, seed);
  return run_trace(frames, lp.offered_load, nf, config);
}

/// Largest offered load whose loss stays strictly below `loss_bound`, to
/// within config.search_granularity. Searches (0, 1000 * device_budget].
inline std::uint32_t find_max_throughput(std::span<const Frame> frames, const ProcessorSpec& nf,
                                         const BenchConfig& config, double loss_bound = 0.001) {
  const auto upper = static_cast<std::uint32_t>(1000 * config.device_budget);
  const auto ok = [&](std::uint32_t load) { return run_trace(frames, load, nf, config).loss_fraction < loss_bound; };
  if (ok(upper)) return upper;
  std::uint32_t lo = 1;
  std::uint32_t hi = upper;
  if (!ok(lo)) return lo;
  const std::uint32_t granularity = std::max<std::uint32_t>(1, config.search_granularity);
  while (hi - lo > granularity) {
    const std::uint32_t mid = lo + (hi - lo) / 2;
    (ok(mid) ? lo : hi) = mid;
  }
  return lo;
}

/// Load points step, 2*step, ... up to and including the maximum throughput.
inline std::vector<LoadPointResult> run_sweep(std::span<const Frame> frames, const ProcessorSpec& nf,
                                              const BenchConfig& config, std::uint32_t step,
                                              std::optional<std::uint32_t> max_load = std::nullopt) {
  if (step == 0) throw Error(ErrorKind::invalid_argument, "sweep step must be positive");
  const std::uint32_t top = max_load ? *max_load : find_max_throughput(frames, nf, config);
  std::vector<LoadPointResult> results;
  for (std::uint32_t load = step; load <= top; load += step) results.push_back(run_trace(frames, load, nf, config));
  if (top > 0 && (results.empty() || results.back().offered_load != top)) {
    results.push_back(run_trace(frames, top, nf, config));
  }
  return results;
}

inline void write_csv(std::span<const LoadPointResult> results, std::ostream& out) {
  out << "offered_load,delivered,lost,loss_fraction,latency_p50,latency_p99\n";
  char line[160];
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%" PRIu32 ",%" PRIu64 ",%" PRIu64 ",%.6f,%" PRIu64 ",%" PRIu64 "\n",
                  r.offered_load, r.delivered, r.lost, r.loss_fraction, r.latency_p50, r.latency_p99);
    out << line;
  }
}

inline void write_csv(std::span<const LoadPointResult> results, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io_error, "cannot open " + path.string() + " for writing");
  write_csv(results, out);
  out.flush();
  if (!out) throw Error(ErrorKind::io_error, "write failed on " + path.string());
}

}  // namespace tinyring
