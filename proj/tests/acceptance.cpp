// Acceptance suite: one PASS/FAIL line per criterion. Exit status is non-zero
// if any gating criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "test_support.hpp"
#include "tinyring/tinyring.hpp"

#ifndef TINYRING_TEST_DATA_DIR
#error "TINYRING_TEST_DATA_DIR must point at tests/data"
#endif

namespace tinyring {
namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f s", s);
  return buf;
}

// 1. ownership() against a brute-force walk on random triples.
Outcome ownership_law() {
  const auto start = Clock::now();
  std::size_t mismatches = ownership(1, 5, 8) == std::vector<std::uint32_t>{1, 2, 3, 4} ? 0 : 1;
  std::mt19937_64 rng(1);
  constexpr std::size_t kTriples = 100'000;
  for (std::size_t i = 0; i < kTriples; ++i) {
    const auto length = static_cast<std::uint32_t>(i % 2 == 0 ? std::uint32_t{1} << (1 + rng() % 10) : 1 + rng() % 1024);
    const auto head = static_cast<std::uint32_t>(rng() % length);
    const auto tail = static_cast<std::uint32_t>(rng() % length);
    if (ownership(head, tail, length) != testing::brute_force_ownership(head, tail, length)) ++mismatches;
  }
  const double elapsed = seconds_since(start);
  return {mismatches == 0 && elapsed < 1.0,
          std::to_string(kTriples) + " triples, " + std::to_string(mismatches) + " mismatches, " +
              fmt_seconds(elapsed) + " (limit 1 s)"};
}

// 2. Unwrapped head/tail counters never decrease over random operation traces,
//    and registers always equal the counters modulo the ring length.
Outcome monotonicity() {
  std::size_t violations = 0;
  std::size_t operations = 0;
  std::size_t rejected = 0;
  std::mt19937_64 rng(2);

  struct Snapshot {
    std::vector<RingCounters> rings;
  };
  const auto snapshot = [](const NicModel& nic) {
    Snapshot s;
    s.rings.push_back(nic.rx_counters());
    for (std::size_t q = 0; q < nic.num_tx_queues(); ++q) s.rings.push_back(nic.tx_counters(q));
    return s;
  };
  const auto check = [&](const NicModel& nic, const Snapshot& before, std::uint64_t length) {
    const Snapshot after = snapshot(nic);
    for (std::size_t r = 0; r < after.rings.size(); ++r) {
      const auto& a = after.rings[r];
      const auto& b = before.rings[r];
      if (a.head < b.head || a.tail < b.tail) ++violations;
      if (a.head > a.tail || a.tail > a.head + length - 1) ++violations;
      const Reg head_reg = r == 0 ? Reg::RDH : Reg::TDH;
      const Reg tail_reg = r == 0 ? Reg::RDT : Reg::TDT;
      const std::size_t q = r == 0 ? 0 : r - 1;
      if (nic.reg_read(head_reg, q) != a.head % length || nic.reg_read(tail_reg, q) != a.tail % length) {
        ++violations;
      }
    }
  };

  // Agent-driven pipelines with random injections, budgets and processors.
  for (std::size_t ring : {8u, 64u}) {
    for (std::size_t outputs : {1u, 3u}) {
      MemEnv env;
      NicModel nic(env, NicConfig{outputs, 16});
      Agent agent(env, nic, ring, outputs);
      Processor procs[] = {nf_identity(), nf_macswap(), nf_policer(100)};
      for (int step = 0; step < 10'000; ++step, ++operations) {
        const Snapshot before = snapshot(nic);
        switch (rng() % 4) {
          case 0:
            for (std::uint64_t k = rng() % 6; k > 0; --k) {
              nic.inject_rx(testing::random_trace(1, rng(), 1, 400)[0]);
            }
            break;
          case 1: nic.step_device(rng() % 5); break;
          case 2: agent.poll(procs[rng() % 3], rng() % 10); break;
          case 3:
            nic.step_device(1);
            agent.poll(procs[0]);
            break;
        }
        check(nic, before, ring);
      }
    }
  }

  // Raw device with arbitrary (possibly illegal) tail writes.
  {
    MemEnv env;
    NicModel nic(env, NicConfig{2, std::nullopt});
    constexpr std::uint32_t kLen = 16;
    DmaRegion buffers = env.allocate_dma(kLen * 2048);
    for (std::size_t r = 0; r < 3; ++r) {
      DmaRegion ring = env.allocate_dma(kLen * kDescriptorSize);
      for (std::uint32_t i = 0; i < kLen; ++i) {
        descriptor_at(ring.backing, i).set_buffer_addr(buffers.phys_base.value + i * 2048);
        descriptor_at(ring.backing, i).set_metadata(64 | desc_bits::kEop);
      }
      const Reg lo = r == 0 ? Reg::RDBAL : Reg::TDBAL;
      const Reg hi = r == 0 ? Reg::RDBAH : Reg::TDBAH;
      const Reg len = r == 0 ? Reg::RDLEN : Reg::TDLEN;
      const Reg en = r == 0 ? Reg::RXEN : Reg::TXEN;
      const std::size_t q = r == 0 ? 0 : r - 1;
      nic.reg_write(lo, q, static_cast<std::uint32_t>(ring.phys_base.value));
      nic.reg_write(hi, q, static_cast<std::uint32_t>(ring.phys_base.value >> 32));
      nic.reg_write(len, q, kLen * kDescriptorSize);
      nic.reg_write(en, q, 1);
    }
    for (int step = 0; step < 10'000; ++step, ++operations) {
      const Snapshot before = snapshot(nic);
      switch (rng() % 3) {
        case 0: nic.inject_rx(Frame{std::vector<std::uint8_t>(1 + rng() % 100, 1), 0, 0}); break;
        case 1: nic.step_device(rng() % 4); break;
        case 2: {
          const std::size_t r = rng() % 3;
          try {
            nic.reg_write(r == 0 ? Reg::RDT : Reg::TDT, r == 0 ? 0 : r - 1, static_cast<std::uint32_t>(rng() % (kLen + 2)));
          } catch (const Error&) {
            ++rejected;
          }
          break;
        }
      }
      check(nic, before, kLen);
    }
  }
  return {violations == 0, std::to_string(operations) + " operations (" + std::to_string(rejected) +
                               " illegal tail writes rejected), " + std::to_string(violations) + " violations"};
}

// 3. Agent emissions are byte-identical to the pool-based reference.
template <class AgentT>
std::size_t agent_mismatches(std::size_t ring, std::size_t outputs, const Processor& processor,
                             const std::vector<Frame>& trace, const std::vector<std::vector<Frame>>& expected) {
  MemEnv env(MemEnvConfig{.arena_size = agent_arena_size(ring, outputs, 4096)});
  NicModel nic(env, NicConfig{outputs, std::nullopt});
  AgentT agent(env, nic, ring, outputs);
  for (const Frame& f : trace) nic.inject_rx(f);
  Processor p = processor;
  agent.run(p, trace.size(), 1);
  std::size_t mismatches = nic.rx_dropped();
  for (std::size_t q = 0; q < outputs; ++q) {
    const auto got = nic.drain_tx(q);
    if (got.size() != expected[q].size()) {
      mismatches += 1 + (got.size() > expected[q].size() ? got.size() - expected[q].size()
                                                         : expected[q].size() - got.size());
    }
    const std::size_t n = std::min(got.size(), expected[q].size());
    for (std::size_t i = 0; i < n; ++i) mismatches += got[i].payload != expected[q][i].payload;
  }
  return mismatches;
}

Outcome differential_equivalence() {
  const auto start = Clock::now();
  constexpr std::size_t kTraces = 100;
  constexpr std::size_t kPackets = 10'000;
  const std::size_t rings[] = {8, 64, 256};
  const std::size_t output_counts[] = {1, 2, 4};
  const Processor processors[] = {nf_identity(), nf_macswap(), nf_policer(100)};

  std::size_t mismatches = 0;
  std::size_t runs = 0;
  for (std::size_t t = 0; t < kTraces; ++t) {
    const auto trace = testing::random_trace(kPackets, 1000 + t);
    for (std::size_t outputs : output_counts) {
      for (const Processor& processor : processors) {
        RefPipeline ref(4, outputs, processor);
        const auto expected = ref.process_trace(trace);
        for (std::size_t ring : rings) {
          mismatches += agent_mismatches<BasicAgent<1, 8>>(ring, outputs, processor, trace, expected);
          mismatches += agent_mismatches<BasicAgent<8, 64>>(ring, outputs, processor, trace, expected);
          runs += 2;
        }
      }
    }
  }
  const double elapsed = seconds_since(start);
  return {mismatches == 0 && elapsed < 60.0,
          std::to_string(runs) + " runs of " + std::to_string(kPackets) + " packets, " +
              std::to_string(mismatches) + " mismatches, " + fmt_seconds(elapsed) + " (limit 60 s)"};
}

// 4. 4 x ring_size sequenced frames through run() arrive complete and in order.
Outcome lossless_in_order() {
  std::size_t failures = 0;
  std::string sizes;
  for (std::size_t ring : {2u, 8u, 64u, 256u, 1024u}) {
    MemEnv env(MemEnvConfig{.arena_size = agent_arena_size(ring, 1, 4096)});
    NicModel nic(env, NicConfig{1, std::nullopt});
    Agent agent(env, nic, ring, 1);
    const auto frames = gen_traffic(4 * ring, 64, ring);
    for (const auto& f : frames) nic.inject_rx(f);
    auto identity = nf_identity();
    agent.run(identity, frames.size(), 1);
    const auto out = nic.drain_tx(0);
    bool ok = nic.rx_dropped() == 0 && out.size() == frames.size();
    for (std::size_t i = 0; ok && i < out.size(); ++i) ok = out[i].payload == frames[i].payload;
    failures += ok ? 0 : 1;
    sizes += (sizes.empty() ? "" : ",") + std::to_string(ring);
  }
  return {failures == 0, "ring sizes {" + sizes + "}, " + std::to_string(failures) + " failing"};
}

// 5. N=2 with [len, 0]: everything on output 0, nothing on output 1.
Outcome multi_output() {
  MemEnv env;
  NicModel nic(env, NicConfig{2, std::nullopt});
  Agent agent(env, nic, 256, 2);
  const auto frames = testing::random_trace(10'000, 5);
  for (const auto& f : frames) nic.inject_rx(f);
  auto first_only = [](Packet p, std::size_t n) {
    OutputLengths out = OutputLengths::uniform(n, 0);
    out[0] = p.length;
    return out;
  };
  agent.run(first_only, frames.size(), 1);
  const auto out0 = nic.drain_tx(0);
  const auto out1 = nic.drain_tx(1);
  std::size_t wrong = out0.size() == frames.size() ? 0 : 1;
  for (std::size_t i = 0; wrong == 0 && i < out0.size(); ++i) wrong += out0[i].payload != frames[i].payload;
  return {wrong == 0 && out1.empty(), "output 0: " + std::to_string(out0.size()) + "/" + std::to_string(frames.size()) +
                                          " packets, output 1: " + std::to_string(out1.size())};
}

// 6. The receive tail never passes the earliest transmit head - 1, and all
//    transmit tails are equal whenever they are observable.
template <class AgentT>
std::size_t recycle_violations(std::size_t ring, std::size_t outputs, std::uint64_t seed) {
  MemEnv env;
  NicModel nic(env, NicConfig{outputs, std::nullopt});
  AgentT agent(env, nic, ring, outputs);
  const auto frames = testing::random_trace(10'000, seed);
  for (const auto& f : frames) nic.inject_rx(f);
  std::mt19937_64 rng(seed);
  std::size_t violations = 0;
  const auto check = [&] {
    std::uint64_t min_head = nic.tx_counters(0).head;
    for (std::size_t q = 1; q < outputs; ++q) {
      min_head = std::min(min_head, nic.tx_counters(q).head);
      if (nic.reg_read(Reg::TDT, q) != nic.reg_read(Reg::TDT, 0)) ++violations;
    }
    if (nic.rx_counters().tail > min_head + ring - 1) ++violations;
    // the slot at the processing position is never on loan to the device for a later lap
    if (nic.rx_counters().tail > agent.processed() + ring - 1) ++violations;
  };
  std::size_t done = 0;
  while (done < frames.size()) {
    nic.step_device(1);
    check();
    while (auto pkt = agent.receive()) {
      const auto len = pkt->length;
      OutputLengths lengths = OutputLengths::uniform(outputs, len);
      for (std::size_t q = 0; q < outputs; ++q) {
        if (rng() % 4 == 0) lengths[q] = 0;
      }
      agent.transmit(lengths);
      ++done;
      check();
    }
    agent.flush();
    check();
    agent.recycle();
    check();
  }
  return violations + nic.rx_dropped();
}

Outcome recycle_bound() {
  std::size_t violations = 0;
  violations += recycle_violations<BasicAgent<1, 8>>(8, 3, 61);
  violations += recycle_violations<BasicAgent<8, 64>>(8, 3, 62);
  violations += recycle_violations<BasicAgent<8, 64>>(64, 2, 63);
  violations += recycle_violations<BasicAgent<1, 64>>(256, 4, 64);
  return {violations == 0, "4 runs x 10000 packets, " + std::to_string(violations) + " violations"};
}

// 7. Roundtrip and contiguity of translation.
Outcome translation_laws() {
  MemEnv env(MemEnvConfig{.arena_size = 8u << 20});
  std::mt19937_64 rng(7);
  std::vector<DmaRegion> regions;
  for (int i = 0; i < 40; ++i) regions.push_back(env.allocate_dma(1 + rng() % 100'000));
  std::size_t violations = 0;
  for (int i = 0; i < 10'000; ++i) {
    const DmaRegion& r = regions[rng() % regions.size()];
    std::uint64_t a = rng() % r.size;
    std::uint64_t b = rng() % r.size;
    if (a > b) std::swap(a, b);
    const VirtAddr va = r.virt_base + a;
    const VirtAddr vb = r.virt_base + b;
    if (env.phys_to_virt(env.virt_to_phys(va)) != va) ++violations;
    if (env.virt_to_phys(vb).value - env.virt_to_phys(va).value != b - a) ++violations;
  }
  return {violations == 0, "10000 random addresses over 40 regions, " + std::to_string(violations) + " violations"};
}

// 8. Descriptor codec.
Outcome descriptor_codec() {
  const std::array<std::uint8_t, 16> hand = {0x00, 0x10, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00,
                                             0x40, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00};
  const bool golden = encode_descriptor(Descriptor{PhysAddr{0x1000}, 64, false, false, true}) == hand;
  std::mt19937_64 rng(8);
  std::size_t failures = 0;
  for (int i = 0; i < 10'000; ++i) {
    const Descriptor d{PhysAddr{rng()}, static_cast<std::uint32_t>(rng() & 0xFFFF), (rng() & 1) != 0,
                       (rng() & 1) != 0, (rng() & 1) != 0};
    failures += decode_descriptor(encode_descriptor(d)) != d;
  }
  return {golden && failures == 0, std::string("hand-assembled vector ") + (golden ? "matches" : "DIFFERS") +
                                       ", 10000 roundtrips, " + std::to_string(failures) + " failures"};
}

// 9. Benchmark methodology.
Outcome benchmark_methodology() {
  const auto start = Clock::now();
  const BenchConfig config;
  const ProcessorSpec identity{};
  std::string detail;
  bool pass = true;

  const auto search_frames = gen_traffic(10'000, 64, 1);
  const auto rate = service_rate(config.num_outputs, config.device_budget);
  const auto found = find_max_throughput(search_frames, identity, config);
  const auto gap = found > rate ? found - rate : rate - found;
  pass = pass && gap <= config.search_granularity;
  detail += "max " + std::to_string(found) + " vs service rate " + std::to_string(rate) + " (granularity " +
            std::to_string(config.search_granularity) + ")";

  const auto sweep = run_sweep(search_frames, identity, config, 50, found);
  bool monotone = true;
  for (std::size_t i = 1; i < sweep.size(); ++i) monotone = monotone && sweep[i - 1].loss_fraction <= sweep[i].loss_fraction;
  const auto overloaded = run_sweep(search_frames, identity, config, 100, 1000);
  for (std::size_t i = 1; i < overloaded.size(); ++i) {
    monotone = monotone && overloaded[i - 1].loss_fraction <= overloaded[i].loss_fraction;
  }
  pass = pass && monotone;
  detail += std::string(", loss ") + (monotone ? "monotone" : "NOT monotone") + " over " +
            std::to_string(sweep.size() + overloaded.size()) + " load points";

  const auto golden_frames = gen_traffic(5000, 64, 7);
  const auto golden_sweep = run_sweep(golden_frames, identity, config, 50);
  std::ostringstream csv;
  write_csv(golden_sweep, csv);
  std::ifstream golden_file(std::string(TINYRING_TEST_DATA_DIR) + "/golden_sweep.csv", std::ios::binary);
  const std::string golden((std::istreambuf_iterator<char>(golden_file)), std::istreambuf_iterator<char>());
  const bool csv_ok = !golden.empty() && golden == csv.str();
  pass = pass && csv_ok;
  detail += std::string(", golden CSV ") + (csv_ok ? "bit-exact" : "MISMATCH");

  const double elapsed = seconds_since(start);
  pass = pass && elapsed < 30.0;
  detail += ", " + fmt_seconds(elapsed) + " (limit 30 s)";
  return {pass, detail};
}

// 10. Simulated forwarding rate; reported only.
Outcome performance_smoke() {
  constexpr std::size_t kPackets = 2'000'000;
  constexpr std::size_t kRing = 256;
  MemEnv env;
  NicModel nic(env, NicConfig{1, std::nullopt});
  Agent agent(env, nic, kRing, 1);
  const auto frames = gen_traffic(kRing / 2, 64, 10);
  auto identity = [](Packet p, std::size_t n) { return OutputLengths::uniform(n, p.length); };
  const auto start = Clock::now();
  std::size_t forwarded = 0;
  while (forwarded < kPackets) {
    for (const auto& f : frames) nic.inject_rx(f);
    forwarded += agent.run(identity, frames.size(), 1);
    nic.drain_tx(0);
  }
  const double elapsed = seconds_since(start);
  const double rate = static_cast<double>(forwarded) / elapsed;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.2f Mpackets/s lockstep identity forwarding (target >= 1.00, non-gating)",
                rate / 1e6);
  return {rate >= 1e6, buf};
}

}  // namespace
}  // namespace tinyring

int main() {
  using namespace tinyring;
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
    bool gating;
  };
  const Criterion criteria[] = {
      {"AC1 ownership law", ownership_law, true},
      {"AC2 head/tail monotonicity", monotonicity, true},
      {"AC3 differential equivalence", differential_equivalence, true},
      {"AC4 in-order loss-free forwarding", lossless_in_order, true},
      {"AC5 multi-output semantics", multi_output, true},
      {"AC6 recycle bound and tail sync", recycle_bound, true},
      {"AC7 translation laws", translation_laws, true},
      {"AC8 descriptor codec", descriptor_codec, true},
      {"AC9 benchmark methodology", benchmark_methodology, true},
      {"AC10 performance smoke", performance_smoke, false},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const char* tag = o.pass ? "PASS" : (c.gating ? "FAIL" : "WARN");
    std::cout << "[" << tag << "] " << c.name << ": " << o.detail << std::endl;
    if (!o.pass && c.gating) ++failed;
  }
  std::cout << (failed == 0 ? "all gating criteria passed" : std::to_string(failed) + " criteria failed") << "\n";
  return failed == 0 ? 0 : 1;
}
