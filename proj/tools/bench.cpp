// bench: maximum-throughput search and latency sweep on the simulated link.

#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tinyring/bench.hpp"
#include "tinyring/pcap.hpp"

namespace {

int exit_code(tinyring::ErrorKind kind) {
  return kind == tinyring::ErrorKind::io_error ? 2 : 1;
}

std::size_t page_size_from_env() {
  const char* raw = std::getenv("TINYRING_PAGE_SIZE");
  if (raw == nullptr || *raw == '\0') return 4096;
  char* end = nullptr;
  const unsigned long long value = std::strtoull(raw, &end, 10);
  if (*end != '\0' || value == 0) {
    throw tinyring::Error(tinyring::ErrorKind::invalid_argument,
                          std::string("TINYRING_PAGE_SIZE is not a positive integer: ") + raw);
  }
  return static_cast<std::size_t>(value);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Throughput and latency benchmark for the simulated single-ring driver"};

  std::string nf_name = "identity";
  std::uint16_t policer_min_len = 100;
  std::size_t ring_size = 256;
  std::size_t outputs = 1;
  std::size_t packets = 10000;
  std::size_t packet_size = 64;
  std::uint32_t step = 50;
  std::uint64_t seed = 1;
  std::string csv_path;
  std::string pcap_path;
  bool max_only = false;

  app.add_option("--nf", nf_name, "Network function")->check(CLI::IsMember({"identity", "macswap", "policer"}));
  app.add_option("--policer-min-len", policer_min_len, "Smallest packet the policer forwards");
  app.add_option("--ring-size", ring_size, "Descriptors per ring (power of two)");
  app.add_option("--outputs", outputs, "Number of outputs (transmit queues)");
  app.add_option("--packets", packets, "Generated trace length");
  app.add_option("--packet-size", packet_size, "Generated packet size in bytes");
  app.add_option("--step", step, "Load increment of the latency sweep (packets per 1000 steps)");
  app.add_option("--seed", seed, "Traffic generator seed");
  app.add_option("--csv", csv_path, "Where to write the results")->required();
  app.add_option("--pcap", pcap_path, "Replay frames from a capture instead of generating them");
  app.add_flag("--max-only", max_only, "Only search for the maximum throughput");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    tinyring::BenchConfig config;
    config.ring_size = ring_size;
    config.num_outputs = outputs;
    config.page_size = page_size_from_env();
    const auto nf = tinyring::parse_nf(nf_name, policer_min_len);

    const std::vector<tinyring::Frame> frames =
        pcap_path.empty() ? tinyring::gen_traffic(packets, packet_size, seed) : tinyring::read_pcap(pcap_path);

    const std::uint32_t max_load = tinyring::find_max_throughput(frames, nf, config);
    std::cout << "max throughput: " << max_load << " packets/1000 steps (service rate "
              << tinyring::service_rate(outputs, config.device_budget) << ")\n";

    std::vector<tinyring::LoadPointResult> results;
    if (max_only) {
      results.push_back(tinyring::run_trace(frames, max_load, nf, config));
    } else {
      results = tinyring::run_sweep(frames, nf, config, step, max_load);
    }
    tinyring::write_csv(results, std::cout);
    tinyring::write_csv(results, std::filesystem::path(csv_path));
  } catch (const tinyring::Error& e) {
    std::cerr << "bench: " << e.what() << "\n";
    return exit_code(e.kind());
  }
  return 0;
}
