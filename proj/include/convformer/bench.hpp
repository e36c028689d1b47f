#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "convformer/conv_kernels.hpp"

namespace convformer::bench {

enum class BenchKind { SA, DwcDirect, DwcFft };
std::string to_string(BenchKind k);
BenchKind parse_bench_kind(const std::string& s);

struct TimingRecord {
  BenchKind kind = BenchKind::DwcDirect;
  std::size_t L = 0, D = 0, K = 0, batch = 0, repeats = 0;
  std::vector<double> ns;  // one entry per timed repeat
  double median_ns = 0.0;
  double mean_ns = 0.0;
};

struct BenchOptions {
  std::size_t warmup = 3;
  std::size_t repeats = 10;
  std::uint64_t seed = 7;
  mixers::Padding padding = mixers::Padding::Circular;
};

double median(std::vector<double> v);
double mean(const std::vector<double>& v);

struct BenchCase {
  BenchKind kind = BenchKind::DwcDirect;
  std::size_t L = 0, D = 0, K = 0, batch = 0;
};

/// Times several cases with their repeats interleaved round-robin, so slow
/// drift in machine speed affects every case alike. Each case gets its
/// warmup repeats first.
std::vector<TimingRecord> time_mixers(const std::vector<BenchCase>& cases, const BenchOptions& opt);

/// Times the forward pass of one mixer over `batch` random [L, D] inputs.
/// Warmup repeats run first and are discarded. K is ignored for SA.
TimingRecord time_mixer(BenchKind kind, std::size_t L, std::size_t D, std::size_t K, std::size_t batch,
                        const BenchOptions& opt);

/// Kernel sizes from 10 to L: 10, L/8, L/4, L/2, L (deduplicated, sorted).
std::vector<std::size_t> default_kernel_sweep(std::size_t L);

void write_csv(std::ostream& out, const std::vector<TimingRecord>& records);
nlohmann::json to_json(const std::vector<TimingRecord>& records);

}  // namespace convformer::bench
