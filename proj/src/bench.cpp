#include "convformer/bench.hpp"

#include <functional>
#include <memory>

#include <algorithm>
#include <chrono>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "convformer/error.hpp"
#include "convformer/mixers.hpp"
#include "convformer/rng.hpp"

namespace convformer::bench {

std::string to_string(BenchKind k) {
  switch (k) {
    case BenchKind::SA: return "SA";
    case BenchKind::DwcDirect: return "dwc_direct";
    case BenchKind::DwcFft: return "dwc_fft";
  }
  return "?";
}

BenchKind parse_bench_kind(const std::string& s) {
  if (s == "SA") return BenchKind::SA;
  if (s == "dwc_direct") return BenchKind::DwcDirect;
  if (s == "dwc_fft") return BenchKind::DwcFft;
  throw UserError("unknown benchmark mixer '" + s + "' (expected SA, dwc_direct or dwc_fft)");
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of nothing");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("mean of nothing");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

namespace {

Tensor random_tensor(Shape s, Rng& rng, double sd = 1.0) {
  Tensor t(std::move(s));
  for (auto& v : t.data()) v = rng.normal(0.0, sd);
  return t;
}

}  // namespace

namespace {

// Inputs and the timed closure for one case.
struct Prepared {
  TimingRecord rec;
  std::function<void()> run_once;
};

Prepared prepare(const BenchCase& c, const BenchOptions& opt, double& sink) {
  const auto [kind, L, D, K, batch] = c;
  if (L < 1 || D < 1 || batch < 1) throw UserError("benchmark sizes must be >= 1");
  if (kind != BenchKind::SA && (K < 1 || K > L)) throw UserError("kernel size must be in [1, L]");
  if (kind == BenchKind::DwcFft && opt.padding == mixers::Padding::Reflect) {
    throw UserError("dwc_fft does not support reflect padding");
  }
  Rng rng(opt.seed);
  auto inputs = std::make_shared<std::vector<Tensor>>();
  for (std::size_t b = 0; b < batch; ++b) inputs->push_back(random_tensor({L, D}, rng));
  auto kernel = std::make_shared<Tensor>(kind == BenchKind::SA ? Tensor({1}) : random_tensor({K, D}, rng, 0.02));
  auto w = std::make_shared<mixers::AttentionWeights>();
  if (kind == BenchKind::SA) {
    *w = {random_tensor({D, D}, rng, 0.02), Tensor({D}, 0.0), random_tensor({D, D}, rng, 0.02), Tensor({D}, 0.0),
          random_tensor({D, D}, rng, 0.02), Tensor({D}, 0.0)};
  }
  Prepared p;
  p.rec.kind = kind;
  p.rec.L = L;
  p.rec.D = D;
  p.rec.K = kind == BenchKind::SA ? 0 : K;
  p.rec.batch = batch;
  p.rec.repeats = opt.repeats;
  const mixers::Padding padding = opt.padding;
  p.run_once = [=, &sink] {
    for (const auto& r : *inputs) {
      Tensor y;
      switch (kind) {
        case BenchKind::SA: y = mixers::self_attention(r, *w, {}); break;
        case BenchKind::DwcDirect: y = mixers::dwc_direct(r, *kernel, padding); break;
        case BenchKind::DwcFft: y = mixers::dwc_fft(r, *kernel, padding); break;
      }
      sink += y[0];
    }
  };
  return p;
}

}  // namespace

std::vector<TimingRecord> time_mixers(const std::vector<BenchCase>& cases, const BenchOptions& opt) {
  if (opt.repeats < 10) throw UserError("benchmark repeats must be >= 10");
  if (opt.warmup < 3) throw UserError("benchmark warmup must be >= 3");
  double sink = 0.0;
  std::vector<Prepared> prepared;
  for (const auto& c : cases) prepared.push_back(prepare(c, opt, sink));
  for (auto& p : prepared)
    for (std::size_t i = 0; i < opt.warmup; ++i) p.run_once();
  for (std::size_t i = 0; i < opt.repeats; ++i) {
    for (auto& p : prepared) {
      const auto t0 = std::chrono::steady_clock::now();
      p.run_once();
      const auto t1 = std::chrono::steady_clock::now();
      p.rec.ns.push_back(static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
    }
  }
  volatile double keep = sink;
  (void)keep;
  std::vector<TimingRecord> out;
  for (auto& p : prepared) {
    p.rec.median_ns = median(p.rec.ns);
    p.rec.mean_ns = mean(p.rec.ns);
    out.push_back(std::move(p.rec));
  }
  return out;
}

TimingRecord time_mixer(BenchKind kind, std::size_t L, std::size_t D, std::size_t K, std::size_t batch,
                        const BenchOptions& opt) {
  return time_mixers({{kind, L, D, K, batch}}, opt).front();
}

std::vector<std::size_t> default_kernel_sweep(std::size_t L) {
  std::vector<std::size_t> ks{std::min<std::size_t>(10, L), std::max<std::size_t>(1, L / 8),
                              std::max<std::size_t>(1, L / 4), std::max<std::size_t>(1, L / 2), L};
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

void write_csv(std::ostream& out, const std::vector<TimingRecord>& records) {
  out << "mixer,L,D,K,batch,repeats,median_ns,mean_ns\n";
  for (const auto& r : records) {
    out << to_string(r.kind) << ',' << r.L << ',' << r.D << ',' << r.K << ',' << r.batch << ',' << r.repeats << ','
        << static_cast<long long>(r.median_ns) << ',' << static_cast<long long>(r.mean_ns) << '\n';
  }
}

nlohmann::json to_json(const std::vector<TimingRecord>& records) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) {
    arr.push_back({{"mixer", to_string(r.kind)},
                   {"L", r.L},
                   {"D", r.D},
                   {"K", r.K},
                   {"batch", r.batch},
                   {"repeats", r.repeats},
                   {"ns", r.ns},
                   {"median_ns", r.median_ns},
                   {"mean_ns", r.mean_ns}});
  }
  return nlohmann::json{{"records", arr}};
}

}  // namespace convformer::bench
