#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>

#include <json.hpp>

namespace convformer {

inline constexpr std::array<std::size_t, 5> kHitCutoffs{1, 5, 10, 20, 30};
inline constexpr std::array<std::size_t, 4> kNdcgCutoffs{5, 10, 20, 30};

/// 1 + number of other candidates scoring >= the target (ties count against it).
std::size_t rank_of_target(std::span<const double> scores, std::size_t target_index);

struct RankMetrics {
  double hit = 0.0;
  double ndcg = 0.0;
  double mrr = 0.0;
};

RankMetrics metrics_at(std::size_t rank, std::size_t k);

struct EvalReport {
  std::string mode;
  std::string split;
  std::map<std::string, double> metrics;  // "HIT@1" ... "NDCG@30", "MRR"
  std::size_t users = 0;
  double elapsed_s = 0.0;

  double at(const std::string& name) const;
  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

/// Sums per-user metrics in insertion order and reports the means.
class MetricAccumulator {
 public:
  void add(std::size_t rank);
  std::size_t count() const noexcept { return n_; }
  EvalReport report(std::string mode, std::string split, double elapsed_s) const;

 private:
  std::map<std::string, double> sums_;
  std::size_t n_ = 0;
};

}  // namespace convformer
