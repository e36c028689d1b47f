#include "convformer/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "convformer/error.hpp"

namespace convformer {

std::size_t rank_of_target(std::span<const double> scores, std::size_t target_index) {
  if (scores.empty()) throw std::invalid_argument("rank_of_target: no candidates");
  if (target_index >= scores.size()) throw std::out_of_range("rank_of_target: target index out of range");
  const double t = scores[target_index];
  if (!std::isfinite(t)) throw NumericError("rank_of_target: non-finite target score");
  std::size_t rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i == target_index) continue;
    if (!std::isfinite(scores[i])) throw NumericError("rank_of_target: non-finite candidate score");
    if (scores[i] >= t) ++rank;
  }
  return rank;
}

RankMetrics metrics_at(std::size_t rank, std::size_t k) {
  if (rank < 1) throw std::invalid_argument("metrics_at: rank must be >= 1");
  RankMetrics m;
  m.mrr = 1.0 / static_cast<double>(rank);
  if (rank <= k) {
    m.hit = 1.0;
    m.ndcg = 1.0 / std::log2(static_cast<double>(rank) + 1.0);
  }
  return m;
}

double EvalReport::at(const std::string& name) const {
  auto it = metrics.find(name);
  if (it == metrics.end()) throw std::out_of_range("no metric '" + name + "' in report");
  return it->second;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["mode"] = mode;
  j["split"] = split;
  j["users"] = users;
  j["elapsed_s"] = elapsed_s;
  j["metrics"] = metrics;
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.mode = j.at("mode").get<std::string>();
    r.split = j.at("split").get<std::string>();
    r.users = j.at("users").get<std::size_t>();
    r.elapsed_s = j.at("elapsed_s").get<double>();
    r.metrics = j.at("metrics").get<std::map<std::string, double>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw UserError(std::string("malformed evaluation report: ") + e.what());
  }
}

void MetricAccumulator::add(std::size_t rank) {
  for (auto k : kHitCutoffs) sums_["HIT@" + std::to_string(k)] += metrics_at(rank, k).hit;
  for (auto k : kNdcgCutoffs) sums_["NDCG@" + std::to_string(k)] += metrics_at(rank, k).ndcg;
  sums_["MRR"] += 1.0 / static_cast<double>(rank);
  ++n_;
}

EvalReport MetricAccumulator::report(std::string mode, std::string split, double elapsed_s) const {
  if (n_ == 0) throw UserError("evaluation covered no users");
  EvalReport r;
  r.mode = std::move(mode);
  r.split = std::move(split);
  r.users = n_;
  r.elapsed_s = elapsed_s;
  for (const auto& [name, s] : sums_) r.metrics[name] = s / static_cast<double>(n_);
  return r;
}

}  // namespace convformer
