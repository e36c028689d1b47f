#include "convformer/synth.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "convformer/error.hpp"

namespace convformer::synth {

std::vector<double> MarkovTable::next_distribution(std::span<const ItemId> history) const {
  if (history.size() < order) throw std::invalid_argument("history shorter than the chain order");
  std::vector<double> p(item_count + 1, 0.0);
  for (std::size_t m = 0; m < order; ++m) {
    const ItemId prev = history[history.size() - 1 - m];
    const auto& succ = successors[m].at(prev);
    const auto& prob = probabilities[m][prev];
    for (std::size_t s = 0; s < succ.size(); ++s) p[succ[s]] += lag_weights[m] * prob[s];
  }
  return p;
}

ItemId MarkovTable::sample_next(std::span<const ItemId> history, Rng& rng) const {
  double u = rng.uniform();
  std::size_t m = 0;
  while (m + 1 < order && u >= lag_weights[m]) u -= lag_weights[m++];
  const ItemId prev = history[history.size() - 1 - m];
  const auto& succ = successors[m][prev];
  const auto& prob = probabilities[m][prev];
  double v = rng.uniform();
  for (std::size_t s = 0; s + 1 < succ.size(); ++s) {
    if (v < prob[s]) return succ[s];
    v -= prob[s];
  }
  return succ.back();
}

MarkovTable make_table(const MarkovSpec& spec, Rng& rng) {
  if (spec.order < 1) throw UserError("Markov order must be >= 1");
  if (spec.item_count < 2) throw UserError("need at least 2 items");
  const std::size_t n = spec.item_count;
  MarkovTable t;
  t.order = spec.order;
  t.item_count = n;
  t.successors.resize(spec.order);
  t.probabilities.resize(spec.order);

  if (spec.structure == Structure::Cycle) {
    if (spec.order != 1) throw UserError("cycle structure is defined for order 1 only");
    t.lag_weights = {1.0};
    t.successors[0].resize(n + 1);
    t.probabilities[0].resize(n + 1);
    for (ItemId i = 1; i <= n; ++i) {
      t.successors[0][i] = {static_cast<ItemId>(i % n + 1)};
      t.probabilities[0][i] = {1.0};
    }
    return t;
  }

  const std::size_t fanout = std::min(spec.fanout, n);
  if (fanout < 1) throw UserError("fanout must be >= 1");
  // heavier weight on the most recent lag
  double total = 0.0;
  for (std::size_t m = 0; m < spec.order; ++m) {
    t.lag_weights.push_back(0.5 + rng.uniform() / static_cast<double>(m + 1));
    total += t.lag_weights.back();
  }
  for (auto& w : t.lag_weights) w /= total;

  std::vector<ItemId> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = static_cast<ItemId>(i + 1);
  for (std::size_t m = 0; m < spec.order; ++m) {
    t.successors[m].resize(n + 1);
    t.probabilities[m].resize(n + 1);
    for (ItemId i = 1; i <= n; ++i) {
      // partial Fisher-Yates for `fanout` distinct successors
      for (std::size_t s = 0; s < fanout; ++s) std::swap(pool[s], pool[s + rng.uniform_index(n - s)]);
      std::vector<ItemId> succ(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(fanout));
      std::vector<double> prob(fanout);
      double z = 0.0;
      for (auto& p : prob) z += (p = 0.2 + rng.uniform());
      for (auto& p : prob) p /= z;
      t.successors[m][i] = std::move(succ);
      t.probabilities[m][i] = std::move(prob);
    }
  }
  return t;
}

SyntheticData generate(const MarkovSpec& spec, std::uint64_t seed) {
  if (spec.min_len < std::max<std::size_t>(3, spec.order) || spec.max_len < spec.min_len) {
    throw UserError("invalid length range [" + std::to_string(spec.min_len) + ", " + std::to_string(spec.max_len) + "]");
  }
  if (spec.user_count < 1) throw UserError("user_count must be >= 1");
  Rng root(seed);
  Rng table_rng = root.split(1);
  Rng seq_rng = root.split(2);
  MarkovTable table = make_table(spec, table_rng);

  std::vector<data::UserSequence> users;
  users.reserve(spec.user_count);
  for (std::size_t u = 0; u < spec.user_count; ++u) {
    const std::size_t len = spec.min_len + seq_rng.uniform_index(spec.max_len - spec.min_len + 1);
    data::UserSequence s{std::to_string(u + 1), {}};
    s.items.reserve(len);
    for (std::size_t k = 0; k < spec.order; ++k) s.items.push_back(static_cast<ItemId>(1 + seq_rng.uniform_index(spec.item_count)));
    while (s.items.size() < len) s.items.push_back(table.sample_next(s.items, seq_rng));
    users.push_back(std::move(s));
  }
  return SyntheticData{std::move(table), data::SequenceDataset(std::move(users), spec.item_count)};
}

}  // namespace convformer::synth
