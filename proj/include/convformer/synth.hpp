#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "convformer/data.hpp"

namespace convformer::synth {

enum class Structure { Random, Cycle };

struct MarkovSpec {
  std::size_t order = 1;
  std::size_t item_count = 200;
  std::size_t user_count = 2000;
  std::size_t min_len = 20;
  std::size_t max_len = 50;
  std::size_t fanout = 4;  // successors per item
  Structure structure = Structure::Random;
};

/// Transition structure of an order-k chain written as a mixture over lags:
///   P(next = j | history) = sum_m lag_weight[m] * P_m(j | history[-1-m]).
/// Each lag has its own sparse successor table.
struct MarkovTable {
  std::size_t order = 1;
  std::size_t item_count = 0;
  std::vector<double> lag_weights;                                  // [order]
  std::vector<std::vector<std::vector<ItemId>>> successors;         // [order][item] -> ids
  std::vector<std::vector<std::vector<double>>> probabilities;      // same layout

  /// Dense next-item distribution (index = id, [0] unused) for a history
  /// with at least `order` items.
  std::vector<double> next_distribution(std::span<const ItemId> history) const;
  ItemId sample_next(std::span<const ItemId> history, Rng& rng) const;
};

MarkovTable make_table(const MarkovSpec& spec, Rng& rng);

struct SyntheticData {
  MarkovTable table;
  data::SequenceDataset dataset;
};

/// Samples the table once, then one sequence per user with a length drawn
/// uniformly from [min_len, max_len]. The first `order` items are uniform.
SyntheticData generate(const MarkovSpec& spec, std::uint64_t seed);

}  // namespace convformer::synth
