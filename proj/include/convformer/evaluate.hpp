#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "convformer/data.hpp"
#include "convformer/metrics.hpp"
#include "convformer/model.hpp"

namespace convformer {

enum class EvalMode { OneVs99, FullSort };
std::string to_string(EvalMode m);
EvalMode parse_eval_mode(const std::string& s);
std::string to_string(data::Split s);
data::Split parse_split(const std::string& s);

/// Scores candidates for one user given the visible history.
using Scorer = std::function<std::vector<double>(std::size_t user, std::span<const ItemId> history,
                                                 std::span<const ItemId> candidates)>;

/// Ranks each user's target (candidate 0) and averages the metrics.
/// ONE_VS_99 reads candidates from `candidates`, which must be non-null.
EvalReport evaluate(const data::SequenceDataset& ds, data::Split split, EvalMode mode,
                    const data::CandidateFile* candidates, const Scorer& scorer);

/// Inference-path scorer: dropout off, last-position representation.
Scorer model_scorer(const Model& model);

EvalReport evaluate(const Model& model, const data::SequenceDataset& ds, data::Split split, EvalMode mode,
                    const data::CandidateFile* candidates);

/// Interaction counts over the training parts, indexed by item id.
std::vector<double> item_popularity(const data::SequenceDataset& ds);
Scorer popularity_scorer(const data::SequenceDataset& ds);

}  // namespace convformer
