#include "convformer/evaluate.hpp"

#include <chrono>

#include "convformer/error.hpp"

namespace convformer {

std::string to_string(EvalMode m) { return m == EvalMode::OneVs99 ? "ONE_VS_99" : "FULL_SORT"; }

EvalMode parse_eval_mode(const std::string& s) {
  if (s == "ONE_VS_99" || s == "one_vs_99" || s == "1vs99") return EvalMode::OneVs99;
  if (s == "FULL_SORT" || s == "full_sort") return EvalMode::FullSort;
  throw UserError("unknown evaluation mode '" + s + "' (expected ONE_VS_99 or FULL_SORT)");
}

std::string to_string(data::Split s) { return s == data::Split::Valid ? "valid" : "test"; }

data::Split parse_split(const std::string& s) {
  if (s == "valid") return data::Split::Valid;
  if (s == "test") return data::Split::Test;
  throw UserError("unknown split '" + s + "' (expected valid or test)");
}

EvalReport evaluate(const data::SequenceDataset& ds, data::Split split, EvalMode mode,
                    const data::CandidateFile* candidates, const Scorer& scorer) {
  const auto t0 = std::chrono::steady_clock::now();
  if (mode == EvalMode::OneVs99) {
    if (!candidates) throw UserError("ONE_VS_99 evaluation needs a candidate file");
    data::check_candidates(*candidates, ds, split);
  }
  MetricAccumulator acc;
  for (std::size_t u = 0; u < ds.user_count(); ++u) {
    const auto history = data::history_of(ds, u, split);
    std::vector<ItemId> full;
    std::span<const ItemId> cands;
    if (mode == EvalMode::OneVs99) {
      cands = candidates->users[u];
    } else {
      full = data::full_sort_candidates(ds, u, split);
      cands = full;
    }
    const auto scores = scorer(u, history, cands);
    if (scores.size() != cands.size()) throw std::logic_error("scorer returned the wrong number of scores");
    acc.add(rank_of_target(scores, 0));
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return acc.report(to_string(mode), to_string(split), elapsed);
}

Scorer model_scorer(const Model& model) {
  return [&model](std::size_t, std::span<const ItemId> history, std::span<const ItemId> cands) {
    const auto items = data::pad_left(history, model.config().max_len);
    const Tensor rep = model.forward(items);
    return model.score_candidates(rep.data(), cands);
  };
}

EvalReport evaluate(const Model& model, const data::SequenceDataset& ds, data::Split split, EvalMode mode,
                    const data::CandidateFile* candidates) {
  if (model.config().vocab_size != ds.vocab_size()) {
    throw UserError("model vocabulary (" + std::to_string(model.config().vocab_size) + ") does not match dataset (" +
                    std::to_string(ds.vocab_size()) + ")");
  }
  return evaluate(ds, split, mode, candidates, model_scorer(model));
}

std::vector<double> item_popularity(const data::SequenceDataset& ds) {
  std::vector<double> counts(ds.vocab_size(), 0.0);
  for (std::size_t u = 0; u < ds.user_count(); ++u) {
    for (ItemId id : ds.train_part(u)) counts[id] += 1.0;
  }
  return counts;
}

Scorer popularity_scorer(const data::SequenceDataset& ds) {
  return [counts = item_popularity(ds)](std::size_t, std::span<const ItemId>, std::span<const ItemId> cands) {
    std::vector<double> s;
    s.reserve(cands.size());
    for (ItemId c : cands) s.push_back(counts.at(c));
    return s;
  };
}

}  // namespace convformer
