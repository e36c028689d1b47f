#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "convformer/data.hpp"
#include "convformer/evaluate.hpp"
#include "convformer/model.hpp"
#include "convformer/optimizer.hpp"

namespace convformer {

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch = 256;
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  std::uint64_t seed = 42;
  data::NegativeMode negatives = data::NegativeMode::Target;
  EvalMode valid_mode = EvalMode::OneVs99;
  bool record_time = true;  // false writes 0 for elapsed_s

  /// lr = 0 is accepted here (a frozen run); user configs require lr > 0.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_mrr = 0.0;
  double elapsed_s = 0.0;
};

struct TrainResult {
  ParameterSet best_params;
  std::size_t best_epoch = 0;
  double best_valid_mrr = 0.0;
  std::size_t steps = 0;
  std::vector<EpochRecord> history;
};

/// Owns the optimizer and the random streams of one training run. Shuffling,
/// negatives and dropout draw from separate streams derived from the seed.
class Trainer {
 public:
  Trainer(Model& model, const data::SequenceDataset& ds, const TrainConfig& cfg);

  /// One Adam step on the summed loss of `users`. Returns that loss.
  double step(std::span<const std::size_t> users);
  /// Shuffled pass over the eligible users. Returns the summed loss.
  double run_epoch();

  std::size_t steps() const noexcept { return steps_; }
  const std::vector<std::size_t>& eligible_users() const noexcept { return eligible_; }
  const Adam& optimizer() const noexcept { return adam_; }

 private:
  Model& model_;
  const data::SequenceDataset& ds_;
  TrainConfig cfg_;
  Adam adam_;
  Rng shuffle_rng_, negative_rng_, dropout_rng_;
  std::vector<std::size_t> eligible_;
  std::size_t steps_ = 0;
  double last_grad_norm_ = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Epoch loop with validation-MRR model selection and early stopping. The
/// model ends up holding the best parameters.
TrainResult train(Model& model, const data::SequenceDataset& ds, const TrainConfig& cfg,
                  const data::CandidateFile* valid_candidates, const EpochCallback& on_epoch = {});

/// Header "epoch,train_loss,valid_MRR,elapsed_s"; values printed round-trip exact.
void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history);

}  // namespace convformer
