#include "convformer/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "convformer/error.hpp"

namespace convformer {

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw UserError("lr must be a finite value >= 0");
  if (batch < 1) throw UserError("batch must be >= 1");
  if (patience < 1) throw UserError("patience must be >= 1");
  if (max_epochs < 1) throw UserError("max_epochs must be >= 1");
}

Trainer::Trainer(Model& model, const data::SequenceDataset& ds, const TrainConfig& cfg)
    : model_(model),
      ds_(ds),
      cfg_(cfg),
      adam_(AdamOptions{cfg.lr}),
      shuffle_rng_(Rng(cfg.seed).split(1)),
      negative_rng_(Rng(cfg.seed).split(2)),
      dropout_rng_(Rng(cfg.seed).split(3)) {
  cfg_.validate();
  if (model.config().vocab_size != ds.vocab_size()) throw UserError("model vocabulary does not match the dataset");
  for (std::size_t u = 0; u < ds.user_count(); ++u) {
    if (ds.train_part(u).size() >= 2) eligible_.push_back(u);
  }
  if (eligible_.empty()) throw UserError("no user has a training part of two or more items");
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double Trainer::step(std::span<const std::size_t> users) {
  Gradients grads(model_.params());
  double loss = 0.0;
  ++steps_;
  try {
    for (std::size_t u : users) {
      const auto ex = data::make_training_example(ds_.train_part(u), model_.config().max_len, negative_rng_,
                                                  ds_.item_count(), cfg_.negatives);
      Tape t;
      Var l = model_.sequence_loss(t, ex, &dropout_rng_, true);
      loss += t.value(l).item();
      t.backward(l, grads);
    }
  } catch (const NumericError& e) {
    // forward checks (e.g. layer norm) fire before the loss exists
    throw NumericError("non-finite values at step " + std::to_string(steps_) + ": " + e.what() + " lr=" +
                       fmt(cfg_.lr) + " grad_norm=" + (steps_ > 1 ? fmt(last_grad_norm_) : std::string("n/a")) +
                       " (previous step)");
  }
  model_.mask_gradients(grads);
  const double norm = grads.global_norm();
  if (!std::isfinite(loss) || !std::isfinite(norm)) {
    throw NumericError("non-finite training loss at step " + std::to_string(steps_) + ": loss=" + fmt(loss) +
                       " lr=" + fmt(cfg_.lr) + " grad_norm=" + fmt(norm));
  }
  last_grad_norm_ = norm;
  adam_.step(model_.params(), grads);
  return loss;
}

double Trainer::run_epoch() {
  std::vector<std::size_t> order = eligible_;
  shuffle_rng_.shuffle(order);
  double total = 0.0;
  for (std::size_t b = 0; b < order.size(); b += cfg_.batch) {
    const std::size_t e = std::min(order.size(), b + cfg_.batch);
    total += step(std::span<const std::size_t>(order).subspan(b, e - b));
  }
  return total;
}

TrainResult train(Model& model, const data::SequenceDataset& ds, const TrainConfig& cfg,
                  const data::CandidateFile* valid_candidates, const EpochCallback& on_epoch) {
  Trainer trainer(model, ds, cfg);
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult res;
  res.best_params = model.params();
  double best = -std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = trainer.run_epoch();
    rec.valid_mrr = evaluate(model, ds, data::Split::Valid, cfg.valid_mode, valid_candidates).at("MRR");
    if (cfg.record_time) rec.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.valid_mrr > best) {
      best = rec.valid_mrr;
      res.best_epoch = epoch;
      res.best_valid_mrr = rec.valid_mrr;
      res.best_params = model.params();
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  res.steps = trainer.steps();
  model.params() = res.best_params;
  return res;
}

void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
  out << "epoch,train_loss,valid_MRR,elapsed_s\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.valid_mrr) << ',' << fmt(r.elapsed_s) << '\n';
  }
}

}  // namespace convformer
