#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "convformer/error.hpp"
#include "convformer/evaluate.hpp"
#include "convformer/optimizer.hpp"
#include "convformer/synth.hpp"
#include "convformer/train.hpp"

using namespace convformer;
using data::Split;

namespace {

ParameterSet scalar_params(double v) {
  ParameterSet ps;
  ps.add("w", Tensor({1}, v));
  return ps;
}

Gradients grad_of(const ParameterSet& ps, double g) {
  Gradients grads(ps);
  grads.slot(0)[0] = g;
  return grads;
}

data::SequenceDataset synthetic(std::size_t users, std::size_t items, std::uint64_t seed, std::size_t min_len = 5,
                                std::size_t max_len = 10) {
  synth::MarkovSpec s;
  s.user_count = users;
  s.item_count = items;
  s.min_len = min_len;
  s.max_len = max_len;
  return synth::generate(s, seed).dataset;
}

// deterministic pseudo-random scores keyed by (user, candidate)
Scorer hashed_scorer(std::uint64_t salt) {
  return [salt](std::size_t u, std::span<const ItemId>, std::span<const ItemId> c) {
    std::vector<double> out;
    for (ItemId id : c) {
      std::uint64_t s = salt ^ (u * 0x9E3779B97F4A7C15ULL) ^ (std::uint64_t{id} << 32);
      out.push_back(static_cast<double>(splitmix64(s) >> 11));
    }
    return out;
  };
}

ModelConfig model_for(const data::SequenceDataset& ds, std::size_t L = 10, std::size_t D = 16) {
  ModelConfig c;
  c.max_len = L;
  c.hidden = D;
  c.layers = 1;
  c.vocab_size = ds.vocab_size();
  c.mixer.kernel_size = 3;
  c.dropout_hidden = 0.1;
  c.dropout_attn = 0.1;
  return c;
}

}  // namespace

// --- Adam ----------------------------------------------------------------

TEST(Adam, ZeroGradientLeavesParameters) {
  auto ps = scalar_params(0.7);
  AdamState st;
  adam_step(ps, grad_of(ps, 0.0), st, {}, 1);
  EXPECT_EQ(ps.value(0)[0], 0.7);
  // no slot at all behaves like zero
  adam_step(ps, Gradients(ps), st, {}, 2);
  EXPECT_EQ(ps.value(0)[0], 0.7);
}

TEST(Adam, FirstStepClosedForm) {
  auto ps = scalar_params(0.0);
  AdamState st;
  AdamOptions opt;
  adam_step(ps, grad_of(ps, 1.0), st, opt, 1);
  EXPECT_DOUBLE_EQ(ps.value(0)[0], -opt.lr / (1.0 + opt.eps));
  EXPECT_THROW(adam_step(ps, grad_of(ps, 1.0), st, opt, 0), std::invalid_argument);
}

TEST(Adam, ConstantGradientStepApproachesLr) {
  for (double g : {3.0, -0.02}) {
    auto ps = scalar_params(0.0);
    Adam opt(AdamOptions{1e-2});
    double prev = 0.0, last = 0.0;
    for (int t = 0; t < 500; ++t) {
      opt.step(ps, grad_of(ps, g));
      last = ps.value(0)[0] - prev;
      prev = ps.value(0)[0];
    }
    EXPECT_NEAR(last, -1e-2 * (g > 0 ? 1 : -1), 1e-6);
    EXPECT_EQ(opt.state().t, 500u);
  }
}

TEST(Adam, FrozenParametersUntouched) {
  ParameterSet ps;
  ps.add("a", Tensor({2}, 1.0), false);
  ps.add("b", Tensor({2}, 1.0));
  Gradients g(ps);
  g.slot(1).fill(1.0);
  Adam opt;
  opt.step(ps, g);
  EXPECT_EQ(ps.value(0)[0], 1.0);
  EXPECT_LT(ps.value(1)[0], 1.0);
}

// --- ranking metrics ----------------------------------------------------

TEST(Rank, Examples) {
  EXPECT_EQ(rank_of_target(std::vector<double>{5, 1, 2}, 0), 1u);
  EXPECT_EQ(rank_of_target(std::vector<double>(100, 0.5), 0), 100u);
  EXPECT_EQ(rank_of_target(std::vector<double>{1, 3, 1, 0}, 0), 3u);
  EXPECT_EQ(rank_of_target(std::vector<double>{1, 3, 1, 0}, 1), 1u);
  EXPECT_THROW(rank_of_target(std::vector<double>{}, 0), std::invalid_argument);
  EXPECT_THROW(rank_of_target(std::vector<double>{1, NAN}, 0), NumericError);
}

TEST(Rank, MatchesSortOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.uniform_index(120);
    std::vector<double> scores(n);
    // coarse values so ties are common
    for (auto& s : scores) s = static_cast<double>(rng.uniform_index(20));
    const std::size_t target = rng.uniform_index(n);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    // pessimistic: among equal scores the target goes last
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      if (a == target || b == target) return b == target;
      return a < b;
    });
    const auto pos = std::find(order.begin(), order.end(), target) - order.begin();
    ASSERT_EQ(rank_of_target(scores, target), static_cast<std::size_t>(pos + 1));
  }
}

TEST(Metrics, Examples) {
  for (std::size_t k : {1u, 5u, 30u}) {
    const auto m = metrics_at(1, k);
    EXPECT_EQ(m.hit, 1.0);
    EXPECT_EQ(m.ndcg, 1.0);
    EXPECT_EQ(m.mrr, 1.0);
  }
  const auto m3 = metrics_at(3, 10);
  EXPECT_EQ(m3.hit, 1.0);
  EXPECT_DOUBLE_EQ(m3.ndcg, 0.5);
  EXPECT_DOUBLE_EQ(m3.mrr, 1.0 / 3);
  const auto m11 = metrics_at(11, 10);
  EXPECT_EQ(m11.hit, 0.0);
  EXPECT_EQ(m11.ndcg, 0.0);
  EXPECT_DOUBLE_EQ(m11.mrr, 1.0 / 11);
}

TEST(Metrics, PerUserOrdering) {
  for (std::size_t r = 1; r <= 120; ++r) {
    double prev_hit = 0, prev_ndcg = 0;
    for (std::size_t k = 1; k <= 40; ++k) {
      const auto m = metrics_at(r, k);
      EXPECT_LE(m.ndcg, m.hit);
      EXPECT_LE(m.hit, 1.0);
      EXPECT_LE(m.mrr, 1.0);
      EXPECT_GE(m.hit, prev_hit);
      EXPECT_GE(m.ndcg, prev_ndcg);
      prev_hit = m.hit;
      prev_ndcg = m.ndcg;
    }
  }
}

TEST(Report, JsonRoundTrip) {
  MetricAccumulator acc;
  for (std::size_t r : {1u, 4u, 17u, 250u}) acc.add(r);
  const auto rep = acc.report("FULL_SORT", "test", 0.25);
  EXPECT_EQ(rep.users, 4u);
  EXPECT_EQ(rep.metrics.size(), 10u);
  const auto back = EvalReport::from_json(rep.to_json());
  EXPECT_EQ(back.metrics, rep.metrics);
  EXPECT_EQ(back.mode, "FULL_SORT");
  EXPECT_EQ(back.split, "test");
  EXPECT_EQ(back.elapsed_s, 0.25);
  EXPECT_THROW(rep.at("HIT@2"), std::out_of_range);
}

// --- evaluation ----------------------------------------------------------

TEST(Evaluate, PerfectScorer) {
  const auto ds = synthetic(50, 300, 2);
  const auto cands = data::build_candidate_file(ds, Split::Test, 3);
  const Scorer perfect = [](std::size_t, std::span<const ItemId>, std::span<const ItemId> c) {
    std::vector<double> s(c.size(), 0.0);
    s[0] = 1.0;
    return s;
  };
  for (auto mode : {EvalMode::OneVs99, EvalMode::FullSort}) {
    const auto rep = evaluate(ds, Split::Test, mode, &cands, perfect);
    for (const auto& [name, v] : rep.metrics) EXPECT_EQ(v, 1.0) << name;
    EXPECT_EQ(rep.users, 50u);
  }
}

TEST(Evaluate, ConstantScorerIsPessimistic) {
  const auto ds = synthetic(20, 300, 4);
  const auto cands = data::build_candidate_file(ds, Split::Valid, 5);
  const Scorer flat = [](std::size_t, std::span<const ItemId>, std::span<const ItemId> c) {
    return std::vector<double>(c.size(), 0.0);
  };
  const auto rep = evaluate(ds, Split::Valid, EvalMode::OneVs99, &cands, flat);
  EXPECT_EQ(rep.at("HIT@30"), 0.0);
  EXPECT_DOUBLE_EQ(rep.at("MRR"), 0.01);
}

TEST(Evaluate, RandomScorerHitRate) {
  const auto ds = synthetic(10000, 200, 6, 3, 6);
  const auto cands = data::build_candidate_file(ds, Split::Test, 7);
  const auto rep = evaluate(ds, Split::Test, EvalMode::OneVs99, &cands, hashed_scorer(11));
  EXPECT_NEAR(rep.at("HIT@10"), 0.10, 0.01);
  EXPECT_NEAR(rep.at("HIT@1"), 0.01, 0.005);
}

TEST(Evaluate, MatchesIndependentRecomputation) {
  const auto ds = synthetic(300, 150, 8);
  const auto cands = data::build_candidate_file(ds, Split::Valid, 9);
  const Scorer scorer = hashed_scorer(12);
  for (auto mode : {EvalMode::OneVs99, EvalMode::FullSort}) {
    const auto rep = evaluate(ds, Split::Valid, mode, &cands, scorer);
    std::map<std::string, double> want;
    for (std::size_t u = 0; u < ds.user_count(); ++u) {
      const auto h = data::history_of(ds, u, Split::Valid);
      const auto c = mode == EvalMode::OneVs99 ? cands.users[u] : data::full_sort_candidates(ds, u, Split::Valid);
      const auto s = scorer(u, h, c);
      std::size_t rank = 1;
      for (std::size_t i = 1; i < s.size(); ++i) rank += s[i] >= s[0];
      for (std::size_t k : kHitCutoffs) want["HIT@" + std::to_string(k)] += rank <= k;
      for (std::size_t k : kNdcgCutoffs) want["NDCG@" + std::to_string(k)] += rank <= k ? 1.0 / std::log2(rank + 1.0) : 0.0;
      want["MRR"] += 1.0 / rank;
    }
    for (auto& [name, v] : want) EXPECT_NEAR(rep.at(name), v / ds.user_count(), 1e-12) << name;
    double prev = 0;
    for (std::size_t k : kHitCutoffs) {
      EXPECT_GE(rep.at("HIT@" + std::to_string(k)), prev);
      prev = rep.at("HIT@" + std::to_string(k));
    }
  }
}

TEST(Evaluate, MissingCandidatesRejected) {
  const auto ds = synthetic(10, 150, 10);
  EXPECT_THROW(evaluate(ds, Split::Test, EvalMode::OneVs99, nullptr, hashed_scorer(1)), UserError);
  EXPECT_EQ(parse_eval_mode("FULL_SORT"), EvalMode::FullSort);
  EXPECT_THROW(parse_eval_mode("ALL"), UserError);
}

TEST(Evaluate, ModelEvaluationIsSideEffectFree) {
  const auto ds = synthetic(40, 150, 13);
  const auto cands = data::build_candidate_file(ds, Split::Valid, 14);
  Model m(model_for(ds), 15);
  const ParameterSet before = m.params();
  const auto a = evaluate(m, ds, Split::Valid, EvalMode::OneVs99, &cands);
  const auto b = evaluate(m, ds, Split::Valid, EvalMode::OneVs99, &cands);
  EXPECT_EQ(a.metrics, b.metrics);
  for (ParamId id = 0; id < before.size(); ++id) EXPECT_TRUE(before.value(id).bitwise_equal(m.params().value(id)));
  ModelConfig wrong = model_for(ds);
  wrong.vocab_size += 3;
  EXPECT_THROW(evaluate(Model(wrong, 1), ds, Split::Valid, EvalMode::OneVs99, &cands), UserError);
}

TEST(Popularity, CountsTrainingParts) {
  data::SequenceDataset ds({{"a", {1, 1, 2, 3, 4}}, {"b", {2, 1, 5, 3}}}, 5);
  const auto pop = item_popularity(ds);
  EXPECT_EQ(pop, (std::vector<double>{0, 3, 2, 0, 0, 0}));
}

// --- training ------------------------------------------------------------

TEST(Train, FrozenModelStopsAfterPatience) {
  const auto ds = synthetic(40, 150, 16);
  const auto cands = data::build_candidate_file(ds, Split::Valid, 17);
  Model m(model_for(ds), 18);
  const ParameterSet before = m.params();
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.patience = 1;
  cfg.batch = 16;
  cfg.max_epochs = 20;
  const auto res = train(m, ds, cfg, &cands);
  EXPECT_EQ(res.history.size(), 2u);
  EXPECT_EQ(res.best_epoch, 1u);
  EXPECT_EQ(res.history[0].valid_mrr, res.history[1].valid_mrr);
  for (ParamId id = 0; id < before.size(); ++id) EXPECT_TRUE(before.value(id).bitwise_equal(m.params().value(id)));
}

TEST(Train, RerunIsBitIdentical) {
  const auto ds = synthetic(60, 150, 19);
  const auto cands = data::build_candidate_file(ds, Split::Valid, 20);
  TrainConfig cfg;
  cfg.batch = 16;
  cfg.max_epochs = 3;
  cfg.record_time = false;
  auto run = [&] {
    Model m(model_for(ds), 21);
    std::ostringstream out;
    write_history_csv(out, train(m, ds, cfg, &cands).history);
    return out.str();
  };
  const auto a = run();
  EXPECT_EQ(a, run());
  EXPECT_EQ(a.substr(0, a.find('\n')), "epoch,train_loss,valid_MRR,elapsed_s");
  cfg.seed = 43;
  EXPECT_NE(a, run());
}

TEST(Train, LearnsMarkovStructureBeyondPopularity) {
  const auto ds = synthetic(600, 300, 22, 10, 20);
  const auto cands = data::build_candidate_file(ds, Split::Valid, 23);
  Model m(model_for(ds, 20, 32), 24);
  TrainConfig cfg;
  cfg.lr = 5e-3;
  cfg.batch = 32;
  cfg.max_epochs = 8;
  cfg.patience = 3;
  const auto res = train(m, ds, cfg, &cands);
  const auto pop = evaluate(ds, Split::Valid, EvalMode::OneVs99, &cands, popularity_scorer(ds));
  EXPECT_GT(res.best_valid_mrr, pop.at("MRR"));
  // the restored parameters reproduce the selected score
  EXPECT_EQ(evaluate(m, ds, Split::Valid, EvalMode::OneVs99, &cands).at("MRR"), res.best_valid_mrr);
}

TEST(Train, NonFiniteLossAborts) {
  const auto ds = synthetic(20, 150, 25);
  Model m(model_for(ds), 26);
  m.params().mutable_value(*m.params().find("layers.0.ffn.w1"))[0] = NAN;
  TrainConfig cfg;
  cfg.batch = 8;
  Trainer tr(m, ds, cfg);
  try {
    tr.run_epoch();
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("step 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("lr=0.001"), std::string::npos) << msg;
    EXPECT_NE(msg.find("grad_norm="), std::string::npos) << msg;
  }
}

TEST(Train, ConfigValidation) {
  TrainConfig cfg;
  cfg.patience = 0;
  EXPECT_THROW(cfg.validate(), UserError);
  cfg = {};
  cfg.lr = -1;
  EXPECT_THROW(cfg.validate(), UserError);
  cfg = {};
  cfg.batch = 0;
  EXPECT_THROW(cfg.validate(), UserError);
}
