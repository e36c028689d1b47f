#include <gtest/gtest.h>

#include <cmath>
#include <bit>
#include <numeric>

#include "convformer/error.hpp"
#include "test_util.hpp"

using namespace convformer;
using testutil::check_inputs;
using testutil::randn;
using testutil::weighted_sum;

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), std::invalid_argument);
  EXPECT_THROW(Tensor({2, 0}), std::invalid_argument);
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_TRUE(Tensor::scalar(2.0).is_scalar());
  EXPECT_DOUBLE_EQ(Tensor::scalar(2.0).item(), 2.0);
}

TEST(Tensor, RequireFiniteThrowsNumericError) {
  Tensor t({2}, 0.0);
  t[1] = std::nan("");
  EXPECT_FALSE(t.all_finite());
  EXPECT_THROW(require_finite(t, "t"), NumericError);
}

// --- Rng ---------------------------------------------------------------

TEST(Rng, SplitmixReferenceOutputs) {
  std::uint64_t s = 1234567;
  EXPECT_EQ(splitmix64(s), 6457827717110365317ULL);
  EXPECT_EQ(splitmix64(s), 3203168211198807973ULL);
  EXPECT_EQ(splitmix64(s), 9817491932198370423ULL);
}

// Values from an independent Python implementation of xoshiro256**.
TEST(Rng, XoshiroStreamMatchesReference) {
  Rng r(1234567);
  const std::uint64_t want[] = {3504822795582309479ULL, 1819558768956484042ULL, 1250851346055027673ULL,
                                16940231675099994102ULL, 11585879347611423030ULL};
  for (auto w : want) EXPECT_EQ(r.next_u64(), w);
  Rng z(0);
  EXPECT_EQ(z.next_u64(), 11091344671253066420ULL);
  EXPECT_EQ(z.next_u64(), 13793997310169335082ULL);
}

TEST(Rng, UniformAndNormalMatchReference) {
  Rng r(42);
  EXPECT_EQ(r.uniform(), 0.08386297105988216);
  EXPECT_EQ(r.uniform(), 0.3789802506626686);
  Rng n(42);
  EXPECT_NEAR(n.normal(), -0.303263064678738, 1e-15);
  EXPECT_NEAR(n.normal(), 1.3438117634372806, 1e-15);
  EXPECT_NEAR(n.normal(), 0.3834617912676943, 1e-15);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(9), b(9);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  Rng c(10);
  EXPECT_NE(Rng(9).next_u64(), c.next_u64());
}

TEST(Rng, UniformIndexCoversRangeEvenly) {
  Rng r(5);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[r.uniform_index(7)];
  for (int c : counts) EXPECT_NEAR(c, n / 7.0, 4 * std::sqrt(n / 7.0));
  EXPECT_THROW(r.uniform_index(0), std::invalid_argument);
}

TEST(Rng, SplitStreamsDiffer) {
  Rng r(1);
  Rng a = r.split(1), b = r.split(2);
  EXPECT_NE(a.next_u64(), b.next_u64());
  EXPECT_EQ(r.split(1).next_u64(), Rng(1).split(1).next_u64());
}

// --- layer_norm --------------------------------------------------------

TEST(LayerNorm, ConstantRowMapsToZero) {
  const Tensor y = layer_norm(Tensor::from_rows({{5, 5, 5}}), Tensor({3}, 1.0), Tensor({3}, 0.0));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, TwoElementRow) {
  const Tensor y = layer_norm(Tensor::from_rows({{1, 3}}), Tensor({2}, 1.0), Tensor({2}, 0.0), 1e-300);
  EXPECT_NEAR(y[0], -1.0, 1e-15);
  EXPECT_NEAR(y[1], 1.0, 1e-15);
}

TEST(LayerNorm, MatchesTwoPassOracle) {
  Rng rng(3);
  const Tensor x = randn({4, 8}, rng, 2.0);
  const Tensor g = randn({8}, rng), b = randn({8}, rng);
  const Tensor y = layer_norm(x, g, b);
  for (std::size_t r = 0; r < 4; ++r) {
    double mean = 0;
    for (std::size_t c = 0; c < 8; ++c) mean += x(r, c);
    mean /= 8;
    double var = 0;
    for (std::size_t c = 0; c < 8; ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= 8;
    for (std::size_t c = 0; c < 8; ++c) {
      EXPECT_NEAR(y(r, c), (x(r, c) - mean) / std::sqrt(var + kLayerNormEps) * g[c] + b[c], 1e-12);
    }
  }
}

TEST(LayerNorm, RowsAreStandardised) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    // rescale each row to a sample std of exactly `sd`
    const double sd = 1.01e-3 * (1 + trial);
    Tensor x = randn({6, 16}, rng);
    for (std::size_t r = 0; r < 6; ++r) {
      auto row = x.row(r);
      double m = 0, v = 0;
      for (double e : row) m += e;
      m /= 16;
      for (double e : row) v += (e - m) * (e - m);
      const double s = std::sqrt(v / 16);
      for (auto& e : row) e = (e - m) / s * sd;
    }
    const Tensor y = layer_norm(x, Tensor({16}, 1.0), Tensor({16}, 0.0));
    for (std::size_t r = 0; r < 6; ++r) {
      double m = 0, v = 0;
      for (double e : y.row(r)) m += e;
      m /= 16;
      for (double e : y.row(r)) v += (e - m) * (e - m);
      v /= 16;
      EXPECT_LE(std::abs(m), 1e-10);
      EXPECT_LE(std::abs(v - 1.0), 1e-6);
    }
  }
}

TEST(LayerNorm, Errors) {
  Tensor x({2, 3}, 1.0);
  EXPECT_THROW(layer_norm(x, Tensor({2}, 1.0), Tensor({3}, 0.0)), std::invalid_argument);
  x[4] = INFINITY;
  EXPECT_THROW(layer_norm(x, Tensor({3}, 1.0), Tensor({3}, 0.0)), NumericError);
}

// --- softmax -----------------------------------------------------------

TEST(Softmax, UniformLogits) {
  const Tensor y = softmax_rows(Tensor({5, 5}, 0.7));
  for (double v : y.data()) EXPECT_NEAR(v, 0.2, 1e-15);
}

TEST(Softmax, ClosedForm) {
  const Tensor y = softmax_rows(Tensor::from_rows({{0.0, std::log(3.0)}}));
  EXPECT_NEAR(y[0], 0.25, 1e-15);
  EXPECT_NEAR(y[1], 0.75, 1e-15);
}

TEST(Softmax, ShiftInvariantAndNormalised) {
  Rng rng(8);
  const Tensor x = randn({6, 6}, rng, 3.0);
  Tensor shifted = x;
  for (auto& v : shifted.data()) v += 123.25;
  const Tensor a = softmax_rows(x), b = softmax_rows(shifted);
  EXPECT_LE(max_abs_diff(a, b), 1e-12);
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0;
    for (double v : a.row(r)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Softmax, MaskedEntriesAreExactlyZero) {
  Rng rng(9);
  const Tensor x = randn({5, 5}, rng);
  const Tensor m = causal_mask(5);
  const Tensor y = softmax_rows(x, &m);
  for (std::size_t i = 0; i < 5; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 5; ++j) {
      if (j > i) {
        EXPECT_EQ(std::bit_cast<std::uint64_t>(y(i, j)), 0u);
      }
      s += y(i, j);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  Tensor dead = m;
  for (std::size_t j = 0; j < 5; ++j) dead(2, j) = 0.0;
  EXPECT_THROW(softmax_rows(x, &dead), std::invalid_argument);
}

// --- dropout -----------------------------------------------------------

TEST(Dropout, IdentityCases) {
  Rng rng(1);
  const Tensor x = randn({10, 10}, rng);
  EXPECT_TRUE(dropout(x, 0.0, rng, true).bitwise_equal(x));
  EXPECT_TRUE(dropout(x, 0.9, rng, false).bitwise_equal(x));
  EXPECT_THROW(dropout(x, 1.0, rng, true), std::invalid_argument);
  EXPECT_THROW(dropout(x, -0.1, rng, true), std::invalid_argument);
}

TEST(Dropout, KeptFractionAndScale) {
  Rng rng(2);
  const Tensor x({100000}, 1.0);
  const Tensor y = dropout(x, 0.5, rng, true);
  std::size_t kept = 0;
  for (double v : y.data()) {
    if (v != 0.0) {
      ++kept;
      EXPECT_EQ(v, 2.0);
    }
  }
  EXPECT_NEAR(static_cast<double>(kept) / 1e5, 0.5, 0.01);
}

// --- autodiff ----------------------------------------------------------

TEST(Backward, SumGivesOnes) {
  Tape t;
  Rng rng(3);
  Var x = t.input(randn({3, 4}, rng));
  t.backward(ag::sum(t, x));
  const Tensor g = t.grad(x);
  for (double v : g.data()) EXPECT_EQ(v, 1.0);
}

TEST(Backward, HalfSquareGivesInput) {
  Tape t;
  Rng rng(4);
  const Tensor xv = randn({2, 5}, rng);
  Var x = t.input(xv);
  t.backward(ag::scale(t, ag::sum(t, ag::mul(t, x, x)), 0.5));
  EXPECT_LE(max_abs_diff(t.grad(x), xv), 1e-15);
}

TEST(Backward, NonScalarLossRejected) {
  Tape t;
  Var x = t.input(Tensor({2, 2}, 1.0));
  EXPECT_THROW(t.backward(x), std::invalid_argument);
}

TEST(Backward, ParameterGradientsAccumulate) {
  ParameterSet ps;
  const ParamId w = ps.add("w", Tensor::vector({1.0, 2.0}));
  const ParamId frozen = ps.add("f", Tensor::vector({3.0, 4.0}), false);
  Tape t;
  Var a = t.param(ps, w);
  Var b = t.param(ps, frozen);
  Var loss = ag::sum(t, ag::add(t, ag::mul(t, a, a), ag::mul(t, a, b)));
  Gradients g = t.backward(loss);
  ASSERT_NE(g.find(w), nullptr);
  EXPECT_DOUBLE_EQ((*g.find(w))[0], 2.0 + 3.0);
  EXPECT_DOUBLE_EQ((*g.find(w))[1], 4.0 + 4.0);
  EXPECT_EQ(g.find(frozen), nullptr);
}

// --- finite differences per primitive -----------------------------------

class PrimitiveGrad : public ::testing::Test {
 protected:
  Rng rng{11};
};

TEST_F(PrimitiveGrad, Matmul) {
  const Tensor w = randn({3, 5}, rng);
  EXPECT_LE(check_inputs({randn({3, 4}, rng), randn({4, 5}, rng)},
                         [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ag::matmul(t, v[0], v[1]), w); }),
            1e-4);
  const Tensor w2 = randn({3, 2}, rng);
  EXPECT_LE(check_inputs({randn({3, 4}, rng), randn({2, 4}, rng)},
                         [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ag::matmul_bt(t, v[0], v[1]), w2); }),
            1e-4);
}

TEST_F(PrimitiveGrad, LayerNorm) {
  const Tensor w = randn({4, 6}, rng);
  EXPECT_LE(check_inputs({randn({4, 6}, rng), randn({6}, rng), randn({6}, rng)},
                         [&](Tape& t, const std::vector<Var>& v) {
                           return weighted_sum(t, ag::layer_norm(t, v[0], v[1], v[2]), w);
                         }),
            1e-4);
}

TEST_F(PrimitiveGrad, SoftmaxWithMask) {
  const Tensor w = randn({5, 5}, rng);
  const Tensor m = causal_mask(5);
  EXPECT_LE(check_inputs({randn({5, 5}, rng)},
                         [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ag::softmax_rows(t, v[0], &m), w); }),
            1e-4);
}

TEST_F(PrimitiveGrad, ReluAwayFromKink) {
  Tensor x = randn({4, 4}, rng);
  for (auto& v : x.data()) v += v > 0 ? 0.1 : -0.1;
  const Tensor w = randn({4, 4}, rng);
  EXPECT_LE(check_inputs({x}, [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ag::relu(t, v[0]), w); }),
            1e-4);
  Tape t;
  Var z = t.input(Tensor({3}, 0.0));
  t.backward(ag::sum(t, ag::relu(t, z)));
  const Tensor g = t.grad(z);
  for (double v : g.data()) EXPECT_EQ(v, 0.0);
}

TEST_F(PrimitiveGrad, RowBiasRowwiseDotAffine) {
  const Tensor w = randn({3, 4}, rng);
  EXPECT_LE(check_inputs({randn({3, 4}, rng), randn({4}, rng)},
                         [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ag::add_row_bias(t, v[0], v[1]), w); }),
            1e-4);
  const Tensor w3 = randn({3}, rng);
  EXPECT_LE(check_inputs({randn({3, 4}, rng), randn({3, 4}, rng)},
                         [&](Tape& t, const std::vector<Var>& v) { return weighted_sum(t, ag::rowwise_dot(t, v[0], v[1]), w3); }),
            1e-4);
  const Tensor w2 = randn({3, 2}, rng);
  EXPECT_LE(check_inputs({randn({3, 4}, rng), randn({3, 4, 2}, rng), randn({3, 2}, rng)},
                         [&](Tape& t, const std::vector<Var>& v) {
                           return weighted_sum(t, ag::per_row_affine(t, v[0], v[1], v[2]), w2);
                         }),
            1e-4);
}

TEST_F(PrimitiveGrad, BprLoss) {
  const Tensor weights = Tensor::vector({1, 0, 1, 1});
  EXPECT_LE(check_inputs({randn({4}, rng, 3.0), randn({4}, rng, 3.0)},
                         [&](Tape& t, const std::vector<Var>& v) { return ag::bpr_loss(t, v[0], v[1], weights); }),
            1e-4);
}

TEST_F(PrimitiveGrad, Dropout) {
  const Tensor w = randn({4, 4}, rng);
  const Tensor x = randn({4, 4}, rng);
  // Same seed for every evaluation so the mask is fixed.
  EXPECT_LE(check_inputs({x},
                         [&](Tape& t, const std::vector<Var>& v) {
                           Rng r(77);
                           return weighted_sum(t, ag::dropout(t, v[0], 0.3, r, true), w);
                         }),
            1e-4);
}

TEST_F(PrimitiveGrad, EmbeddingGather) {
  ParameterSet ps;
  ps.add("table", randn({6, 3}, rng));
  const std::vector<std::uint32_t> ids{0, 2, 2, 5};
  const Tensor w = randn({4, 3}, rng);
  EXPECT_LE(testutil::check_params(ps, [&](Tape& t) { return weighted_sum(t, ag::gather_rows(t, ps, 0, ids), w); }), 1e-4);
  Tape t;
  const std::vector<std::uint32_t> bad{6};
  EXPECT_THROW(ag::gather_rows(t, ps, 0, bad), UserError);
}

TEST(Purity, RepeatedCallsAreBitIdentical) {
  Rng rng(12);
  const Tensor x = randn({5, 7}, rng), g = randn({7}, rng), b = randn({7}, rng);
  EXPECT_TRUE(layer_norm(x, g, b).bitwise_equal(layer_norm(x, g, b)));
  EXPECT_TRUE(softmax_rows(x).bitwise_equal(softmax_rows(x)));
  Rng r1(4), r2(4);
  EXPECT_TRUE(dropout(x, 0.4, r1, true).bitwise_equal(dropout(x, 0.4, r2, true)));
}
