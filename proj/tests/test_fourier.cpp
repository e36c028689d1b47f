#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "convformer/fourier.hpp"
#include "convformer/rng.hpp"

using namespace convformer;
using namespace convformer::fourier;

namespace {

ComplexVector random_complex(std::size_t n, Rng& rng) {
  ComplexVector x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x.re[i] = rng.normal();
    x.im[i] = rng.normal();
  }
  return x;
}

std::vector<double> random_real(std::size_t n, Rng& rng) {
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  return x;
}

double max_diff(const ComplexVector& a, const ComplexVector& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max({m, std::abs(a.re[i] - b.re[i]), std::abs(a.im[i] - b.im[i])});
  }
  return m;
}

double max_mod(const ComplexVector& a) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::hypot(a.re[i], a.im[i]));
  return m;
}

std::vector<double> direct_circular(const std::vector<double>& x, const std::vector<double>& c) {
  const std::size_t L = x.size();
  std::vector<double> y(L, 0.0);
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t j = 0; j < L; ++j) y[l] += c[j] * x[(l + L - j) % L];
  return y;
}

std::vector<double> direct_causal(const std::vector<double>& x, const std::vector<double>& c) {
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t l = 0; l < x.size(); ++l)
    for (std::size_t j = 0; j < c.size() && j <= l; ++j) y[l] += c[j] * x[l - j];
  return y;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<std::size_t> tested_lengths() {
  std::vector<std::size_t> ls;
  for (std::size_t l = 1; l <= 64; ++l) ls.push_back(l);
  ls.insert(ls.end(), {100, 1000});
  return ls;
}

}  // namespace

TEST(NaiveDft, SmallClosedForms) {
  const auto z = dft_naive(ComplexVector(4));
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(z.re[k], 0.0);

  const auto ones = dft_naive(ComplexVector({1, 1, 1, 1}, {0, 0, 0, 0}));
  EXPECT_NEAR(ones.re[0], 4.0, 1e-15);
  for (std::size_t k = 1; k < 4; ++k) {
    EXPECT_NEAR(ones.re[k], 0.0, 1e-14);
    EXPECT_NEAR(ones.im[k], 0.0, 1e-14);
  }

  const auto delta = dft_naive(ComplexVector({1, 0, 0, 0}, {0, 0, 0, 0}));
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(delta.re[k], 1.0, 1e-15);
    EXPECT_NEAR(delta.im[k], 0.0, 1e-15);
  }
}

TEST(NaiveDft, InverseRoundTrip) {
  Rng rng(1);
  const auto x = random_complex(7, rng);
  EXPECT_LE(max_diff(idft(dft_naive(x)), x), 1e-10);

  const auto back = idft(ComplexVector({5, 0, 0, 0, 0}, {0, 0, 0, 0, 0}));
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(back.re[i], 1.0, 1e-15);
    EXPECT_NEAR(back.im[i], 0.0, 1e-15);
  }
  const auto zero = idft(ComplexVector(6));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(zero.re[i], 0.0);
}

TEST(Fft, MatchesNaiveAtPowerOfTwo) {
  Rng rng(2);
  const auto x = random_complex(64, rng);
  const auto ref = dft_naive(x);
  EXPECT_LE(max_diff(fft(x), ref), 1e-9 * max_mod(ref));
}

TEST(Fft, MatchesNaiveAtLength50ThroughBluestein) {
  Rng rng(3);
  const auto x = random_complex(50, rng);
  const auto ref = dft_naive(x);
  EXPECT_LE(max_diff(fft(x), ref), 1e-9 * max_mod(ref));
}

TEST(Fft, ShiftedDeltaHasUnitModulusSpectrum) {
  ComplexVector x(8);
  x.re[3] = 1.0;
  const auto X = fft(x);
  for (std::size_t k = 0; k < 8; ++k) {
    const double ang = -2.0 * std::numbers::pi * 3.0 * static_cast<double>(k) / 8.0;
    EXPECT_NEAR(X.re[k], std::cos(ang), 1e-14);
    EXPECT_NEAR(X.im[k], std::sin(ang), 1e-14);
  }
}

TEST(Fft, MatchesNaiveForEveryTestedLength) {
  Rng rng(4);
  for (std::size_t L : tested_lengths()) {
    const auto x = random_complex(L, rng);
    const auto ref = dft_naive(x);
    ASSERT_LE(max_diff(fft(x), ref), 1e-9 * std::max(1.0, max_mod(ref))) << "L=" << L;
  }
}

TEST(Fft, Parseval) {
  Rng rng(5);
  for (std::size_t L : tested_lengths()) {
    const auto x = random_complex(L, rng);
    const auto X = fft(x);
    double ex = 0, eX = 0;
    for (std::size_t i = 0; i < L; ++i) {
      ex += x.re[i] * x.re[i] + x.im[i] * x.im[i];
      eX += X.re[i] * X.re[i] + X.im[i] * X.im[i];
    }
    ASSERT_NEAR(ex, eX / static_cast<double>(L), 1e-9 * ex) << "L=" << L;
  }
}

TEST(Fft, Linearity) {
  Rng rng(6);
  for (std::size_t L : {7u, 16u, 50u, 100u}) {
    const auto x = random_complex(L, rng), y = random_complex(L, rng);
    const double a = 1.7, b = -0.3;
    ComplexVector z(L);
    for (std::size_t i = 0; i < L; ++i) {
      z.re[i] = a * x.re[i] + b * y.re[i];
      z.im[i] = a * x.im[i] + b * y.im[i];
    }
    const auto X = fft(x), Y = fft(y), Z = fft(z);
    ComplexVector comb(L);
    for (std::size_t i = 0; i < L; ++i) {
      comb.re[i] = a * X.re[i] + b * Y.re[i];
      comb.im[i] = a * X.im[i] + b * Y.im[i];
    }
    EXPECT_LE(max_diff(Z, comb), 1e-9 * max_mod(Z)) << "L=" << L;
  }
}

TEST(Fft, RoundTripNonPowerOfTwo) {
  Rng rng(7);
  for (std::size_t L : {3u, 5u, 12u, 50u, 99u, 1000u}) {
    const auto x = random_complex(L, rng);
    EXPECT_LE(max_diff(ifft(fft(x)), x), 1e-9) << "L=" << L;
  }
}

TEST(Helpers, PowerOfTwo) {
  EXPECT_TRUE(is_power_of_two(1));
  EXPECT_TRUE(is_power_of_two(64));
  EXPECT_FALSE(is_power_of_two(50));
  EXPECT_EQ(next_power_of_two(50), 64u);
  EXPECT_EQ(next_power_of_two(64), 64u);
  EXPECT_EQ(next_power_of_two(1), 1u);
}

TEST(CircularConv, IdentityAndZeroKernels) {
  Rng rng(8);
  const auto x = random_real(9, rng);
  std::vector<double> delta(9, 0.0);
  delta[0] = 1.0;
  EXPECT_LE(max_diff(circular_conv_fft(x, delta), x), 1e-12);
  const auto z = circular_conv_fft(x, std::vector<double>(9, 0.0));
  for (double v : z) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(CircularConv, WorkedExample) {
  const auto y = circular_conv_fft(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 1, 0, 0});
  const double want[] = {5, 3, 5, 7};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(y[i], want[i], 1e-12);
  EXPECT_THROW(circular_conv_fft(std::vector<double>{1, 2}, std::vector<double>{1}), std::invalid_argument);
}

TEST(CircularConv, ConvolutionTheoremAllLengths) {
  Rng rng(9);
  for (std::size_t L : tested_lengths()) {
    const auto x = random_real(L, rng), c = random_real(L, rng);
    ASSERT_LE(max_diff(circular_conv_fft(x, c), direct_circular(x, c)), 1e-9) << "L=" << L;
  }
}

TEST(LinearConv, Examples) {
  Rng rng(10);
  const auto x = random_real(11, rng);
  EXPECT_LE(max_diff(linear_conv_fft(x, std::vector<double>{1}), x), 1e-12);

  const auto y = linear_conv_fft(std::vector<double>{1, 2, 3}, std::vector<double>{1, 1});
  EXPECT_NEAR(y[0], 1, 1e-12);
  EXPECT_NEAR(y[1], 3, 1e-12);
  EXPECT_NEAR(y[2], 5, 1e-12);

  const std::size_t L = 20;
  const auto p = linear_conv_fft(std::vector<double>(L, 1.0), std::vector<double>(L, 1.0));
  for (std::size_t l = 0; l < L; ++l) EXPECT_NEAR(p[l], static_cast<double>(l + 1), 1e-10);

  EXPECT_THROW(linear_conv_fft(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), std::invalid_argument);
}

TEST(LinearConv, MatchesDirectCausalSum) {
  Rng rng(11);
  for (std::size_t L : {1u, 2u, 7u, 50u, 64u, 100u}) {
    for (std::size_t K : {std::size_t{1}, std::size_t{3}, L}) {
      if (K > L) continue;
      const auto x = random_real(L, rng), c = random_real(K, rng);
      EXPECT_LE(max_diff(linear_conv_fft(x, c), direct_causal(x, c)), 1e-9) << "L=" << L << " K=" << K;
    }
  }
}

TEST(SpectralConvolver, TransformLengths) {
  EXPECT_EQ(SpectralConvolver(50, 45, true).transform_len(), 50u);
  EXPECT_EQ(SpectralConvolver(50, 45, false).transform_len(), 128u);
  EXPECT_EQ(SpectralConvolver(1000, 10, true).transform_len(), 1000u);
}

TEST(Plan, CacheReturnsSamePlan) {
  EXPECT_EQ(&plan(37), &plan(37));
  EXPECT_EQ(plan(37).size(), 37u);
}
