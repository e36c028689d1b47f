#include "convformer/fourier.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

#include "convformer/error.hpp"

namespace convformer::fourier {

ComplexVector::ComplexVector(std::vector<double> r, std::vector<double> i) : re(std::move(r)), im(std::move(i)) {
  if (re.size() != im.size()) throw std::invalid_argument("ComplexVector: re and im lengths differ");
}

ComplexVector ComplexVector::from_real(std::span<const double> x) {
  ComplexVector v(x.size());
  std::copy(x.begin(), x.end(), v.re.begin());
  return v;
}

namespace {

void require_finite(const ComplexVector& x) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x.re[i]) || !std::isfinite(x.im[i])) throw NumericError("fourier: non-finite input");
  }
}

ComplexVector naive_transform(const ComplexVector& x, double sign, bool normalise) {
  const std::size_t n = x.size();
  if (n == 0) throw std::invalid_argument("fourier: length must be at least 1");
  require_finite(x);
  ComplexVector out(n);
  for (std::size_t k = 0; k < n; ++k) {
    double sr = 0.0, si = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
      // reduce l*k mod n first so the angle stays accurate for large n
      const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>((l * k) % n) / static_cast<double>(n);
      const double c = std::cos(ang), s = std::sin(ang);
      sr += x.re[l] * c - x.im[l] * s;
      si += x.re[l] * s + x.im[l] * c;
    }
    out.re[k] = normalise ? sr / static_cast<double>(n) : sr;
    out.im[k] = normalise ? si / static_cast<double>(n) : si;
  }
  return out;
}

}  // namespace

ComplexVector dft_naive(const ComplexVector& x) { return naive_transform(x, -1.0, false); }
ComplexVector idft(const ComplexVector& x) { return naive_transform(x, +1.0, true); }

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) noexcept {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

struct FftPlan::Radix2 {
  std::size_t n;
  std::vector<std::size_t> bitrev;
  std::vector<double> tw_re, tw_im;  // exp(-2 pi i k / n), k < n/2

  explicit Radix2(std::size_t len) : n(len), bitrev(len), tw_re(len / 2), tw_im(len / 2) {
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1U) << (bits - 1 - b);
      bitrev[i] = r;
    }
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double ang = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      tw_re[k] = std::cos(ang);
      tw_im[k] = std::sin(ang);
    }
  }

  void run(double* re, double* im) const {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = bitrev[i];
      if (j > i) {
        std::swap(re[i], re[j]);
        std::swap(im[i], im[j]);
      }
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t step = n / len;
      for (std::size_t start = 0; start < n; start += len) {
        for (std::size_t k = 0; k < half; ++k) {
          const double wr = tw_re[k * step], wi = tw_im[k * step];
          const std::size_t a = start + k, b = a + half;
          const double xr = re[b] * wr - im[b] * wi;
          const double xi = re[b] * wi + im[b] * wr;
          re[b] = re[a] - xr;
          im[b] = im[a] - xi;
          re[a] += xr;
          im[a] += xi;
        }
      }
    }
  }
};

FftPlan::FftPlan(std::size_t n) : n_(n) {
  if (n == 0) throw std::invalid_argument("FftPlan: length must be at least 1");
  if (is_power_of_two(n)) {
    radix2_ = std::make_unique<Radix2>(n);
    return;
  }
  m_ = next_power_of_two(2 * n - 1);
  radix2_ = std::make_unique<Radix2>(m_);
  chirp_re_.resize(n);
  chirp_im_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the phase argument small
    const std::size_t k2 = (k * k) % (2 * n);
    const double ang = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
    chirp_re_[k] = std::cos(ang);
    chirp_im_[k] = std::sin(ang);
  }
  kernel_re_.assign(m_, 0.0);
  kernel_im_.assign(m_, 0.0);
  kernel_re_[0] = chirp_re_[0];
  kernel_im_[0] = -chirp_im_[0];
  for (std::size_t k = 1; k < n; ++k) {
    kernel_re_[k] = kernel_re_[m_ - k] = chirp_re_[k];
    kernel_im_[k] = kernel_im_[m_ - k] = -chirp_im_[k];
  }
  radix2_->run(kernel_re_.data(), kernel_im_.data());
}

FftPlan::~FftPlan() = default;

void FftPlan::bluestein(std::span<double> re, std::span<double> im) const {
  std::vector<double> ar(m_, 0.0), ai(m_, 0.0);
  for (std::size_t k = 0; k < n_; ++k) {
    ar[k] = re[k] * chirp_re_[k] - im[k] * chirp_im_[k];
    ai[k] = re[k] * chirp_im_[k] + im[k] * chirp_re_[k];
  }
  radix2_->run(ar.data(), ai.data());
  for (std::size_t k = 0; k < m_; ++k) {
    const double r = ar[k] * kernel_re_[k] - ai[k] * kernel_im_[k];
    const double i = ar[k] * kernel_im_[k] + ai[k] * kernel_re_[k];
    // conjugate so the forward radix-2 pass computes the inverse
    ar[k] = r;
    ai[k] = -i;
  }
  radix2_->run(ar.data(), ai.data());
  const double inv_m = 1.0 / static_cast<double>(m_);
  for (std::size_t k = 0; k < n_; ++k) {
    const double r = ar[k] * inv_m;
    const double i = -ai[k] * inv_m;
    re[k] = r * chirp_re_[k] - i * chirp_im_[k];
    im[k] = r * chirp_im_[k] + i * chirp_re_[k];
  }
}

void FftPlan::forward(std::span<double> re, std::span<double> im) const {
  if (re.size() != n_ || im.size() != n_) throw std::invalid_argument("FftPlan: buffer length mismatch");
  if (m_ == 0) {
    radix2_->run(re.data(), im.data());
  } else {
    bluestein(re, im);
  }
}

void FftPlan::inverse(std::span<double> re, std::span<double> im) const {
  for (auto& v : im) v = -v;
  forward(re, im);
  const double inv = 1.0 / static_cast<double>(n_);
  for (std::size_t k = 0; k < n_; ++k) {
    re[k] *= inv;
    im[k] = -im[k] * inv;
  }
}

const FftPlan& plan(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::unique_ptr<FftPlan>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<FftPlan>(n);
  return *slot;
}

ComplexVector fft(const ComplexVector& x) {
  if (x.size() == 0) throw std::invalid_argument("fft: length must be at least 1");
  require_finite(x);
  ComplexVector y = x;
  plan(x.size()).forward(y.re, y.im);
  return y;
}

ComplexVector ifft(const ComplexVector& x) {
  if (x.size() == 0) throw std::invalid_argument("ifft: length must be at least 1");
  require_finite(x);
  ComplexVector y = x;
  plan(x.size()).inverse(y.re, y.im);
  return y;
}

SpectralConvolver::SpectralConvolver(std::size_t signal_len, std::size_t kernel_len, bool circular)
    : signal_len_(signal_len), kernel_len_(kernel_len), plan_(nullptr) {
  if (signal_len == 0 || kernel_len == 0) throw std::invalid_argument("SpectralConvolver: lengths must be positive");
  if (kernel_len > signal_len) {
    throw std::invalid_argument("kernel length " + std::to_string(kernel_len) + " exceeds signal length " +
                                std::to_string(signal_len));
  }
  plan_ = &plan(circular ? signal_len : next_power_of_two(signal_len + kernel_len - 1));
}

ComplexVector SpectralConvolver::transform(const double* v, std::size_t len, std::size_t stride) const {
  ComplexVector out(plan_->size());
  for (std::size_t i = 0; i < len; ++i) out.re[i] = v[i * stride];
  plan_->forward(out.re, out.im);
  return out;
}

void SpectralConvolver::finish(ComplexVector& prod, double* out, std::size_t out_len, std::size_t stride) const {
  plan_->inverse(prod.re, prod.im);
  double max_re = 1.0, max_im = 0.0;
  for (std::size_t i = 0; i < prod.size(); ++i) {
    max_re = std::max(max_re, std::abs(prod.re[i]));
    max_im = std::max(max_im, std::abs(prod.im[i]));
  }
  if (!(max_im <= kImagResidueBound * max_re)) {
    throw NumericError("spectral convolution: imaginary residue " + std::to_string(max_im) + " exceeds bound");
  }
  for (std::size_t i = 0; i < out_len; ++i) out[i * stride] = prod.re[i];
}

void SpectralConvolver::multiply_inverse(const ComplexVector& a, const ComplexVector& b, double* out,
                                         std::size_t out_len, std::size_t stride) const {
  ComplexVector p(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    p.re[k] = a.re[k] * b.re[k] - a.im[k] * b.im[k];
    p.im[k] = a.re[k] * b.im[k] + a.im[k] * b.re[k];
  }
  finish(p, out, out_len, stride);
}

void SpectralConvolver::correlate_inverse(const ComplexVector& a, const ComplexVector& b, double* out,
                                          std::size_t out_len, std::size_t stride) const {
  ComplexVector p(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    p.re[k] = a.re[k] * b.re[k] + a.im[k] * b.im[k];
    p.im[k] = a.im[k] * b.re[k] - a.re[k] * b.im[k];
  }
  finish(p, out, out_len, stride);
}

std::vector<double> circular_conv_fft(std::span<const double> x, std::span<const double> c) {
  if (x.size() != c.size()) {
    throw std::invalid_argument("circular_conv_fft: x and c must have equal length (zero-extend the kernel)");
  }
  SpectralConvolver conv(x.size(), c.size(), true);
  std::vector<double> y(x.size());
  conv.multiply_inverse(conv.transform(x.data(), x.size()), conv.transform(c.data(), c.size()), y.data(), y.size());
  return y;
}

std::vector<double> linear_conv_fft(std::span<const double> x, std::span<const double> c) {
  if (c.empty() || c.size() > x.size()) throw std::invalid_argument("linear_conv_fft: need 1 <= K <= L");
  SpectralConvolver conv(x.size(), c.size(), false);
  std::vector<double> y(x.size());
  conv.multiply_inverse(conv.transform(x.data(), x.size()), conv.transform(c.data(), c.size()), y.data(), y.size());
  return y;
}

}  // namespace convformer::fourier
