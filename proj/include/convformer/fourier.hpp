#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace convformer::fourier {

/// Split-storage complex signal.
struct ComplexVector {
  std::vector<double> re;
  std::vector<double> im;

  ComplexVector() = default;
  explicit ComplexVector(std::size_t n) : re(n, 0.0), im(n, 0.0) {}
  ComplexVector(std::vector<double> r, std::vector<double> i);
  static ComplexVector from_real(std::span<const double> x);

  std::size_t size() const noexcept { return re.size(); }
};

/// X_k = sum_l x_l exp(-2 pi i l k / L), by the O(L^2) double loop.
ComplexVector dft_naive(const ComplexVector& x);
/// x_l = (1/L) sum_k X_k exp(+2 pi i l k / L), by the O(L^2) double loop.
ComplexVector idft(const ComplexVector& x);

/// Exact length-n transform in O(n log n): iterative radix-2 when n is a
/// power of two, Bluestein's chirp-z otherwise. Forward is unnormalised and
/// inverse carries the 1/n factor, matching dft_naive / idft.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);
  ~FftPlan();
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  std::size_t size() const noexcept { return n_; }
  void forward(std::span<double> re, std::span<double> im) const;
  void inverse(std::span<double> re, std::span<double> im) const;

 private:
  struct Radix2;
  void bluestein(std::span<double> re, std::span<double> im) const;

  std::size_t n_;
  std::unique_ptr<Radix2> radix2_;  // length n_ (pow2) or m_ (Bluestein)
  // Bluestein state: chirp w_k = exp(-pi i k^2 / n) and the transformed
  // conjugate chirp of padded length m_.
  std::size_t m_ = 0;
  std::vector<double> chirp_re_, chirp_im_;
  std::vector<double> kernel_re_, kernel_im_;
};

/// Process-wide plan cache, safe for concurrent use.
const FftPlan& plan(std::size_t n);

bool is_power_of_two(std::size_t n) noexcept;
std::size_t next_power_of_two(std::size_t n) noexcept;

ComplexVector fft(const ComplexVector& x);
ComplexVector ifft(const ComplexVector& x);

/// Bound on |imag| (relative to max(1, max |real|)) tolerated when a
/// real-valued convolution is read back from the frequency domain.
inline constexpr double kImagResidueBound = 1e-9;

/// y_l = sum_j c_j x_{(l-j) mod L} via ifft(fft(x) * fft(c)). Throws
/// NumericError if the imaginary residue exceeds kImagResidueBound.
std::vector<double> circular_conv_fft(std::span<const double> x, std::span<const double> c);

/// Causal y_l = sum_{j<K} c_j x_{l-j} (x_{<0} = 0), length L, computed at
/// the next power of two >= L + K - 1.
std::vector<double> linear_conv_fft(std::span<const double> x, std::span<const double> c);

/// Frequency-domain convolution of length-L signals with length-K kernels,
/// either circular at length L or linear (zero padded) at a power-of-two
/// length. Spectra can be kept to evaluate the adjoints without
/// re-transforming.
class SpectralConvolver {
 public:
  SpectralConvolver(std::size_t signal_len, std::size_t kernel_len, bool circular);

  std::size_t signal_len() const noexcept { return signal_len_; }
  std::size_t kernel_len() const noexcept { return kernel_len_; }
  std::size_t transform_len() const noexcept { return plan_->size(); }

  /// Spectrum of v zero-extended to transform_len(). `stride` steps through
  /// a strided column.
  ComplexVector transform(const double* v, std::size_t len, std::size_t stride = 1) const;

  /// Real part of ifft(a * b), first `out_len` entries, written with `stride`.
  void multiply_inverse(const ComplexVector& a, const ComplexVector& b, double* out, std::size_t out_len,
                        std::size_t stride = 1) const;
  /// Real part of ifft(a * conj(b)): the correlation used by the adjoints.
  void correlate_inverse(const ComplexVector& a, const ComplexVector& b, double* out, std::size_t out_len,
                         std::size_t stride = 1) const;

 private:
  void finish(ComplexVector& prod, double* out, std::size_t out_len, std::size_t stride) const;

  std::size_t signal_len_;
  std::size_t kernel_len_;
  const FftPlan* plan_;
};

}  // namespace convformer::fourier
