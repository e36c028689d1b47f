#include "convformer/conv_kernels.hpp"

#include <memory>
#include <stdexcept>

#include "convformer/error.hpp"
#include "convformer/fourier.hpp"

namespace convformer::mixers {

std::string to_string(Padding p) {
  switch (p) {
    case Padding::Zero: return "zero";
    case Padding::Circular: return "circular";
    case Padding::Reflect: return "reflect";
  }
  return "?";
}

Padding parse_padding(std::string_view s) {
  if (s == "zero") return Padding::Zero;
  if (s == "circular") return Padding::Circular;
  if (s == "reflect") return Padding::Reflect;
  throw UserError("unknown padding mode '" + std::string(s) + "' (expected zero, circular or reflect)");
}

std::optional<std::size_t> tap_source(std::size_t l, std::size_t k, std::size_t len, Padding padding, bool causal) {
  // The anti-causal form is the causal one on the time-reversed sequence.
  const std::size_t pos = causal ? l : len - 1 - l;
  if (k >= len) throw std::invalid_argument("kernel tap beyond sequence length");
  std::size_t src;
  if (k <= pos) {
    src = pos - k;
  } else {
    const std::size_t over = k - pos;  // in [1, len - 1]
    switch (padding) {
      case Padding::Zero: return std::nullopt;
      case Padding::Circular: src = len - over; break;
      case Padding::Reflect: src = over; break;
      default: return std::nullopt;
    }
  }
  return causal ? src : len - 1 - src;
}

namespace {

void check_dwc_shapes(const Tensor& r, const Tensor& c) {
  if (r.rank() != 2 || c.rank() != 2) throw std::invalid_argument("dwc: expected R [L, D] and C [K, D]");
  if (c.cols() != r.cols()) throw std::invalid_argument("dwc: channel count of C differs from R");
  if (c.rows() < 1 || c.rows() > r.rows()) {
    throw std::invalid_argument("dwc: kernel size " + std::to_string(c.rows()) + " must be in [1, L=" +
                                std::to_string(r.rows()) + "]");
  }
}

/// Source row table [L * K], -1 for taps in zero padding.
std::vector<long> tap_table(std::size_t len, std::size_t ksize, Padding padding, bool causal) {
  std::vector<long> t(len * ksize);
  for (std::size_t l = 0; l < len; ++l) {
    for (std::size_t k = 0; k < ksize; ++k) {
      auto s = tap_source(l, k, len, padding, causal);
      t[l * ksize + k] = s ? static_cast<long>(*s) : -1;
    }
  }
  return t;
}

void require_fft_padding(Padding padding) {
  if (padding == Padding::Reflect) {
    throw std::invalid_argument(
        "dwc_fft: reflect padding is not a stationary convolution and has no frequency-domain form; use dwc_direct");
  }
}

Tensor reverse_rows(const Tensor& x) {
  Tensor y(x.shape());
  const std::size_t n = x.rows();
  for (std::size_t i = 0; i < n; ++i) {
    auto src = x.row(n - 1 - i);
    std::copy(src.begin(), src.end(), y.row(i).begin());
  }
  return y;
}

struct Spectra {
  std::vector<fourier::ComplexVector> input;
  std::vector<fourier::ComplexVector> kernel;
};

Tensor dwc_fft_causal(const Tensor& r, const Tensor& c, const fourier::SpectralConvolver& conv, Spectra* keep) {
  const std::size_t L = r.rows(), D = r.cols(), K = c.rows();
  Tensor y({L, D});
  if (keep) {
    keep->input.resize(D);
    keep->kernel.resize(D);
  }
  for (std::size_t d = 0; d < D; ++d) {
    auto xf = conv.transform(r.data().data() + d, L, D);
    auto cf = conv.transform(c.data().data() + d, K, D);
    conv.multiply_inverse(xf, cf, y.data().data() + d, L, D);
    if (keep) {
      keep->input[d] = std::move(xf);
      keep->kernel[d] = std::move(cf);
    }
  }
  return y;
}

ConvGrads dwc_fft_backward_causal(const Tensor& g, std::size_t K, const fourier::SpectralConvolver& conv,
                                  const Spectra& sp) {
  const std::size_t L = g.rows(), D = g.cols();
  ConvGrads out{Tensor({L, D}), Tensor({K, D})};
  for (std::size_t d = 0; d < D; ++d) {
    auto gf = conv.transform(g.data().data() + d, L, D);
    conv.correlate_inverse(gf, sp.kernel[d], out.input.data().data() + d, L, D);
    conv.correlate_inverse(gf, sp.input[d], out.kernel.data().data() + d, K, D);
  }
  return out;
}

}  // namespace

Tensor dwc_direct(const Tensor& r, const Tensor& c, Padding padding, bool causal) {
  check_dwc_shapes(r, c);
  const std::size_t L = r.rows(), D = r.cols(), K = c.rows();
  const auto taps = tap_table(L, K, padding, causal);
  Tensor y({L, D}, 0.0);
  const double* x = r.data().data();
  const double* w = c.data().data();
  double* out = y.data().data();
  for (std::size_t l = 0; l < L; ++l) {
    double* yl = out + l * D;
    for (std::size_t k = 0; k < K; ++k) {
      const long s = taps[l * K + k];
      if (s < 0) continue;
      const double* xs = x + static_cast<std::size_t>(s) * D;
      const double* wk = w + k * D;
      for (std::size_t d = 0; d < D; ++d) yl[d] += wk[d] * xs[d];
    }
  }
  return y;
}

ConvGrads dwc_direct_backward(const Tensor& r, const Tensor& c, const Tensor& g, Padding padding, bool causal) {
  check_dwc_shapes(r, c);
  require_shape(g, r.shape(), "dwc backward grad");
  const std::size_t L = r.rows(), D = r.cols(), K = c.rows();
  const auto taps = tap_table(L, K, padding, causal);
  ConvGrads out{Tensor({L, D}, 0.0), Tensor({K, D}, 0.0)};
  for (std::size_t l = 0; l < L; ++l) {
    const double* gl = g.data().data() + l * D;
    for (std::size_t k = 0; k < K; ++k) {
      const long s = taps[l * K + k];
      if (s < 0) continue;
      const std::size_t src = static_cast<std::size_t>(s);
      const double* xs = r.data().data() + src * D;
      const double* wk = c.data().data() + k * D;
      double* gx = out.input.data().data() + src * D;
      double* gw = out.kernel.data().data() + k * D;
      for (std::size_t d = 0; d < D; ++d) {
        gx[d] += wk[d] * gl[d];
        gw[d] += xs[d] * gl[d];
      }
    }
  }
  return out;
}

Tensor dwc_fft(const Tensor& r, const Tensor& c, Padding padding, bool causal) {
  check_dwc_shapes(r, c);
  require_fft_padding(padding);
  fourier::SpectralConvolver conv(r.rows(), c.rows(), padding == Padding::Circular);
  if (causal) return dwc_fft_causal(r, c, conv, nullptr);
  return reverse_rows(dwc_fft_causal(reverse_rows(r), c, conv, nullptr));
}

ConvGrads dwc_fft_backward(const Tensor& r, const Tensor& c, const Tensor& g, Padding padding, bool causal) {
  check_dwc_shapes(r, c);
  require_fft_padding(padding);
  require_shape(g, r.shape(), "dwc backward grad");
  fourier::SpectralConvolver conv(r.rows(), c.rows(), padding == Padding::Circular);
  Spectra sp;
  if (causal) {
    dwc_fft_causal(r, c, conv, &sp);
    return dwc_fft_backward_causal(g, c.rows(), conv, sp);
  }
  dwc_fft_causal(reverse_rows(r), c, conv, &sp);
  auto grads = dwc_fft_backward_causal(reverse_rows(g), c.rows(), conv, sp);
  grads.input = reverse_rows(grads.input);
  return grads;
}

namespace {

void check_full_shapes(const Tensor& r, const Tensor& c) {
  if (r.rank() != 2 || c.rank() != 3) throw std::invalid_argument("conv_full: expected R [L, D] and C [K, D, E]");
  if (c.dim(1) != r.cols()) throw std::invalid_argument("conv_full: input channels of C differ from R");
  if (c.dim(0) < 1 || c.dim(0) > r.rows()) throw std::invalid_argument("conv_full: kernel size must be in [1, L]");
}

}  // namespace

Tensor conv_full(const Tensor& r, const Tensor& c, Padding padding, bool causal) {
  check_full_shapes(r, c);
  const std::size_t L = r.rows(), D = r.cols(), K = c.dim(0), E = c.dim(2);
  const auto taps = tap_table(L, K, padding, causal);
  Tensor y({L, E}, 0.0);
  for (std::size_t l = 0; l < L; ++l) {
    double* yl = y.data().data() + l * E;
    for (std::size_t k = 0; k < K; ++k) {
      const long s = taps[l * K + k];
      if (s < 0) continue;
      const double* xs = r.data().data() + static_cast<std::size_t>(s) * D;
      const double* ck = c.data().data() + k * D * E;
      for (std::size_t d = 0; d < D; ++d) {
        const double xv = xs[d];
        const double* cd = ck + d * E;
        for (std::size_t e = 0; e < E; ++e) yl[e] += xv * cd[e];
      }
    }
  }
  return y;
}

ConvGrads conv_full_backward(const Tensor& r, const Tensor& c, const Tensor& g, Padding padding, bool causal) {
  check_full_shapes(r, c);
  const std::size_t L = r.rows(), D = r.cols(), K = c.dim(0), E = c.dim(2);
  require_shape(g, {L, E}, "conv_full backward grad");
  const auto taps = tap_table(L, K, padding, causal);
  ConvGrads out{Tensor({L, D}, 0.0), Tensor(c.shape(), 0.0)};
  for (std::size_t l = 0; l < L; ++l) {
    const double* gl = g.data().data() + l * E;
    for (std::size_t k = 0; k < K; ++k) {
      const long s = taps[l * K + k];
      if (s < 0) continue;
      const std::size_t src = static_cast<std::size_t>(s);
      const double* xs = r.data().data() + src * D;
      const double* ck = c.data().data() + k * D * E;
      double* gx = out.input.data().data() + src * D;
      double* gk = out.kernel.data().data() + k * D * E;
      for (std::size_t d = 0; d < D; ++d) {
        double acc = 0.0;
        for (std::size_t e = 0; e < E; ++e) {
          acc += ck[d * E + e] * gl[e];
          gk[d * E + e] += xs[d] * gl[e];
        }
        gx[d] += acc;
      }
    }
  }
  return out;
}

namespace ag {

namespace {

void add_into(Tensor* dst, const Tensor& src) {
  if (!dst) return;
  for (std::size_t i = 0; i < src.size(); ++i) (*dst)[i] += src[i];
}

}  // namespace

Var dwc(Tape& t, Var r, Var c, Padding padding, bool causal, bool use_fft) {
  const Tensor& rv = t.value(r);
  const Tensor& cv = t.value(c);
  if (!use_fft) {
    return t.record(dwc_direct(rv, cv, padding, causal), {r, c}, [padding, causal](BackwardContext& ctx) {
      auto g = dwc_direct_backward(ctx.input(0), ctx.input(1), ctx.grad_output(), padding, causal);
      add_into(ctx.grad_input(0), g.input);
      add_into(ctx.grad_input(1), g.kernel);
    });
  }
  check_dwc_shapes(rv, cv);
  require_fft_padding(padding);
  auto conv = std::make_shared<fourier::SpectralConvolver>(rv.rows(), cv.rows(), padding == Padding::Circular);
  const bool need = t.recording() && (t.requires_grad(r) || t.requires_grad(c));
  auto spectra = need ? std::make_shared<Spectra>() : nullptr;
  Tensor y = causal ? dwc_fft_causal(rv, cv, *conv, spectra.get())
                    : reverse_rows(dwc_fft_causal(reverse_rows(rv), cv, *conv, spectra.get()));
  return t.record(std::move(y), {r, c}, [conv, spectra, causal](BackwardContext& ctx) {
    const std::size_t K = ctx.input(1).rows();
    ConvGrads g = causal ? dwc_fft_backward_causal(ctx.grad_output(), K, *conv, *spectra)
                         : dwc_fft_backward_causal(reverse_rows(ctx.grad_output()), K, *conv, *spectra);
    if (!causal) g.input = reverse_rows(g.input);
    add_into(ctx.grad_input(0), g.input);
    add_into(ctx.grad_input(1), g.kernel);
  });
}

Var conv_full(Tape& t, Var r, Var c, Padding padding, bool causal) {
  return t.record(mixers::conv_full(t.value(r), t.value(c), padding, causal), {r, c},
                  [padding, causal](BackwardContext& ctx) {
                    auto g = conv_full_backward(ctx.input(0), ctx.input(1), ctx.grad_output(), padding, causal);
                    add_into(ctx.grad_input(0), g.input);
                    add_into(ctx.grad_input(1), g.kernel);
                  });
}

}  // namespace ag

}  // namespace convformer::mixers
