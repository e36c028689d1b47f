#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "convformer/autodiff.hpp"
#include "convformer/ops.hpp"
#include "convformer/tensor.hpp"

namespace convformer::mixers {

/// Boundary rule that keeps a length-L temporal convolution at length L.
///  Zero:     out-of-range inputs are 0 (causal linear convolution).
///  Circular: indices wrap modulo L.
///  Reflect:  indices reflect about the first (or last) position without
///            repeating the edge.
enum class Padding { Zero, Circular, Reflect };

std::string to_string(Padding p);
Padding parse_padding(std::string_view s);

/// Input row feeding output row `l` through kernel tap `k`, or nullopt when
/// the tap falls in the zero padding. With causal=true the tap reads
/// position l-k; with causal=false it reads l+k (the mirrored form).
std::optional<std::size_t> tap_source(std::size_t l, std::size_t k, std::size_t len, Padding padding, bool causal);

/// Depth-wise temporal convolution of R [L, D] with per-channel kernels
/// C [K, D]: out[l, d] = sum_k C[k, d] * R[src(l, k), d]. No bias.
Tensor dwc_direct(const Tensor& r, const Tensor& c, Padding padding, bool causal = true);

/// Same result through the frequency domain: circular padding uses
/// length-L transforms with C zero-extended to L, zero padding a linear
/// convolution at a power-of-two length. Reflect padding is rejected.
Tensor dwc_fft(const Tensor& r, const Tensor& c, Padding padding, bool causal = true);

struct ConvGrads {
  Tensor input;
  Tensor kernel;
};

ConvGrads dwc_direct_backward(const Tensor& r, const Tensor& c, const Tensor& grad_out, Padding padding, bool causal = true);
ConvGrads dwc_fft_backward(const Tensor& r, const Tensor& c, const Tensor& grad_out, Padding padding, bool causal = true);

/// Channel-mixing temporal convolution, C [K, D_in, D_out]:
/// out[l, e] = sum_k sum_d C[k, d, e] * R[src(l, k), d].
Tensor conv_full(const Tensor& r, const Tensor& c, Padding padding, bool causal = true);
ConvGrads conv_full_backward(const Tensor& r, const Tensor& c, const Tensor& grad_out, Padding padding, bool causal = true);

namespace ag {
using namespace ::convformer::ag;

/// Tape op for DWC. use_fft selects the frequency-domain forward and
/// adjoint; both produce the same values and gradients up to rounding.
Var dwc(Tape& t, Var r, Var c, Padding padding, bool causal, bool use_fft);
Var conv_full(Tape& t, Var r, Var c, Padding padding, bool causal);

}  // namespace ag

}  // namespace convformer::mixers
