#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "convformer/autodiff.hpp"
#include "convformer/conv_kernels.hpp"
#include "convformer/rng.hpp"
#include "convformer/tensor.hpp"

namespace convformer::mixers {

enum class MixerKind {
  SA,           // single-head self-attention
  SA_WINDOWED,  // self-attention restricted to |i - j| <= window
  SAR_O,        // trainable input-independent L x L attention matrix
  SAR_P,        // attention rows generated from each input row
  SAR_R,        // random L x L matrix, frozen at init
  SAR_N,        // per-position query/key projections
  SAR_NPLUS,    // query/key from the flattened sequence
  SAR_W,        // no token mixer
  DWC_DIRECT,   // depth-wise convolution, direct sum
  DWC_FFT,      // depth-wise convolution through the FFT
  CONV_V,       // full (channel-mixing) temporal convolution
  CONV_S,       // depth-wise then 1x1 channel mixing
  MLP_MIXER,    // L x L token-mixing matrix shared across channels
};

std::string to_string(MixerKind k);
MixerKind parse_mixer_kind(std::string_view s);
const std::vector<MixerKind>& all_mixer_kinds();

/// How the window mask enters self-attention. Additive sets masked logits
/// to -inf before the softmax (rows stay normalised); Multiplicative
/// multiplies the softmax output by the 0/1 window as A * Gamma(K).
enum class WindowMode { Additive, Multiplicative };

struct MixerSpec {
  MixerKind kind = MixerKind::DWC_DIRECT;
  std::size_t kernel_size = 45;  // DWC / CONV kinds
  std::size_t window = 1;        // SA_WINDOWED
  Padding padding = Padding::Circular;
  bool causal = true;
  WindowMode window_mode = WindowMode::Additive;
  /// Row-softmax SAR-O / SAR-R matrices before use; when false the raw
  /// matrix (times the causal mask if causal) mixes the values.
  bool normalize_fixed = true;

  bool uses_kernel() const noexcept;
  void validate(std::size_t seq_len) const;
};

/// Gamma(K): 1 where |i - j| <= k.
Tensor window_mask(std::size_t n, std::size_t k);

struct MixContext {
  Rng* rng = nullptr;
  bool training = false;
  double attn_dropout = 0.0;
  bool accelerated = false;  // route DWC through the FFT
};

/// A token mixer maps R [L, D] to S [L, D]. Implementations hold the ids of
/// the parameters they registered at construction.
class TokenMixer {
 public:
  virtual ~TokenMixer() = default;
  virtual Var forward(Tape& t, const ParameterSet& params, Var r, MixContext& ctx) const = 0;
  /// True for SAR_W: the block skips its mixer sub-layer entirely.
  virtual bool bypass() const { return false; }
  const MixerSpec& spec() const noexcept { return spec_; }

 protected:
  explicit TokenMixer(MixerSpec spec) : spec_(spec) {}
  MixerSpec spec_;
};

/// Registers the parameters for `spec` under `prefix` (weights ~ N(0, 0.02^2),
/// biases 0) and returns the mixer.
std::unique_ptr<TokenMixer> make_mixer(const MixerSpec& spec, std::size_t seq_len, std::size_t dim,
                                       ParameterSet& params, const std::string& prefix, Rng& init_rng);

inline constexpr double kInitStd = 0.02;

// Tape-level building blocks, also used directly by tests.

struct Projection {
  Var weight;
  Var bias;
};

struct AttentionOptions {
  bool causal = true;
  std::optional<std::size_t> window;
  WindowMode window_mode = WindowMode::Additive;
};

/// softmax(Q K^T / sqrt(D) with masks) applied to V. Q, K, V are [L, D].
Var attend(Tape& t, Var q, Var k, Var v, const AttentionOptions& opt, MixContext& ctx);

Var self_attention(Tape& t, Var r, const Projection& q, const Projection& k, const Projection& v,
                   const AttentionOptions& opt, MixContext& ctx);
/// row_normalize(A) (R W_V + b_V); see MixerSpec::normalize_fixed.
Var fixed_matrix_attention(Tape& t, Var r, Var a, const Projection& v, bool normalize, bool causal, MixContext& ctx);
/// Attention row l = R_l W_P + b_P, row-softmaxed.
Var personalized_attention(Tape& t, Var r, const Projection& p, const Projection& v, bool causal, MixContext& ctx);
/// Per-position projections: W [L, D, D], b [L, D].
Var sar_n(Tape& t, Var r, const Projection& q, const Projection& k, const Projection& v, bool causal, MixContext& ctx);
/// Projections of the flattened sequence: W [LD, LD], b [LD].
Var sar_nplus(Tape& t, Var r, const Projection& q, const Projection& k, const Projection& v, bool causal,
              MixContext& ctx);
inline Var sar_w(Var r) { return r; }
/// W R with W [L, L]; the causal flag keeps only the lower triangle of W.
Var mlp_mixer(Tape& t, Var r, Var w, bool causal);
/// CONV_S: depth-wise stage C [K, D] followed by a 1x1 channel mix P [D, D].
Var separable_conv(Tape& t, Var r, Var c, Var pointwise, Padding padding, bool causal, bool use_fft);

// Value-level conveniences.

struct AttentionWeights {
  Tensor wq, bq, wk, bk, wv, bv;
};

Tensor self_attention(const Tensor& r, const AttentionWeights& w, const AttentionOptions& opt);
Tensor fixed_matrix_attention(const Tensor& r, const Tensor& a, const Tensor& wv, const Tensor& bv, bool normalize,
                              bool causal);
Tensor personalized_attention(const Tensor& r, const Tensor& wp, const Tensor& bp, const Tensor& wv, const Tensor& bv,
                              bool causal);
Tensor mlp_mixer(const Tensor& r, const Tensor& w, bool causal = false);

/// Runs a registered mixer in inference mode.
Tensor apply(const TokenMixer& mixer, const ParameterSet& params, const Tensor& r, bool accelerated = false);

}  // namespace convformer::mixers
