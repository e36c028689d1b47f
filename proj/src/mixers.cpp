#include "convformer/mixers.hpp"

#include <cmath>
#include <stdexcept>

#include "convformer/error.hpp"
#include "convformer/ops.hpp"

namespace convformer::mixers {

namespace {

struct KindName {
  MixerKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {MixerKind::SA, "SA"},
    {MixerKind::SA_WINDOWED, "SA_WINDOWED"},
    {MixerKind::SAR_O, "SAR_O"},
    {MixerKind::SAR_P, "SAR_P"},
    {MixerKind::SAR_R, "SAR_R"},
    {MixerKind::SAR_N, "SAR_N"},
    {MixerKind::SAR_NPLUS, "SAR_NPLUS"},
    {MixerKind::SAR_W, "SAR_W"},
    {MixerKind::DWC_DIRECT, "DWC_DIRECT"},
    {MixerKind::DWC_FFT, "DWC_FFT"},
    {MixerKind::CONV_V, "CONV_V"},
    {MixerKind::CONV_S, "CONV_S"},
    {MixerKind::MLP_MIXER, "MLP_MIXER"},
};

Tensor normal_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal(0.0, kInitStd);
  return t;
}

Projection param_projection(Tape& t, const ParameterSet& params, ParamId w, ParamId b) {
  return {t.param(params, w), t.param(params, b)};
}

Var project(Tape& t, Var r, const Projection& p) { return ag::add_row_bias(t, ag::matmul(t, r, p.weight), p.bias); }

Var mix_values(Tape& t, Var a, Var v, MixContext& ctx) {
  if (ctx.training && ctx.attn_dropout > 0.0) {
    if (!ctx.rng) throw std::logic_error("attention dropout needs an Rng");
    a = ag::dropout(t, a, ctx.attn_dropout, *ctx.rng, true);
  }
  return ag::matmul(t, a, v);
}

/// Row-normalised attention from raw scores under an optional causal mask.
Var normalise_scores(Tape& t, Var scores, bool causal) {
  if (!causal) return ag::softmax_rows(t, scores);
  const Tensor mask = causal_mask(t.value(scores).rows());
  return ag::softmax_rows(t, scores, &mask);
}

// ---------------------------------------------------------------------------

class AttentionMixer final : public TokenMixer {
 public:
  AttentionMixer(const MixerSpec& spec, std::size_t L, std::size_t D, ParameterSet& ps, const std::string& prefix,
                 Rng& rng)
      : TokenMixer(spec) {
    const bool per_step = spec.kind == MixerKind::SAR_N;
    const bool flat = spec.kind == MixerKind::SAR_NPLUS;
    Shape wshape = per_step ? Shape{L, D, D} : flat ? Shape{L * D, L * D} : Shape{D, D};
    Shape bshape = per_step ? Shape{L, D} : flat ? Shape{L * D} : Shape{D};
    wq_ = ps.add(prefix + ".wq", normal_tensor(wshape, rng));
    bq_ = ps.add(prefix + ".bq", Tensor(bshape, 0.0));
    wk_ = ps.add(prefix + ".wk", normal_tensor(wshape, rng));
    bk_ = ps.add(prefix + ".bk", Tensor(bshape, 0.0));
    wv_ = ps.add(prefix + ".wv", normal_tensor({D, D}, rng));
    bv_ = ps.add(prefix + ".bv", Tensor({D}, 0.0));
  }

  Var forward(Tape& t, const ParameterSet& ps, Var r, MixContext& ctx) const override {
    const auto q = param_projection(t, ps, wq_, bq_);
    const auto k = param_projection(t, ps, wk_, bk_);
    const auto v = param_projection(t, ps, wv_, bv_);
    switch (spec_.kind) {
      case MixerKind::SAR_N: return sar_n(t, r, q, k, v, spec_.causal, ctx);
      case MixerKind::SAR_NPLUS: return sar_nplus(t, r, q, k, v, spec_.causal, ctx);
      default: break;
    }
    AttentionOptions opt;
    opt.causal = spec_.causal;
    opt.window_mode = spec_.window_mode;
    if (spec_.kind == MixerKind::SA_WINDOWED) opt.window = spec_.window;
    return self_attention(t, r, q, k, v, opt, ctx);
  }

 private:
  ParamId wq_, bq_, wk_, bk_, wv_, bv_;
};

class FixedMatrixMixer final : public TokenMixer {
 public:
  FixedMatrixMixer(const MixerSpec& spec, std::size_t L, std::size_t D, ParameterSet& ps, const std::string& prefix,
                   Rng& rng)
      : TokenMixer(spec) {
    const bool frozen = spec.kind == MixerKind::SAR_R;
    a_ = ps.add(prefix + ".attn", normal_tensor({L, L}, rng), !frozen);
    wv_ = ps.add(prefix + ".wv", normal_tensor({D, D}, rng));
    bv_ = ps.add(prefix + ".bv", Tensor({D}, 0.0));
  }

  Var forward(Tape& t, const ParameterSet& ps, Var r, MixContext& ctx) const override {
    return fixed_matrix_attention(t, r, t.param(ps, a_), param_projection(t, ps, wv_, bv_), spec_.normalize_fixed,
                                  spec_.causal, ctx);
  }

 private:
  ParamId a_, wv_, bv_;
};

class PersonalizedMixer final : public TokenMixer {
 public:
  PersonalizedMixer(const MixerSpec& spec, std::size_t L, std::size_t D, ParameterSet& ps, const std::string& prefix,
                    Rng& rng)
      : TokenMixer(spec) {
    wp_ = ps.add(prefix + ".wp", normal_tensor({D, L}, rng));
    bp_ = ps.add(prefix + ".bp", Tensor({L}, 0.0));
    wv_ = ps.add(prefix + ".wv", normal_tensor({D, D}, rng));
    bv_ = ps.add(prefix + ".bv", Tensor({D}, 0.0));
  }

  Var forward(Tape& t, const ParameterSet& ps, Var r, MixContext& ctx) const override {
    return personalized_attention(t, r, param_projection(t, ps, wp_, bp_), param_projection(t, ps, wv_, bv_),
                                  spec_.causal, ctx);
  }

 private:
  ParamId wp_, bp_, wv_, bv_;
};

class IdentityMixer final : public TokenMixer {
 public:
  explicit IdentityMixer(const MixerSpec& spec) : TokenMixer(spec) {}
  Var forward(Tape&, const ParameterSet&, Var r, MixContext&) const override { return sar_w(r); }
  bool bypass() const override { return true; }
};

class ConvMixer final : public TokenMixer {
 public:
  ConvMixer(const MixerSpec& spec, std::size_t, std::size_t D, ParameterSet& ps, const std::string& prefix, Rng& rng)
      : TokenMixer(spec) {
    const std::size_t K = spec.kernel_size;
    if (spec.kind == MixerKind::CONV_V) {
      kernel_ = ps.add(prefix + ".kernel", normal_tensor({K, D, D}, rng));
    } else {
      kernel_ = ps.add(prefix + ".kernel", normal_tensor({K, D}, rng));
    }
    if (spec.kind == MixerKind::CONV_S) pointwise_ = ps.add(prefix + ".pointwise", normal_tensor({D, D}, rng));
  }

  Var forward(Tape& t, const ParameterSet& ps, Var r, MixContext& ctx) const override {
    const Var c = t.param(ps, kernel_);
    const bool use_fft = spec_.kind == MixerKind::DWC_FFT || ctx.accelerated;
    switch (spec_.kind) {
      case MixerKind::CONV_V: return ag::conv_full(t, r, c, spec_.padding, spec_.causal);
      case MixerKind::CONV_S:
        return separable_conv(t, r, c, t.param(ps, *pointwise_), spec_.padding, spec_.causal,
                              use_fft && spec_.padding != Padding::Reflect);
      default: break;
    }
    if (use_fft && spec_.padding == Padding::Reflect) {
      throw UserError("accelerated DWC does not support reflect padding; use the direct path");
    }
    return ag::dwc(t, r, c, spec_.padding, spec_.causal, use_fft);
  }

 private:
  ParamId kernel_;
  std::optional<ParamId> pointwise_;
};

class MlpTokenMixer final : public TokenMixer {
 public:
  MlpTokenMixer(const MixerSpec& spec, std::size_t L, std::size_t, ParameterSet& ps, const std::string& prefix,
                Rng& rng)
      : TokenMixer(spec) {
    w_ = ps.add(prefix + ".w", normal_tensor({L, L}, rng));
  }

  Var forward(Tape& t, const ParameterSet& ps, Var r, MixContext&) const override {
    return mlp_mixer(t, r, t.param(ps, w_), spec_.causal);
  }

 private:
  ParamId w_;
};

}  // namespace

std::string to_string(MixerKind k) {
  for (const auto& e : kKindNames) {
    if (e.kind == k) return e.name;
  }
  return "?";
}

MixerKind parse_mixer_kind(std::string_view s) {
  for (const auto& e : kKindNames) {
    if (s == e.name) return e.kind;
  }
  if (s == "DWC") return MixerKind::DWC_DIRECT;
  throw UserError("unknown mixer kind '" + std::string(s) + "'");
}

const std::vector<MixerKind>& all_mixer_kinds() {
  static const std::vector<MixerKind> kinds = [] {
    std::vector<MixerKind> v;
    for (const auto& e : kKindNames) v.push_back(e.kind);
    return v;
  }();
  return kinds;
}

bool MixerSpec::uses_kernel() const noexcept {
  switch (kind) {
    case MixerKind::DWC_DIRECT:
    case MixerKind::DWC_FFT:
    case MixerKind::CONV_V:
    case MixerKind::CONV_S: return true;
    default: return false;
  }
}

void MixerSpec::validate(std::size_t seq_len) const {
  if (uses_kernel() && (kernel_size < 1 || kernel_size > seq_len)) {
    throw UserError("kernel size " + std::to_string(kernel_size) + " must be in [1, L=" + std::to_string(seq_len) + "]");
  }
  if (kind == MixerKind::SA_WINDOWED && window > seq_len) {
    throw UserError("attention window " + std::to_string(window) + " must be in [0, L=" + std::to_string(seq_len) + "]");
  }
  if (kind == MixerKind::DWC_FFT && padding == Padding::Reflect) {
    throw UserError("DWC_FFT does not support reflect padding; use DWC_DIRECT");
  }
}

Tensor window_mask(std::size_t n, std::size_t k) {
  Tensor m({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m(i, j) = (i > j ? i - j : j - i) <= k ? 1.0 : 0.0;
  return m;
}

std::unique_ptr<TokenMixer> make_mixer(const MixerSpec& spec, std::size_t L, std::size_t D, ParameterSet& ps,
                                       const std::string& prefix, Rng& rng) {
  spec.validate(L);
  switch (spec.kind) {
    case MixerKind::SA:
    case MixerKind::SA_WINDOWED:
    case MixerKind::SAR_N:
    case MixerKind::SAR_NPLUS: return std::make_unique<AttentionMixer>(spec, L, D, ps, prefix, rng);
    case MixerKind::SAR_O:
    case MixerKind::SAR_R: return std::make_unique<FixedMatrixMixer>(spec, L, D, ps, prefix, rng);
    case MixerKind::SAR_P: return std::make_unique<PersonalizedMixer>(spec, L, D, ps, prefix, rng);
    case MixerKind::SAR_W: return std::make_unique<IdentityMixer>(spec);
    case MixerKind::DWC_DIRECT:
    case MixerKind::DWC_FFT:
    case MixerKind::CONV_V:
    case MixerKind::CONV_S: return std::make_unique<ConvMixer>(spec, L, D, ps, prefix, rng);
    case MixerKind::MLP_MIXER: return std::make_unique<MlpTokenMixer>(spec, L, D, ps, prefix, rng);
  }
  throw std::logic_error("make_mixer: unhandled kind");
}

Var attend(Tape& t, Var q, Var k, Var v, const AttentionOptions& opt, MixContext& ctx) {
  const std::size_t L = t.value(q).rows();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(t.value(q).cols()));
  Var logits = ag::scale(t, ag::matmul_bt(t, q, k), inv_sqrt_d);

  std::optional<Tensor> mask;
  if (opt.causal) mask = causal_mask(L);
  std::optional<Tensor> gamma;
  if (opt.window) gamma = window_mask(L, *opt.window);
  if (gamma && opt.window_mode == WindowMode::Additive) {
    if (!mask) mask = Tensor({L, L}, 1.0);
    for (std::size_t i = 0; i < mask->size(); ++i) (*mask)[i] *= (*gamma)[i];
  }
  Var a = ag::softmax_rows(t, logits, mask ? &*mask : nullptr);
  if (gamma && opt.window_mode == WindowMode::Multiplicative) a = ag::mul_const(t, a, *gamma);
  return mix_values(t, a, v, ctx);
}

Var self_attention(Tape& t, Var r, const Projection& q, const Projection& k, const Projection& v,
                   const AttentionOptions& opt, MixContext& ctx) {
  return attend(t, project(t, r, q), project(t, r, k), project(t, r, v), opt, ctx);
}

Var fixed_matrix_attention(Tape& t, Var r, Var a, const Projection& v, bool normalize, bool causal, MixContext& ctx) {
  const std::size_t L = t.value(r).rows();
  require_shape(t.value(a), {L, L}, "fixed attention matrix");
  Var weights;
  if (normalize) {
    weights = normalise_scores(t, a, causal);
  } else {
    weights = causal ? ag::mul_const(t, a, causal_mask(L)) : a;
  }
  return mix_values(t, weights, project(t, r, v), ctx);
}

Var personalized_attention(Tape& t, Var r, const Projection& p, const Projection& v, bool causal, MixContext& ctx) {
  return mix_values(t, normalise_scores(t, project(t, r, p), causal), project(t, r, v), ctx);
}

Var sar_n(Tape& t, Var r, const Projection& q, const Projection& k, const Projection& v, bool causal,
          MixContext& ctx) {
  Var qn = ag::per_row_affine(t, r, q.weight, q.bias);
  Var kn = ag::per_row_affine(t, r, k.weight, k.bias);
  AttentionOptions opt;
  opt.causal = causal;
  return attend(t, qn, kn, project(t, r, v), opt, ctx);
}

Var sar_nplus(Tape& t, Var r, const Projection& q, const Projection& k, const Projection& v, bool causal,
              MixContext& ctx) {
  const Shape shape = t.value(r).shape();
  const std::size_t flat = shape_numel(shape);
  Var fr = ag::reshape(t, r, {1, flat});
  Var qf = ag::reshape(t, project(t, fr, q), shape);
  Var kf = ag::reshape(t, project(t, fr, k), shape);
  AttentionOptions opt;
  opt.causal = causal;
  return attend(t, qf, kf, project(t, r, v), opt, ctx);
}

Var mlp_mixer(Tape& t, Var r, Var w, bool causal) {
  const std::size_t L = t.value(r).rows();
  require_shape(t.value(w), {L, L}, "mlp mixer weight");
  if (causal) w = ag::mul_const(t, w, causal_mask(L));
  return ag::matmul(t, w, r);
}

Var separable_conv(Tape& t, Var r, Var c, Var pointwise, Padding padding, bool causal, bool use_fft) {
  return ag::matmul(t, ag::dwc(t, r, c, padding, causal, use_fft), pointwise);
}

namespace {

Projection constant_projection(Tape& t, const Tensor& w, const Tensor& b) { return {t.constant(w), t.constant(b)}; }

}  // namespace

Tensor self_attention(const Tensor& r, const AttentionWeights& w, const AttentionOptions& opt) {
  Tape t(false);
  MixContext ctx;
  Var out = self_attention(t, t.constant(r), constant_projection(t, w.wq, w.bq), constant_projection(t, w.wk, w.bk),
                           constant_projection(t, w.wv, w.bv), opt, ctx);
  return t.value(out);
}

Tensor fixed_matrix_attention(const Tensor& r, const Tensor& a, const Tensor& wv, const Tensor& bv, bool normalize,
                              bool causal) {
  Tape t(false);
  MixContext ctx;
  Var out = fixed_matrix_attention(t, t.constant(r), t.constant(a), constant_projection(t, wv, bv), normalize, causal, ctx);
  return t.value(out);
}

Tensor personalized_attention(const Tensor& r, const Tensor& wp, const Tensor& bp, const Tensor& wv, const Tensor& bv,
                              bool causal) {
  Tape t(false);
  MixContext ctx;
  Var out = personalized_attention(t, t.constant(r), constant_projection(t, wp, bp), constant_projection(t, wv, bv),
                                   causal, ctx);
  return t.value(out);
}

Tensor mlp_mixer(const Tensor& r, const Tensor& w, bool causal) {
  Tape t(false);
  return t.value(mlp_mixer(t, t.constant(r), t.constant(w), causal));
}

Tensor apply(const TokenMixer& mixer, const ParameterSet& params, const Tensor& r, bool accelerated) {
  Tape t(false);
  MixContext ctx;
  ctx.accelerated = accelerated;
  return t.value(mixer.forward(t, params, t.constant(r), ctx));
}

}  // namespace convformer::mixers
