#include "convformer/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "convformer/error.hpp"

namespace convformer {

void ModelConfig::validate() const {
  if (max_len < 1) throw UserError("max_len must be >= 1");
  if (hidden < 1) throw UserError("hidden must be >= 1");
  if (vocab_size < 2) throw UserError("vocab_size must be >= 2 (padding plus one item)");
  if (!(dropout_hidden >= 0.0 && dropout_hidden < 1.0)) throw UserError("dropout_hidden must be in [0, 1)");
  if (!(dropout_attn >= 0.0 && dropout_attn < 1.0)) throw UserError("dropout_attn must be in [0, 1)");
  if (!(ln_eps > 0.0)) throw UserError("ln_eps must be positive");
  mixer.validate(max_len);
  if (accelerated && mixer.uses_kernel() && mixer.padding == mixers::Padding::Reflect) {
    throw UserError("accelerated forward does not support reflect padding");
  }
}

namespace {

Tensor normal_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal(0.0, mixers::kInitStd);
  return t;
}

}  // namespace

Model::Model(const ModelConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  Rng rng(init_seed);
  const std::size_t L = config_.max_len, D = config_.hidden;

  Tensor items = normal_tensor({config_.vocab_size, D}, rng);
  for (auto& v : items.row(kPaddingItem)) v = 0.0;
  item_emb_ = params_.add("item_emb", std::move(items));
  pos_emb_ = params_.add("pos_emb", normal_tensor({L, D}, rng));
  emb_ln_gamma_ = params_.add("emb_ln.gamma", Tensor({D}, 1.0));
  emb_ln_beta_ = params_.add("emb_ln.beta", Tensor({D}, 0.0));

  for (std::size_t n = 0; n < config_.layers; ++n) {
    const std::string p = "layers." + std::to_string(n);
    mixers_.push_back(mixers::make_mixer(config_.mixer, L, D, params_, p + ".mixer", rng));
    LayerIds ids{};
    ids.ln1_gamma = params_.add(p + ".ln1.gamma", Tensor({D}, 1.0));
    ids.ln1_beta = params_.add(p + ".ln1.beta", Tensor({D}, 0.0));
    ids.w1 = params_.add(p + ".ffn.w1", normal_tensor({D, D}, rng));
    ids.b1 = params_.add(p + ".ffn.b1", Tensor({D}, 0.0));
    ids.w2 = params_.add(p + ".ffn.w2", normal_tensor({D, D}, rng));
    ids.b2 = params_.add(p + ".ffn.b2", Tensor({D}, 0.0));
    ids.ln2_gamma = params_.add(p + ".ln2.gamma", Tensor({D}, 1.0));
    ids.ln2_beta = params_.add(p + ".ln2.beta", Tensor({D}, 0.0));
    layer_ids_.push_back(ids);
  }
}

Var Model::embed(Tape& t, std::span<const ItemId> items, Rng* rng, bool training) const {
  if (items.size() != config_.max_len) {
    throw std::invalid_argument("embed: sequence length " + std::to_string(items.size()) + " != L=" +
                                std::to_string(config_.max_len));
  }
  for (ItemId id : items) {
    if (id >= config_.vocab_size) {
      throw UserError("item id " + std::to_string(id) + " out of range [0, " + std::to_string(config_.vocab_size) + ")");
    }
  }
  Var e = ag::add(t, ag::gather_rows(t, params_, item_emb_, items), t.param(params_, pos_emb_));
  e = ag::layer_norm(t, e, t.param(params_, emb_ln_gamma_), t.param(params_, emb_ln_beta_), config_.ln_eps);
  if (training && config_.dropout_hidden > 0.0) e = ag::dropout(t, e, config_.dropout_hidden, *rng, true);
  return e;
}

Var Model::ffn_sublayer(Tape& t, std::size_t layer, Var r, Rng* rng, bool training) const {
  const LayerIds& ids = layer_ids_.at(layer);
  Var h = ag::relu(t, ag::add_row_bias(t, ag::matmul(t, r, t.param(params_, ids.w1)), t.param(params_, ids.b1)));
  h = ag::add_row_bias(t, ag::matmul(t, h, t.param(params_, ids.w2)), t.param(params_, ids.b2));
  if (training && config_.dropout_hidden > 0.0) h = ag::dropout(t, h, config_.dropout_hidden, *rng, true);
  return ag::layer_norm(t, ag::add(t, r, h), t.param(params_, ids.ln2_gamma), t.param(params_, ids.ln2_beta),
                        config_.ln_eps);
}

Var Model::block(Tape& t, std::size_t layer, Var r, Rng* rng, bool training, bool accelerated) const {
  const LayerIds& ids = layer_ids_.at(layer);
  const mixers::TokenMixer& mix = *mixers_.at(layer);
  Var mid = r;
  if (!mix.bypass()) {
    mixers::MixContext ctx;
    ctx.rng = rng;
    ctx.training = training;
    ctx.attn_dropout = config_.dropout_attn;
    ctx.accelerated = accelerated;
    Var s = mix.forward(t, params_, r, ctx);
    if (training && config_.dropout_hidden > 0.0) s = ag::dropout(t, s, config_.dropout_hidden, *rng, true);
    mid = ag::layer_norm(t, ag::add(t, r, s), t.param(params_, ids.ln1_gamma), t.param(params_, ids.ln1_beta),
                         config_.ln_eps);
  }
  return ffn_sublayer(t, layer, mid, rng, training);
}

Var Model::encode(Tape& t, std::span<const ItemId> items, Rng* rng, bool training,
                  std::optional<bool> accelerated) const {
  if (training && !rng) throw std::invalid_argument("training forward needs an Rng");
  const bool accel = accelerated.value_or(config_.accelerated);
  if (accel && config_.mixer.uses_kernel() && config_.mixer.padding == mixers::Padding::Reflect) {
    throw UserError("accelerated forward does not support reflect padding");
  }
  Var r = embed(t, items, rng, training);
  for (std::size_t n = 0; n < config_.layers; ++n) r = block(t, n, r, rng, training, accel);
  return r;
}

Tensor Model::forward(std::span<const ItemId> items, Rng* rng, bool training, std::optional<bool> accelerated) const {
  Tape t(false);
  Var h = encode(t, items, rng, training, accelerated);
  auto last = t.value(h).row(config_.max_len - 1);
  return Tensor({config_.hidden}, std::vector<double>(last.begin(), last.end()));
}

double Model::score(std::span<const double> user_repr, ItemId item) const {
  if (item == kPaddingItem) throw UserError("cannot score the padding item");
  if (item >= config_.vocab_size) throw UserError("item id " + std::to_string(item) + " out of range");
  if (user_repr.size() != config_.hidden) throw std::invalid_argument("score: representation length != D");
  auto e = params_.value(item_emb_).row(item);
  double s = 0.0;
  for (std::size_t j = 0; j < e.size(); ++j) s += e[j] * user_repr[j];
  return s;
}

std::vector<double> Model::score_candidates(std::span<const double> user_repr, std::span<const ItemId> items) const {
  std::vector<double> out;
  out.reserve(items.size());
  for (ItemId c : items) out.push_back(score(user_repr, c));
  return out;
}

Var Model::sequence_loss(Tape& t, const TrainingExample& ex, Rng* rng, bool training,
                         std::optional<bool> accelerated) const {
  const std::size_t L = config_.max_len;
  if (ex.input.size() != L || ex.positives.size() != L || ex.negatives.size() != L) {
    throw std::invalid_argument("sequence_loss: example arrays must have length L");
  }
  Tensor weights({L}, 0.0);
  bool any = false;
  for (std::size_t l = 0; l < L; ++l) {
    // a target with an all-padding prefix carries no signal
    if (ex.positives[l] != kPaddingItem && ex.input[l] != kPaddingItem) {
      weights[l] = 1.0;
      any = true;
    }
  }
  if (!any) throw UserError("sequence_loss: example has no valid positions");
  Var h = encode(t, ex.input, rng, training, accelerated);
  Var pos = ag::rowwise_dot(t, h, ag::gather_rows(t, params_, item_emb_, ex.positives));
  Var neg = ag::rowwise_dot(t, h, ag::gather_rows(t, params_, item_emb_, ex.negatives));
  return ag::bpr_loss(t, pos, neg, weights);
}

void Model::mask_gradients(Gradients& grads) const {
  if (grads.find(item_emb_)) {
    for (auto& v : grads.slot(item_emb_).row(kPaddingItem)) v = 0.0;
  }
}

double bpr_loss(std::span<const double> pos_scores, std::span<const double> neg_scores) {
  if (pos_scores.empty()) throw std::invalid_argument("bpr_loss: empty batch");
  if (pos_scores.size() != neg_scores.size()) throw std::invalid_argument("bpr_loss: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < pos_scores.size(); ++i) {
    const double m = pos_scores[i] - neg_scores[i];
    total += m > 0.0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
  }
  return total;
}

}  // namespace convformer
