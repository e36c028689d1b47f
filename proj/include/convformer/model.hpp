#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "convformer/autodiff.hpp"
#include "convformer/mixers.hpp"
#include "convformer/ops.hpp"
#include "convformer/rng.hpp"

namespace convformer {

using ItemId = std::uint32_t;
inline constexpr ItemId kPaddingItem = 0;

struct ModelConfig {
  std::size_t max_len = 50;     // L
  std::size_t hidden = 64;      // D
  std::size_t layers = 2;       // N
  mixers::MixerSpec mixer{};    // defaults: DWC, K = 45, circular padding
  double dropout_hidden = 0.5;
  double dropout_attn = 0.5;
  std::size_t vocab_size = 2;   // item count + 1; id 0 is padding
  double ln_eps = kLayerNormEps;
  bool accelerated = false;     // route DWC through the FFT

  void validate() const;
};

/// One training sequence: left-padded inputs and, per position, the target
/// and a sampled negative. Positions whose target is 0 carry no loss.
struct TrainingExample {
  std::vector<ItemId> input;
  std::vector<ItemId> positives;
  std::vector<ItemId> negatives;
};

/// Embedding -> N blocks (token mixer + position-wise FFN, each with
/// residual, dropout and layer norm) -> dot-product scorer against the
/// shared item embedding table.
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t init_seed);

  const ModelConfig& config() const noexcept { return config_; }
  const ParameterSet& params() const noexcept { return params_; }
  ParameterSet& params() noexcept { return params_; }
  const mixers::TokenMixer& mixer(std::size_t layer) const { return *mixers_.at(layer); }

  ParamId item_embedding() const noexcept { return item_emb_; }

  /// Dropout(LayerNorm(E_I[items] + E_P)). `items` must have length L.
  Var embed(Tape& t, std::span<const ItemId> items, Rng* rng, bool training) const;
  /// One block: R^ = LN(R + Drop(Mix(R))), R~ = LN(R^ + Drop(FFN(R^))).
  Var block(Tape& t, std::size_t layer, Var r, Rng* rng, bool training, bool accelerated) const;
  /// The FFN sub-layer alone: LN(R + Drop(FFN(R))).
  Var ffn_sublayer(Tape& t, std::size_t layer, Var r, Rng* rng, bool training) const;
  /// Hidden states for every position, [L, D].
  Var encode(Tape& t, std::span<const ItemId> items, Rng* rng, bool training,
             std::optional<bool> accelerated = std::nullopt) const;

  /// Representation of the sequence: the last row of encode().
  Tensor forward(std::span<const ItemId> items, Rng* rng = nullptr, bool training = false,
                 std::optional<bool> accelerated = std::nullopt) const;

  double score(std::span<const double> user_repr, ItemId item) const;
  std::vector<double> score_candidates(std::span<const double> user_repr, std::span<const ItemId> items) const;

  /// Summed pairwise loss over the example's valid positions.
  Var sequence_loss(Tape& t, const TrainingExample& ex, Rng* rng, bool training,
                    std::optional<bool> accelerated = std::nullopt) const;

  /// Clears gradients that must not move parameters (the padding row).
  void mask_gradients(Gradients& grads) const;

 private:
  struct LayerIds {
    ParamId ln1_gamma, ln1_beta, w1, b1, w2, b2, ln2_gamma, ln2_beta;
  };

  ModelConfig config_;
  ParameterSet params_;
  ParamId item_emb_, pos_emb_, emb_ln_gamma_, emb_ln_beta_;
  std::vector<LayerIds> layer_ids_;
  std::vector<std::unique_ptr<mixers::TokenMixer>> mixers_;
};

/// Bounds-checked pairwise ranking loss on raw score arrays (one term per
/// pair): -sum log sigmoid(pos - neg).
double bpr_loss(std::span<const double> pos_scores, std::span<const double> neg_scores);

}  // namespace convformer
