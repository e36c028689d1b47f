#pragma once

#include <cstdint>
#include <span>

#include "convformer/autodiff.hpp"
#include "convformer/rng.hpp"
#include "convformer/tensor.hpp"

namespace convformer {

inline constexpr double kLayerNormEps = 1e-12;

// Value-level primitives. All are pure: equal inputs give bit-identical
// outputs.

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k] x [k,n]
Tensor matmul_bt(const Tensor& a, const Tensor& b);  // [m,k] x [n,k]^T
Tensor matmul_at(const Tensor& a, const Tensor& b);  // [k,m]^T x [k,n]
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor add_row_bias(const Tensor& x, const Tensor& bias);
Tensor relu(const Tensor& x);

/// Row-wise normalisation over the last axis with the biased (1/D)
/// variance, then `gamma * xhat + beta`.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = kLayerNormEps);

/// Row-wise softmax with max subtraction. `mask` (optional, same shape,
/// entries 0/1) removes entries before normalisation; removed entries are
/// exactly zero in the result. A row with no surviving entry is an error.
Tensor softmax_rows(const Tensor& logits, const Tensor* mask = nullptr);

/// Inverted-dropout keep mask: entries are 0 with probability p and
/// 1/(1-p) otherwise.
Tensor dropout_mask(const Shape& shape, double p, Rng& rng);
Tensor dropout(const Tensor& x, double p, Rng& rng, bool training);

/// 1 where j <= i.
Tensor causal_mask(std::size_t n);

namespace ag {

// Tape-recording counterparts. Each returns the result node and records an
// adjoint when any input requires a gradient.

Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
Var mul(Tape& t, Var a, Var b);
Var mul_const(Tape& t, Var a, const Tensor& c);
Var add_row_bias(Tape& t, Var x, Var bias);
Var matmul(Tape& t, Var a, Var b);
Var matmul_bt(Tape& t, Var a, Var b);
Var relu(Tape& t, Var x);
Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps = kLayerNormEps);
Var softmax_rows(Tape& t, Var logits, const Tensor* mask = nullptr);
Var dropout(Tape& t, Var x, double p, Rng& rng, bool training);
Var sum(Tape& t, Var x);
Var reshape(Tape& t, Var x, Shape shape);

/// Row r of a 2-D tensor, as a rank-1 tensor.
Var row(Tape& t, Var x, std::size_t r);

/// Rows `ids` of a parameter table. The adjoint scatters into the
/// parameter gradient directly, touching only the gathered rows.
Var gather_rows(Tape& t, const ParameterSet& params, ParamId table, std::span<const std::uint32_t> ids);

/// out[i] = <a[i,:], b[i,:]>.
Var rowwise_dot(Tape& t, Var a, Var b);

/// Position-specific affine map: out[l,:] = x[l,:] W[l] + bias[l,:], with
/// W of shape [L, D, E] and bias [L, E].
Var per_row_affine(Tape& t, Var x, Var w, Var bias);

/// Pairwise ranking loss -sum_i weight[i] * log sigmoid(pos[i] - neg[i]).
Var bpr_loss(Tape& t, Var pos_scores, Var neg_scores, const Tensor& weights);

}  // namespace ag

}  // namespace convformer
