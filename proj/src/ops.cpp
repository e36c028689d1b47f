#include "convformer/ops.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "convformer/error.hpp"

namespace convformer {

namespace {

void require_2d(const Tensor& t, const char* what) {
  if (t.rank() != 2) throw std::invalid_argument(std::string(what) + ": expected a 2-D tensor, got " + shape_string(t.shape()));
}

// c[m,n] += a[m,k] * b[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c[m,n] += a[m,k] * b[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c[i * n + j] += s;
    }
  }
}

// c[m,n] += a[k,m]^T * b[k,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t k, std::size_t m, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = ap[i];
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

void accumulate(Tensor* dst, const Tensor& src) {
  if (!dst) return;
  for (std::size_t i = 0; i < src.size(); ++i) (*dst)[i] += src[i];
}

struct LayerNormStats {
  std::vector<double> mean;
  std::vector<double> inv_std;
};

LayerNormStats layer_norm_stats(const Tensor& x, std::size_t d, double eps) {
  const std::size_t rows = x.size() / d;
  LayerNormStats st{std::vector<double>(rows), std::vector<double>(rows)};
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(d);
    st.mean[r] = mean;
    st.inv_std[r] = 1.0 / std::sqrt(var + eps);
  }
  return st;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  Tensor c({a.rows(), b.cols()}, 0.0);
  gemm_nn(a.data().data(), b.data().data(), c.data().data(), a.rows(), a.cols(), b.cols());
  return c;
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_bt");
  require_2d(b, "matmul_bt");
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_bt: inner dimensions differ");
  Tensor c({a.rows(), b.rows()}, 0.0);
  gemm_nt(a.data().data(), b.data().data(), c.data().data(), a.rows(), a.cols(), b.rows());
  return c;
}

Tensor matmul_at(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_at");
  require_2d(b, "matmul_at");
  if (a.rows() != b.rows()) throw std::invalid_argument("matmul_at: inner dimensions differ");
  Tensor c({a.cols(), b.cols()}, 0.0);
  gemm_tn(a.data().data(), b.data().data(), c.data().data(), a.rows(), a.cols(), b.cols());
  return c;
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  Tensor t({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("add: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t n = x.cols();
  if (bias.size() != n) throw std::invalid_argument("add_row_bias: bias length mismatch");
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bias[i % n];
  return y;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.data()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() == 0) throw std::invalid_argument("layer_norm: input must have at least one axis");
  const std::size_t d = x.shape().back();
  if (gamma.size() != d || beta.size() != d) {
    throw std::invalid_argument("layer_norm: gamma/beta length must equal last axis " + std::to_string(d));
  }
  if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be positive");
  require_finite(x, "layer_norm");
  const auto st = layer_norm_stats(x, d, eps);
  Tensor y(x.shape());
  for (std::size_t r = 0; r < st.mean.size(); ++r) {
    for (std::size_t j = 0; j < d; ++j) {
      const double xhat = (x[r * d + j] - st.mean[r]) * st.inv_std[r];
      y[r * d + j] = xhat * gamma[j] + beta[j];
    }
  }
  return y;
}

Tensor softmax_rows(const Tensor& logits, const Tensor* mask) {
  require_2d(logits, "softmax_rows");
  if (mask && !mask->same_shape(logits)) throw std::invalid_argument("softmax_rows: mask shape mismatch");
  const std::size_t rows = logits.rows(), cols = logits.cols();
  Tensor y(logits.shape(), 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < cols; ++j) {
      if (mask && (*mask)(i, j) == 0.0) continue;
      any = true;
      mx = std::max(mx, logits(i, j));
    }
    if (!any) throw std::invalid_argument("softmax_rows: row " + std::to_string(i) + " is fully masked");
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      if (mask && (*mask)(i, j) == 0.0) continue;
      const double e = std::exp(logits(i, j) - mx);
      y(i, j) = e;
      z += e;
    }
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < cols; ++j) y(i, j) *= inv;
  }
  return y;
}

Tensor dropout_mask(const Shape& shape, double p, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must be in [0, 1)");
  Tensor m(shape, 1.0);
  if (p == 0.0) return m;
  const double keep_scale = 1.0 / (1.0 - p);
  for (auto& v : m.data()) v = rng.uniform() < p ? 0.0 : keep_scale;
  return m;
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must be in [0, 1)");
  if (!training || p == 0.0) return x;
  Tensor m = dropout_mask(x.shape(), p, rng);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] *= x[i];
  return m;
}

Tensor causal_mask(std::size_t n) {
  Tensor m({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) m(i, j) = 1.0;
  return m;
}

namespace ag {

Var add(Tape& t, Var a, Var b) {
  return t.record(convformer::add(t.value(a), t.value(b)), {a, b}, [](BackwardContext& c) {
    accumulate(c.grad_input(0), c.grad_output());
    accumulate(c.grad_input(1), c.grad_output());
  });
}

Var sub(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (!av.same_shape(bv)) throw std::invalid_argument("sub: shape mismatch");
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return t.record(std::move(y), {a, b}, [](BackwardContext& c) {
    accumulate(c.grad_input(0), c.grad_output());
    if (Tensor* gb = c.grad_input(1)) {
      const Tensor& g = c.grad_output();
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
    }
  });
}

Var scale(Tape& t, Var a, double s) {
  Tensor y = t.value(a);
  for (auto& v : y.data()) v *= s;
  return t.record(std::move(y), {a}, [s](BackwardContext& c) {
    if (Tensor* ga = c.grad_input(0)) {
      const Tensor& g = c.grad_output();
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += s * g[i];
    }
  });
}

Var mul(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (!av.same_shape(bv)) throw std::invalid_argument("mul: shape mismatch");
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return t.record(std::move(y), {a, b}, [](BackwardContext& c) {
    const Tensor& g = c.grad_output();
    if (Tensor* ga = c.grad_input(0)) {
      const Tensor& bv = c.input(1);
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
    }
    if (Tensor* gb = c.grad_input(1)) {
      const Tensor& av = c.input(0);
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
    }
  });
}

Var mul_const(Tape& t, Var a, const Tensor& k) {
  const Tensor& av = t.value(a);
  if (!av.same_shape(k)) throw std::invalid_argument("mul_const: shape mismatch");
  Tensor y = av;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= k[i];
  const bool need = t.recording() && t.requires_grad(a);
  return t.record(std::move(y), {a}, [kc = need ? k : Tensor()](BackwardContext& c) {
    if (Tensor* ga = c.grad_input(0)) {
      const Tensor& g = c.grad_output();
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * kc[i];
    }
  });
}

Var add_row_bias(Tape& t, Var x, Var bias) {
  return t.record(convformer::add_row_bias(t.value(x), t.value(bias)), {x, bias}, [](BackwardContext& c) {
    const Tensor& g = c.grad_output();
    accumulate(c.grad_input(0), g);
    if (Tensor* gb = c.grad_input(1)) {
      const std::size_t n = gb->size();
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i % n] += g[i];
    }
  });
}

Var matmul(Tape& t, Var a, Var b) {
  return t.record(convformer::matmul(t.value(a), t.value(b)), {a, b}, [](BackwardContext& c) {
    const Tensor& g = c.grad_output();
    const Tensor& av = c.input(0);
    const Tensor& bv = c.input(1);
    if (Tensor* ga = c.grad_input(0)) gemm_nt(g.data().data(), bv.data().data(), ga->data().data(), g.rows(), g.cols(), bv.rows());
    if (Tensor* gb = c.grad_input(1)) gemm_tn(av.data().data(), g.data().data(), gb->data().data(), av.rows(), av.cols(), g.cols());
  });
}

Var matmul_bt(Tape& t, Var a, Var b) {
  return t.record(convformer::matmul_bt(t.value(a), t.value(b)), {a, b}, [](BackwardContext& c) {
    // y = a b^T: da = g b, db = g^T a
    const Tensor& g = c.grad_output();
    const Tensor& av = c.input(0);
    const Tensor& bv = c.input(1);
    if (Tensor* ga = c.grad_input(0)) gemm_nn(g.data().data(), bv.data().data(), ga->data().data(), g.rows(), g.cols(), bv.cols());
    if (Tensor* gb = c.grad_input(1)) gemm_tn(g.data().data(), av.data().data(), gb->data().data(), g.rows(), g.cols(), av.cols());
  });
}

Var relu(Tape& t, Var x) {
  return t.record(convformer::relu(t.value(x)), {x}, [](BackwardContext& c) {
    if (Tensor* gx = c.grad_input(0)) {
      const Tensor& g = c.grad_output();
      const Tensor& xv = c.input(0);
      // derivative at 0 is 0
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += xv[i] > 0.0 ? g[i] : 0.0;
    }
  });
}

Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps) {
  Tensor y = convformer::layer_norm(t.value(x), t.value(gamma), t.value(beta), eps);
  return t.record(std::move(y), {x, gamma, beta}, [eps](BackwardContext& c) {
    const Tensor& xv = c.input(0);
    const Tensor& gv = c.input(1);
    const Tensor& g = c.grad_output();
    const std::size_t d = xv.shape().back();
    const auto st = layer_norm_stats(xv, d, eps);
    Tensor* gx = c.grad_input(0);
    Tensor* gg = c.grad_input(1);
    Tensor* gb = c.grad_input(2);
    std::vector<double> xhat(d), dxhat(d);
    for (std::size_t r = 0; r < st.mean.size(); ++r) {
      double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        xhat[j] = (xv[r * d + j] - st.mean[r]) * st.inv_std[r];
        const double gy = g[r * d + j];
        dxhat[j] = gy * gv[j];
        mean_dxhat += dxhat[j];
        mean_dxhat_xhat += dxhat[j] * xhat[j];
        if (gg) (*gg)[j] += gy * xhat[j];
        if (gb) (*gb)[j] += gy;
      }
      if (!gx) continue;
      mean_dxhat /= static_cast<double>(d);
      mean_dxhat_xhat /= static_cast<double>(d);
      for (std::size_t j = 0; j < d; ++j) {
        (*gx)[r * d + j] += st.inv_std[r] * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
      }
    }
  });
}

Var softmax_rows(Tape& t, Var logits, const Tensor* mask) {
  return t.record(convformer::softmax_rows(t.value(logits), mask), {logits}, [](BackwardContext& c) {
    Tensor* gx = c.grad_input(0);
    if (!gx) return;
    const Tensor& y = c.output();
    const Tensor& g = c.grad_output();
    const std::size_t rows = y.rows(), cols = y.cols();
    for (std::size_t i = 0; i < rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < cols; ++j) (*gx)(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

Var dropout(Tape& t, Var x, double p, Rng& rng, bool training) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout: p must be in [0, 1)");
  if (!training || p == 0.0) return x;
  return mul_const(t, x, dropout_mask(t.value(x).shape(), p, rng));
}

Var sum(Tape& t, Var x) {
  double s = 0.0;
  for (double v : t.value(x).data()) s += v;
  return t.record(Tensor::scalar(s), {x}, [](BackwardContext& c) {
    if (Tensor* gx = c.grad_input(0)) {
      const double g = c.grad_output()[0];
      for (auto& v : gx->data()) v += g;
    }
  });
}

Var reshape(Tape& t, Var x, Shape shape) {
  return t.record(t.value(x).reshaped(std::move(shape)), {x}, [](BackwardContext& c) {
    accumulate(c.grad_input(0), c.grad_output());
  });
}

Var row(Tape& t, Var x, std::size_t r) {
  const Tensor& xv = t.value(x);
  if (xv.rank() != 2 || r >= xv.rows()) throw std::invalid_argument("row: index out of range");
  auto src = xv.row(r);
  Tensor y({xv.cols()}, std::vector<double>(src.begin(), src.end()));
  return t.record(std::move(y), {x}, [r](BackwardContext& c) {
    if (Tensor* gx = c.grad_input(0)) {
      auto dst = gx->row(r);
      const Tensor& g = c.grad_output();
      for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j];
    }
  });
}

Var gather_rows(Tape& t, const ParameterSet& params, ParamId table, std::span<const std::uint32_t> ids) {
  t.bind_parameters(params);
  const Tensor& tv = params.value(table);
  if (tv.rank() != 2) throw std::invalid_argument("gather_rows: table must be 2-D");
  const std::size_t d = tv.cols();
  Tensor y({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= tv.rows()) {
      throw UserError("gather_rows: id " + std::to_string(ids[i]) + " out of range [0, " + std::to_string(tv.rows()) + ")");
    }
    auto src = tv.row(ids[i]);
    std::copy(src.begin(), src.end(), y.row(i).begin());
  }
  const bool need = t.recording() && params.trainable(table);
  std::vector<std::uint32_t> saved;
  if (need) saved.assign(ids.begin(), ids.end());
  return t.record(std::move(y), {}, [table, saved = std::move(saved)](BackwardContext& c) {
    Tensor& gt = c.parameter_grads().slot(table);
    const Tensor& g = c.grad_output();
    const std::size_t d = g.cols();
    for (std::size_t i = 0; i < saved.size(); ++i) {
      auto dst = gt.row(saved[i]);
      for (std::size_t j = 0; j < d; ++j) dst[j] += g(i, j);
    }
  }, need);
}

Var rowwise_dot(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  if (!av.same_shape(bv) || av.rank() != 2) throw std::invalid_argument("rowwise_dot: need equal 2-D shapes");
  Tensor y({av.rows()});
  for (std::size_t i = 0; i < av.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < av.cols(); ++j) s += av(i, j) * bv(i, j);
    y[i] = s;
  }
  return t.record(std::move(y), {a, b}, [](BackwardContext& c) {
    const Tensor& g = c.grad_output();
    const Tensor& av = c.input(0);
    const Tensor& bv = c.input(1);
    Tensor* ga = c.grad_input(0);
    Tensor* gb = c.grad_input(1);
    for (std::size_t i = 0; i < av.rows(); ++i) {
      for (std::size_t j = 0; j < av.cols(); ++j) {
        if (ga) (*ga)(i, j) += g[i] * bv(i, j);
        if (gb) (*gb)(i, j) += g[i] * av(i, j);
      }
    }
  });
}

Var per_row_affine(Tape& t, Var x, Var w, Var bias) {
  const Tensor& xv = t.value(x);
  const Tensor& wv = t.value(w);
  const Tensor& bv = t.value(bias);
  if (xv.rank() != 2 || wv.rank() != 3 || wv.dim(0) != xv.rows() || wv.dim(1) != xv.cols()) {
    throw std::invalid_argument("per_row_affine: expected W of shape [L, D, E] matching x [L, D]");
  }
  const std::size_t L = xv.rows(), D = xv.cols(), E = wv.dim(2);
  require_shape(bv, {L, E}, "per_row_affine bias");
  Tensor y({L, E});
  for (std::size_t l = 0; l < L; ++l) {
    const double* wl = wv.data().data() + l * D * E;
    for (std::size_t e = 0; e < E; ++e) y(l, e) = bv(l, e);
    for (std::size_t d = 0; d < D; ++d) {
      const double xd = xv(l, d);
      for (std::size_t e = 0; e < E; ++e) y(l, e) += xd * wl[d * E + e];
    }
  }
  return t.record(std::move(y), {x, w, bias}, [L, D, E](BackwardContext& c) {
    const Tensor& g = c.grad_output();
    const Tensor& xv = c.input(0);
    const Tensor& wv = c.input(1);
    Tensor* gx = c.grad_input(0);
    Tensor* gw = c.grad_input(1);
    accumulate(c.grad_input(2), g);
    for (std::size_t l = 0; l < L; ++l) {
      const double* wl = wv.data().data() + l * D * E;
      for (std::size_t d = 0; d < D; ++d) {
        double acc = 0.0;
        for (std::size_t e = 0; e < E; ++e) {
          acc += g(l, e) * wl[d * E + e];
          if (gw) (*gw)[l * D * E + d * E + e] += xv(l, d) * g(l, e);
        }
        if (gx) (*gx)(l, d) += acc;
      }
    }
  });
}

Var bpr_loss(Tape& t, Var pos_scores, Var neg_scores, const Tensor& weights) {
  const Tensor& p = t.value(pos_scores);
  const Tensor& n = t.value(neg_scores);
  if (!p.same_shape(n) || p.size() != weights.size()) throw std::invalid_argument("bpr_loss: shape mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (weights[i] == 0.0) continue;
    const double m = p[i] - n[i];
    // -log sigmoid(m) = softplus(-m), evaluated without overflow
    const double sp = m > 0.0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
    total += weights[i] * sp;
  }
  const bool need = t.recording() && (t.requires_grad(pos_scores) || t.requires_grad(neg_scores));
  return t.record(Tensor::scalar(total), {pos_scores, neg_scores}, [w = need ? weights : Tensor()](BackwardContext& c) {
    const Tensor& p = c.input(0);
    const Tensor& n = c.input(1);
    const double g = c.grad_output()[0];
    Tensor* gp = c.grad_input(0);
    Tensor* gn = c.grad_input(1);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (w[i] == 0.0) continue;
      const double m = p[i] - n[i];
      // d/dm softplus(-m) = -sigmoid(-m)
      const double s = m > 0.0 ? std::exp(-m) / (1.0 + std::exp(-m)) : 1.0 / (1.0 + std::exp(m));
      const double d = -g * w[i] * s;
      if (gp) (*gp)[i] += d;
      if (gn) (*gn)[i] -= d;
    }
  });
}

}  // namespace ag

}  // namespace convformer
