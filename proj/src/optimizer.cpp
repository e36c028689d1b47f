#include "convformer/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace convformer {

void adam_step(ParameterSet& params, const Gradients& grads, AdamState& state, const AdamOptions& opt, std::uint64_t t) {
  if (t < 1) throw std::invalid_argument("adam_step: t must be >= 1");
  if (!(opt.lr >= 0.0)) throw std::invalid_argument("adam_step: lr must be >= 0");
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (ParamId id = 0; id < params.size(); ++id) {
      state.m.emplace_back(params.value(id).shape(), 0.0);
      state.v.emplace_back(params.value(id).shape(), 0.0);
    }
  }
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
  for (ParamId id = 0; id < params.size(); ++id) {
    if (!params.trainable(id)) continue;
    const Tensor* g = grads.find(id);
    auto w = params.mutable_value(id).data();
    auto m = state.m[id].data();
    auto v = state.v[id].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g ? (*g)[i] : 0.0;
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * gi;
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
  }
  state.t = t;
}

void Adam::step(ParameterSet& params, const Gradients& grads) { adam_step(params, grads, state_, opt_, state_.t + 1); }

}  // namespace convformer
