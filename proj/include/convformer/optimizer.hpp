#pragma once

#include <cstdint>
#include <vector>

#include "convformer/autodiff.hpp"

namespace convformer {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moment estimates, one pair per parameter.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;  // steps taken so far
};

/// Bias-corrected Adam update at step `t` (1-based). Parameters without a
/// gradient slot see a zero gradient; frozen parameters are left alone.
void adam_step(ParameterSet& params, const Gradients& grads, AdamState& state, const AdamOptions& opt, std::uint64_t t);

class Adam {
 public:
  explicit Adam(AdamOptions opt = {}) : opt_(opt) {}
  void step(ParameterSet& params, const Gradients& grads);
  const AdamState& state() const noexcept { return state_; }
  const AdamOptions& options() const noexcept { return opt_; }

 private:
  AdamOptions opt_;
  AdamState state_;
};

}  // namespace convformer
