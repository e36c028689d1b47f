#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "convformer/tensor.hpp"

namespace convformer {

using ParamId = std::size_t;

/// Named model parameters. Non-trainable entries (e.g. SAR-R's frozen
/// attention matrix) are read by the forward pass but never receive
/// gradients or optimizer updates.
class ParameterSet {
 public:
  ParamId add(std::string name, Tensor value, bool trainable = true);

  std::size_t size() const noexcept { return entries_.size(); }
  const Tensor& value(ParamId id) const { return entries_.at(id).value; }
  Tensor& mutable_value(ParamId id) { return entries_.at(id).value; }
  const std::string& name(ParamId id) const { return entries_.at(id).name; }
  bool trainable(ParamId id) const { return entries_.at(id).trainable; }
  std::optional<ParamId> find(std::string_view name) const;

  /// Total number of scalars in parameters whose name starts with `prefix`.
  std::size_t scalar_count(std::string_view prefix = {}, bool trainable_only = false) const;

 private:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable;
  };
  std::vector<Entry> entries_;
};

/// Gradient accumulator keyed by ParamId. Slots are allocated on first use.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterSet& params);

  Tensor& slot(ParamId id);
  const Tensor* find(ParamId id) const;
  std::size_t size() const noexcept { return grads_.size(); }
  void zero();
  void add(const Gradients& other);
  void scale(double s);
  double global_norm() const;

 private:
  const ParameterSet* params_ = nullptr;
  std::vector<Tensor> grads_;
};

struct Var {
  std::size_t index = static_cast<std::size_t>(-1);
};

class Tape;

/// View handed to an op's adjoint. Input gradients are allocated lazily and
/// are null for inputs that do not require a gradient.
class BackwardContext {
 public:
  const Tensor& grad_output() const;
  const Tensor& output() const;
  const Tensor& input(std::size_t k) const;
  Tensor* grad_input(std::size_t k);
  Gradients& parameter_grads() { return *params_; }

 private:
  friend class Tape;
  BackwardContext(Tape& tape, std::size_t node, Gradients& params) : tape_(tape), node_(node), params_(&params) {}
  Tape& tape_;
  std::size_t node_;
  Gradients* params_;
};

using BackwardFn = std::function<void(BackwardContext&)>;

/// Linear record of executed primitives for reverse-mode differentiation.
/// Ops append nodes in execution order; backward() replays adjoints in
/// reverse. A tape built with record=false keeps values only.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}

  bool recording() const noexcept { return record_; }

  /// Value that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf whose gradient can be read with grad() after backward().
  Var input(Tensor value);
  /// Leaf bound to a parameter. Its value is referenced, not copied; the
  /// ParameterSet must outlive the tape.
  Var param(const ParameterSet& params, ParamId id);
  /// Binds the ParameterSet that parameter gradients refer to. Called by
  /// param() and by ops that read parameters without a leaf node.
  void bind_parameters(const ParameterSet& params);
  const ParameterSet* parameters() const noexcept { return params_; }

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.index).requires_grad; }

  /// Appends an op result. The adjoint is kept only when recording and at
  /// least one input requires a gradient, or when `force_grad` is set (ops
  /// that write parameter gradients directly, e.g. embedding gathers).
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward, bool force_grad = false);

  /// Reverse pass from a scalar. Parameter gradients are added into `into`.
  void backward(Var loss, Gradients& into);
  /// Convenience: returns freshly allocated parameter gradients.
  Gradients backward(Var loss);

  /// Gradient of an input() leaf after backward(); zeros if untouched.
  Tensor grad(Var v) const;

  std::size_t node_count() const noexcept { return nodes_.size(); }
  void clear();

 private:
  friend class BackwardContext;
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    std::optional<ParamId> param;
    bool requires_grad = false;
    Tensor grad;
    const Tensor& value() const { return external ? *external : owned; }
  };
  Tensor& grad_slot(std::size_t node);

  bool record_;
  const ParameterSet* params_ = nullptr;
  std::vector<Node> nodes_;
};

}  // namespace convformer
