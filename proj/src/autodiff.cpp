#include "convformer/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace convformer {

ParamId ParameterSet::add(std::string name, Tensor value, bool trainable) {
  if (find(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  entries_.push_back({std::move(name), std::move(value), trainable});
  return entries_.size() - 1;
}

std::optional<ParamId> ParameterSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t ParameterSet::scalar_count(std::string_view prefix, bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (trainable_only && !e.trainable) continue;
    if (std::string_view(e.name).substr(0, prefix.size()) == prefix) n += e.value.size();
  }
  return n;
}

Gradients::Gradients(const ParameterSet& params) : params_(&params), grads_(params.size()) {}

Tensor& Gradients::slot(ParamId id) {
  if (!params_) throw std::logic_error("Gradients not bound to a ParameterSet");
  if (id >= grads_.size()) grads_.resize(params_->size());
  Tensor& g = grads_.at(id);
  if (g.empty()) g = Tensor(params_->value(id).shape(), 0.0);
  return g;
}

const Tensor* Gradients::find(ParamId id) const {
  if (id >= grads_.size() || grads_[id].empty()) return nullptr;
  return &grads_[id];
}

void Gradients::zero() {
  for (auto& g : grads_) g.fill(0.0);
}

void Gradients::add(const Gradients& other) {
  for (std::size_t i = 0; i < other.grads_.size(); ++i) {
    if (other.grads_[i].empty()) continue;
    Tensor& g = slot(i);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += other.grads_[i][j];
  }
}

void Gradients::scale(double s) {
  for (auto& g : grads_) {
    for (auto& v : g.data()) v *= s;
  }
}

double Gradients::global_norm() const {
  double sq = 0.0;
  for (const auto& g : grads_) {
    for (double v : g.data()) sq += v * v;
  }
  return std::sqrt(sq);
}

const Tensor& BackwardContext::grad_output() const { return tape_.nodes_[node_].grad; }
const Tensor& BackwardContext::output() const { return tape_.nodes_[node_].value(); }

const Tensor& BackwardContext::input(std::size_t k) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs.at(k)].value();
}

Tensor* BackwardContext::grad_input(std::size_t k) {
  const std::size_t in = tape_.nodes_[node_].inputs.at(k);
  if (!tape_.nodes_[in].requires_grad) return nullptr;
  return &tape_.grad_slot(in);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::input(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = record_;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

void Tape::bind_parameters(const ParameterSet& params) {
  if (params_ && params_ != &params) throw std::logic_error("tape already bound to another ParameterSet");
  params_ = &params;
}

Var Tape::param(const ParameterSet& params, ParamId id) {
  bind_parameters(params);
  Node n;
  n.external = &params.value(id);
  n.param = id;
  n.requires_grad = record_ && params.trainable(id);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const { return nodes_.at(v.index).value(); }

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward, bool force_grad) {
  Node n;
  n.owned = std::move(value);
  n.inputs.reserve(inputs.size());
  bool any = force_grad;
  for (Var in : inputs) {
    if (in.index >= nodes_.size()) throw std::logic_error("tape input refers to a later node");
    n.inputs.push_back(in.index);
    any = any || nodes_[in.index].requires_grad;
  }
  if (record_ && any) {
    n.requires_grad = true;
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Tensor& Tape::grad_slot(std::size_t node) {
  Node& n = nodes_[node];
  if (n.grad.empty()) n.grad = Tensor(n.value().shape(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss, Gradients& into) {
  if (!record_) throw std::logic_error("backward on a non-recording tape");
  const Node& root = nodes_.at(loss.index);
  if (!root.value().is_scalar()) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " + shape_string(root.value().shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  if (!root.requires_grad) return;
  grad_slot(loss.index).fill(1.0);

  for (std::size_t i = loss.index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) {
      BackwardContext ctx(*this, i, into);
      n.backward(ctx);
    }
    if (n.param) {
      Tensor& g = into.slot(*n.param);
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += n.grad[j];
    }
  }
}

Gradients Tape::backward(Var loss) {
  static const ParameterSet kNoParameters;
  Gradients g(params_ ? *params_ : kNoParameters);
  backward(loss, g);
  return g;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.index);
  if (n.grad.empty()) return Tensor(n.value().shape(), 0.0);
  return n.grad;
}

void Tape::clear() {
  nodes_.clear();
  params_ = nullptr;
}

}  // namespace convformer
