#include "odm/tape.hpp"

#include <algorithm>
#include <string>

#include "odm/error.hpp"

namespace odm {

Tape& Var::tape() const {
  if (tape_ == nullptr) throw UsageError("use of an unbound Var");
  return *tape_;
}

const Tensor& Var::value() const { return tape().value(id_); }

bool Var::requires_grad() const { return tape().requires_grad(id_); }

void Tape::check_owned(const Var& v) const {
  if (v.tape_ != this) throw UsageError("Var belongs to a different tape");
}

Var Tape::constant(Tensor value) { return record(std::move(value), {}, {}); }

Var Tape::leaf(Tensor value) {
  Var v = record(std::move(value), {}, {});
  nodes_.back().requires_grad = true;
  return v;
}

Var Tape::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Var v = leaf(p.as_tensor());
  nodes_.back().param = &p;
  param_nodes_.emplace(&p, v.id());
  return v;
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (consumed_) throw UsageError("recording onto a tape that was already consumed by backward()");
  Node node;
  node.value = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    check_owned(in);
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[static_cast<std::size_t>(in.id())].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::backward(Var loss, GradSlot slot) {
  const LossRoot root{loss, slot};
  backward(std::span<const LossRoot>(&root, 1));
}

void Tape::backward(std::span<const LossRoot> roots) {
  if (consumed_) throw UsageError("backward() called on a tape that was already consumed");
  for (const auto& r : roots) {
    check_owned(r.loss);
    if (value(r.loss.id()).size() != 1) {
      throw DimensionError("backward() needs a scalar loss, got shape " + value(r.loss.id()).shape().str());
    }
  }
  consumed_ = true;
  for (const auto& r : roots) sweep(r);
}

void Tape::sweep(const LossRoot& root) {
  grads_.assign(nodes_.size(), Tensor());
  const int start = root.loss.id();
  grads_[static_cast<std::size_t>(start)] = Tensor(value(start).shape(), 1.0f);

  std::vector<Tensor*> gin;
  for (int id = start; id >= 0; --id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    Tensor& g = grads_[static_cast<std::size_t>(id)];
    if (g.empty() || !node.requires_grad || !node.backward) continue;
    gin.clear();
    for (int in : node.inputs) {
      const Node& src = nodes_[static_cast<std::size_t>(in)];
      if (!src.requires_grad) {
        gin.push_back(nullptr);
        continue;
      }
      Tensor& acc = grads_[static_cast<std::size_t>(in)];
      if (acc.empty()) acc = Tensor(src.value.shape(), 0.0f);
      gin.push_back(&acc);
    }
    node.backward(g, gin);
  }

  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    Parameter* p = nodes_[id].param;
    if (p == nullptr) continue;
    auto dst = p->grad(root.slot);
    const Tensor& g = grads_[id];
    if (!g.empty()) {
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
    }
    p->mark_populated(root.slot);
  }
}

Tensor Tape::grad(Var v) const {
  check_owned(v);
  const auto id = static_cast<std::size_t>(v.id());
  if (id < grads_.size() && !grads_[id].empty()) return grads_[id];
  return Tensor(value(v.id()).shape(), 0.0f);
}

}  // namespace odm
