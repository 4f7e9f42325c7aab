#include "adaptlab/graph.hpp"

#include <string>

namespace adaptlab::ad {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kInput: return "input";
    case OpKind::kParam: return "param";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kReshape: return "reshape";
    case OpKind::kConcat: return "concat";
    case OpKind::kNarrow: return "narrow";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLogSoftmax: return "log_softmax";
    case OpKind::kGelu: return "gelu";
    case OpKind::kLayerNorm: return "layer_norm";
    case OpKind::kMean: return "mean";
    case OpKind::kSum: return "sum";
    case OpKind::kNll: return "nll";
    case OpKind::kDepthwiseConv1d: return "depthwise_conv1d";
    case OpKind::kAttention: return "attention";
  }
  return "unknown";
}

template <typename S>
const Tensor<S>& Var<S>::value() const {
  if (!graph) throw GraphError("use of an unbound variable");
  return graph->value(*this);
}

template <typename S>
void Graph<S>::check(Var<S> v) const {
  if (v.graph != this) throw GraphError("variable belongs to a different graph");
  if (v.epoch != epoch_ || v.id >= nodes_.size()) {
    throw GraphError("stale variable: graph was cleared after it was created");
  }
}

template <typename S>
Var<S> Graph<S>::input(Tensor<S> value, bool requires_grad) {
  if (consumed_) throw GraphError("graph already consumed by backward; clear() it first");
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(Node{OpKind::kInput, {}, std::move(value), std::nullopt, requires_grad, {}, nullptr});
  return {this, id, epoch_};
}

template <typename S>
Var<S> Graph<S>::param(Parameter<S>& p) {
  if (consumed_) throw GraphError("graph already consumed by backward; clear() it first");
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second, epoch_};
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  // The leaf holds a copy so later optimizer writes cannot alias saved state.
  nodes_.push_back(Node{OpKind::kParam, {}, p.value, std::nullopt, p.trainable, {}, &p});
  param_nodes_.emplace(&p, id);
  return {this, id, epoch_};
}

template <typename S>
Var<S> Graph<S>::record(OpKind kind, std::initializer_list<Var<S>> inputs, Tensor<S> value,
                        BackwardFn backward) {
  return record(kind, std::vector<Var<S>>(inputs), std::move(value), std::move(backward));
}

template <typename S>
Var<S> Graph<S>::record(OpKind kind, const std::vector<Var<S>>& inputs, Tensor<S> value,
                        BackwardFn backward) {
  if (consumed_) throw GraphError("graph already consumed by backward; clear() it first");
  Node node{kind, {}, std::move(value), std::nullopt, false, {}, nullptr};
  node.inputs.reserve(inputs.size());
  for (const auto& v : inputs) {
    check(v);
    node.inputs.push_back(v.id);
    node.requires_grad = node.requires_grad || nodes_[v.id].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(std::move(node));
  return {this, id, epoch_};
}

template <typename S>
const Tensor<S>& Graph<S>::value(Var<S> v) const {
  check(v);
  return nodes_[v.id].value;
}

template <typename S>
const std::optional<Tensor<S>>& Graph<S>::grad(Var<S> v) const {
  check(v);
  return nodes_[v.id].grad;
}

template <typename S>
bool Graph<S>::requires_grad(Var<S> v) const {
  check(v);
  return nodes_[v.id].requires_grad;
}

template <typename S>
Tensor<S>* Graph<S>::grad_slot(std::uint32_t id) {
  auto& node = nodes_[id];
  if (!node.requires_grad) return nullptr;
  if (!node.grad) node.grad.emplace(node.value.shape());
  return &*node.grad;
}

template <typename S>
void Graph<S>::backward(Var<S> loss) {
  check(loss);
  if (consumed_) throw GraphError("backward called twice on the same graph without a new forward");
  const auto& root = nodes_[loss.id];
  if (root.value.size() != 1) {
    throw GraphError("backward requires a scalar loss, got shape " + shape_str(root.value.shape()));
  }
  consumed_ = true;
  if (!root.requires_grad) return;
  grad_slot(loss.id)->fill(S{1});

  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    auto& node = nodes_[id];
    if (!node.grad) continue;
    if (node.backward) {
      // Move the closure out so saved state is released as soon as it ran.
      auto fn = std::move(node.backward);
      fn(*this, *node.grad);
    }
    if (node.param && node.param->trainable) {
      auto& pgrad = node.param->grad;
      if (!pgrad) {
        pgrad = *node.grad;
      } else {
        auto dst = pgrad->data();
        auto src = node.grad->data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
    }
  }
}

template <typename S>
void Graph<S>::clear() {
  nodes_.clear();
  param_nodes_.clear();
  ++epoch_;
  consumed_ = false;
}

template struct Var<float>;
template struct Var<double>;
template class Graph<float>;
template class Graph<double>;

}  // namespace adaptlab::ad
