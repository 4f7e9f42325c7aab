#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "adaptlab/param_store.hpp"
#include "adaptlab/tensor.hpp"

namespace adaptlab::ad {

enum class OpKind : std::uint8_t {
  kInput,
  kParam,
  kAdd,
  kSub,
  kMul,
  kScale,
  kMatmul,
  kTranspose,
  kReshape,
  kConcat,
  kNarrow,
  kSoftmax,
  kLogSoftmax,
  kGelu,
  kLayerNorm,
  kMean,
  kSum,
  kNll,
  kDepthwiseConv1d,
  kAttention,
};

std::string_view op_name(OpKind kind);

template <typename S>
class Graph;

// Handle to a node on a live graph. Handles from before the last clear() are
// stale and rejected.
template <typename S>
struct Var {
  Graph<S>* graph = nullptr;
  std::uint32_t id = 0;
  std::uint32_t epoch = 0;

  const Tensor<S>& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Reverse-mode tape. Nodes are appended in evaluation order, which is a
// topological order; backward walks them in reverse.
template <typename S>
class Graph {
 public:
  // Receives the upstream gradient; pulls input values and grad slots from
  // the graph by id.
  using BackwardFn = std::function<void(Graph&, const Tensor<S>& grad_out)>;

  struct Node {
    OpKind kind;
    std::vector<std::uint32_t> inputs;
    Tensor<S> value;
    std::optional<Tensor<S>> grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter<S>* param = nullptr;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<S> input(Tensor<S> value, bool requires_grad = false);
  // Leaf bound to a stored parameter; repeated calls return the same node so
  // fan-out accumulates. Requires grad iff the parameter is trainable.
  Var<S> param(Parameter<S>& p);

  // Appends an op node. The backward closure is dropped when no input
  // requires grad.
  Var<S> record(OpKind kind, std::initializer_list<Var<S>> inputs, Tensor<S> value,
                BackwardFn backward);
  Var<S> record(OpKind kind, const std::vector<Var<S>>& inputs, Tensor<S> value,
                BackwardFn backward);

  // Populates grads of every requires-grad node reachable from `loss` and
  // accumulates leaf grads into their bound parameters.
  void backward(Var<S> loss);

  // Discards all nodes; outstanding handles become stale.
  void clear();

  const Tensor<S>& value(Var<S> v) const;
  const Tensor<S>& value(std::uint32_t id) const { return nodes_[id].value; }
  const std::optional<Tensor<S>>& grad(Var<S> v) const;
  bool requires_grad(Var<S> v) const;
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

  // Zero-initialized accumulator for node `id`, or nullptr if it does not
  // take gradients. Only valid during backward.
  Tensor<S>* grad_slot(std::uint32_t id);

  std::size_t num_nodes() const noexcept { return nodes_.size(); }
  const Node& node(std::uint32_t id) const { return nodes_.at(id); }
  bool consumed() const noexcept { return consumed_; }

  void check(Var<S> v) const;

 private:
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<S>*, std::uint32_t> param_nodes_;
  std::uint32_t epoch_ = 1;
  bool consumed_ = false;
};

}  // namespace adaptlab::ad
