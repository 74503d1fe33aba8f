// Copyright 2026 The cuembed Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cuembed/dense.hpp"
#include "cuembed/ops.hpp"

namespace cuembed {

using NodeId = std::uint32_t;

// Append-only record of primitive applications with enough saved state for an
// exact reverse sweep. Nodes only ever reference earlier nodes, so reverse
// creation order is a valid topological order for backpropagation.
//
// The tape owns copies of every value it touches; forward results are pure
// functions of the recorded inputs (replay_matches() verifies this
// bit-identically).
class Tape {
 public:
  // Constant input; never receives a gradient.
  NodeId value(DenseArray v);

  // Trainable leaf; gradients() reports its derivative.
  NodeId param(DenseArray v);

  NodeId affine(NodeId x, NodeId w, NodeId b);
  NodeId conv1d(NodeId x, NodeId k, NodeId b, ops::Padding pad);
  NodeId maxpool1d(NodeId x, std::size_t width);
  NodeId global_max_time(NodeId x);
  NodeId relu(NodeId x);
  NodeId embedding_lookup(NodeId table, std::size_t row);
  NodeId cosine(NodeId a, NodeId b);
  NodeId hinge_loss(NodeId r_pos, std::span<const NodeId> r_neg, double margin);
  NodeId squared_error(NodeId pred, DenseArray target);
  NodeId sigmoid_bce(NodeId logits, DenseArray targets);
  NodeId scalar_mean(std::span<const NodeId> xs);

  const DenseArray& value_of(NodeId id) const { return nodes_[id].val; }
  double scalar_of(NodeId id) const { return nodes_[id].val[0]; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse-mode derivatives of a scalar loss w.r.t. the given leaves.
  // Leaves the loss does not reach get exact zeros. Throws ConfigError on a
  // non-scalar loss and DataError when a leaf id is not a param node.
  std::vector<DenseArray> gradients(NodeId loss, std::span<const NodeId> leaves);

  // Recomputes every non-leaf value from its recorded inputs and compares
  // bit-for-bit with what the forward pass produced.
  bool replay_matches() const;

  void reset() { nodes_.clear(); }

 private:
  enum class Op : std::uint8_t {
    kValue,
    kParam,
    kAffine,
    kConv1d,
    kMaxPool,
    kGlobalMax,
    kRelu,
    kEmbedding,
    kCosine,
    kHinge,
    kSquaredError,
    kSigmoidBce,
    kScalarMean,
  };

  struct Node {
    Node(Op o, bool rg, DenseArray v, std::vector<NodeId> inputs)
        : op(o), requires_grad(rg), val(std::move(v)), in(std::move(inputs)) {}

    Op op;
    bool requires_grad;
    DenseArray val;
    std::vector<NodeId> in;
    // Per-op saved state for the reverse sweep.
    std::size_t index = 0;                 // embedding row / pool width
    ops::Padding pad = ops::Padding::kSame;
    double margin = 0.0;
    std::vector<std::size_t> argmax;       // pooling routes
    DenseArray target;                     // squared_error / sigmoid_bce
  };

  NodeId push(Node n);
  bool any_requires_grad(std::span<const NodeId> ids) const;
  DenseArray recompute(const Node& n) const;
  void backward_into(const Node& n, const std::vector<double>& gout,
                     std::vector<std::vector<double>>& grads) const;

  std::vector<Node> nodes_;
};

}  // namespace cuembed
