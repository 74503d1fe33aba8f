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

#include "cuembed/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace cuembed {

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

bool Tape::any_requires_grad(std::span<const NodeId> ids) const {
  for (NodeId id : ids) {
    if (nodes_[id].requires_grad) return true;
  }
  return false;
}

NodeId Tape::value(DenseArray v) {
  return push(Node{Op::kValue, false, std::move(v), {}});
}

NodeId Tape::param(DenseArray v) {
  return push(Node{Op::kParam, true, std::move(v), {}});
}

NodeId Tape::affine(NodeId x, NodeId w, NodeId b) {
  Node n{Op::kAffine, any_requires_grad(std::array{x, w, b}),
         ops::affine(nodes_[x].val, nodes_[w].val, nodes_[b].val),
         {x, w, b}};
  return push(std::move(n));
}

NodeId Tape::conv1d(NodeId x, NodeId k, NodeId b, ops::Padding pad) {
  Node n{Op::kConv1d, any_requires_grad(std::array{x, k, b}),
         ops::conv1d(nodes_[x].val, nodes_[k].val, nodes_[b].val, pad),
         {x, k, b}};
  n.pad = pad;
  return push(std::move(n));
}

NodeId Tape::maxpool1d(NodeId x, std::size_t width) {
  auto r = ops::maxpool1d(nodes_[x].val, width);
  Node n{Op::kMaxPool, nodes_[x].requires_grad, std::move(r.values), {x}};
  n.index = width;
  n.argmax = std::move(r.argmax);
  return push(std::move(n));
}

NodeId Tape::global_max_time(NodeId x) {
  auto r = ops::global_max_time(nodes_[x].val);
  Node n{Op::kGlobalMax, nodes_[x].requires_grad, std::move(r.values), {x}};
  n.argmax = std::move(r.argmax);
  return push(std::move(n));
}

NodeId Tape::relu(NodeId x) {
  return push(Node{Op::kRelu, nodes_[x].requires_grad, ops::relu(nodes_[x].val), {x}});
}

NodeId Tape::embedding_lookup(NodeId table, std::size_t row) {
  Node n{Op::kEmbedding, nodes_[table].requires_grad,
         ops::embedding_lookup(nodes_[table].val, row),
         {table}};
  n.index = row;
  return push(std::move(n));
}

NodeId Tape::cosine(NodeId a, NodeId b) {
  Node n{Op::kCosine, any_requires_grad(std::array{a, b}),
         DenseArray::scalar(ops::cosine(nodes_[a].val, nodes_[b].val)),
         {a, b}};
  return push(std::move(n));
}

NodeId Tape::hinge_loss(NodeId r_pos, std::span<const NodeId> r_neg, double margin) {
  std::vector<double> negs;
  negs.reserve(r_neg.size());
  std::vector<NodeId> in{r_pos};
  for (NodeId id : r_neg) {
    negs.push_back(nodes_[id].val[0]);
    in.push_back(id);
  }
  Node n{Op::kHinge, any_requires_grad(in),
         DenseArray::scalar(ops::hinge_loss(nodes_[r_pos].val[0], negs, margin)),
         std::move(in)};
  n.margin = margin;
  return push(std::move(n));
}

NodeId Tape::squared_error(NodeId pred, DenseArray target) {
  Node n{Op::kSquaredError, nodes_[pred].requires_grad,
         DenseArray::scalar(ops::squared_error(nodes_[pred].val, target)),
         {pred}};
  n.target = std::move(target);
  return push(std::move(n));
}

NodeId Tape::sigmoid_bce(NodeId logits, DenseArray targets) {
  Node n{Op::kSigmoidBce, nodes_[logits].requires_grad,
         DenseArray::scalar(ops::sigmoid_bce(nodes_[logits].val, targets)),
         {logits}};
  n.target = std::move(targets);
  return push(std::move(n));
}

NodeId Tape::scalar_mean(std::span<const NodeId> xs) {
  if (xs.empty()) throw DataError("scalar_mean: empty input list");
  double acc = 0.0;
  std::vector<NodeId> in;
  in.reserve(xs.size());
  for (NodeId id : xs) {
    if (!nodes_[id].val.is_scalar()) {
      throw DataError("scalar_mean: inputs must be scalars");
    }
    acc += nodes_[id].val[0];
    in.push_back(id);
  }
  return push(Node{Op::kScalarMean, any_requires_grad(in),
                   DenseArray::scalar(acc / static_cast<double>(xs.size())),
                   std::move(in)});
}

DenseArray Tape::recompute(const Node& n) const {
  switch (n.op) {
    case Op::kValue:
    case Op::kParam:
      return n.val;
    case Op::kAffine:
      return ops::affine(nodes_[n.in[0]].val, nodes_[n.in[1]].val, nodes_[n.in[2]].val);
    case Op::kConv1d:
      return ops::conv1d(nodes_[n.in[0]].val, nodes_[n.in[1]].val, nodes_[n.in[2]].val,
                         n.pad);
    case Op::kMaxPool:
      return ops::maxpool1d(nodes_[n.in[0]].val, n.index).values;
    case Op::kGlobalMax:
      return ops::global_max_time(nodes_[n.in[0]].val).values;
    case Op::kRelu:
      return ops::relu(nodes_[n.in[0]].val);
    case Op::kEmbedding:
      return ops::embedding_lookup(nodes_[n.in[0]].val, n.index);
    case Op::kCosine:
      return DenseArray::scalar(ops::cosine(nodes_[n.in[0]].val, nodes_[n.in[1]].val));
    case Op::kHinge: {
      std::vector<double> negs;
      for (std::size_t i = 1; i < n.in.size(); ++i) negs.push_back(nodes_[n.in[i]].val[0]);
      return DenseArray::scalar(ops::hinge_loss(nodes_[n.in[0]].val[0], negs, n.margin));
    }
    case Op::kSquaredError:
      return DenseArray::scalar(ops::squared_error(nodes_[n.in[0]].val, n.target));
    case Op::kSigmoidBce:
      return DenseArray::scalar(ops::sigmoid_bce(nodes_[n.in[0]].val, n.target));
    case Op::kScalarMean: {
      double acc = 0.0;
      for (NodeId id : n.in) acc += nodes_[id].val[0];
      return DenseArray::scalar(acc / static_cast<double>(n.in.size()));
    }
  }
  throw DataError("tape: unknown op");
}

bool Tape::replay_matches() const {
  for (const Node& n : nodes_) {
    const DenseArray r = recompute(n);
    if (r.size() != n.val.size()) return false;
    if (std::memcmp(r.data(), n.val.data(), r.size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

void Tape::backward_into(const Node& n, const std::vector<double>& gout,
                         std::vector<std::vector<double>>& grads) const {
  auto grad_buf = [&](NodeId id) -> std::vector<double>* {
    if (!nodes_[id].requires_grad) return nullptr;
    if (grads[id].empty()) grads[id].assign(nodes_[id].val.size(), 0.0);
    return &grads[id];
  };

  switch (n.op) {
    case Op::kValue:
    case Op::kParam:
      return;

    case Op::kAffine: {
      const DenseArray& x = nodes_[n.in[0]].val;
      const DenseArray& w = nodes_[n.in[1]].val;
      const std::size_t m = w.extent(0), nn = w.extent(1);
      if (auto* gx = grad_buf(n.in[0])) {
        for (std::size_t i = 0; i < m; ++i) {
          const double gi = gout[i];
          const double* wrow = w.data() + i * nn;
          for (std::size_t j = 0; j < nn; ++j) (*gx)[j] += gi * wrow[j];
        }
      }
      if (auto* gw = grad_buf(n.in[1])) {
        for (std::size_t i = 0; i < m; ++i) {
          const double gi = gout[i];
          double* grow = gw->data() + i * nn;
          for (std::size_t j = 0; j < nn; ++j) grow[j] += gi * x[j];
        }
      }
      if (auto* gb = grad_buf(n.in[2])) {
        for (std::size_t i = 0; i < m; ++i) (*gb)[i] += gout[i];
      }
      return;
    }

    case Op::kConv1d: {
      const DenseArray& x = nodes_[n.in[0]].val;
      const DenseArray& k = nodes_[n.in[1]].val;
      const std::size_t c_in = x.extent(0), t_in = x.extent(1);
      const std::size_t c_out = k.extent(0), ksz = k.extent(2);
      const std::size_t pad_left = n.pad == ops::Padding::kSame ? ops::same_pad_left(ksz) : 0;
      const std::size_t pad_total = n.pad == ops::Padding::kSame ? ksz - 1 : 0;
      const std::size_t t_out = t_in + pad_total - ksz + 1;
      const std::size_t t_pad = t_in + pad_total;

      std::vector<double> padded(c_in * t_pad, 0.0);
      for (std::size_t c = 0; c < c_in; ++c) {
        std::copy_n(x.data() + c * t_in, t_in, padded.data() + c * t_pad + pad_left);
      }

      auto* gx = grad_buf(n.in[0]);
      auto* gk = grad_buf(n.in[1]);
      auto* gb = grad_buf(n.in[2]);

      std::vector<double> gpad;
      if (gx) gpad.assign(c_in * t_pad, 0.0);

      for (std::size_t co = 0; co < c_out; ++co) {
        const double* grow = gout.data() + co * t_out;
        if (gb) {
          double acc = 0.0;
          for (std::size_t t = 0; t < t_out; ++t) acc += grow[t];
          (*gb)[co] += acc;
        }
        for (std::size_t ci = 0; ci < c_in; ++ci) {
          const double* prow = padded.data() + ci * t_pad;
          const double* krow = k.data() + (co * c_in + ci) * ksz;
          double* gkrow = gk ? gk->data() + (co * c_in + ci) * ksz : nullptr;
          double* gprow = gx ? gpad.data() + ci * t_pad : nullptr;
          for (std::size_t dk = 0; dk < ksz; ++dk) {
            if (gkrow) {
              double acc = 0.0;
              const double* src = prow + dk;
              for (std::size_t t = 0; t < t_out; ++t) acc += grow[t] * src[t];
              gkrow[dk] += acc;
            }
            if (gprow) {
              const double wk = krow[dk];
              double* dst = gprow + dk;
              for (std::size_t t = 0; t < t_out; ++t) dst[t] += wk * grow[t];
            }
          }
        }
      }
      if (gx) {
        for (std::size_t c = 0; c < c_in; ++c) {
          const double* src = gpad.data() + c * t_pad + pad_left;
          double* dst = gx->data() + c * t_in;
          for (std::size_t t = 0; t < t_in; ++t) dst[t] += src[t];
        }
      }
      return;
    }

    case Op::kMaxPool:
    case Op::kGlobalMax: {
      if (auto* gx = grad_buf(n.in[0])) {
        if (n.op == Op::kMaxPool) {
          for (std::size_t i = 0; i < n.argmax.size(); ++i) {
            (*gx)[n.argmax[i]] += gout[i];
          }
        } else {
          const std::size_t t_in = nodes_[n.in[0]].val.extent(1);
          for (std::size_t c = 0; c < n.argmax.size(); ++c) {
            (*gx)[c * t_in + n.argmax[c]] += gout[c];
          }
        }
      }
      return;
    }

    case Op::kRelu: {
      if (auto* gx = grad_buf(n.in[0])) {
        const DenseArray& x = nodes_[n.in[0]].val;
        // subgradient at 0 is 0
        for (std::size_t i = 0; i < x.size(); ++i) {
          if (x[i] > 0.0) (*gx)[i] += gout[i];
        }
      }
      return;
    }

    case Op::kEmbedding: {
      if (auto* gt = grad_buf(n.in[0])) {
        const std::size_t d = nodes_[n.in[0]].val.extent(1);
        double* row = gt->data() + n.index * d;
        for (std::size_t i = 0; i < d; ++i) row[i] += gout[i];
      }
      return;
    }

    case Op::kCosine: {
      const DenseArray& a = nodes_[n.in[0]].val;
      const DenseArray& b = nodes_[n.in[1]].val;
      double na = 0.0, nb = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        na += a[i] * a[i];
        nb += b[i] * b[i];
      }
      na = std::sqrt(na);
      nb = std::sqrt(nb);
      const double c = n.val[0];
      const double g = gout[0];
      if (auto* ga = grad_buf(n.in[0])) {
        for (std::size_t i = 0; i < a.size(); ++i) {
          (*ga)[i] += g * (b[i] / (na * nb) - c * a[i] / (na * na));
        }
      }
      if (auto* gb2 = grad_buf(n.in[1])) {
        for (std::size_t i = 0; i < b.size(); ++i) {
          (*gb2)[i] += g * (a[i] / (na * nb) - c * b[i] / (nb * nb));
        }
      }
      return;
    }

    case Op::kHinge: {
      const double r_pos = nodes_[n.in[0]].val[0];
      const double g = gout[0];
      for (std::size_t i = 1; i < n.in.size(); ++i) {
        const double term = n.margin - r_pos + nodes_[n.in[i]].val[0];
        if (term > 0.0) {  // inactive exactly at the margin boundary
          if (auto* gp = grad_buf(n.in[0])) (*gp)[0] -= g;
          if (auto* gn = grad_buf(n.in[i])) (*gn)[0] += g;
        }
      }
      return;
    }

    case Op::kSquaredError: {
      if (auto* gp = grad_buf(n.in[0])) {
        const DenseArray& p = nodes_[n.in[0]].val;
        for (std::size_t i = 0; i < p.size(); ++i) {
          (*gp)[i] += gout[0] * 2.0 * (p[i] - n.target[i]);
        }
      }
      return;
    }

    case Op::kSigmoidBce: {
      if (auto* gz = grad_buf(n.in[0])) {
        const DenseArray& z = nodes_[n.in[0]].val;
        const double scale = gout[0] / static_cast<double>(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) {
          (*gz)[i] += scale * (ops::sigmoid(z[i]) - n.target[i]);
        }
      }
      return;
    }

    case Op::kScalarMean: {
      const double share = gout[0] / static_cast<double>(n.in.size());
      for (NodeId id : n.in) {
        if (auto* gi = grad_buf(id)) (*gi)[0] += share;
      }
      return;
    }
  }
}

std::vector<DenseArray> Tape::gradients(NodeId loss, std::span<const NodeId> leaves) {
  if (loss >= nodes_.size()) throw DataError("gradients: loss id out of range");
  if (!nodes_[loss].val.is_scalar()) {
    throw ConfigError("gradients: loss must be a scalar node");
  }
  for (NodeId id : leaves) {
    if (id >= nodes_.size() || nodes_[id].op != Op::kParam) {
      throw DataError("gradients: leaves must be param nodes");
    }
  }

  // Restrict the sweep to nodes that both depend on a param and feed the loss.
  std::vector<bool> active(nodes_.size(), false);
  std::vector<NodeId> stack{loss};
  while (!stack.empty()) {
    const NodeId id = stack.back();
    stack.pop_back();
    if (active[id] || !nodes_[id].requires_grad) continue;
    active[id] = true;
    for (NodeId in : nodes_[id].in) {
      if (nodes_[in].requires_grad && !active[in]) stack.push_back(in);
    }
  }

  std::vector<std::vector<double>> grads(nodes_.size());
  if (active[loss]) {
    grads[loss].assign(1, 1.0);
    for (NodeId id = loss + 1; id-- > 0;) {  // each entry visited exactly once
      if (!active[id] || grads[id].empty()) continue;
      backward_into(nodes_[id], grads[id], grads);
    }
  }

  std::vector<DenseArray> out;
  out.reserve(leaves.size());
  for (NodeId id : leaves) {
    if (grads[id].empty()) {
      out.emplace_back(nodes_[id].val.shape());
    } else {
      out.emplace_back(nodes_[id].val.shape(), std::move(grads[id]));
    }
  }
  return out;
}

}  // namespace cuembed
