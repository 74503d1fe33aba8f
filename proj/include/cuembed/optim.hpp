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

namespace cuembed {

// SGD with Nesterov momentum and inverse-time learning-rate decay, in the
// lookahead-free reformulation that tracks the shifted iterate directly:
//
//   v     <- momentum * v - lr_t * g
//   theta <- theta + momentum * v - lr_t * g
//
// lr_t = base_lr / (1 + decay * t) with t counting completed steps, so the
// first step runs at base_lr exactly.
class NesterovSgd {
 public:
  NesterovSgd(double base_lr, double momentum, double decay)
      : base_lr_(base_lr), momentum_(momentum), decay_(decay) {
    if (base_lr < 0.0) {
      throw ConfigError("NesterovSgd: base_lr must be non-negative");
    }
    if (momentum < 0.0 || momentum >= 1.0) {
      throw ConfigError("NesterovSgd: momentum must lie in [0, 1)");
    }
    if (decay < 0.0) throw ConfigError("NesterovSgd: decay must be non-negative");
  }

  double effective_lr() const {
    return base_lr_ / (1.0 + decay_ * static_cast<double>(step_count_));
  }

  std::uint64_t step_count() const { return step_count_; }

  // Applies one update to every parameter in place. Parameter order must stay
  // stable across calls; velocity slots are keyed by position.
  void step(std::span<DenseArray*> params, std::span<const DenseArray> grads) {
    if (params.size() != grads.size()) {
      throw DataError("NesterovSgd: params/grads count mismatch");
    }
    if (velocity_.empty()) {
      velocity_.reserve(params.size());
      for (const DenseArray* p : params) velocity_.emplace_back(p->shape());
    }
    if (velocity_.size() != params.size()) {
      throw DataError("NesterovSgd: parameter count changed between steps");
    }
    const double lr = effective_lr();
    for (std::size_t i = 0; i < params.size(); ++i) {
      DenseArray& p = *params[i];
      DenseArray& v = velocity_[i];
      const DenseArray& g = grads[i];
      if (!p.same_shape(g) || !p.same_shape(v)) {
        throw DataError("NesterovSgd: shape mismatch at parameter " +
                        std::to_string(i));
      }
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double vj = momentum_ * v[j] - lr * g[j];
        v[j] = vj;
        p[j] += momentum_ * vj - lr * g[j];
      }
    }
    ++step_count_;
  }

 private:
  double base_lr_;
  double momentum_;
  double decay_;
  std::uint64_t step_count_ = 0;
  std::vector<DenseArray> velocity_;
};

}  // namespace cuembed
