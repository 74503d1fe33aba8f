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
#include <vector>

#include "cuembed/dense.hpp"
#include "cuembed/interactions.hpp"

namespace cuembed {

struct WmfConfig {
  std::size_t rank = 50;
  double alpha = 40.0;    // confidence scale: c = 1 + alpha for positives
  double lambda = 0.01;   // L2 regularization, must be positive
  std::size_t sweeps = 15;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Factors {
  DenseArray U;  // [num_users x rank]
  DenseArray V;  // [num_items x rank]
};

// Solves A x = rhs for symmetric positive-definite A [D x D] by Cholesky.
// Throws NumericError when a pivot is not positive.
DenseArray cholesky_solve(const DenseArray& a, const DenseArray& rhs);

// Alternating least squares for implicit feedback: preference is the
// binarized interaction, confidence 1 for unobserved and 1 + alpha for
// positives. Runs exactly cfg.sweeps full alternations (user half, item
// half), sequentially and deterministically under cfg.seed.
//
// When objective_trace is given it receives the objective at initialization
// and after every half-sweep (2*sweeps + 1 entries).
Factors fit_wmf(const BinaryInteractions& b, const WmfConfig& cfg,
                std::vector<double>* objective_trace = nullptr);

// Sum over all (u,i) cells of c_ui (p_ui - u_u.v_i)^2 plus
// lambda (|U|^2 + |V|^2).
double wmf_objective(const Factors& f, const BinaryInteractions& b,
                     const WmfConfig& cfg);

// Dot products of one user factor against every item factor row.
DenseArray score_items(const DenseArray& u_factor, const DenseArray& v);

}  // namespace cuembed
