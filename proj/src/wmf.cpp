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

#include "cuembed/wmf.hpp"

#include <cmath>

#include "cuembed/errors.hpp"
#include "cuembed/rng.hpp"

namespace cuembed {

void WmfConfig::validate() const {
  if (rank < 1) throw ConfigError("wmf: rank must be >= 1");
  if (alpha < 0.0) throw ConfigError("wmf: alpha must be non-negative");
  if (lambda <= 0.0) throw ConfigError("wmf: lambda must be positive");
  if (sweeps < 1) throw ConfigError("wmf: sweeps must be >= 1");
}

DenseArray cholesky_solve(const DenseArray& a, const DenseArray& rhs) {
  if (a.rank() != 2 || a.extent(0) != a.extent(1) || rhs.size() != a.extent(0)) {
    throw DataError("cholesky_solve: expected square A and matching rhs");
  }
  const std::size_t d = a.extent(0);
  DenseArray l({d, d});
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double acc = a.at(i, j);
      for (std::size_t k = 0; k < j; ++k) acc -= l.at(i, k) * l.at(j, k);
      if (i == j) {
        if (acc <= 0.0) {
          throw NumericError("cholesky_solve: matrix not positive definite");
        }
        l.at(i, i) = std::sqrt(acc);
      } else {
        l.at(i, j) = acc / l.at(j, j);
      }
    }
  }
  DenseArray x({d});
  for (std::size_t i = 0; i < d; ++i) {  // forward: L y = rhs
    double acc = rhs[i];
    for (std::size_t k = 0; k < i; ++k) acc -= l.at(i, k) * x[k];
    x[i] = acc / l.at(i, i);
  }
  for (std::size_t i = d; i-- > 0;) {  // backward: L^T x = y
    double acc = x[i];
    for (std::size_t k = i + 1; k < d; ++k) acc -= l.at(k, i) * x[k];
    x[i] = acc / l.at(i, i);
  }
  return x;
}

namespace {

// Gram matrix F^T F for factor rows F [n x d].
DenseArray gram(const DenseArray& f) {
  const std::size_t n = f.extent(0), d = f.extent(1);
  DenseArray g({d, d});
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = f.data() + r * d;
    for (std::size_t i = 0; i < d; ++i) {
      const double fi = row[i];
      double* grow = g.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) grow[j] += fi * row[j];
    }
  }
  return g;
}

// One half-sweep: re-solve every row of `out` holding `fixed` constant.
// positives[r] lists the fixed-side rows with a positive for row r.
void solve_side(DenseArray& out, const DenseArray& fixed,
                const std::vector<std::vector<std::size_t>>& positives,
                double alpha, double lambda) {
  const std::size_t d = fixed.extent(1);
  const DenseArray base = gram(fixed);
  DenseArray a({d, d});
  DenseArray rhs({d});
  for (std::size_t r = 0; r < out.extent(0); ++r) {
    a = base;
    for (std::size_t i = 0; i < d; ++i) a.at(i, i) += lambda;
    rhs.fill(0.0);
    for (std::size_t pos : positives[r]) {
      const double* vrow = fixed.data() + pos * d;
      for (std::size_t i = 0; i < d; ++i) {
        const double vi = alpha * vrow[i];
        double* arow = a.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) arow[j] += vi * vrow[j];
        rhs[i] += (1.0 + alpha) * vrow[i];
      }
    }
    const DenseArray x = cholesky_solve(a, rhs);
    for (std::size_t i = 0; i < d; ++i) out.at(r, i) = x[i];
  }
}

}  // namespace

Factors fit_wmf(const BinaryInteractions& b, const WmfConfig& cfg,
                std::vector<double>* objective_trace) {
  cfg.validate();
  std::size_t n_pos = 0;
  for (const auto& row : b.positives) n_pos += row.size();
  if (n_pos == 0) throw DataError("wmf: no positive interactions");

  Factors f;
  f.U = DenseArray({b.num_users(), cfg.rank});
  f.V = DenseArray({b.num_items, cfg.rank});
  Rng init_u = Rng::substream(cfg.seed, "wmf-init-u");
  Rng init_v = Rng::substream(cfg.seed, "wmf-init-v");
  for (std::size_t i = 0; i < f.U.size(); ++i) f.U[i] = 0.1 * init_u.normal();
  for (std::size_t i = 0; i < f.V.size(); ++i) f.V[i] = 0.1 * init_v.normal();

  std::vector<std::vector<std::size_t>> by_item(b.num_items);
  for (std::size_t u = 0; u < b.num_users(); ++u) {
    for (std::size_t i : b.positives[u]) by_item[i].push_back(u);
  }

  if (objective_trace) objective_trace->push_back(wmf_objective(f, b, cfg));
  for (std::size_t sweep = 0; sweep < cfg.sweeps; ++sweep) {
    solve_side(f.U, f.V, b.positives, cfg.alpha, cfg.lambda);
    if (objective_trace) objective_trace->push_back(wmf_objective(f, b, cfg));
    solve_side(f.V, f.U, by_item, cfg.alpha, cfg.lambda);
    if (objective_trace) objective_trace->push_back(wmf_objective(f, b, cfg));
  }
  f.U.require_finite("wmf user factors");
  f.V.require_finite("wmf item factors");
  return f;
}

double wmf_objective(const Factors& f, const BinaryInteractions& b,
                     const WmfConfig& cfg) {
  const std::size_t d = f.U.extent(1);
  double obj = 0.0;
  for (std::size_t u = 0; u < b.num_users(); ++u) {
    const double* urow = f.U.data() + u * d;
    auto pos = b.positives[u].begin();
    for (std::size_t i = 0; i < b.num_items; ++i) {
      const double* vrow = f.V.data() + i * d;
      double pred = 0.0;
      for (std::size_t k = 0; k < d; ++k) pred += urow[k] * vrow[k];
      const bool is_pos = pos != b.positives[u].end() && *pos == i;
      if (is_pos) ++pos;
      const double p = is_pos ? 1.0 : 0.0;
      const double c = is_pos ? 1.0 + cfg.alpha : 1.0;
      obj += c * (p - pred) * (p - pred);
    }
  }
  double reg = 0.0;
  for (std::size_t i = 0; i < f.U.size(); ++i) reg += f.U[i] * f.U[i];
  for (std::size_t i = 0; i < f.V.size(); ++i) reg += f.V[i] * f.V[i];
  return obj + cfg.lambda * reg;
}

DenseArray score_items(const DenseArray& u_factor, const DenseArray& v) {
  if (v.rank() != 2 || u_factor.size() != v.extent(1)) {
    throw DataError("score_items: factor dimensions do not match");
  }
  const std::size_t m = v.extent(0), d = v.extent(1);
  DenseArray scores({m});
  for (std::size_t i = 0; i < m; ++i) {
    const double* vrow = v.data() + i * d;
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) acc += u_factor[k] * vrow[k];
    scores[i] = acc;
  }
  return scores;
}

}  // namespace cuembed
