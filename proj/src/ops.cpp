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

#include "cuembed/ops.hpp"

#include <algorithm>
#include <cmath>

namespace cuembed::ops {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw DataError(msg);
}

}  // namespace

DenseArray affine(const DenseArray& x, const DenseArray& w, const DenseArray& b) {
  require(x.rank() == 1 && w.rank() == 2 && b.rank() == 1,
          "affine: expected x[n], w[m x n], b[m]");
  const std::size_t n = x.extent(0);
  const std::size_t m = w.extent(0);
  require(w.extent(1) == n && b.extent(0) == m, "affine: shape mismatch");

  DenseArray out({m});
  const double* xd = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* wrow = w.data() + i * n;
    double acc = b[i];
    for (std::size_t j = 0; j < n; ++j) acc += wrow[j] * xd[j];
    out[i] = acc;
  }
  return out;
}

DenseArray conv1d(const DenseArray& x, const DenseArray& k, const DenseArray& b,
                  Padding pad) {
  require(x.rank() == 2 && k.rank() == 3 && b.rank() == 1,
          "conv1d: expected x[C_in x T], k[C_out x C_in x K], b[C_out]");
  const std::size_t c_in = x.extent(0);
  const std::size_t t_in = x.extent(1);
  const std::size_t c_out = k.extent(0);
  const std::size_t ksz = k.extent(2);
  require(k.extent(1) == c_in, "conv1d: kernel input channels mismatch");
  require(b.extent(0) == c_out, "conv1d: bias channels mismatch");

  const std::size_t pad_left = pad == Padding::kSame ? same_pad_left(ksz) : 0;
  const std::size_t pad_total = pad == Padding::kSame ? ksz - 1 : 0;
  require(ksz <= t_in + pad_total, "conv1d: kernel wider than padded input");
  const std::size_t t_out = t_in + pad_total - ksz + 1;

  // Materialize the zero-padded input once; inner loops then run over
  // contiguous rows and vectorize.
  const std::size_t t_pad = t_in + pad_total;
  std::vector<double> padded(c_in * t_pad, 0.0);
  for (std::size_t c = 0; c < c_in; ++c) {
    std::copy_n(x.data() + c * t_in, t_in, padded.data() + c * t_pad + pad_left);
  }

  DenseArray out({c_out, t_out});
  for (std::size_t co = 0; co < c_out; ++co) {
    double* orow = out.data() + co * t_out;
    std::fill_n(orow, t_out, b[co]);
    for (std::size_t ci = 0; ci < c_in; ++ci) {
      const double* prow = padded.data() + ci * t_pad;
      const double* krow = k.data() + (co * c_in + ci) * ksz;
      for (std::size_t dk = 0; dk < ksz; ++dk) {
        const double wk = krow[dk];
        const double* src = prow + dk;
        for (std::size_t t = 0; t < t_out; ++t) orow[t] += wk * src[t];
      }
    }
  }
  return out;
}

MaxPoolResult maxpool1d(const DenseArray& x, std::size_t width) {
  require(x.rank() == 2, "maxpool1d: expected x[C x T]");
  if (width < 1) throw DataError("maxpool1d: pool width must be >= 1");
  const std::size_t c_n = x.extent(0);
  const std::size_t t_in = x.extent(1);
  const std::size_t t_out = t_in / width;
  require(t_out >= 1, "maxpool1d: pool width exceeds input length");

  MaxPoolResult r{DenseArray({c_n, t_out}), std::vector<std::size_t>(c_n * t_out)};
  for (std::size_t c = 0; c < c_n; ++c) {
    const double* xrow = x.data() + c * t_in;
    for (std::size_t t = 0; t < t_out; ++t) {
      const std::size_t begin = t * width;
      std::size_t best = begin;
      double best_v = xrow[begin];
      for (std::size_t u = begin + 1; u < begin + width; ++u) {
        if (xrow[u] > best_v) {  // strict: first max wins
          best_v = xrow[u];
          best = u;
        }
      }
      r.values.at(c, t) = best_v;
      r.argmax[c * t_out + t] = c * t_in + best;
    }
  }
  return r;
}

GlobalMaxResult global_max_time(const DenseArray& x) {
  require(x.rank() == 2, "global_max_time: expected x[C x T]");
  const std::size_t c_n = x.extent(0);
  const std::size_t t_in = x.extent(1);
  GlobalMaxResult r{DenseArray({c_n}), std::vector<std::size_t>(c_n)};
  for (std::size_t c = 0; c < c_n; ++c) {
    const double* xrow = x.data() + c * t_in;
    std::size_t best = 0;
    double best_v = xrow[0];
    for (std::size_t t = 1; t < t_in; ++t) {
      if (xrow[t] > best_v) {
        best_v = xrow[t];
        best = t;
      }
    }
    r.values[c] = best_v;
    r.argmax[c] = best;
  }
  return r;
}

DenseArray relu(const DenseArray& x) {
  DenseArray out = x;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

DenseArray embedding_lookup(const DenseArray& table, std::size_t row) {
  require(table.rank() == 2, "embedding_lookup: expected table[N x d]");
  if (row >= table.extent(0)) {
    throw DataError("embedding_lookup: row " + std::to_string(row) +
                    " out of range [0, " + std::to_string(table.extent(0)) + ")");
  }
  const std::size_t d = table.extent(1);
  DenseArray out({d});
  std::copy_n(table.data() + row * d, d, out.data());
  return out;
}

double cosine(const DenseArray& a, const DenseArray& b) {
  require(a.rank() == 1 && b.rank() == 1 && a.extent(0) == b.extent(0),
          "cosine: expected equal-length vectors");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na <= kCosineNormEps || nb <= kCosineNormEps) {
    throw NumericError("cosine: degenerate vector (norm below 1e-8)");
  }
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

double hinge_loss(double r_pos, std::span<const double> r_neg, double margin) {
  require(!r_neg.empty(), "hinge_loss: needs at least one negative");
  double loss = 0.0;
  for (double rn : r_neg) {
    const double term = margin - r_pos + rn;
    if (term > 0.0) loss += term;
  }
  return loss;
}

double squared_error(const DenseArray& pred, const DenseArray& target) {
  require(pred.same_shape(target), "squared_error: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  return acc;
}

double sigmoid_bce(const DenseArray& logits, const DenseArray& targets) {
  require(logits.same_shape(targets), "sigmoid_bce: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    acc += softplus(logits[i]) - logits[i] * targets[i];
  }
  return acc / static_cast<double>(logits.size());
}

}  // namespace cuembed::ops
