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

#include <cstddef>
#include <span>
#include <vector>

#include "cuembed/dense.hpp"

// Pure forward kernels. Each is a deterministic function of its inputs;
// the gradient tape records these and replays them in its reverse sweep.
namespace cuembed::ops {

enum class Padding { kSame, kValid };

// Degenerate-norm threshold for cosine; below this the vector direction is
// meaningless and callers get an error rather than a zero score.
inline constexpr double kCosineNormEps = 1e-8;

// out[i] = sum_j w[i,j] * x[j] + b[i].  x: [n], w: [m x n], b: [m].
DenseArray affine(const DenseArray& x, const DenseArray& w, const DenseArray& b);

// Temporal cross-correlation, stride 1.  x: [C_in x T], k: [C_out x C_in x K],
// b: [C_out].  Same padding zero-pads to keep T' = T; valid gives T' = T-K+1.
DenseArray conv1d(const DenseArray& x, const DenseArray& k, const DenseArray& b,
                  Padding pad);

struct MaxPoolResult {
  DenseArray values;                // [C x floor(T/w)]
  std::vector<std::size_t> argmax;  // flat input index per output cell
};

// Non-overlapping temporal max pooling; trailing T mod w frames are dropped.
// Ties resolve to the lowest time index.
MaxPoolResult maxpool1d(const DenseArray& x, std::size_t width);

struct GlobalMaxResult {
  DenseArray values;                // [C]
  std::vector<std::size_t> argmax;  // time index per channel
};

// Max over the full time axis.  x: [C x T] -> [C].
GlobalMaxResult global_max_time(const DenseArray& x);

// Elementwise max(0, x).
DenseArray relu(const DenseArray& x);

// Row `row` of table [N x d]; throws DataError when out of range.
DenseArray embedding_lookup(const DenseArray& table, std::size_t row);

// a.b / (|a||b|), clamped to [-1, 1].  Throws NumericError when either norm
// falls below kCosineNormEps.
double cosine(const DenseArray& a, const DenseArray& b);

// sum_i max(0, margin - r_pos + r_neg[i]).
double hinge_loss(double r_pos, std::span<const double> r_neg, double margin);

// sum_i (pred[i] - target[i])^2.
double squared_error(const DenseArray& pred, const DenseArray& target);

// Mean over components of the stable logistic cross-entropy
// softplus(z) - z*y, with y in {0,1}.
double sigmoid_bce(const DenseArray& logits, const DenseArray& targets);

inline double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                  : std::exp(z) / (1.0 + std::exp(z));
}

inline double softplus(double z) {
  // max(z,0) + log1p(exp(-|z|)) avoids overflow on both tails.
  return (z > 0.0 ? z : 0.0) + std::log1p(std::exp(-(z < 0.0 ? -z : z)));
}

// Left zero-pad count for same padding with kernel size k (stride 1).
inline std::size_t same_pad_left(std::size_t k) { return (k - 1) / 2; }

}  // namespace cuembed::ops
