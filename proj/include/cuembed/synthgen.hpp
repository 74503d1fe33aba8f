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
#include <cstdint>
#include <string>
#include <vector>

#include "cuembed/dense.hpp"

namespace cuembed {

// Synthetic dataset generator with planted low-rank structure. True user and
// item factors are drawn from a standard normal; interactions are Bernoulli
// draws whose rate is a calibrated logistic of the factor inner product; each
// item's audio is a sum of sinusoids at fixed mel-filter center frequencies
// whose amplitudes encode the item factor, so content models can recover the
// planted structure from audio alone.
struct SynthConfig {
  std::size_t num_users = 500;
  std::size_t num_items = 300;
  std::size_t rank = 8;        // true latent dimensionality
  double density = 0.05;       // target fraction of positive (user, item) pairs
  double clip_seconds = 6.0;   // duration of each item's audio clip
  std::size_t num_tags = 10;
  std::uint64_t seed = 0;

  // Throws ConfigError when any count is zero, density is outside (0, 1), or
  // clip_seconds is not positive.
  void validate() const;
};

// A generated dataset held in memory. `positives[u]` lists item indices in
// ascending order with `counts[u]` aligned; `audio[i]` holds samples in
// [-1, 1) at 22050 Hz; `tags[i]` is a 0/1 row of length num_tags.
struct SynthDataset {
  SynthConfig cfg;
  DenseArray u_star;  // [num_users x rank]
  DenseArray v_star;  // [num_items x rank]
  double tau = 0.0;   // calibrated logistic threshold
  std::vector<std::vector<std::size_t>> positives;
  std::vector<std::vector<std::uint64_t>> counts;
  std::vector<std::vector<double>> audio;
  std::vector<std::vector<std::uint8_t>> tags;
  std::vector<double> tone_hz;  // planted sinusoid frequency per factor dim
};

// Generates a dataset under cfg. Deterministic in cfg.seed. Guarantees every
// user ends with at least one positive and every item appears in at least one
// interaction. Throws ConfigError when the density target cannot be
// calibrated.
SynthDataset synth_generate(const SynthConfig& cfg);

// Writes `triplets.tsv`, `tags.tsv`, `ground_truth.json`, and one
// `audio/item_NNNN.wav` per item under dir (created if absent). User and item
// identifiers are `user_NNNN` / `item_NNNN`. Byte-identical across re-runs of
// the same dataset. Throws DataError when the directory cannot be written.
void synth_write(const SynthDataset& ds, const std::string& dir);

}  // namespace cuembed
