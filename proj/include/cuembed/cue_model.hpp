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
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cuembed/audio_frontend.hpp"
#include "cuembed/dense.hpp"
#include "cuembed/interactions.hpp"
#include "cuembed/ops.hpp"
#include "cuembed/rng.hpp"
#include "cuembed/tape.hpp"

namespace cuembed {

// Item side: audio tower (content-user embedding model) or an item embedding
// table mirroring the user side (warm-start ablation variant).
enum class ModelKind { kAudio, kIndex };

struct CueConfig {
  std::size_t embed_dim = 128;   // E, user/item embedding width
  std::size_t feature_dim = 50;  // D, width of y_U and y_I
  std::size_t negatives = 20;    // k, negatives per positive
  double margin = 0.2;
  std::vector<std::size_t> channels{128, 128, 128, 128, 128};
  std::size_t kernel = 3;  // temporal kernel size, same padding
  std::vector<std::size_t> pools{2, 2, 2, 2, 2};
  std::size_t mel_bins = 128;
  std::size_t context_frames = 128;
  std::size_t batch_size = 32;  // tuples per optimizer step
  std::size_t max_epochs = 20;
  std::size_t patience = 5;
  double base_lr = 0.01;
  double momentum = 0.9;
  double lr_decay = 1e-6;
  std::uint64_t seed = 0;

  void validate() const;

  // Time frames surviving the five pooling stages.
  std::size_t residual_frames() const;
};

struct TowerParams {
  ModelKind kind = ModelKind::kAudio;

  DenseArray user_table;     // [num_users x E]
  DenseArray user_hidden_w;  // [E x E]
  DenseArray user_hidden_b;  // [E]
  DenseArray user_out_w;     // [D x E]
  DenseArray user_out_b;     // [D]

  // audio item tower
  std::vector<DenseArray> conv_w;  // [C_out x C_in x kernel] per block
  std::vector<DenseArray> conv_b;  // [C_out]

  // index item tower (mirrors the user side)
  DenseArray item_table;     // [num_items x E]
  DenseArray item_hidden_w;  // [E x E]
  DenseArray item_hidden_b;  // [E]

  DenseArray item_out_w;  // [D x last_channels] or [D x E]
  DenseArray item_out_b;  // [D]

  // index kind only: items that appeared during training; scoring any other
  // item raises a cold-start error
  std::vector<std::uint8_t> item_seen;

  std::size_t num_users() const { return user_table.extent(0); }

  // Visits every trainable array with a stable name, in a fixed order shared
  // by initialization, the optimizer and checkpoints.
  template <typename Fn>
  void for_each_param(Fn&& fn) {
    visit(*this, fn);
  }
  template <typename Fn>
  void for_each_param(Fn&& fn) const {
    visit(*this, fn);
  }

  // Audio-tower subset (conv blocks + feature affine), same naming.
  template <typename Fn>
  void for_each_audio_param(Fn&& fn) {
    visit_audio(*this, fn);
  }
  template <typename Fn>
  void for_each_audio_param(Fn&& fn) const {
    visit_audio(*this, fn);
  }

 private:
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn& fn) {
    fn("user_table", self.user_table);
    fn("user_hidden_w", self.user_hidden_w);
    fn("user_hidden_b", self.user_hidden_b);
    fn("user_out_w", self.user_out_w);
    fn("user_out_b", self.user_out_b);
    if (self.kind == ModelKind::kAudio) {
      for (std::size_t i = 0; i < self.conv_w.size(); ++i) {
        const std::string tag = "conv" + std::to_string(i);
        fn(tag + "_w", self.conv_w[i]);
        fn(tag + "_b", self.conv_b[i]);
      }
    } else {
      fn("item_table", self.item_table);
      fn("item_hidden_w", self.item_hidden_w);
      fn("item_hidden_b", self.item_hidden_b);
    }
    fn("item_out_w", self.item_out_w);
    fn("item_out_b", self.item_out_b);
  }

  template <typename Self, typename Fn>
  static void visit_audio(Self& self, Fn& fn) {
    for (std::size_t i = 0; i < self.conv_w.size(); ++i) {
      const std::string tag = "conv" + std::to_string(i);
      fn(tag + "_w", self.conv_w[i]);
      fn(tag + "_b", self.conv_b[i]);
    }
    fn("item_out_w", self.item_out_w);
    fn("item_out_b", self.item_out_b);
  }
};

// He-initialized weights, zero biases (feature-layer biases slightly off
// zero so cosine stays defined when an activation collapses), embedding
// tables ~ 0.1 N(0,1). Seeded from cfg.seed.
TowerParams init_cue_params(const CueConfig& cfg, ModelKind kind,
                            std::size_t num_users, std::size_t num_items);

// output_affine(relu(hidden_affine(lookup(table, u)))); no output activation.
DenseArray user_embed(const TowerParams& p, std::size_t u);

// Five (conv -> ReLU -> maxpool) blocks, global max over time, affine to D.
DenseArray item_embed(const TowerParams& p, const CueConfig& cfg,
                      const DenseArray& window);

// Index-variant item feature; throws DataError for items unseen in training.
DenseArray item_embed_index(const TowerParams& p, std::size_t item);

// Clip-level feature: mean of window embeddings over the deterministic
// non-overlapping grid of context windows.
DenseArray item_clip_embed(const TowerParams& p, const CueConfig& cfg,
                           const MelSpec& clip);

inline double relevance(const DenseArray& y_u, const DenseArray& y_i) {
  return ops::cosine(y_u, y_i);
}

// Tape bindings of a parameter set: one param node per trainable array in
// for_each_param order, plus graph builders mirroring the pure forwards.
// Exposed so gradient checks can differentiate the exact training graph.
struct TapeTowers {
  Tape* tape = nullptr;
  const CueConfig* cfg = nullptr;
  ModelKind kind = ModelKind::kAudio;
  std::vector<NodeId> pids;  // param node per array

  NodeId user(std::size_t u) const;
  NodeId item_audio(DenseArray window) const;
  NodeId item_index(std::size_t item) const;
};

TapeTowers bind_towers(Tape& tape, const TowerParams& p, const CueConfig& cfg);

// Uniform sample without replacement from pool minus the user's positives.
std::vector<std::size_t> sample_negatives(std::size_t user,
                                          const BinaryInteractions& b,
                                          std::span<const std::size_t> pool,
                                          std::size_t k, Rng& rng);

struct CueTrainData {
  const BinaryInteractions* train = nullptr;
  // Optional held-out pairs for early stopping; empty disables it.
  const BinaryInteractions* valid = nullptr;
  // Negative-sampling candidates (training item universe).
  std::vector<std::size_t> pool;
  // Normalized spectrograms indexed by item id; required for kAudio.
  const std::vector<MelSpec>* mels = nullptr;
  std::size_t num_items = 0;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double valid_loss = std::numeric_limits<double>::quiet_NaN();
  double effective_lr = 0.0;
};

struct CueTrainResult {
  TowerParams params;  // best-validation parameters (final when no valid set)
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;  // 1-based; 0 when never evaluated
  double best_valid = std::numeric_limits<double>::quiet_NaN();
};

CueTrainResult train_cue(const CueTrainData& data, const CueConfig& cfg,
                         ModelKind kind);

// cos(y_U, feature) per item feature row.
std::vector<double> score_user_items(const TowerParams& p, std::size_t u,
                                     std::span<const DenseArray> item_features);

// Clip-level scores straight from spectrograms (audio towers).
std::vector<double> score_user_items(const TowerParams& p,
                                     const CueConfig& cfg, std::size_t u,
                                     std::span<const MelSpec> mels);

}  // namespace cuembed
