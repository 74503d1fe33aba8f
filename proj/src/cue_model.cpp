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

#include "cuembed/cue_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <utility>

#include "cuembed/errors.hpp"
#include "cuembed/optim.hpp"
#include "cuembed/tape.hpp"

namespace cuembed {

namespace {

constexpr std::size_t kConvBlocks = 5;

// Deterministic non-overlapping grid of context windows covering the clip.
std::vector<std::size_t> window_grid(std::size_t total, std::size_t frames) {
  if (total < frames) {
    throw DataError("window_grid: clip shorter than one context window");
  }
  std::vector<std::size_t> offsets;
  for (std::size_t off = 0; off + frames <= total; off += frames) {
    offsets.push_back(off);
  }
  return offsets;
}

struct ParamRefs {
  std::vector<DenseArray*> arrays;
};

ParamRefs collect_params(TowerParams& p) {
  ParamRefs refs;
  p.for_each_param(
      [&](const std::string&, DenseArray& a) { refs.arrays.push_back(&a); });
  return refs;
}

// Positive pairs flattened from the per-user positive lists.
std::vector<std::pair<std::size_t, std::size_t>> positive_pairs(
    const BinaryInteractions& b) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t u = 0; u < b.positives.size(); ++u) {
    for (std::size_t i : b.positives[u]) pairs.emplace_back(u, i);
  }
  return pairs;
}

// Union of a user's train and valid positives, sorted, for negative sampling
// on validation tuples.
std::vector<std::size_t> merged_positives(const BinaryInteractions& train,
                                          const BinaryInteractions& valid,
                                          std::size_t u) {
  std::vector<std::size_t> merged = train.positives[u];
  if (u < valid.positives.size()) {
    merged.insert(merged.end(), valid.positives[u].begin(),
                  valid.positives[u].end());
  }
  std::sort(merged.begin(), merged.end());
  merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
  return merged;
}

struct ValidTuple {
  std::size_t user = 0;
  std::size_t pos = 0;
  std::vector<std::size_t> negs;
};

}  // namespace

NodeId TapeTowers::user(std::size_t u) const {
  const NodeId e = tape->embedding_lookup(pids[0], u);
  const NodeId h = tape->relu(tape->affine(e, pids[1], pids[2]));
  return tape->affine(h, pids[3], pids[4]);
}

NodeId TapeTowers::item_audio(DenseArray window) const {
  if (kind != ModelKind::kAudio) {
    throw ConfigError("TapeTowers: audio tower required");
  }
  NodeId x = tape->value(std::move(window));
  for (std::size_t i = 0; i < kConvBlocks; ++i) {
    x = tape->relu(
        tape->conv1d(x, pids[5 + 2 * i], pids[6 + 2 * i], ops::Padding::kSame));
    x = tape->maxpool1d(x, cfg->pools[i]);
  }
  const NodeId g = tape->global_max_time(x);
  return tape->affine(g, pids[15], pids[16]);
}

NodeId TapeTowers::item_index(std::size_t item) const {
  if (kind != ModelKind::kIndex) {
    throw ConfigError("TapeTowers: index tower required");
  }
  const NodeId e = tape->embedding_lookup(pids[5], item);
  const NodeId h = tape->relu(tape->affine(e, pids[6], pids[7]));
  return tape->affine(h, pids[8], pids[9]);
}

TapeTowers bind_towers(Tape& tape, const TowerParams& p,
                       const CueConfig& cfg) {
  TapeTowers t;
  t.tape = &tape;
  t.cfg = &cfg;
  t.kind = p.kind;
  p.for_each_param([&](const std::string&, const DenseArray& a) {
    t.pids.push_back(tape.param(a));
  });
  return t;
}

void CueConfig::validate() const {
  if (embed_dim < 1 || feature_dim < 1) {
    throw ConfigError("cue config: embed_dim and feature_dim must be >= 1");
  }
  if (negatives < 1) throw ConfigError("cue config: negatives must be >= 1");
  if (!(margin > 0.0) || !(margin < 2.0)) {
    throw ConfigError("cue config: margin must lie in (0, 2)");
  }
  if (channels.size() != kConvBlocks || pools.size() != kConvBlocks) {
    throw ConfigError("cue config: exactly five conv/pool blocks required");
  }
  for (std::size_t c : channels) {
    if (c < 1) throw ConfigError("cue config: channels must be >= 1");
  }
  for (std::size_t w : pools) {
    if (w < 1) throw ConfigError("cue config: pool widths must be >= 1");
  }
  if (kernel < 1) throw ConfigError("cue config: kernel must be >= 1");
  if (mel_bins < 1) throw ConfigError("cue config: mel_bins must be >= 1");
  if (context_frames < 1) {
    throw ConfigError("cue config: context_frames must be >= 1");
  }
  if (residual_frames() < 1) {
    throw ConfigError("cue config: context_frames too short for pool stack");
  }
  if (batch_size < 1) throw ConfigError("cue config: batch_size must be >= 1");
  if (base_lr < 0.0) throw ConfigError("cue config: base_lr must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw ConfigError("cue config: momentum must lie in [0, 1)");
  }
  if (lr_decay < 0.0) throw ConfigError("cue config: lr_decay must be >= 0");
}

std::size_t CueConfig::residual_frames() const {
  std::size_t t = context_frames;
  for (std::size_t w : pools) {
    if (w == 0) return 0;
    t /= w;
  }
  return t;
}

TowerParams init_cue_params(const CueConfig& cfg, ModelKind kind,
                            std::size_t num_users, std::size_t num_items) {
  cfg.validate();
  if (num_users < 1) throw DataError("cue init: need at least one user");
  if (kind == ModelKind::kIndex && num_items < 1) {
    throw DataError("cue init: need at least one item");
  }

  const std::size_t e_n = cfg.embed_dim;
  const std::size_t d_n = cfg.feature_dim;

  TowerParams p;
  p.kind = kind;
  p.user_table = DenseArray({num_users, e_n});
  p.user_hidden_w = DenseArray({e_n, e_n});
  p.user_hidden_b = DenseArray({e_n});
  p.user_out_w = DenseArray({d_n, e_n});
  p.user_out_b = DenseArray({d_n});
  if (kind == ModelKind::kAudio) {
    std::size_t c_in = cfg.mel_bins;
    for (std::size_t i = 0; i < kConvBlocks; ++i) {
      const std::size_t c_out = cfg.channels[i];
      p.conv_w.push_back(DenseArray({c_out, c_in, cfg.kernel}));
      p.conv_b.push_back(DenseArray({c_out}));
      c_in = c_out;
    }
    p.item_out_w = DenseArray({d_n, cfg.channels.back()});
  } else {
    p.item_table = DenseArray({num_items, e_n});
    p.item_hidden_w = DenseArray({e_n, e_n});
    p.item_hidden_b = DenseArray({e_n});
    p.item_out_w = DenseArray({d_n, e_n});
    p.item_seen.assign(num_items, 0);
  }
  p.item_out_b = DenseArray({d_n});

  Rng rng = Rng::substream(cfg.seed, "cue-init");
  p.for_each_param([&](const std::string& name, DenseArray& a) {
    const bool table = name.ends_with("table");
    const bool bias = name.ends_with("_b");
    const bool out_bias = name == "user_out_b" || name == "item_out_b";
    if (table) {
      for (double& v : a.values()) v = 0.1 * rng.normal();
    } else if (out_bias) {
      for (double& v : a.values()) v = 0.01 * rng.normal();
    } else if (bias) {
      a.fill(0.0);
    } else {
      std::size_t fan_in = 1;
      for (std::size_t d = 1; d < a.rank(); ++d) fan_in *= a.extent(d);
      const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (double& v : a.values()) v = scale * rng.normal();
    }
  });
  return p;
}

DenseArray user_embed(const TowerParams& p, std::size_t u) {
  const DenseArray e = ops::embedding_lookup(p.user_table, u);
  const DenseArray h =
      ops::relu(ops::affine(e, p.user_hidden_w, p.user_hidden_b));
  return ops::affine(h, p.user_out_w, p.user_out_b);
}

DenseArray item_embed(const TowerParams& p, const CueConfig& cfg,
                      const DenseArray& window) {
  if (p.kind != ModelKind::kAudio) {
    throw ConfigError("item_embed: audio tower required");
  }
  if (window.rank() != 2 || window.extent(0) != cfg.mel_bins ||
      window.extent(1) != cfg.context_frames) {
    throw DataError("item_embed: window must be [mel_bins x context_frames]");
  }
  DenseArray x = window;
  for (std::size_t i = 0; i < kConvBlocks; ++i) {
    x = ops::relu(
        ops::conv1d(x, p.conv_w[i], p.conv_b[i], ops::Padding::kSame));
    x = ops::maxpool1d(x, cfg.pools[i]).values;
  }
  const DenseArray g = ops::global_max_time(x).values;
  return ops::affine(g, p.item_out_w, p.item_out_b);
}

DenseArray item_embed_index(const TowerParams& p, std::size_t item) {
  if (p.kind != ModelKind::kIndex) {
    throw ConfigError("item_embed_index: index tower required");
  }
  if (item >= p.item_table.extent(0)) {
    throw DataError("item_embed_index: item id out of range");
  }
  if (item >= p.item_seen.size() || p.item_seen[item] == 0) {
    throw DataError("item_embed_index: cold-start item was never trained");
  }
  const DenseArray e = ops::embedding_lookup(p.item_table, item);
  const DenseArray h =
      ops::relu(ops::affine(e, p.item_hidden_w, p.item_hidden_b));
  return ops::affine(h, p.item_out_w, p.item_out_b);
}

DenseArray item_clip_embed(const TowerParams& p, const CueConfig& cfg,
                           const MelSpec& clip) {
  if (clip.mel_bins() != cfg.mel_bins) {
    throw DataError("item_clip_embed: mel bin count mismatch");
  }
  const std::vector<std::size_t> offsets =
      window_grid(clip.frames(), cfg.context_frames);
  DenseArray acc({cfg.feature_dim});
  for (std::size_t off : offsets) {
    const DenseArray y =
        item_embed(p, cfg, crop_window(clip.values, off, cfg.context_frames));
    for (std::size_t d = 0; d < cfg.feature_dim; ++d) acc[d] += y[d];
  }
  const double inv = 1.0 / static_cast<double>(offsets.size());
  for (double& v : acc.values()) v *= inv;
  return acc;
}

std::vector<std::size_t> sample_negatives(std::size_t user,
                                          const BinaryInteractions& b,
                                          std::span<const std::size_t> pool,
                                          std::size_t k, Rng& rng) {
  if (user >= b.positives.size()) {
    throw DataError("sample_negatives: user id out of range");
  }
  const std::vector<std::size_t>& pos = b.positives[user];
  std::vector<std::size_t> candidates;
  candidates.reserve(pool.size());
  for (std::size_t item : pool) {
    if (!std::binary_search(pos.begin(), pos.end(), item)) {
      candidates.push_back(item);
    }
  }
  if (candidates.size() < k) {
    throw DataError("sample_negatives: fewer than k candidate items");
  }
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t pick = j + static_cast<std::size_t>(rng.below(
                                     candidates.size() - j));
    std::swap(candidates[j], candidates[pick]);
  }
  candidates.resize(k);
  return candidates;
}

namespace {

// Shared scoring path for train/valid losses computed without a tape.
double tuple_hinge(const TowerParams& p, const CueConfig& cfg,
                   const std::vector<MelSpec>* mels, std::size_t user,
                   std::size_t pos, std::span<const std::size_t> negs,
                   std::size_t crop_offset_pos,
                   std::span<const std::size_t> crop_offset_negs) {
  const DenseArray y_u = user_embed(p, user);
  double r_pos = 0.0;
  std::vector<double> r_negs(negs.size());
  if (p.kind == ModelKind::kAudio) {
    const DenseArray w_pos = crop_window((*mels)[pos].values, crop_offset_pos,
                                       cfg.context_frames);
    r_pos = relevance(y_u, item_embed(p, cfg, w_pos));
    for (std::size_t j = 0; j < negs.size(); ++j) {
      const DenseArray w = crop_window((*mels)[negs[j]].values,
                                     crop_offset_negs[j], cfg.context_frames);
      r_negs[j] = relevance(y_u, item_embed(p, cfg, w));
    }
  } else {
    r_pos = relevance(y_u, item_embed_index(p, pos));
    for (std::size_t j = 0; j < negs.size(); ++j) {
      r_negs[j] = relevance(y_u, item_embed_index(p, negs[j]));
    }
  }
  return ops::hinge_loss(r_pos, r_negs, cfg.margin);
}

std::size_t center_offset(std::size_t total, std::size_t frames) {
  return (total - frames) / 2;
}

}  // namespace

CueTrainResult train_cue(const CueTrainData& data, const CueConfig& cfg,
                         ModelKind kind) {
  cfg.validate();
  if (data.train == nullptr) {
    throw ConfigError("train_cue: missing train split");
  }
  const BinaryInteractions& train = *data.train;
  if (train.positives.empty()) {
    throw ConfigError("train_cue: empty training set");
  }
  if (data.pool.empty()) {
    throw ConfigError("train_cue: empty negative-sampling pool");
  }
  const std::size_t num_items =
      data.num_items > 0 ? data.num_items : train.num_items;

  auto pairs = positive_pairs(train);
  if (pairs.empty()) throw ConfigError("train_cue: empty training set");

  const bool has_valid =
      data.valid != nullptr && !positive_pairs(*data.valid).empty();

  // Audio kind needs a long-enough normalized spectrogram for every item that
  // can appear in a tuple.
  if (kind == ModelKind::kAudio) {
    if (data.mels == nullptr) {
      throw DataError("train_cue: audio model requires spectrograms");
    }
    auto check_item = [&](std::size_t item) {
      if (item >= data.mels->size()) {
        throw DataError("train_cue: missing spectrogram for item " +
                        std::to_string(item));
      }
      const MelSpec& m = (*data.mels)[item];
      if (m.mel_bins() != cfg.mel_bins) {
        throw DataError("train_cue: spectrogram bin count mismatch for item " +
                        std::to_string(item));
      }
      if (m.frames() < cfg.context_frames) {
        throw DataError("train_cue: clip shorter than context for item " +
                        std::to_string(item));
      }
    };
    for (const auto& [u, i] : pairs) check_item(i);
    for (std::size_t i : data.pool) check_item(i);
    if (has_valid) {
      for (const auto& [u, i] : positive_pairs(*data.valid)) check_item(i);
    }
  }

  TowerParams params =
      init_cue_params(cfg, kind, train.positives.size(), num_items);
  if (kind == ModelKind::kIndex) {
    for (std::size_t i : data.pool) params.item_seen[i] = 1;
    for (const auto& [u, i] : pairs) params.item_seen[i] = 1;
    if (has_valid) {
      for (const auto& [u, i] : positive_pairs(*data.valid)) {
        params.item_seen[i] = 1;
      }
    }
  }

  // Fixed validation tuples: negatives drawn once against the union of train
  // and valid positives, windows center-cropped.
  std::vector<ValidTuple> valid_tuples;
  if (has_valid) {
    Rng vrng = Rng::substream(cfg.seed, "cue-valid-negatives");
    BinaryInteractions merged;
    merged.num_items = num_items;
    merged.positives.resize(train.positives.size());
    for (std::size_t u = 0; u < train.positives.size(); ++u) {
      merged.positives[u] = merged_positives(train, *data.valid, u);
    }
    for (const auto& [u, i] : positive_pairs(*data.valid)) {
      ValidTuple t;
      t.user = u;
      t.pos = i;
      t.negs = sample_negatives(u, merged, data.pool, cfg.negatives, vrng);
      valid_tuples.push_back(std::move(t));
    }
  }

  auto valid_loss = [&](const TowerParams& p) {
    double total = 0.0;
    for (const ValidTuple& t : valid_tuples) {
      std::size_t pos_off = 0;
      std::vector<std::size_t> neg_offs(t.negs.size(), 0);
      if (kind == ModelKind::kAudio) {
        pos_off = center_offset((*data.mels)[t.pos].frames(),
                                cfg.context_frames);
        for (std::size_t j = 0; j < t.negs.size(); ++j) {
          neg_offs[j] = center_offset((*data.mels)[t.negs[j]].frames(),
                                      cfg.context_frames);
        }
      }
      total += tuple_hinge(p, cfg, data.mels, t.user, t.pos, t.negs, pos_off,
                           neg_offs);
    }
    return total / static_cast<double>(valid_tuples.size());
  };

  ParamRefs refs = collect_params(params);
  NesterovSgd opt(cfg.base_lr, cfg.momentum, cfg.lr_decay);

  CueTrainResult result;
  result.best_epoch = 0;
  double best_valid = std::numeric_limits<double>::infinity();
  TowerParams best_params = params;
  std::size_t epochs_since_best = 0;

  Rng order_rng = Rng::substream(cfg.seed, "cue-epoch-order");
  Rng neg_rng = Rng::substream(cfg.seed, "cue-negatives");
  Rng crop_rng = Rng::substream(cfg.seed, "cue-crops");

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    order_rng.shuffle(pairs);

    double epoch_loss = 0.0;
    std::size_t epoch_tuples = 0;
    for (std::size_t begin = 0; begin < pairs.size();
         begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, pairs.size());

      Tape tape;
      const TapeTowers towers = bind_towers(tape, params, cfg);

      std::vector<NodeId> tuple_losses;
      for (std::size_t idx = begin; idx < end; ++idx) {
        const auto [u, i_pos] = pairs[idx];
        const std::vector<std::size_t> negs =
            sample_negatives(u, train, data.pool, cfg.negatives, neg_rng);

        const NodeId y_u = towers.user(u);
        NodeId r_pos = 0;
        std::vector<NodeId> r_negs;
        if (kind == ModelKind::kAudio) {
          const MelSpec& mel_pos = (*data.mels)[i_pos];
          const std::size_t pos_off = static_cast<std::size_t>(
              crop_rng.below(mel_pos.frames() - cfg.context_frames + 1));
          r_pos = tape.cosine(
              y_u, towers.item_audio(crop_window(mel_pos.values, pos_off,
                                               cfg.context_frames)));
          for (std::size_t n : negs) {
            const MelSpec& mel_neg = (*data.mels)[n];
            const std::size_t off = static_cast<std::size_t>(
                crop_rng.below(mel_neg.frames() - cfg.context_frames + 1));
            r_negs.push_back(tape.cosine(
                y_u, towers.item_audio(crop_window(mel_neg.values, off,
                                                 cfg.context_frames))));
          }
        } else {
          r_pos = tape.cosine(y_u, towers.item_index(i_pos));
          for (std::size_t n : negs) {
            r_negs.push_back(tape.cosine(y_u, towers.item_index(n)));
          }
        }
        tuple_losses.push_back(tape.hinge_loss(r_pos, r_negs, cfg.margin));
      }

      const NodeId loss = tape.scalar_mean(tuple_losses);
      const std::vector<DenseArray> grads = tape.gradients(loss, towers.pids);
      opt.step(refs.arrays, grads);

      epoch_loss += tape.scalar_of(loss) * static_cast<double>(end - begin);
      epoch_tuples += end - begin;
    }

    EpochLog row;
    row.epoch = epoch;
    row.train_loss = epoch_loss / static_cast<double>(epoch_tuples);
    row.effective_lr = opt.effective_lr();
    if (has_valid) {
      row.valid_loss = valid_loss(params);
      if (row.valid_loss < best_valid) {
        best_valid = row.valid_loss;
        best_params = params;
        result.best_epoch = epoch;
        epochs_since_best = 0;
      } else {
        ++epochs_since_best;
      }
    }
    result.log.push_back(row);

    if (has_valid && epochs_since_best > cfg.patience) break;
  }

  if (has_valid && result.best_epoch > 0) {
    result.params = std::move(best_params);
    result.best_valid = best_valid;
  } else {
    result.params = std::move(params);
  }
  return result;
}

std::vector<double> score_user_items(
    const TowerParams& p, std::size_t u,
    std::span<const DenseArray> item_features) {
  const DenseArray y_u = user_embed(p, u);
  std::vector<double> scores;
  scores.reserve(item_features.size());
  for (const DenseArray& f : item_features) {
    scores.push_back(relevance(y_u, f));
  }
  return scores;
}

std::vector<double> score_user_items(const TowerParams& p,
                                     const CueConfig& cfg, std::size_t u,
                                     std::span<const MelSpec> mels) {
  std::vector<DenseArray> features;
  features.reserve(mels.size());
  for (const MelSpec& m : mels) {
    features.push_back(item_clip_embed(p, cfg, m));
  }
  return score_user_items(p, u, features);
}

}  // namespace cuembed
