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

#include "cuembed/content_regression.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cuembed/errors.hpp"
#include "cuembed/optim.hpp"
#include "cuembed/tape.hpp"

namespace cuembed {

RegressionResult train_regression(const RegressionData& data,
                                  const CueConfig& cfg) {
  cfg.validate();
  if (data.mels == nullptr || data.targets == nullptr) {
    throw ConfigError("train_regression: missing inputs or targets");
  }
  const std::vector<MelSpec>& mels = *data.mels;
  const DenseArray& targets = *data.targets;
  if (mels.empty()) throw ConfigError("train_regression: empty training set");
  if (targets.rank() != 2 || targets.extent(0) != mels.size()) {
    throw DataError("train_regression: one target row per item required");
  }
  if (targets.extent(1) != cfg.feature_dim) {
    throw ConfigError("train_regression: target dimension " +
                      std::to_string(targets.extent(1)) +
                      " does not match tower output " +
                      std::to_string(cfg.feature_dim));
  }
  for (std::size_t i = 0; i < mels.size(); ++i) {
    if (mels[i].mel_bins() != cfg.mel_bins) {
      throw DataError("train_regression: bin count mismatch for item " +
                      std::to_string(i));
    }
    if (mels[i].frames() < cfg.context_frames) {
      throw DataError("train_regression: clip shorter than context for item " +
                      std::to_string(i));
    }
  }

  RegressionResult result;
  result.model.cfg = cfg;
  result.model.tower = init_cue_params(cfg, ModelKind::kAudio, 1, 1);
  TowerParams& tower = result.model.tower;

  // Standardize targets per dimension on the training items.
  DenseArray& mean = result.model.target_mean;
  DenseArray& scale = result.model.target_scale;
  mean = DenseArray({cfg.feature_dim});
  scale = DenseArray({cfg.feature_dim});
  const double n_items = static_cast<double>(mels.size());
  for (std::size_t d = 0; d < cfg.feature_dim; ++d) {
    double acc = 0.0;
    for (std::size_t i = 0; i < mels.size(); ++i) acc += targets.at(i, d);
    mean[d] = acc / n_items;
    double var = 0.0;
    for (std::size_t i = 0; i < mels.size(); ++i) {
      const double c = targets.at(i, d) - mean[d];
      var += c * c;
    }
    const double sigma = std::sqrt(var / n_items);
    scale[d] = sigma > 1e-12 ? sigma : 1.0;
  }

  std::vector<DenseArray*> refs;
  tower.for_each_audio_param(
      [&](const std::string&, DenseArray& a) { refs.push_back(&a); });
  NesterovSgd opt(cfg.base_lr, cfg.momentum, cfg.lr_decay);

  std::vector<std::size_t> order(mels.size());
  std::iota(order.begin(), order.end(), 0);

  Rng order_rng = Rng::substream(cfg.seed, "reg-epoch-order");
  Rng crop_rng = Rng::substream(cfg.seed, "reg-crops");

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    order_rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, order.size());

      Tape tape;
      std::vector<NodeId> pids;
      tower.for_each_audio_param([&](const std::string&, const DenseArray& a) {
        pids.push_back(tape.param(a));
      });
      // bind_towers order is user side first; rebuild the audio chain from
      // the audio-only param nodes directly.
      auto forward = [&](DenseArray window) {
        NodeId x = tape.value(std::move(window));
        for (std::size_t i = 0; i < cfg.pools.size(); ++i) {
          x = tape.relu(tape.conv1d(x, pids[2 * i], pids[2 * i + 1],
                                    ops::Padding::kSame));
          x = tape.maxpool1d(x, cfg.pools[i]);
        }
        const NodeId g = tape.global_max_time(x);
        return tape.affine(g, pids[2 * cfg.pools.size()],
                           pids[2 * cfg.pools.size() + 1]);
      };

      std::vector<NodeId> errors;
      for (std::size_t idx = begin; idx < end; ++idx) {
        const std::size_t item = order[idx];
        const std::size_t off = static_cast<std::size_t>(crop_rng.below(
            mels[item].frames() - cfg.context_frames + 1));
        const NodeId pred = forward(
            crop_window(mels[item].values, off, cfg.context_frames));
        DenseArray target({cfg.feature_dim});
        for (std::size_t d = 0; d < cfg.feature_dim; ++d) {
          target[d] = (targets.at(item, d) - mean[d]) / scale[d];
        }
        errors.push_back(tape.squared_error(pred, std::move(target)));
      }

      const NodeId loss = tape.scalar_mean(errors);
      const std::vector<DenseArray> grads = tape.gradients(loss, pids);
      opt.step(refs, grads);

      epoch_loss += tape.scalar_of(loss) * static_cast<double>(end - begin);
      seen += end - begin;
    }

    EpochLog row;
    row.epoch = epoch;
    row.train_loss = epoch_loss / static_cast<double>(seen);
    row.effective_lr = opt.effective_lr();
    result.log.push_back(row);
  }
  return result;
}

DenseArray predict_item_factor(const RegressionModel& m, const MelSpec& clip) {
  DenseArray out = item_clip_embed(m.tower, m.cfg, clip);
  if (m.target_mean.size() == out.size()) {
    for (std::size_t d = 0; d < out.size(); ++d) {
      out[d] = out[d] * m.target_scale[d] + m.target_mean[d];
    }
  }
  return out;
}

}  // namespace cuembed
