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

#include "cuembed/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "cuembed/errors.hpp"
#include "cuembed/optim.hpp"
#include "cuembed/tape.hpp"
#include "json.hpp"

namespace cuembed {

std::optional<double> auc(std::span<const double> scores,
                          std::span<const std::uint8_t> is_positive) {
  if (scores.size() != is_positive.size()) {
    throw DataError("auc: one label per score required");
  }
  std::size_t p_n = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      throw NumericError("auc: non-finite score");
    }
    if (is_positive[i] != 0) ++p_n;
  }
  const std::size_t n_n = scores.size() - p_n;
  if (p_n == 0 || n_n == 0) return std::nullopt;

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // Walk tie groups in ascending score order; every negative in an earlier
  // group loses to each positive in this group, ties count half.
  double wins = 0.0;
  double ties = 0.0;
  std::size_t neg_below = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::size_t pos_here = 0;
    std::size_t neg_here = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (is_positive[order[j]] != 0) {
        ++pos_here;
      } else {
        ++neg_here;
      }
      ++j;
    }
    wins += static_cast<double>(pos_here) * static_cast<double>(neg_below);
    ties += static_cast<double>(pos_here) * static_cast<double>(neg_here);
    neg_below += neg_here;
    i = j;
  }
  return (wins + 0.5 * ties) /
         (static_cast<double>(p_n) * static_cast<double>(n_n));
}

std::string to_json(const EvalReport& r) {
  nlohmann::json j;
  j["task"] = r.task;
  j["system"] = r.system;
  j["mean_auc"] = r.mean_auc;
  j["n_evaluated"] = r.n_evaluated;
  j["n_skipped"] = r.n_skipped;
  nlohmann::json units = nlohmann::json::array();
  for (const PerUnit& u : r.per_unit) {
    units.push_back({{"id", u.id}, {"auc", u.auc}});
  }
  j["per_unit"] = std::move(units);
  j["config"] = nlohmann::json::parse(
      r.config_json.empty() ? std::string("{}") : r.config_json);
  return j.dump(2) + "\n";
}

EvalReport eval_recommendation(const ScoreFn& system,
                               const std::string& system_name,
                               const BinaryInteractions& b_test,
                               std::span<const std::size_t> eval_items) {
  if (!system) throw ConfigError("eval_recommendation: missing score fn");
  if (eval_items.empty()) {
    throw DataError("eval_recommendation: empty evaluation item set");
  }

  EvalReport report;
  report.task = "recommendation";
  report.system = system_name;

  double total = 0.0;
  for (std::size_t u = 0; u < b_test.positives.size(); ++u) {
    std::vector<std::uint8_t> mask(eval_items.size(), 0);
    const std::vector<std::size_t>& pos = b_test.positives[u];
    for (std::size_t k = 0; k < eval_items.size(); ++k) {
      mask[k] = std::binary_search(pos.begin(), pos.end(), eval_items[k])
                    ? std::uint8_t{1}
                    : std::uint8_t{0};
    }

    const bool any_pos = std::find(mask.begin(), mask.end(), 1) != mask.end();
    const bool any_neg = std::find(mask.begin(), mask.end(), 0) != mask.end();
    if (!any_pos || !any_neg) {
      ++report.n_skipped;
      continue;
    }

    const std::vector<double> scores = system(u, eval_items);
    if (scores.size() != eval_items.size()) {
      throw DataError("eval_recommendation: system returned " +
                      std::to_string(scores.size()) + " scores for " +
                      std::to_string(eval_items.size()) + " items");
    }
    const std::optional<double> value = auc(scores, mask);
    report.per_unit.push_back(PerUnit{u, *value});
    total += *value;
    ++report.n_evaluated;
  }

  if (report.n_evaluated == 0) {
    throw DataError("eval_recommendation: no evaluable users");
  }
  report.mean_auc = total / static_cast<double>(report.n_evaluated);
  return report;
}

std::vector<DenseArray> wmf_item_features(const Factors& f,
                                          std::span<const std::size_t> items) {
  std::vector<DenseArray> out;
  out.reserve(items.size());
  for (std::size_t item : items) {
    if (item >= f.V.extent(0)) {
      throw DataError("wmf_item_features: item id out of range");
    }
    out.push_back(ops::embedding_lookup(f.V, item));
  }
  return out;
}

namespace {

const MelSpec& mel_for(const std::vector<MelSpec>& mels, std::size_t item) {
  if (item >= mels.size() || mels[item].values.empty()) {
    throw DataError("item " + std::to_string(item) + " has no audio");
  }
  return mels[item];
}

}  // namespace

std::vector<DenseArray> regression_item_features(
    const RegressionModel& m, const std::vector<MelSpec>& mels,
    std::span<const std::size_t> items) {
  std::vector<DenseArray> out;
  out.reserve(items.size());
  for (std::size_t item : items) {
    out.push_back(predict_item_factor(m, mel_for(mels, item)));
  }
  return out;
}

std::vector<DenseArray> cue_item_features(const TowerParams& p,
                                          const CueConfig& cfg,
                                          const std::vector<MelSpec>& mels,
                                          std::span<const std::size_t> items) {
  std::vector<DenseArray> out;
  out.reserve(items.size());
  for (std::size_t item : items) {
    out.push_back(item_clip_embed(p, cfg, mel_for(mels, item)));
  }
  return out;
}

void TagMlpConfig::validate() const {
  if (hidden < 1) throw ConfigError("tag mlp: hidden width must be >= 1");
  if (batch_size < 1) throw ConfigError("tag mlp: batch_size must be >= 1");
  if (base_lr < 0.0) throw ConfigError("tag mlp: base_lr must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw ConfigError("tag mlp: momentum must lie in [0, 1)");
  }
  if (lr_decay < 0.0) throw ConfigError("tag mlp: lr_decay must be >= 0");
}

namespace {

struct Mlp {
  DenseArray w1, b1, w2, b2;
};

Mlp init_mlp(std::size_t d_in, std::size_t hidden, std::size_t tags,
             std::uint64_t seed) {
  Mlp m;
  m.w1 = DenseArray({hidden, d_in});
  m.b1 = DenseArray({hidden});
  m.w2 = DenseArray({tags, hidden});
  m.b2 = DenseArray({tags});
  Rng rng = Rng::substream(seed, "tag-mlp-init");
  const double s1 = std::sqrt(2.0 / static_cast<double>(d_in));
  for (double& v : m.w1.values()) v = s1 * rng.normal();
  const double s2 = std::sqrt(2.0 / static_cast<double>(hidden));
  for (double& v : m.w2.values()) v = s2 * rng.normal();
  return m;
}

DenseArray mlp_logits(const Mlp& m, const DenseArray& x) {
  return ops::affine(ops::relu(ops::affine(x, m.w1, m.b1)), m.w2, m.b2);
}

DenseArray label_target(const std::vector<std::uint8_t>& row) {
  DenseArray t({row.size()});
  for (std::size_t i = 0; i < row.size(); ++i) t[i] = row[i] != 0 ? 1.0 : 0.0;
  return t;
}

}  // namespace

TagTransferResult tag_transfer(const TagTransferData& data,
                               const ItemSplit& split, const TagMlpConfig& cfg,
                               const std::string& system_name) {
  cfg.validate();
  if (data.features == nullptr || data.labels == nullptr) {
    throw ConfigError("tag_transfer: missing features or labels");
  }
  if (data.num_tags < 1) throw ConfigError("tag_transfer: num_tags must be >= 1");
  const std::vector<DenseArray>& features = *data.features;
  const std::vector<std::vector<std::uint8_t>>& labels = *data.labels;

  auto tagged_in = [&](std::span<const std::size_t> part) {
    std::vector<std::size_t> out;
    for (std::size_t item : part) {
      if (item >= labels.size() || labels[item].empty()) continue;
      if (labels[item].size() != data.num_tags) {
        throw DataError("tag_transfer: label row width mismatch for item " +
                        std::to_string(item));
      }
      if (item >= features.size() || features[item].empty()) {
        throw DataError("tag_transfer: tagged item " + std::to_string(item) +
                        " has no feature row");
      }
      out.push_back(item);
    }
    return out;
  };

  std::vector<std::size_t> train_items = tagged_in(split.train);
  const std::vector<std::size_t> valid_items = tagged_in(split.valid);
  const std::vector<std::size_t> test_items = tagged_in(split.test);
  if (train_items.empty()) {
    throw DataError("tag_transfer: no tagged training items");
  }
  if (test_items.empty()) {
    throw DataError("tag_transfer: no tagged test items");
  }
  const std::size_t d_in = features[train_items.front()].size();
  for (std::size_t item : train_items) {
    if (features[item].size() != d_in) {
      throw DataError("tag_transfer: inconsistent feature width");
    }
  }

  // Standardize per dimension on training-item statistics so the probe is
  // insensitive to each system's feature scale; near-constant dimensions
  // pass through unscaled.
  std::vector<double> mu(d_in, 0.0);
  std::vector<double> inv_sigma(d_in, 1.0);
  for (std::size_t item : train_items) {
    for (std::size_t d = 0; d < d_in; ++d) mu[d] += features[item][d];
  }
  for (double& m : mu) m /= static_cast<double>(train_items.size());
  {
    std::vector<double> var(d_in, 0.0);
    for (std::size_t item : train_items) {
      for (std::size_t d = 0; d < d_in; ++d) {
        const double c = features[item][d] - mu[d];
        var[d] += c * c;
      }
    }
    for (std::size_t d = 0; d < d_in; ++d) {
      const double sigma =
          std::sqrt(var[d] / static_cast<double>(train_items.size()));
      if (sigma > 1e-12) inv_sigma[d] = 1.0 / sigma;
    }
  }
  auto standardized = [&](std::size_t item) {
    if (features[item].size() != d_in) {
      throw DataError("tag_transfer: inconsistent feature width");
    }
    DenseArray x({d_in});
    for (std::size_t d = 0; d < d_in; ++d) {
      x[d] = (features[item][d] - mu[d]) * inv_sigma[d];
    }
    return x;
  };

  Mlp mlp = init_mlp(d_in, cfg.hidden, data.num_tags, cfg.seed);
  std::vector<DenseArray*> refs{&mlp.w1, &mlp.b1, &mlp.w2, &mlp.b2};
  NesterovSgd opt(cfg.base_lr, cfg.momentum, cfg.lr_decay);

  auto split_loss = [&](const Mlp& m, std::span<const std::size_t> items) {
    double total = 0.0;
    for (std::size_t item : items) {
      total += ops::sigmoid_bce(mlp_logits(m, standardized(item)),
                                label_target(labels[item]));
    }
    return total / static_cast<double>(items.size());
  };

  const bool has_valid = !valid_items.empty();
  Mlp best = mlp;
  double best_valid = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  bool improved_once = false;

  Rng order_rng = Rng::substream(cfg.seed, "tag-mlp-order");
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    order_rng.shuffle(train_items);
    for (std::size_t begin = 0; begin < train_items.size();
         begin += cfg.batch_size) {
      const std::size_t end =
          std::min(begin + cfg.batch_size, train_items.size());
      Tape tape;
      const NodeId w1 = tape.param(mlp.w1);
      const NodeId b1 = tape.param(mlp.b1);
      const NodeId w2 = tape.param(mlp.w2);
      const NodeId b2 = tape.param(mlp.b2);
      std::vector<NodeId> losses;
      for (std::size_t idx = begin; idx < end; ++idx) {
        const std::size_t item = train_items[idx];
        const NodeId x = tape.value(standardized(item));
        const NodeId h = tape.relu(tape.affine(x, w1, b1));
        const NodeId logits = tape.affine(h, w2, b2);
        losses.push_back(
            tape.sigmoid_bce(logits, label_target(labels[item])));
      }
      const NodeId loss = tape.scalar_mean(losses);
      const std::vector<NodeId> pids{w1, b1, w2, b2};
      const std::vector<DenseArray> grads = tape.gradients(loss, pids);
      opt.step(refs, grads);
    }

    if (has_valid) {
      const double v = split_loss(mlp, valid_items);
      if (v < best_valid) {
        best_valid = v;
        best = mlp;
        since_best = 0;
        improved_once = true;
      } else {
        ++since_best;
      }
      if (since_best > cfg.patience) break;
    }
  }
  if (has_valid && improved_once) mlp = best;

  TagTransferResult result;
  result.test_ids = test_items;
  result.test_scores = DenseArray({test_items.size(), data.num_tags});
  for (std::size_t r = 0; r < test_items.size(); ++r) {
    const DenseArray logits = mlp_logits(mlp, standardized(test_items[r]));
    for (std::size_t t = 0; t < data.num_tags; ++t) {
      result.test_scores.at(r, t) = ops::sigmoid(logits[t]);
    }
  }

  EvalReport& report = result.report;
  report.task = "tag-transfer";
  report.system = system_name;
  double total = 0.0;
  for (std::size_t t = 0; t < data.num_tags; ++t) {
    std::vector<double> scores(test_items.size());
    std::vector<std::uint8_t> mask(test_items.size());
    for (std::size_t r = 0; r < test_items.size(); ++r) {
      scores[r] = result.test_scores.at(r, t);
      mask[r] = labels[test_items[r]][t];
    }
    const std::optional<double> value = auc(scores, mask);
    if (!value.has_value()) {
      ++report.n_skipped;
      continue;
    }
    report.per_unit.push_back(PerUnit{t, *value});
    total += *value;
    ++report.n_evaluated;
  }
  if (report.n_evaluated == 0) {
    throw DataError("tag_transfer: every tag was skipped on the test items");
  }
  report.mean_auc = total / static_cast<double>(report.n_evaluated);
  return result;
}

}  // namespace cuembed
