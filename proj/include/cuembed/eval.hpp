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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cuembed/audio_frontend.hpp"
#include "cuembed/content_regression.hpp"
#include "cuembed/cue_model.hpp"
#include "cuembed/dense.hpp"
#include "cuembed/interactions.hpp"
#include "cuembed/wmf.hpp"

namespace cuembed {

// Mann-Whitney AUC with ties counted 0.5. Returns nullopt (skip signal) when
// the instance has no positive or no negative.
std::optional<double> auc(std::span<const double> scores,
                          std::span<const std::uint8_t> is_positive);

struct PerUnit {
  std::size_t id = 0;  // user id (Task 1) or tag id (Task 2)
  double auc = 0.0;
};

struct EvalReport {
  std::string task;
  std::string system;
  double mean_auc = 0.0;
  std::size_t n_evaluated = 0;
  std::size_t n_skipped = 0;
  std::vector<PerUnit> per_unit;
  std::string config_json = "{}";  // run configuration echo
};

std::string to_json(const EvalReport& r);

// Scores one user over an explicit item list, in list order.
using ScoreFn = std::function<std::vector<double>(
    std::size_t user, std::span<const std::size_t> items)>;

// Per-user AUC over the evaluation item universe, averaged over users that
// have at least one positive and one negative there. Throws DataError when
// no user is evaluable.
EvalReport eval_recommendation(const ScoreFn& system,
                               const std::string& system_name,
                               const BinaryInteractions& b_test,
                               std::span<const std::size_t> eval_items);

// Task 2 feature extractors; one [D] row per requested item.
std::vector<DenseArray> wmf_item_features(const Factors& f,
                                          std::span<const std::size_t> items);
std::vector<DenseArray> regression_item_features(
    const RegressionModel& m, const std::vector<MelSpec>& mels,
    std::span<const std::size_t> items);
std::vector<DenseArray> cue_item_features(const TowerParams& p,
                                          const CueConfig& cfg,
                                          const std::vector<MelSpec>& mels,
                                          std::span<const std::size_t> items);

struct TagMlpConfig {
  std::size_t hidden = 128;
  std::size_t max_epochs = 500;
  std::size_t patience = 10;
  std::size_t batch_size = 32;
  double base_lr = 0.01;
  double momentum = 0.9;
  double lr_decay = 1e-6;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TagTransferData {
  // Both indexed by item id. An empty label row marks an untagged item;
  // tagged items inside the split must come with a feature row.
  const std::vector<DenseArray>* features = nullptr;
  const std::vector<std::vector<std::uint8_t>>* labels = nullptr;
  std::size_t num_tags = 0;
};

struct TagTransferResult {
  EvalReport report;
  std::vector<std::size_t> test_ids;  // tagged test items, ascending
  DenseArray test_scores;             // [test_ids.size() x num_tags], logistic
};

// Trains affine(D->H) -> ReLU -> affine(H->num_tags) with mean binary
// cross-entropy on train items, early-stops on valid items, and reports the
// macro-averaged per-tag AUC over test items. Tags with no positive or no
// negative test item are skipped and counted; all skipped is an error.
TagTransferResult tag_transfer(const TagTransferData& data,
                               const ItemSplit& split, const TagMlpConfig& cfg,
                               const std::string& system_name);

}  // namespace cuembed
