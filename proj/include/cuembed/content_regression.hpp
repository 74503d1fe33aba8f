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

#include <vector>

#include "cuembed/audio_frontend.hpp"
#include "cuembed/cue_model.hpp"
#include "cuembed/dense.hpp"

namespace cuembed {

// Audio tower trained to regress per-item latent factors from mel windows.
// The tower is architecturally identical to the relevance model's item side;
// only the audio-side arrays are trained. Targets are standardized per
// dimension during training so optimization is insensitive to the factor
// scale; predictions are mapped back through mean/scale.
struct RegressionModel {
  CueConfig cfg;
  TowerParams tower;     // kind == kAudio; user side untouched
  DenseArray target_mean;   // [D]
  DenseArray target_scale;  // [D], near-constant dimensions pass unscaled
};

struct RegressionData {
  // Clip spectrogram and target factor row share an index.
  const std::vector<MelSpec>* mels = nullptr;
  const DenseArray* targets = nullptr;  // [num_items x D]
};

struct RegressionResult {
  RegressionModel model;
  std::vector<EpochLog> log;  // valid_loss stays NaN
};

// Minimizes mean over items of ||tower(window) - target||^2 with
// Nesterov-momentum SGD; one fresh random crop per item per epoch.
RegressionResult train_regression(const RegressionData& data,
                                  const CueConfig& cfg);

// Clip-level prediction: mean tower output over the deterministic
// non-overlapping grid of context windows.
DenseArray predict_item_factor(const RegressionModel& m, const MelSpec& clip);

}  // namespace cuembed
