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

#include <string>
#include <utility>
#include <vector>

#include "cuembed/content_regression.hpp"
#include "cuembed/cue_model.hpp"
#include "cuembed/dense.hpp"
#include "cuembed/wmf.hpp"

namespace cuembed {

// On-disk model container. File layout: magic "CUE1", header length (u32,
// little endian), JSON header {format_version, model_kind, config, arrays:
// [{name, shape, offset}...]}, then the payload of all arrays concatenated
// as float32 little-endian row-major in manifest order. Offsets are byte
// positions into the payload. save -> load -> save is byte-identical.
struct Checkpoint {
  std::string model_kind;          // "wmf" | "regression" | "cue" | "cue-index"
  std::string config_json = "{}";  // full effective run configuration
  std::vector<std::pair<std::string, DenseArray>> arrays;  // manifest order

  // Array by name, nullptr when absent.
  const DenseArray* find(const std::string& name) const;
};

// Compute runs in float64; payloads narrow to float32. Throws DataError on
// unwritable paths.
void save_checkpoint(const Checkpoint& c, const std::string& path);

// Throws DataError on missing files, bad magic, malformed headers, or
// manifest/payload inconsistencies.
Checkpoint load_checkpoint(const std::string& path);

// Model <-> checkpoint adapters. Loading validates array presence and shapes
// against the target model and throws DataError on mismatch.
Checkpoint wmf_checkpoint(const Factors& f, std::string config_json);
Factors wmf_from_checkpoint(const Checkpoint& c);

// Full tower for model_kind "cue" (audio) or "cue-index"; the index variant
// also persists the seen-item mask.
Checkpoint tower_checkpoint(const std::string& model_kind,
                            const TowerParams& p, std::string config_json);
TowerParams tower_from_checkpoint(const Checkpoint& c, const CueConfig& cfg);

// model_kind "regression": WMF user factors plus the audio tower that maps
// clips to item factors, with the target mean/scale used at training time.
Checkpoint regression_checkpoint(const DenseArray& user_factors,
                                 const RegressionModel& m,
                                 std::string config_json);
std::pair<DenseArray, RegressionModel> regression_from_checkpoint(
    const Checkpoint& c, const CueConfig& cfg);

}  // namespace cuembed
