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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cuembed/audio_frontend.hpp"
#include "cuembed/cue_model.hpp"
#include "cuembed/eval.hpp"
#include "cuembed/synthgen.hpp"
#include "cuembed/wmf.hpp"

namespace cuembed {

struct RunPaths {
  std::string triplets;
  std::string audio_dir;
  std::string tags;
  std::string output_dir;
};

// One JSON document drives every command; all randomness flows from the
// explicit seeds below (no wall-clock seeding anywhere).
struct RunConfig {
  RunPaths paths;
  std::array<double, 3> split_ratios{0.7, 0.1, 0.2};
  std::uint64_t split_seed = 0;
  // "cold-items": item-wise split, content systems are evaluated on unseen
  // items. "warm-pairs": pair-wise holdout over a shared item universe.
  std::string protocol = "cold-items";
  std::string system = "cue";  // wmf | regression | cue | cue-index
  SynthConfig synth;
  DspConfig dsp;
  WmfConfig wmf;
  CueConfig cue;
  TagMlpConfig tag_mlp;

  // Validates enums, ratios, and every sub-config. Throws ConfigError.
  void validate() const;
};

// Parses a JSON document and applies `--set key=value` overrides with dotted
// paths (e.g. "cue.max_epochs=5"). Unknown keys, type mismatches, malformed
// JSON, and malformed overrides all throw ConfigError. Override values are
// parsed as JSON when possible and fall back to plain strings.
RunConfig parse_run_config(const std::string& text,
                           const std::vector<std::string>& overrides = {});

// parse_run_config over a file. Missing file throws ConfigError.
RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides = {});

// Canonical defaults-resolved echo of the configuration: deterministic,
// sorted keys, trailing newline. Reparses to an equal RunConfig.
std::string effective_config_json(const RunConfig& cfg);

}  // namespace cuembed
