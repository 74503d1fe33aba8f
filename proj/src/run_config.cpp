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

#include "cuembed/run_config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "cuembed/errors.hpp"

namespace cuembed {
namespace {

using nlohmann::json;

// Reads one field of `obj` into `out`, with type checking. `seen` collects
// consumed keys for the unknown-key scan.
template <typename T>
void read_field(const json& obj, const std::string& key, T& out,
                std::vector<std::string>& seen, const std::string& scope) {
  seen.push_back(key);
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: bad type for " + scope + key);
  }
}

void reject_unknown(const json& obj, const std::vector<std::string>& seen,
                    const std::string& scope) {
  if (!obj.is_object()) {
    throw ConfigError("config: " +
                      (scope.empty() ? std::string("document")
                                     : scope.substr(0, scope.size() - 1)) +
                      " must be a JSON object");
  }
  for (const auto& [key, value] : obj.items()) {
    if (std::find(seen.begin(), seen.end(), key) == seen.end()) {
      throw ConfigError("config: unknown key " + scope + key);
    }
  }
}

void read_paths(const json& obj, RunPaths& p) {
  std::vector<std::string> seen;
  read_field(obj, "triplets", p.triplets, seen, "paths.");
  read_field(obj, "audio_dir", p.audio_dir, seen, "paths.");
  read_field(obj, "tags", p.tags, seen, "paths.");
  read_field(obj, "output_dir", p.output_dir, seen, "paths.");
  reject_unknown(obj, seen, "paths.");
}

void read_split(const json& obj, RunConfig& cfg) {
  std::vector<std::string> seen;
  read_field(obj, "ratios", cfg.split_ratios, seen, "split.");
  read_field(obj, "seed", cfg.split_seed, seen, "split.");
  reject_unknown(obj, seen, "split.");
}

void read_synth(const json& obj, SynthConfig& c) {
  std::vector<std::string> seen;
  read_field(obj, "num_users", c.num_users, seen, "synth.");
  read_field(obj, "num_items", c.num_items, seen, "synth.");
  read_field(obj, "rank", c.rank, seen, "synth.");
  read_field(obj, "density", c.density, seen, "synth.");
  read_field(obj, "clip_seconds", c.clip_seconds, seen, "synth.");
  read_field(obj, "num_tags", c.num_tags, seen, "synth.");
  read_field(obj, "seed", c.seed, seen, "synth.");
  reject_unknown(obj, seen, "synth.");
}

void read_dsp(const json& obj, DspConfig& c) {
  std::vector<std::string> seen;
  read_field(obj, "sample_rate", c.sample_rate, seen, "dsp.");
  read_field(obj, "fft_size", c.fft_size, seen, "dsp.");
  read_field(obj, "hop", c.hop, seen, "dsp.");
  read_field(obj, "mel_bins", c.mel_bins, seen, "dsp.");
  read_field(obj, "context_seconds", c.context_seconds, seen, "dsp.");
  reject_unknown(obj, seen, "dsp.");
}

void read_wmf(const json& obj, WmfConfig& c) {
  std::vector<std::string> seen;
  read_field(obj, "rank", c.rank, seen, "wmf.");
  read_field(obj, "alpha", c.alpha, seen, "wmf.");
  read_field(obj, "lambda", c.lambda, seen, "wmf.");
  read_field(obj, "sweeps", c.sweeps, seen, "wmf.");
  read_field(obj, "seed", c.seed, seen, "wmf.");
  reject_unknown(obj, seen, "wmf.");
}

void read_cue(const json& obj, CueConfig& c) {
  std::vector<std::string> seen;
  read_field(obj, "embed_dim", c.embed_dim, seen, "cue.");
  read_field(obj, "feature_dim", c.feature_dim, seen, "cue.");
  read_field(obj, "negatives", c.negatives, seen, "cue.");
  read_field(obj, "margin", c.margin, seen, "cue.");
  read_field(obj, "channels", c.channels, seen, "cue.");
  read_field(obj, "kernel", c.kernel, seen, "cue.");
  read_field(obj, "pools", c.pools, seen, "cue.");
  read_field(obj, "mel_bins", c.mel_bins, seen, "cue.");
  read_field(obj, "context_frames", c.context_frames, seen, "cue.");
  read_field(obj, "batch_size", c.batch_size, seen, "cue.");
  read_field(obj, "max_epochs", c.max_epochs, seen, "cue.");
  read_field(obj, "patience", c.patience, seen, "cue.");
  read_field(obj, "base_lr", c.base_lr, seen, "cue.");
  read_field(obj, "momentum", c.momentum, seen, "cue.");
  read_field(obj, "lr_decay", c.lr_decay, seen, "cue.");
  read_field(obj, "seed", c.seed, seen, "cue.");
  reject_unknown(obj, seen, "cue.");
}

void read_tag_mlp(const json& obj, TagMlpConfig& c) {
  std::vector<std::string> seen;
  read_field(obj, "hidden", c.hidden, seen, "tag_mlp.");
  read_field(obj, "max_epochs", c.max_epochs, seen, "tag_mlp.");
  read_field(obj, "patience", c.patience, seen, "tag_mlp.");
  read_field(obj, "batch_size", c.batch_size, seen, "tag_mlp.");
  read_field(obj, "base_lr", c.base_lr, seen, "tag_mlp.");
  read_field(obj, "momentum", c.momentum, seen, "tag_mlp.");
  read_field(obj, "lr_decay", c.lr_decay, seen, "tag_mlp.");
  read_field(obj, "seed", c.seed, seen, "tag_mlp.");
  reject_unknown(obj, seen, "tag_mlp.");
}

json to_json_tree(const RunConfig& cfg) {
  json j;
  j["paths"] = {{"triplets", cfg.paths.triplets},
                {"audio_dir", cfg.paths.audio_dir},
                {"tags", cfg.paths.tags},
                {"output_dir", cfg.paths.output_dir}};
  j["split"] = {{"ratios", cfg.split_ratios}, {"seed", cfg.split_seed}};
  j["protocol"] = cfg.protocol;
  j["system"] = cfg.system;
  j["synth"] = {{"num_users", cfg.synth.num_users},
                {"num_items", cfg.synth.num_items},
                {"rank", cfg.synth.rank},
                {"density", cfg.synth.density},
                {"clip_seconds", cfg.synth.clip_seconds},
                {"num_tags", cfg.synth.num_tags},
                {"seed", cfg.synth.seed}};
  j["dsp"] = {{"sample_rate", cfg.dsp.sample_rate},
              {"fft_size", cfg.dsp.fft_size},
              {"hop", cfg.dsp.hop},
              {"mel_bins", cfg.dsp.mel_bins},
              {"context_seconds", cfg.dsp.context_seconds}};
  j["wmf"] = {{"rank", cfg.wmf.rank},
              {"alpha", cfg.wmf.alpha},
              {"lambda", cfg.wmf.lambda},
              {"sweeps", cfg.wmf.sweeps},
              {"seed", cfg.wmf.seed}};
  j["cue"] = {{"embed_dim", cfg.cue.embed_dim},
              {"feature_dim", cfg.cue.feature_dim},
              {"negatives", cfg.cue.negatives},
              {"margin", cfg.cue.margin},
              {"channels", cfg.cue.channels},
              {"kernel", cfg.cue.kernel},
              {"pools", cfg.cue.pools},
              {"mel_bins", cfg.cue.mel_bins},
              {"context_frames", cfg.cue.context_frames},
              {"batch_size", cfg.cue.batch_size},
              {"max_epochs", cfg.cue.max_epochs},
              {"patience", cfg.cue.patience},
              {"base_lr", cfg.cue.base_lr},
              {"momentum", cfg.cue.momentum},
              {"lr_decay", cfg.cue.lr_decay},
              {"seed", cfg.cue.seed}};
  j["tag_mlp"] = {{"hidden", cfg.tag_mlp.hidden},
                  {"max_epochs", cfg.tag_mlp.max_epochs},
                  {"patience", cfg.tag_mlp.patience},
                  {"batch_size", cfg.tag_mlp.batch_size},
                  {"base_lr", cfg.tag_mlp.base_lr},
                  {"momentum", cfg.tag_mlp.momentum},
                  {"lr_decay", cfg.tag_mlp.lr_decay},
                  {"seed", cfg.tag_mlp.seed}};
  return j;
}

// Applies one "a.b.c=value" override onto the document.
void apply_override(json& doc, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("config: override must look like key=value: " + kv);
  }
  const std::string path = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;  // unquoted strings

  json* node = &doc;
  std::size_t begin = 0;
  for (;;) {
    const auto dot = path.find('.', begin);
    const std::string key = path.substr(begin, dot - begin);
    if (key.empty()) {
      throw ConfigError("config: empty key segment in override " + kv);
    }
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (!node->is_object() && !node->is_null()) {
      throw ConfigError("config: override path crosses a scalar: " + kv);
    }
    begin = dot + 1;
  }
}

}  // namespace

void RunConfig::validate() const {
  if (protocol != "cold-items" && protocol != "warm-pairs") {
    throw ConfigError("config: protocol must be cold-items or warm-pairs");
  }
  if (system != "wmf" && system != "regression" && system != "cue" &&
      system != "cue-index") {
    throw ConfigError(
        "config: system must be wmf, regression, cue, or cue-index");
  }
  double sum = 0.0;
  for (double r : split_ratios) {
    if (!(r > 0.0)) throw ConfigError("config: split ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("config: split ratios must sum to 1");
  }
  synth.validate();
  dsp.validate();
  wmf.validate();
  cue.validate();
  tag_mlp.validate();
}

RunConfig parse_run_config(const std::string& text,
                           const std::vector<std::string>& overrides) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config: malformed JSON");
  for (const std::string& kv : overrides) apply_override(doc, kv);

  RunConfig cfg;
  std::vector<std::string> seen;
  seen.insert(seen.end(),
              {"paths", "split", "protocol", "system", "synth", "dsp", "wmf",
               "cue", "tag_mlp"});
  reject_unknown(doc, seen, "");
  if (doc.contains("paths")) read_paths(doc.at("paths"), cfg.paths);
  if (doc.contains("split")) read_split(doc.at("split"), cfg);
  if (doc.contains("protocol")) {
    std::vector<std::string> unused;
    read_field(doc, "protocol", cfg.protocol, unused, "");
  }
  if (doc.contains("system")) {
    std::vector<std::string> unused;
    read_field(doc, "system", cfg.system, unused, "");
  }
  if (doc.contains("synth")) read_synth(doc.at("synth"), cfg.synth);
  if (doc.contains("dsp")) read_dsp(doc.at("dsp"), cfg.dsp);
  if (doc.contains("wmf")) read_wmf(doc.at("wmf"), cfg.wmf);
  if (doc.contains("cue")) read_cue(doc.at("cue"), cfg.cue);
  if (doc.contains("tag_mlp")) read_tag_mlp(doc.at("tag_mlp"), cfg.tag_mlp);
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path,
                          const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), overrides);
}

std::string effective_config_json(const RunConfig& cfg) {
  return to_json_tree(cfg).dump(2) + "\n";
}

}  // namespace cuembed
