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

#include "cuembed/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "json.hpp"

#include "cuembed/errors.hpp"

namespace cuembed {
namespace {

constexpr char kMagic[4] = {'C', 'U', 'E', '1'};
constexpr std::int64_t kFormatVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(in[at])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + 1]))
             << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + 2]))
             << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + 3]))
             << 24;
}

nlohmann::json parse_or_throw(const std::string& text, const char* what) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) {
    throw DataError(std::string("checkpoint: malformed ") + what);
  }
  return j;
}

// Named views over a tower's parameter arrays, in serialization order.
std::vector<std::pair<std::string, const DenseArray*>> tower_manifest(
    const TowerParams& p, bool audio_only) {
  std::vector<std::pair<std::string, const DenseArray*>> out;
  const auto visit = [&](const std::string& name, const DenseArray& a) {
    out.emplace_back(name, &a);
  };
  if (audio_only) {
    p.for_each_audio_param(visit);
  } else {
    p.for_each_param(visit);
  }
  return out;
}

}  // namespace

const DenseArray* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, a] : arrays) {
    if (n == name) return &a;
  }
  return nullptr;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  nlohmann::json header;
  header["format_version"] = kFormatVersion;
  header["model_kind"] = c.model_kind;
  header["config"] = parse_or_throw(c.config_json, "config echo");
  nlohmann::json manifest = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, a] : c.arrays) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = a.shape();
    entry["offset"] = offset;
    manifest.push_back(entry);
    offset += a.size() * sizeof(float);
  }
  header["arrays"] = manifest;
  const std::string header_text = header.dump();

  std::string out;
  out.reserve(4 + 4 + header_text.size() + offset);
  out.append(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  for (const auto& [name, a] : c.arrays) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto f = static_cast<float>(a.data()[i]);
      const auto bits = std::bit_cast<std::uint32_t>(f);
      put_u32(out, bits);
    }
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw DataError("checkpoint: cannot write " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw DataError("checkpoint: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(file)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DataError("checkpoint: bad magic in " + path);
  }
  const std::uint32_t header_len = get_u32(bytes, 4);
  if (bytes.size() < 8 + static_cast<std::size_t>(header_len)) {
    throw DataError("checkpoint: truncated header in " + path);
  }
  const nlohmann::json header =
      parse_or_throw(bytes.substr(8, header_len), "header");
  if (!header.contains("format_version") ||
      header["format_version"].get<std::int64_t>() != kFormatVersion) {
    throw DataError("checkpoint: unsupported format version in " + path);
  }
  Checkpoint c;
  c.model_kind = header.value("model_kind", std::string{});
  c.config_json = header.contains("config") ? header["config"].dump() : "{}";

  const std::size_t payload_at = 8 + header_len;
  const std::size_t payload_size = bytes.size() - payload_at;
  if (!header.contains("arrays") || !header["arrays"].is_array()) {
    throw DataError("checkpoint: missing array manifest in " + path);
  }
  for (const auto& entry : header["arrays"]) {
    const std::string name = entry.value("name", std::string{});
    const auto shape = entry["shape"].get<std::vector<std::size_t>>();
    const auto offset = entry["offset"].get<std::size_t>();
    std::size_t count = 1;
    for (std::size_t d : shape) count *= d;
    if (offset + count * sizeof(float) > payload_size) {
      throw DataError("checkpoint: array " + name + " exceeds payload in " +
                      path);
    }
    DenseArray a(shape);
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint32_t bits =
          get_u32(bytes, payload_at + offset + i * sizeof(float));
      a.data()[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
    c.arrays.emplace_back(name, std::move(a));
  }
  return c;
}

Checkpoint wmf_checkpoint(const Factors& f, std::string config_json) {
  Checkpoint c;
  c.model_kind = "wmf";
  c.config_json = std::move(config_json);
  c.arrays.emplace_back("U", f.U);
  c.arrays.emplace_back("V", f.V);
  return c;
}

Factors wmf_from_checkpoint(const Checkpoint& c) {
  if (c.model_kind != "wmf") {
    throw DataError("checkpoint: expected model_kind wmf, got " +
                    c.model_kind);
  }
  const DenseArray* u = c.find("U");
  const DenseArray* v = c.find("V");
  if (!u || !v || u->rank() != 2 || v->rank() != 2 ||
      u->extent(1) != v->extent(1)) {
    throw DataError("checkpoint: malformed wmf factor arrays");
  }
  return Factors{*u, *v};
}

Checkpoint tower_checkpoint(const std::string& model_kind,
                            const TowerParams& p, std::string config_json) {
  if (model_kind != "cue" && model_kind != "cue-index") {
    throw DataError("checkpoint: bad tower model_kind " + model_kind);
  }
  if ((model_kind == "cue") != (p.kind == ModelKind::kAudio)) {
    throw DataError("checkpoint: tower kind does not match model_kind");
  }
  Checkpoint c;
  c.model_kind = model_kind;
  c.config_json = std::move(config_json);
  for (const auto& [name, a] : tower_manifest(p, /*audio_only=*/false)) {
    c.arrays.emplace_back(name, *a);
  }
  if (p.kind == ModelKind::kIndex) {
    DenseArray seen({p.item_seen.size()});
    for (std::size_t i = 0; i < p.item_seen.size(); ++i) {
      seen.data()[i] = static_cast<double>(p.item_seen[i]);
    }
    c.arrays.emplace_back("item_seen", std::move(seen));
  }
  return c;
}

namespace {

// Overwrites the arrays of an initialized tower from the manifest, checking
// names and shapes.
void fill_tower(TowerParams& p, const Checkpoint& c, bool audio_only) {
  const auto assign = [&](const std::string& name, DenseArray& target) {
    const DenseArray* src = c.find(name);
    if (!src) throw DataError("checkpoint: missing array " + name);
    if (src->shape() != target.shape()) {
      throw DataError("checkpoint: shape mismatch for array " + name);
    }
    target.values() = src->values();
  };
  if (audio_only) {
    p.for_each_audio_param(assign);
  } else {
    p.for_each_param(assign);
  }
}

}  // namespace

TowerParams tower_from_checkpoint(const Checkpoint& c, const CueConfig& cfg) {
  if (c.model_kind != "cue" && c.model_kind != "cue-index") {
    throw DataError("checkpoint: expected a tower model_kind, got " +
                    c.model_kind);
  }
  const ModelKind kind =
      c.model_kind == "cue" ? ModelKind::kAudio : ModelKind::kIndex;
  const DenseArray* table = c.find("user_table");
  if (!table || table->rank() != 2) {
    throw DataError("checkpoint: missing user_table");
  }
  const std::size_t num_users = table->extent(0);
  std::size_t num_items = 1;
  if (kind == ModelKind::kIndex) {
    const DenseArray* items = c.find("item_table");
    if (!items || items->rank() != 2) {
      throw DataError("checkpoint: missing item_table");
    }
    num_items = items->extent(0);
  }
  TowerParams p = init_cue_params(cfg, kind, num_users, num_items);
  fill_tower(p, c, /*audio_only=*/false);
  if (kind == ModelKind::kIndex) {
    const DenseArray* seen = c.find("item_seen");
    if (!seen || seen->size() != num_items) {
      throw DataError("checkpoint: missing item_seen mask");
    }
    for (std::size_t i = 0; i < num_items; ++i) {
      p.item_seen[i] = seen->data()[i] != 0.0 ? 1 : 0;
    }
  }
  return p;
}

Checkpoint regression_checkpoint(const DenseArray& user_factors,
                                 const RegressionModel& m,
                                 std::string config_json) {
  if (m.tower.kind != ModelKind::kAudio) {
    throw DataError("checkpoint: regression tower must be audio");
  }
  if (m.target_mean.size() != m.target_scale.size()) {
    throw DataError("checkpoint: regression target stats width mismatch");
  }
  Checkpoint c;
  c.model_kind = "regression";
  c.config_json = std::move(config_json);
  c.arrays.emplace_back("U", user_factors);
  for (const auto& [name, a] : tower_manifest(m.tower, /*audio_only=*/true)) {
    c.arrays.emplace_back(name, *a);
  }
  c.arrays.emplace_back("target_mean", m.target_mean);
  c.arrays.emplace_back("target_scale", m.target_scale);
  return c;
}

std::pair<DenseArray, RegressionModel> regression_from_checkpoint(
    const Checkpoint& c, const CueConfig& cfg) {
  if (c.model_kind != "regression") {
    throw DataError("checkpoint: expected model_kind regression, got " +
                    c.model_kind);
  }
  const DenseArray* u = c.find("U");
  if (!u || u->rank() != 2) {
    throw DataError("checkpoint: missing regression user factors");
  }
  RegressionModel m;
  m.cfg = cfg;
  m.tower = init_cue_params(cfg, ModelKind::kAudio, 1, 1);
  fill_tower(m.tower, c, /*audio_only=*/true);
  const DenseArray* mean = c.find("target_mean");
  const DenseArray* scale = c.find("target_scale");
  if (!mean || !scale || mean->size() != cfg.feature_dim ||
      scale->size() != cfg.feature_dim) {
    throw DataError("checkpoint: missing regression target stats");
  }
  m.target_mean = *mean;
  m.target_scale = *scale;
  return {*u, std::move(m)};
}

}  // namespace cuembed
