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

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cuembed/audio_frontend.hpp"
#include "cuembed/checkpoint.hpp"
#include "cuembed/content_regression.hpp"
#include "cuembed/cue_model.hpp"
#include "cuembed/errors.hpp"
#include "cuembed/eval.hpp"
#include "cuembed/interactions.hpp"
#include "cuembed/run_config.hpp"
#include "cuembed/synthgen.hpp"
#include "cuembed/wmf.hpp"

namespace {

using namespace cuembed;
namespace fs = std::filesystem;
using nlohmann::json;

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw DataError("cannot write " + path);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Data loading and split protocol
// ---------------------------------------------------------------------------

struct Dataset {
  InteractionSet set;
  BinaryInteractions full;
  std::vector<MelSpec> mels;  // indexed by item id; empty unless audio loaded
};

Dataset load_dataset(const RunConfig& cfg, bool need_audio) {
  if (cfg.paths.triplets.empty()) {
    throw ConfigError("config: paths.triplets is required");
  }
  Dataset ds;
  ds.set = load_triplets(cfg.paths.triplets);
  ds.full = binarize(ds.set);
  if (need_audio) {
    if (cfg.paths.audio_dir.empty()) {
      throw ConfigError(
          "config: paths.audio_dir is required for content systems");
    }
    ds.mels.reserve(ds.set.item_vocab.size());
    for (const std::string& item : ds.set.item_vocab) {
      const std::string path = cfg.paths.audio_dir + "/" + item + ".wav";
      const std::vector<double> pcm = read_wav_mono(path, cfg.dsp.sample_rate);
      ds.mels.push_back(melspectrogram(pcm, cfg.dsp, item));
    }
  }
  return ds;
}

BinaryInteractions restrict_items(const BinaryInteractions& b,
                                  std::span<const std::size_t> items) {
  std::vector<std::uint8_t> keep(b.num_items, 0);
  for (std::size_t i : items) keep[i] = 1;
  BinaryInteractions out;
  out.num_items = b.num_items;
  out.positives.resize(b.num_users());
  for (std::size_t u = 0; u < b.num_users(); ++u) {
    for (std::size_t i : b.positives[u]) {
      if (keep[i]) out.positives[u].push_back(i);
    }
  }
  return out;
}

// Split views shared by train and eval. Under "cold-items" the content
// systems never see test items; under "warm-pairs" every item is shared and
// held-out user-item pairs are scored against the full item universe.
struct Protocol {
  ItemSplit split;
  BinaryInteractions train_b;
  BinaryInteractions valid_b;
  BinaryInteractions test_b;
  std::vector<std::size_t> pool;      // training items / negative pool
  std::vector<std::size_t> universe;  // recommendation eval items
  bool warm = false;
};

Protocol make_protocol(const RunConfig& cfg, const BinaryInteractions& full) {
  Protocol p;
  p.split = split_items(full.num_items, cfg.split_ratios, cfg.split_seed);
  if (cfg.protocol == "cold-items") {
    p.train_b = restrict_items(full, p.split.train);
    p.valid_b = restrict_items(full, p.split.valid);
    p.test_b = full;  // positives outside the universe are masked by eval
    p.pool = p.split.train;
    p.universe = p.split.test;
  } else {
    const PairHoldout ph = holdout_pairs(full, cfg.split_ratios[1],
                                         cfg.split_ratios[2], cfg.split_seed);
    p.train_b = ph.train;
    p.valid_b = ph.valid;
    p.test_b = ph.test;
    p.pool.resize(full.num_items);
    std::iota(p.pool.begin(), p.pool.end(), 0);
    p.universe = p.pool;
    p.warm = true;
  }
  return p;
}

// Mel normalization is fitted on training items only (all items under the
// warm protocol) and applied everywhere, at train and eval alike.
void normalize_mels(Dataset& ds, const Protocol& proto) {
  std::vector<MelSpec> fit;
  fit.reserve(proto.pool.size());
  for (std::size_t i : proto.pool) fit.push_back(ds.mels[i]);
  const Normalizer n = fit_normalizer(fit);
  for (MelSpec& m : ds.mels) m = apply_normalizer(m, n);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

std::string epoch_log_tsv(const std::vector<EpochLog>& log) {
  std::string out = "epoch\ttrain_loss\tvalid_loss\teffective_lr\n";
  for (const EpochLog& row : log) {
    out += std::to_string(row.epoch) + "\t" + format_double(row.train_loss) +
           "\t" + format_double(row.valid_loss) + "\t" +
           format_double(row.effective_lr) + "\n";
  }
  return out;
}

// The trace holds the objective at init and after every half-sweep; one log
// row per full sweep.
std::string wmf_log_tsv(const std::vector<double>& trace) {
  std::string out = "sweep\tuser_half_objective\titem_half_objective\n";
  for (std::size_t s = 0; 2 * s + 2 < trace.size(); ++s) {
    out += std::to_string(s + 1) + "\t" + format_double(trace[2 * s + 1]) +
           "\t" + format_double(trace[2 * s + 2]) + "\n";
  }
  return out;
}

int cmd_train(const RunConfig& cfg) {
  if (cfg.paths.output_dir.empty()) {
    throw ConfigError("config: paths.output_dir is required");
  }
  const bool need_audio = cfg.system == "cue" || cfg.system == "regression";
  if (need_audio && cfg.cue.mel_bins != cfg.dsp.mel_bins) {
    throw ConfigError("config: cue.mel_bins must equal dsp.mel_bins");
  }
  Dataset ds = load_dataset(cfg, need_audio);
  const Protocol proto = make_protocol(cfg, ds.full);
  if (need_audio) normalize_mels(ds, proto);

  std::error_code ec;
  fs::create_directories(cfg.paths.output_dir, ec);
  if (ec) {
    throw DataError("cannot create output directory " + cfg.paths.output_dir);
  }
  const std::string echo = effective_config_json(cfg);

  Checkpoint ckpt;
  std::string log_text;
  if (cfg.system == "wmf") {
    std::vector<double> trace;
    const Factors f = fit_wmf(ds.full, cfg.wmf, &trace);
    ckpt = wmf_checkpoint(f, echo);
    log_text = wmf_log_tsv(trace);
  } else if (cfg.system == "regression") {
    if (cfg.cue.feature_dim != cfg.wmf.rank) {
      throw ConfigError(
          "config: regression requires cue.feature_dim == wmf.rank");
    }
    // Factor targets come from WMF fitted without test items (cold) or on
    // the full matrix (warm); the audio tower learns train-item factors.
    std::vector<std::size_t> fit_items;
    BinaryInteractions wmf_b;
    if (proto.warm) {
      fit_items = proto.pool;
      wmf_b = ds.full;
    } else {
      fit_items.reserve(proto.split.train.size() + proto.split.valid.size());
      fit_items.insert(fit_items.end(), proto.split.train.begin(),
                       proto.split.train.end());
      fit_items.insert(fit_items.end(), proto.split.valid.begin(),
                       proto.split.valid.end());
      std::sort(fit_items.begin(), fit_items.end());
      wmf_b = restrict_items(ds.full, fit_items);
    }
    const Factors f = fit_wmf(wmf_b, cfg.wmf);
    std::vector<MelSpec> fit_mels;
    fit_mels.reserve(fit_items.size());
    DenseArray targets({fit_items.size(), cfg.wmf.rank});
    for (std::size_t k = 0; k < fit_items.size(); ++k) {
      const std::size_t i = fit_items[k];
      fit_mels.push_back(ds.mels[i]);
      for (std::size_t d = 0; d < cfg.wmf.rank; ++d) {
        targets.data()[k * cfg.wmf.rank + d] =
            f.V.data()[i * cfg.wmf.rank + d];
      }
    }
    const RegressionResult r =
        train_regression(RegressionData{&fit_mels, &targets}, cfg.cue);
    ckpt = regression_checkpoint(f.U, r.model, echo);
    log_text = epoch_log_tsv(r.log);
  } else {  // cue | cue-index
    const ModelKind kind =
        cfg.system == "cue" ? ModelKind::kAudio : ModelKind::kIndex;
    CueTrainData data;
    data.train = &proto.train_b;
    data.valid = &proto.valid_b;
    data.pool = proto.pool;
    data.mels = need_audio ? &ds.mels : nullptr;
    data.num_items = ds.full.num_items;
    const CueTrainResult r = train_cue(data, cfg.cue, kind);
    ckpt = tower_checkpoint(cfg.system, r.params, echo);
    log_text = epoch_log_tsv(r.log);
  }

  const std::string ckpt_path =
      cfg.paths.output_dir + "/" + cfg.system + ".ckpt";
  save_checkpoint(ckpt, ckpt_path);
  write_text(cfg.paths.output_dir + "/" + cfg.system + "_train_log.tsv",
             log_text);
  write_text(cfg.paths.output_dir + "/effective_config.json", echo);
  std::printf("trained %s -> %s\n", cfg.system.c_str(), ckpt_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct OracleFactors {
  DenseArray u_star;
  DenseArray v_star;
};

// Ground-truth rows are stored in generator order; dataset ids follow
// first-appearance order in the triplet file. Vocabulary names ("user_0012",
// "item_0007") carry the generator index, so reorder rows to dataset ids.
DenseArray reorder_rows(const DenseArray& a,
                        const std::vector<std::string>& vocab,
                        const std::string& what) {
  if (a.extent(0) != vocab.size()) {
    throw DataError("oracle: " + what + " row count does not match dataset");
  }
  const std::size_t cols = a.extent(1);
  DenseArray out({vocab.size(), cols});
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    const auto under = vocab[id].find_last_of('_');
    std::size_t src = 0;
    try {
      src = std::stoul(vocab[id].substr(under + 1));
    } catch (const std::exception&) {
      throw DataError("oracle: cannot parse generator index from name " +
                      vocab[id]);
    }
    if (under == std::string::npos || src >= a.extent(0)) {
      throw DataError("oracle: cannot map name " + vocab[id] +
                      " onto ground-truth rows");
    }
    std::copy(a.data() + src * cols, a.data() + (src + 1) * cols,
              out.data() + id * cols);
  }
  return out;
}

OracleFactors load_oracle(const std::string& path, const InteractionSet& set) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("oracle: cannot open " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("u_star") || !j.contains("v_star")) {
    throw DataError("oracle: malformed ground truth file " + path);
  }
  const auto to_array = [](const json& rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows[0].size();
    DenseArray a({r, c});
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t k = 0; k < c; ++k) {
        a.data()[i * c + k] = rows[i][k].get<double>();
      }
    }
    return a;
  };
  return OracleFactors{
      reorder_rows(to_array(j["u_star"]), set.user_vocab, "u_star"),
      reorder_rows(to_array(j["v_star"]), set.item_vocab, "v_star")};
}

ScoreFn dot_scorer(const DenseArray& u_rows, const DenseArray& v_rows) {
  const std::size_t d = u_rows.extent(1);
  return [&u_rows, &v_rows, d](std::size_t user,
                               std::span<const std::size_t> items) {
    std::vector<double> out(items.size());
    const double* uu = u_rows.data() + user * d;
    for (std::size_t k = 0; k < items.size(); ++k) {
      const double* vv = v_rows.data() + items[k] * d;
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += uu[j] * vv[j];
      out[k] = dot;
    }
    return out;
  };
}

void check_user_rows(const DenseArray& rows, std::size_t num_users,
                     const std::string& what) {
  if (rows.extent(0) != num_users) {
    throw DataError(what + ": user count does not match the dataset");
  }
}

int cmd_eval(const RunConfig& invocation_cfg, const std::string& task,
             const std::string& ckpt_path, const std::string& oracle_path) {
  if (task != "rec" && task != "tags") {
    throw ConfigError("eval: task must be rec or tags");
  }
  if (ckpt_path.empty() == oracle_path.empty()) {
    throw ConfigError("eval: exactly one of --checkpoint or --oracle is "
                      "required");
  }
  if (invocation_cfg.paths.output_dir.empty()) {
    throw ConfigError("config: paths.output_dir is required");
  }

  // Model, DSP, and split sections follow the checkpoint so evaluation
  // matches how the system was trained; paths come from this invocation.
  RunConfig cfg = invocation_cfg;
  Checkpoint ckpt;
  std::string name = "oracle";
  if (!ckpt_path.empty()) {
    ckpt = load_checkpoint(ckpt_path);
    const RunConfig train_cfg = parse_run_config(ckpt.config_json);
    cfg.split_ratios = train_cfg.split_ratios;
    cfg.split_seed = train_cfg.split_seed;
    cfg.protocol = train_cfg.protocol;
    cfg.dsp = train_cfg.dsp;
    cfg.wmf = train_cfg.wmf;
    cfg.cue = train_cfg.cue;
    cfg.system = ckpt.model_kind;
    name = ckpt.model_kind;
    if (name != "wmf" && name != "regression" && name != "cue" &&
        name != "cue-index") {
      throw DataError("eval: unsupported checkpoint model_kind " + name);
    }
  }

  const bool need_audio = name == "cue" || name == "regression";
  Dataset ds = load_dataset(cfg, need_audio);
  Protocol proto = make_protocol(cfg, ds.full);
  if (need_audio) normalize_mels(ds, proto);
  const std::string echo = effective_config_json(cfg);

  std::error_code ec;
  fs::create_directories(cfg.paths.output_dir, ec);
  if (ec) {
    throw DataError("cannot create output directory " + cfg.paths.output_dir);
  }

  // Reconstruct the scoring model.
  OracleFactors oracle;
  Factors wmf_f;
  TowerParams tower;
  DenseArray reg_users;
  RegressionModel reg_model;
  if (name == "oracle") {
    oracle = load_oracle(oracle_path, ds.set);
    check_user_rows(oracle.u_star, ds.full.num_users(), "oracle");
  } else if (name == "wmf") {
    wmf_f = wmf_from_checkpoint(ckpt);
    check_user_rows(wmf_f.U, ds.full.num_users(), "wmf checkpoint");
  } else if (name == "regression") {
    auto loaded = regression_from_checkpoint(ckpt, cfg.cue);
    reg_users = std::move(loaded.first);
    reg_model = std::move(loaded.second);
    check_user_rows(reg_users, ds.full.num_users(), "regression checkpoint");
  } else {
    tower = tower_from_checkpoint(ckpt, cfg.cue);
    check_user_rows(tower.user_table, ds.full.num_users(),
                    "tower checkpoint");
  }

  json out;
  out["task"] = task;
  json reports = json::array();

  if (task == "rec") {
    ScoreFn system_fn;
    DenseArray reg_item_rows;
    std::vector<DenseArray> embeds;
    if (name == "oracle") {
      system_fn = dot_scorer(oracle.u_star, oracle.v_star);
    } else if (name == "wmf") {
      system_fn = dot_scorer(wmf_f.U, wmf_f.V);
    } else if (name == "regression") {
      // Predicted item factors for the whole universe, once.
      reg_item_rows =
          DenseArray({ds.full.num_items, reg_users.extent(1)});
      for (std::size_t i : proto.universe) {
        const DenseArray v = predict_item_factor(reg_model, ds.mels[i]);
        if (v.size() != reg_users.extent(1)) {
          throw DataError(
              "regression checkpoint: factor width does not match");
        }
        std::copy(v.data(), v.data() + v.size(),
                  reg_item_rows.data() + i * reg_users.extent(1));
      }
      system_fn = dot_scorer(reg_users, reg_item_rows);
    } else {
      embeds.reserve(proto.universe.size());
      for (std::size_t i : proto.universe) {
        embeds.push_back(name == "cue"
                             ? item_clip_embed(tower, cfg.cue, ds.mels[i])
                             : item_embed_index(tower, i));
      }
      system_fn = [&tower, &embeds](std::size_t user,
                                    std::span<const std::size_t> items) {
        if (items.size() != embeds.size()) {
          throw DataError("eval: item universe changed between calls");
        }
        return score_user_items(tower, user, embeds);
      };
    }
    EvalReport sys_report =
        eval_recommendation(system_fn, name, proto.test_b, proto.universe);
    sys_report.config_json = echo;
    reports.push_back(json::parse(to_json(sys_report)));

    const std::vector<double> pops = popularity_scores(ds.full);
    const ScoreFn pop_fn = [&pops](std::size_t,
                                   std::span<const std::size_t> items) {
      std::vector<double> out_scores(items.size());
      for (std::size_t k = 0; k < items.size(); ++k) {
        out_scores[k] = pops[items[k]];
      }
      return out_scores;
    };
    EvalReport pop_report =
        eval_recommendation(pop_fn, "popularity", proto.test_b,
                            proto.universe);
    pop_report.config_json = echo;
    reports.push_back(json::parse(to_json(pop_report)));
    std::printf("rec mean AUC: %s %.4f, popularity %.4f\n", name.c_str(),
                sys_report.mean_auc, pop_report.mean_auc);
  } else {
    if (cfg.paths.tags.empty()) {
      throw ConfigError("config: paths.tags is required for task tags");
    }
    const TagSet tag_set = load_tags(cfg.paths.tags);
    std::vector<std::vector<std::uint8_t>> labels(ds.full.num_items);
    for (std::size_t i = 0; i < ds.full.num_items; ++i) {
      const auto* row = tag_set.label_row(ds.set.item_vocab[i]);
      if (row) labels[i] = *row;
    }
    std::vector<std::size_t> all_ids(ds.full.num_items);
    std::iota(all_ids.begin(), all_ids.end(), 0);
    std::vector<DenseArray> features;
    if (name == "oracle") {
      features = wmf_item_features(Factors{oracle.u_star, oracle.v_star},
                                   all_ids);
    } else if (name == "wmf") {
      features = wmf_item_features(wmf_f, all_ids);
    } else if (name == "regression") {
      features = regression_item_features(reg_model, ds.mels, all_ids);
    } else if (name == "cue") {
      features = cue_item_features(tower, cfg.cue, ds.mels, all_ids);
    } else {
      features.reserve(all_ids.size());
      for (std::size_t i : all_ids) {
        features.push_back(item_embed_index(tower, i));
      }
    }
    TagTransferData data;
    data.features = &features;
    data.labels = &labels;
    data.num_tags = tag_set.tag_vocab.size();
    TagTransferResult r =
        tag_transfer(data, proto.split, cfg.tag_mlp, name);
    r.report.config_json = echo;
    reports.push_back(json::parse(to_json(r.report)));
    std::printf("tag transfer macro AUC: %s %.4f\n", name.c_str(),
                r.report.mean_auc);
  }

  out["reports"] = reports;
  const std::string report_path =
      cfg.paths.output_dir + "/report_" + task + "_" + name + ".json";
  write_text(report_path, out.dump(2) + "\n");
  write_text(cfg.paths.output_dir + "/effective_config.json", echo);
  return 0;
}

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& cfg) {
  if (cfg.paths.output_dir.empty()) {
    throw ConfigError("config: paths.output_dir is required");
  }
  const SynthDataset ds = synth_generate(cfg.synth);
  synth_write(ds, cfg.paths.output_dir);
  write_text(cfg.paths.output_dir + "/effective_config.json",
             effective_config_json(cfg));
  std::printf("wrote %zu users x %zu items to %s\n", cfg.synth.num_users,
              cfg.synth.num_items, cfg.paths.output_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"content-user embedding experiment driver"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> sets;
  bool deterministic = false;
  app.add_option("--config", config_path, "JSON run configuration file")
      ->required();
  app.add_option("--set", sets,
                 "override a config value, dotted key=value (repeatable)");
  app.add_flag("--deterministic", deterministic,
               "reproducible single-threaded mode (always on; accepted for "
               "script compatibility)");

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->fallthrough();
  CLI::App* train = app.add_subcommand("train", "train the configured system");
  train->fallthrough();
  std::string system_override;
  train->add_option("--system", system_override,
                    "wmf | regression | cue | cue-index");
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->fallthrough();
  std::string task;
  std::string ckpt_path;
  std::string oracle_path;
  eval->add_option("--task", task, "rec | tags")->required();
  eval->add_option("--checkpoint", ckpt_path, "checkpoint file to evaluate");
  eval->add_option("--oracle", oracle_path,
                   "ground-truth factor file (debug scorer)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!system_override.empty()) sets.push_back("system=" + system_override);
    const RunConfig cfg = load_run_config(config_path, sets);
    (void)deterministic;  // everything already runs single-threaded
    if (synth->parsed()) return cmd_synth(cfg);
    if (train->parsed()) return cmd_train(cfg);
    return cmd_eval(cfg, task, ckpt_path, oracle_path);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
