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

#include "cuembed/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>

#include "json.hpp"

#include "cuembed/audio_frontend.hpp"
#include "cuembed/errors.hpp"
#include "cuembed/rng.hpp"

namespace cuembed {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kSampleRate = 22050.0;
// Global amplitude scale keeping a sum of rank sinusoids comfortably inside
// [-1, 1) for standard-normal factors, without per-item renormalization that
// would erase cross-item loudness differences.
constexpr double kToneScale = 0.05;
constexpr double kNoiseScale = 5e-4;
constexpr double kToneMinHz = 200.0;
constexpr double kToneMaxHz = 8000.0;
// Tag cut at the 65th percentile of projection scores: both classes are
// non-empty for any continuous score distribution.
constexpr double kTagQuantile = 0.65;
// Logistic gain on the interaction rate. At gain 1 the Bernoulli label noise
// caps even a ground-truth scorer near AUC 0.94; gain 3 keeps the planted
// ranking recoverable (oracle AUC > 0.99) while leaving labels stochastic.
constexpr double kLogitGain = 3.0;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double softplus(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

DenseArray draw_factors(std::size_t rows, std::size_t cols, Rng& rng) {
  DenseArray out({rows, cols});
  for (std::size_t j = 0; j < out.size(); ++j) out.data()[j] = rng.normal();
  return out;
}

// Mean Bernoulli rate over all pairs at threshold tau.
double mean_rate(std::span<const double> dots, double tau) {
  double sum = 0.0;
  for (double d : dots) sum += sigmoid(kLogitGain * (d - tau));
  return sum / static_cast<double>(dots.size());
}

// Calibrates tau so the expected positive fraction matches cfg.density.
double calibrate_tau(std::span<const double> dots, double density) {
  double lo = -50.0;
  double hi = 50.0;
  if (mean_rate(dots, lo) < density || mean_rate(dots, hi) > density) {
    throw ConfigError("synth_generate: density target unreachable");
  }
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mean_rate(dots, mid) >= density) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Picks `rank` distinct mel-filter center frequencies spread over the
// audible planting band.
std::vector<double> pick_tone_frequencies(std::size_t rank) {
  const DspConfig dsp;
  const MelBank bank =
      make_mel_bank(dsp.mel_bins, dsp.fft_size, dsp.sample_rate);
  std::vector<double> eligible;
  for (double hz : bank.center_hz) {
    if (hz >= kToneMinHz && hz <= kToneMaxHz) eligible.push_back(hz);
  }
  if (eligible.size() < rank) {
    throw ConfigError("synth_generate: rank exceeds available tone slots");
  }
  std::vector<double> tones(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    const std::size_t idx =
        rank == 1 ? 0 : d * (eligible.size() - 1) / (rank - 1);
    tones[d] = eligible[idx];
  }
  return tones;
}

std::string item_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "item_%04zu", i);
  return buf;
}

std::string user_name(std::size_t u) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "user_%04zu", u);
  return buf;
}

std::string tag_name(std::size_t t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "tag_%02zu", t);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (num_users == 0) throw ConfigError("SynthConfig: num_users must be > 0");
  if (num_items == 0) throw ConfigError("SynthConfig: num_items must be > 0");
  if (rank == 0) throw ConfigError("SynthConfig: rank must be > 0");
  if (!(density > 0.0 && density < 1.0)) {
    throw ConfigError("SynthConfig: density must lie in (0, 1)");
  }
  if (!(clip_seconds > 0.0)) {
    throw ConfigError("SynthConfig: clip_seconds must be > 0");
  }
  if (num_tags == 0) throw ConfigError("SynthConfig: num_tags must be > 0");
}

SynthDataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthDataset ds;
  ds.cfg = cfg;

  Rng factor_rng = Rng::substream(cfg.seed, "synth-factors");
  ds.u_star = draw_factors(cfg.num_users, cfg.rank, factor_rng);
  ds.v_star = draw_factors(cfg.num_items, cfg.rank, factor_rng);

  // Inner products for every (user, item) pair, row-major by user.
  std::vector<double> dots(cfg.num_users * cfg.num_items, 0.0);
  for (std::size_t u = 0; u < cfg.num_users; ++u) {
    const double* uu = ds.u_star.data() + u * cfg.rank;
    for (std::size_t i = 0; i < cfg.num_items; ++i) {
      const double* vv = ds.v_star.data() + i * cfg.rank;
      double dot = 0.0;
      for (std::size_t d = 0; d < cfg.rank; ++d) dot += uu[d] * vv[d];
      dots[u * cfg.num_items + i] = dot;
    }
  }
  ds.tau = calibrate_tau(dots, cfg.density);

  // Bernoulli positives; empty users are resampled, then forced onto their
  // highest-rate item as a last resort.
  Rng bern = Rng::substream(cfg.seed, "synth-bern");
  ds.positives.resize(cfg.num_users);
  for (std::size_t u = 0; u < cfg.num_users; ++u) {
    const double* row = dots.data() + u * cfg.num_items;
    auto& pos = ds.positives[u];
    for (int attempt = 0; attempt < 1000 && pos.empty(); ++attempt) {
      for (std::size_t i = 0; i < cfg.num_items; ++i) {
        if (bern.uniform01() < sigmoid(kLogitGain * (row[i] - ds.tau))) {
          pos.push_back(i);
        }
      }
    }
    if (pos.empty()) {
      pos.push_back(static_cast<std::size_t>(
          std::max_element(row, row + cfg.num_items) - row));
    }
  }

  // Every item must appear at least once: deterministically attach uncovered
  // items to their highest-rate user.
  std::vector<std::uint8_t> covered(cfg.num_items, 0);
  for (const auto& pos : ds.positives) {
    for (std::size_t i : pos) covered[i] = 1;
  }
  for (std::size_t i = 0; i < cfg.num_items; ++i) {
    if (covered[i]) continue;
    std::size_t best_u = 0;
    double best = -1e300;
    for (std::size_t u = 0; u < cfg.num_users; ++u) {
      const double d = dots[u * cfg.num_items + i];
      if (d > best) {
        best = d;
        best_u = u;
      }
    }
    ds.positives[best_u].push_back(i);
    std::sort(ds.positives[best_u].begin(), ds.positives[best_u].end());
  }

  // Play counts: 1 + Geometric(1/2) failures before the first success.
  Rng count_rng = Rng::substream(cfg.seed, "synth-counts");
  ds.counts.resize(cfg.num_users);
  for (std::size_t u = 0; u < cfg.num_users; ++u) {
    ds.counts[u].reserve(ds.positives[u].size());
    for (std::size_t k = 0; k < ds.positives[u].size(); ++k) {
      std::uint64_t c = 1;
      while (count_rng.uniform01() < 0.5) ++c;
      ds.counts[u].push_back(c);
    }
  }

  // Audio: one sinusoid per latent dimension, amplitude softplus(v*[d]),
  // plus low-level Gaussian noise.
  ds.tone_hz = pick_tone_frequencies(cfg.rank);
  const auto n_samples = static_cast<std::size_t>(
      std::llround(cfg.clip_seconds * kSampleRate));
  Rng noise = Rng::substream(cfg.seed, "synth-noise");
  ds.audio.resize(cfg.num_items);
  std::vector<double> omega(cfg.rank);
  for (std::size_t d = 0; d < cfg.rank; ++d) {
    omega[d] = 2.0 * kPi * ds.tone_hz[d] / kSampleRate;
  }
  for (std::size_t i = 0; i < cfg.num_items; ++i) {
    const double* vv = ds.v_star.data() + i * cfg.rank;
    std::vector<double> amp(cfg.rank);
    for (std::size_t d = 0; d < cfg.rank; ++d) {
      amp[d] = kToneScale * softplus(vv[d]);
    }
    auto& pcm = ds.audio[i];
    pcm.resize(n_samples);
    for (std::size_t t = 0; t < n_samples; ++t) {
      double s = kNoiseScale * noise.normal();
      for (std::size_t d = 0; d < cfg.rank; ++d) {
        s += amp[d] * std::sin(omega[d] * static_cast<double>(t));
      }
      pcm[t] = std::clamp(s, -1.0, 32767.0 / 32768.0);
    }
  }

  // Tags: random linear projections of v*, cut at a fixed quantile.
  Rng tag_rng = Rng::substream(cfg.seed, "synth-tags");
  ds.tags.assign(cfg.num_items,
                 std::vector<std::uint8_t>(cfg.num_tags, 0));
  std::vector<double> w(cfg.rank);
  std::vector<double> scores(cfg.num_items);
  for (std::size_t t = 0; t < cfg.num_tags; ++t) {
    for (std::size_t d = 0; d < cfg.rank; ++d) w[d] = tag_rng.normal();
    for (std::size_t i = 0; i < cfg.num_items; ++i) {
      const double* vv = ds.v_star.data() + i * cfg.rank;
      double s = 0.0;
      for (std::size_t d = 0; d < cfg.rank; ++d) s += w[d] * vv[d];
      scores[i] = s;
    }
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    const auto cut = static_cast<std::size_t>(
        kTagQuantile * static_cast<double>(cfg.num_items - 1));
    const double threshold = sorted[cut];
    for (std::size_t i = 0; i < cfg.num_items; ++i) {
      ds.tags[i][t] = scores[i] > threshold ? 1 : 0;
    }
  }

  return ds;
}

void synth_write(const SynthDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "audio", ec);
  if (ec) {
    throw DataError("synth_write: cannot create directory " + dir + ": " +
                    ec.message());
  }

  const SynthConfig& cfg = ds.cfg;
  {
    std::ofstream out(fs::path(dir) / "triplets.tsv", std::ios::binary);
    for (std::size_t u = 0; u < ds.positives.size(); ++u) {
      for (std::size_t k = 0; k < ds.positives[u].size(); ++k) {
        out << user_name(u) << '\t' << item_name(ds.positives[u][k]) << '\t'
            << ds.counts[u][k] << '\n';
      }
    }
    if (!out) throw DataError("synth_write: failed writing triplets.tsv");
  }
  {
    std::ofstream out(fs::path(dir) / "tags.tsv", std::ios::binary);
    for (std::size_t i = 0; i < ds.tags.size(); ++i) {
      std::string joined;
      for (std::size_t t = 0; t < cfg.num_tags; ++t) {
        if (!ds.tags[i][t]) continue;
        if (!joined.empty()) joined += ',';
        joined += tag_name(t);
      }
      if (joined.empty()) continue;  // untagged items are omitted
      out << item_name(i) << '\t' << joined << '\n';
    }
    if (!out) throw DataError("synth_write: failed writing tags.tsv");
  }
  {
    nlohmann::json j;
    j["num_users"] = cfg.num_users;
    j["num_items"] = cfg.num_items;
    j["rank"] = cfg.rank;
    j["tau"] = ds.tau;
    j["tone_hz"] = ds.tone_hz;
    auto matrix = [](const DenseArray& a) {
      nlohmann::json rows = nlohmann::json::array();
      for (std::size_t r = 0; r < a.extent(0); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < a.extent(1); ++c) {
          row.push_back(a.data()[r * a.extent(1) + c]);
        }
        rows.push_back(row);
      }
      return rows;
    };
    j["u_star"] = matrix(ds.u_star);
    j["v_star"] = matrix(ds.v_star);
    std::ofstream out(fs::path(dir) / "ground_truth.json", std::ios::binary);
    out << j.dump(2) << '\n';
    if (!out) throw DataError("synth_write: failed writing ground_truth.json");
  }
  for (std::size_t i = 0; i < ds.audio.size(); ++i) {
    const fs::path p = fs::path(dir) / "audio" / (item_name(i) + ".wav");
    write_wav_mono(p.string(), ds.audio[i],
                   static_cast<std::size_t>(kSampleRate));
  }
}

}  // namespace cuembed
