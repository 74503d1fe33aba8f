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
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "cuembed/audio_frontend.hpp"
#include "cuembed/errors.hpp"
#include "cuembed/rng.hpp"
#include "doctest.h"

using namespace cuembed;

namespace {

constexpr double kTau = 6.283185307179586;

std::vector<double> sine(double hz, double seconds, double rate,
                         double amp = 0.5) {
  const auto n = static_cast<std::size_t>(seconds * rate);
  std::vector<double> pcm(n);
  for (std::size_t i = 0; i < n; ++i) {
    pcm[i] = amp * std::sin(kTau * hz * static_cast<double>(i) / rate);
  }
  return pcm;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("context frame formula") {
  DspConfig cfg;
  CHECK(cfg.context_frames() == 128);
  cfg.context_seconds = 6.0;
  CHECK(cfg.context_frames() == 1 + (132300 - 1024) / 512);

  DspConfig bad;
  bad.fft_size = 1000;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = DspConfig{};
  bad.hop = 2048;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = DspConfig{};
  bad.mel_bins = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("fft matches a naive DFT") {
  Rng rng = Rng::substream(31, "fft");
  const std::size_t n = 16;
  std::vector<double> re(n), im(n), re0(n), im0(n);
  for (std::size_t i = 0; i < n; ++i) {
    re[i] = re0[i] = rng.normal();
    im[i] = im0[i] = rng.normal();
  }
  fft_radix2(re, im);
  for (std::size_t k = 0; k < n; ++k) {
    double sr = 0.0, si = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -kTau * static_cast<double>(k * t) / static_cast<double>(n);
      sr += re0[t] * std::cos(ang) - im0[t] * std::sin(ang);
      si += re0[t] * std::sin(ang) + im0[t] * std::cos(ang);
    }
    CHECK(re[k] == doctest::Approx(sr).epsilon(1e-9));
    CHECK(im[k] == doctest::Approx(si).epsilon(1e-9));
  }
  CHECK_THROWS_AS(fft_radix2(std::span<double>(re.data(), 12),
                             std::span<double>(im.data(), 12)),
                  DataError);
}

TEST_CASE("fft of a bin-aligned cosine peaks at that bin") {
  const std::size_t n = 64, k = 5;
  std::vector<double> re(n), im(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    re[t] = std::cos(kTau * static_cast<double>(k * t) / static_cast<double>(n));
  }
  fft_radix2(re, im);
  CHECK(re[k] == doctest::Approx(static_cast<double>(n) / 2).epsilon(1e-9));
  for (std::size_t j = 0; j < n; ++j) {
    if (j != k && j != n - k) {
      CHECK(std::hypot(re[j], im[j]) < 1e-9);
    }
  }
}

TEST_CASE("melspectrogram: 3 s at 22050 Hz yields 128x128") {
  DspConfig cfg;
  std::vector<double> pcm = sine(1000.0, 3.0, 22050.0);
  REQUIRE(pcm.size() == 66150);
  MelSpec m = melspectrogram(pcm, cfg, "sine-1k");
  CHECK(m.mel_bins() == 128);
  CHECK(m.frames() == 128);
  CHECK(m.source == "sine-1k");

  std::vector<double> tiny(1023, 0.0);
  CHECK_THROWS_AS(melspectrogram(tiny, cfg), DataError);
}

TEST_CASE("melspectrogram: silence maps to exact zeros") {
  DspConfig cfg;
  std::vector<double> pcm(22050, 0.0);
  MelSpec m = melspectrogram(pcm, cfg);
  for (std::size_t i = 0; i < m.values.size(); ++i) CHECK(m.values[i] == 0.0);
}

TEST_CASE("melspectrogram: sine at a filter center maximizes that bin") {
  DspConfig cfg;
  const MelBank bank = make_mel_bank(cfg.mel_bins, cfg.fft_size, 22050.0);
  for (std::size_t target : {40ul, 64ul, 100ul}) {
    std::vector<double> pcm = sine(bank.center_hz[target], 1.5, 22050.0);
    MelSpec m = melspectrogram(pcm, cfg);
    std::size_t best = 0;
    double best_sum = -1.0;
    for (std::size_t b = 0; b < m.mel_bins(); ++b) {
      double s = 0.0;
      for (std::size_t t = 0; t < m.frames(); ++t) s += m.values.at(b, t);
      if (s > best_sum) {
        best_sum = s;
        best = b;
      }
    }
    CHECK(best == target);
  }
}

TEST_CASE("melspectrogram: energy monotone under amplitude scaling") {
  DspConfig cfg;
  Rng rng = Rng::substream(33, "scale");
  std::vector<double> pcm(22050 * 2);
  for (double& s : pcm) s = 0.2 * rng.normal();
  std::vector<double> doubled = pcm;
  for (double& s : doubled) s *= 2.0;
  MelSpec a = melspectrogram(pcm, cfg);
  MelSpec b = melspectrogram(doubled, cfg);
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    CHECK(b.values[i] >= a.values[i]);
  }
}

TEST_CASE("mel bank covers 0 to Nyquist with HTK spacing") {
  const MelBank bank = make_mel_bank(128, 1024, 22050.0);
  CHECK(bank.center_hz.front() > 0.0);
  CHECK(bank.center_hz.back() < 11025.0);
  // centers are monotone and follow mel = 2595 log10(1 + f/700) spacing
  const double mel_hi = 2595.0 * std::log10(1.0 + 11025.0 / 700.0);
  for (std::size_t m = 0; m < 128; ++m) {
    const double expect = 700.0 * (std::pow(10.0, mel_hi * static_cast<double>(m + 1) /
                                                      129.0 / 2595.0) -
                                   1.0);
    CHECK(bank.center_hz[m] == doctest::Approx(expect).epsilon(1e-9));
    if (m) CHECK(bank.center_hz[m] > bank.center_hz[m - 1]);
    CHECK(bank.bin_begin[m] < bank.bin_end[m]);
  }
}

TEST_CASE("wav round trip and validation") {
  const auto path = temp_file("cuembed_test.wav");
  std::vector<double> pcm = sine(440.0, 0.25, 22050.0, 0.8);
  write_wav_mono(path.string(), pcm, 22050);
  std::vector<double> back = read_wav_mono(path.string(), 22050);
  REQUIRE(back.size() == pcm.size());
  for (std::size_t i = 0; i < pcm.size(); ++i) {
    CHECK(std::fabs(back[i] - pcm[i]) <= 1.0 / 32768.0);
  }

  CHECK_THROWS_AS(read_wav_mono(path.string(), 44100), DataError);
  CHECK_THROWS_AS(read_wav_mono("/nonexistent.wav", 22050), DataError);

  // corrupt the channel count in place
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(22);
  const char two[2] = {2, 0};
  f.write(two, 2);
  f.close();
  CHECK_THROWS_AS(read_wav_mono(path.string(), 22050), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("normalizer frozen example and oracle") {
  MelSpec a{DenseArray({1, 2}, {0, 2}), "a"};
  MelSpec b{DenseArray({1, 2}, {2, 4}), "b"};
  std::vector<MelSpec> train{a, b};
  Normalizer n = fit_normalizer(train);
  CHECK(n.mean[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(n.std[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));

  MelSpec norm = apply_normalizer(a, n);
  CHECK(norm.values[0] == doctest::Approx(-std::sqrt(2.0)).epsilon(1e-12));

  Normalizer identity{false, {0.0}, {1.0}};
  MelSpec same = apply_normalizer(a, identity);
  CHECK(same.values[0] == a.values[0]);
  CHECK(same.values[1] == a.values[1]);

  std::vector<MelSpec> constant{MelSpec{DenseArray({1, 3}, {5, 5, 5}), ""}};
  CHECK_THROWS_AS(fit_normalizer(constant), NumericError);
  CHECK_THROWS_AS(fit_normalizer(std::span<const MelSpec>{}), DataError);
}

TEST_CASE("normalizer matches two-pass oracle and round-trips") {
  Rng rng = Rng::substream(37, "norm");
  std::vector<MelSpec> train;
  for (int s = 0; s < 6; ++s) {
    DenseArray vals({4, 10});
    for (std::size_t i = 0; i < vals.size(); ++i) {
      vals[i] = 3.0 + 2.0 * rng.normal();
    }
    train.push_back(MelSpec{std::move(vals), ""});
  }
  Normalizer n = fit_normalizer(train);

  double sum = 0.0;
  std::size_t count = 0;
  for (const MelSpec& m : train) {
    for (std::size_t i = 0; i < m.values.size(); ++i) sum += m.values[i];
    count += m.values.size();
  }
  const double mean = sum / static_cast<double>(count);
  double sq = 0.0;
  for (const MelSpec& m : train) {
    for (std::size_t i = 0; i < m.values.size(); ++i) {
      sq += (m.values[i] - mean) * (m.values[i] - mean);
    }
  }
  CHECK(n.mean[0] == doctest::Approx(mean).epsilon(1e-10));
  CHECK(n.std[0] ==
        doctest::Approx(std::sqrt(sq / static_cast<double>(count))).epsilon(1e-10));

  double nsum = 0.0, nsq = 0.0;
  for (const MelSpec& m : train) {
    MelSpec z = apply_normalizer(m, n);
    for (std::size_t i = 0; i < z.values.size(); ++i) {
      nsum += z.values[i];
      nsq += z.values[i] * z.values[i];
    }
  }
  CHECK(std::fabs(nsum / static_cast<double>(count)) < 1e-9);
  CHECK(nsq / static_cast<double>(count) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("per-bin normalizer zeroes each row mean") {
  Rng rng = Rng::substream(38, "norm-bin");
  std::vector<MelSpec> train;
  for (int s = 0; s < 3; ++s) {
    DenseArray vals({3, 8});
    for (std::size_t b = 0; b < 3; ++b) {
      for (std::size_t t = 0; t < 8; ++t) {
        vals.at(b, t) = static_cast<double>(b) * 10.0 + rng.normal();
      }
    }
    train.push_back(MelSpec{std::move(vals), ""});
  }
  Normalizer n = fit_normalizer(train, true);
  REQUIRE(n.mean.size() == 3);
  for (std::size_t b = 0; b < 3; ++b) {
    double rsum = 0.0;
    for (const MelSpec& m : train) {
      MelSpec z = apply_normalizer(m, n);
      for (std::size_t t = 0; t < 8; ++t) rsum += z.values.at(b, t);
    }
    CHECK(std::fabs(rsum / 24.0) < 1e-9);
  }
  MelSpec wrong{DenseArray({2, 2}, {1, 2, 3, 4}), ""};
  CHECK_THROWS_AS(apply_normalizer(wrong, n), ConfigError);
}

TEST_CASE("random_crop determinism, identity and bounds") {
  DenseArray vals({2, 256});
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = static_cast<double>(i);
  MelSpec m{std::move(vals), "clip"};

  Rng r1 = Rng::substream(40, "crop");
  Rng r2 = Rng::substream(40, "crop");
  MelSpec c1 = random_crop(m, 128, r1);
  MelSpec c2 = random_crop(m, 128, r2);
  CHECK(c1.frames() == 128);
  CHECK(c1.values.values() == c2.values.values());

  MelSpec narrow{DenseArray({2, 16}, std::vector<double>(32, 1.0)), ""};
  Rng r3 = Rng::substream(41, "crop");
  MelSpec full = random_crop(narrow, 16, r3);
  CHECK(full.values.values() == narrow.values.values());

  CHECK_THROWS_AS(random_crop(narrow, 17, r3), DataError);

  // offsets roughly uniform over the 129 valid starts
  Rng r4 = Rng::substream(42, "crop");
  std::vector<int> hist(129, 0);
  for (int draw = 0; draw < 10000; ++draw) {
    MelSpec c = random_crop(m, 128, r4);
    const auto offset = static_cast<std::size_t>(c.values.at(0, 0));
    REQUIRE(offset < 129);
    hist[offset]++;
  }
  const auto [lo, hi] = std::minmax_element(hist.begin(), hist.end());
  CHECK(*lo > 30);
  CHECK(*hi < 160);
}

TEST_CASE("mel cache round trip is float32-exact and rewrite-stable") {
  Rng rng = Rng::substream(43, "cache");
  DenseArray vals({5, 7});
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = rng.normal();
  MelSpec m{std::move(vals), "item-9"};

  const auto path = temp_file("cuembed_test.mel");
  write_mel_cache(path.string(), m);
  MelSpec back = read_mel_cache(path.string(), "item-9");
  CHECK(back.mel_bins() == 5);
  CHECK(back.frames() == 7);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    CHECK(back.values[i] == static_cast<double>(static_cast<float>(m.values[i])));
  }

  const auto path2 = temp_file("cuembed_test2.mel");
  write_mel_cache(path2.string(), back);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), {});
  std::string b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);

  std::ofstream corrupt(path, std::ios::binary | std::ios::trunc);
  corrupt << "MEL2garbage";
  corrupt.close();
  CHECK_THROWS_AS(read_mel_cache(path.string()), DataError);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}
