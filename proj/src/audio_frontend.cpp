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

#include "cuembed/audio_frontend.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "cuembed/errors.hpp"

namespace cuembed {

namespace {

constexpr double kPi = 3.14159265358979323846;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 |
         static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

std::string read_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  return buf;
}

void write_binary(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write: " + path);
}

}  // namespace

void DspConfig::validate() const {
  if (sample_rate == 0) throw ConfigError("dsp: sample_rate must be positive");
  if (mel_bins == 0) throw ConfigError("dsp: mel_bins must be >= 1");
  if (fft_size == 0 || !std::has_single_bit(fft_size)) {
    throw ConfigError("dsp: fft_size must be a power of two");
  }
  if (hop == 0 || hop > fft_size) {
    throw ConfigError("dsp: hop must be in [1, fft_size]");
  }
  if (context_seconds * static_cast<double>(sample_rate) <
      static_cast<double>(fft_size)) {
    throw ConfigError("dsp: context window shorter than one FFT frame");
  }
}

std::size_t DspConfig::context_frames() const {
  const auto samples = static_cast<std::size_t>(
      context_seconds * static_cast<double>(sample_rate));
  return 1 + (samples - fft_size) / hop;
}

void fft_radix2(std::span<double> re, std::span<double> im) {
  const std::size_t n = re.size();
  if (n != im.size() || n == 0 || !std::has_single_bit(n)) {
    throw DataError("fft: length must be a power of two");
  }
  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const double wr = std::cos(ang), wi = std::sin(ang);
    for (std::size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (std::size_t j = 0; j < len / 2; ++j) {
        const std::size_t a = i + j, b = i + j + len / 2;
        const double tr = re[b] * cr - im[b] * ci;
        const double ti = re[b] * ci + im[b] * cr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

MelBank make_mel_bank(std::size_t mel_bins, std::size_t fft_size,
                      double sample_rate) {
  if (mel_bins == 0 || fft_size == 0 || sample_rate <= 0.0) {
    throw ConfigError("mel bank: invalid dimensions");
  }
  const std::size_t n_bins = fft_size / 2 + 1;
  MelBank bank;
  bank.mel_bins = mel_bins;
  bank.fft_size = fft_size;
  bank.sample_rate = sample_rate;
  bank.weights = DenseArray({mel_bins, n_bins});
  bank.center_hz.resize(mel_bins);
  bank.bin_begin.assign(mel_bins, n_bins);
  bank.bin_end.assign(mel_bins, 0);

  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> hz(mel_bins + 2);
  for (std::size_t p = 0; p < hz.size(); ++p) {
    hz[p] = mel_to_hz(mel_hi * static_cast<double>(p) /
                      static_cast<double>(mel_bins + 1));
  }
  for (std::size_t m = 0; m < mel_bins; ++m) {
    const double lo = hz[m], center = hz[m + 1], hi = hz[m + 2];
    bank.center_hz[m] = center;
    const double norm = 2.0 / (hi - lo);
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate /
                       static_cast<double>(fft_size);
      double w = 0.0;
      if (f >= lo && f <= center && center > lo) {
        w = (f - lo) / (center - lo);
      } else if (f > center && f <= hi && hi > center) {
        w = (hi - f) / (hi - center);
      }
      if (w > 0.0) {
        bank.weights.at(m, k) = w * norm;
        bank.bin_begin[m] = std::min(bank.bin_begin[m], k);
        bank.bin_end[m] = k + 1;
      }
    }
    if (bank.bin_begin[m] >= bank.bin_end[m]) {
      // Degenerate filter narrower than one FFT bin; keep a single tap at the
      // nearest bin so every row stays usable.
      const auto k = static_cast<std::size_t>(std::min(
          static_cast<double>(n_bins - 1),
          std::round(center * static_cast<double>(fft_size) / sample_rate)));
      bank.weights.at(m, k) = norm;
      bank.bin_begin[m] = k;
      bank.bin_end[m] = k + 1;
    }
  }
  return bank;
}

std::vector<double> read_wav_mono(const std::string& path,
                                  std::size_t expect_rate) {
  const std::string buf = read_binary(path);
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  if (buf.size() < 12 || std::memcmp(p, "RIFF", 4) != 0 ||
      std::memcmp(p + 8, "WAVE", 4) != 0) {
    throw DataError("wav: not a RIFF/WAVE file: " + path);
  }
  bool have_fmt = false;
  std::size_t pos = 12;
  std::vector<double> samples;
  while (pos + 8 <= buf.size()) {
    const std::uint32_t chunk_len = get_u32(p + pos + 4);
    const unsigned char* chunk = p + pos + 8;
    if (pos + 8 + chunk_len > buf.size()) {
      throw DataError("wav: truncated chunk in " + path);
    }
    if (std::memcmp(p + pos, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw DataError("wav: short fmt chunk in " + path);
      const std::uint16_t format = get_u16(chunk);
      const std::uint16_t channels = get_u16(chunk + 2);
      const std::uint32_t rate = get_u32(chunk + 4);
      const std::uint16_t bits = get_u16(chunk + 14);
      if (format != 1 || bits != 16) {
        throw DataError("wav: need 16-bit PCM: " + path);
      }
      if (channels != 1) throw DataError("wav: need mono audio: " + path);
      if (rate != expect_rate) {
        throw DataError("wav: sample rate " + std::to_string(rate) +
                        " != required " + std::to_string(expect_rate) + ": " +
                        path);
      }
      have_fmt = true;
    } else if (std::memcmp(p + pos, "data", 4) == 0) {
      if (!have_fmt) throw DataError("wav: data chunk before fmt: " + path);
      samples.reserve(chunk_len / 2);
      for (std::uint32_t i = 0; i + 1 < chunk_len; i += 2) {
        const auto v = static_cast<std::int16_t>(
            static_cast<std::uint16_t>(chunk[i] | chunk[i + 1] << 8));
        samples.push_back(static_cast<double>(v) / 32768.0);
      }
      return samples;
    }
    pos += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }
  throw DataError("wav: no data chunk in " + path);
}

void write_wav_mono(const std::string& path, std::span<const double> samples,
                    std::size_t rate) {
  std::string out;
  out.reserve(44 + samples.size() * 2);
  const auto data_len = static_cast<std::uint32_t>(samples.size() * 2);
  out += "RIFF";
  put_u32(out, 36 + data_len);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(rate));
  put_u32(out, static_cast<std::uint32_t>(rate * 2));  // byte rate
  put_u16(out, 2);                                     // block align
  put_u16(out, 16);                                    // bits per sample
  out += "data";
  put_u32(out, data_len);
  for (double s : samples) {
    const double clamped = std::clamp(s, -1.0, 32767.0 / 32768.0);
    const auto v = static_cast<std::int16_t>(std::lrint(clamped * 32768.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  write_binary(path, out);
}

MelSpec melspectrogram(std::span<const double> pcm, const DspConfig& cfg,
                       std::string source) {
  cfg.validate();
  if (pcm.size() < cfg.fft_size) {
    throw DataError("melspectrogram: input shorter than one FFT frame");
  }
  const std::size_t frames = 1 + (pcm.size() - cfg.fft_size) / cfg.hop;
  const std::size_t n_bins = cfg.fft_size / 2 + 1;
  const MelBank bank = make_mel_bank(cfg.mel_bins, cfg.fft_size,
                                     static_cast<double>(cfg.sample_rate));

  // periodic Hann
  std::vector<double> window(cfg.fft_size);
  for (std::size_t i = 0; i < cfg.fft_size; ++i) {
    window[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(i) /
                                      static_cast<double>(cfg.fft_size)));
  }

  MelSpec spec;
  spec.source = std::move(source);
  spec.values = DenseArray({cfg.mel_bins, frames});
  std::vector<double> re(cfg.fft_size), im(cfg.fft_size), mag(n_bins);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* frame = pcm.data() + t * cfg.hop;
    for (std::size_t i = 0; i < cfg.fft_size; ++i) {
      re[i] = frame[i] * window[i];
      im[i] = 0.0;
    }
    fft_radix2(re, im);
    for (std::size_t k = 0; k < n_bins; ++k) {
      mag[k] = std::sqrt(re[k] * re[k] + im[k] * im[k]);
    }
    for (std::size_t m = 0; m < cfg.mel_bins; ++m) {
      double acc = 0.0;
      const double* wrow = bank.weights.data() + m * n_bins;
      for (std::size_t k = bank.bin_begin[m]; k < bank.bin_end[m]; ++k) {
        acc += wrow[k] * mag[k];
      }
      spec.values.at(m, t) = std::log1p(acc);
    }
  }
  spec.values.require_finite("melspectrogram");
  return spec;
}

Normalizer fit_normalizer(std::span<const MelSpec> train, bool per_bin) {
  if (train.empty()) throw DataError("fit_normalizer: empty training set");
  const std::size_t bins = train[0].mel_bins();
  for (const MelSpec& m : train) {
    if (m.mel_bins() != bins) {
      throw DataError("fit_normalizer: inconsistent mel_bins");
    }
  }
  const std::size_t groups = per_bin ? bins : 1;
  std::vector<double> sum(groups, 0.0), count(groups, 0.0);
  for (const MelSpec& m : train) {
    for (std::size_t b = 0; b < bins; ++b) {
      const std::size_t g = per_bin ? b : 0;
      for (std::size_t t = 0; t < m.frames(); ++t) {
        sum[g] += m.values.at(b, t);
        count[g] += 1.0;
      }
    }
  }
  Normalizer n;
  n.per_bin = per_bin;
  n.mean.resize(groups);
  n.std.resize(groups);
  for (std::size_t g = 0; g < groups; ++g) n.mean[g] = sum[g] / count[g];
  std::vector<double> sq(groups, 0.0);
  for (const MelSpec& m : train) {
    for (std::size_t b = 0; b < bins; ++b) {
      const std::size_t g = per_bin ? b : 0;
      for (std::size_t t = 0; t < m.frames(); ++t) {
        const double d = m.values.at(b, t) - n.mean[g];
        sq[g] += d * d;
      }
    }
  }
  for (std::size_t g = 0; g < groups; ++g) {
    n.std[g] = std::sqrt(sq[g] / count[g]);  // population std
    if (!(n.std[g] > 0.0)) {
      throw NumericError("fit_normalizer: constant training data (std = 0)");
    }
  }
  return n;
}

MelSpec apply_normalizer(const MelSpec& m, const Normalizer& n) {
  const std::size_t groups = n.per_bin ? m.mel_bins() : 1;
  if (n.mean.size() != groups || n.std.size() != groups) {
    throw ConfigError("apply_normalizer: normalizer does not match mel_bins");
  }
  MelSpec out;
  out.source = m.source;
  out.values = m.values;
  for (std::size_t b = 0; b < m.mel_bins(); ++b) {
    const std::size_t g = n.per_bin ? b : 0;
    for (std::size_t t = 0; t < m.frames(); ++t) {
      out.values.at(b, t) = (m.values.at(b, t) - n.mean[g]) / n.std[g];
    }
  }
  return out;
}

DenseArray crop_window(const DenseArray& mel, std::size_t offset,
                       std::size_t frames) {
  if (mel.rank() != 2) throw DataError("crop_window: expected [bins x T]");
  const std::size_t bins = mel.extent(0);
  const std::size_t total = mel.extent(1);
  if (offset + frames > total) {
    throw DataError("crop_window: slice exceeds clip length");
  }
  DenseArray out({bins, frames});
  for (std::size_t b = 0; b < bins; ++b) {
    std::memcpy(out.data() + b * frames, mel.data() + b * total + offset,
                frames * sizeof(double));
  }
  return out;
}

MelSpec random_crop(const MelSpec& m, std::size_t frames, Rng& rng) {
  if (frames == 0) throw ConfigError("random_crop: frames must be >= 1");
  if (m.frames() < frames) {
    throw DataError("random_crop: clip has " + std::to_string(m.frames()) +
                    " frames, need " + std::to_string(frames));
  }
  const std::size_t offset = rng.below(m.frames() - frames + 1);
  MelSpec out;
  out.source = m.source;
  out.values = crop_window(m.values, offset, frames);
  return out;
}

void write_mel_cache(const std::string& path, const MelSpec& m) {
  std::string out;
  out.reserve(12 + m.values.size() * 4);
  out += "MEL1";
  put_u32(out, static_cast<std::uint32_t>(m.mel_bins()));
  put_u32(out, static_cast<std::uint32_t>(m.frames()));
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    const auto f = static_cast<float>(m.values[i]);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
  write_binary(path, out);
}

MelSpec read_mel_cache(const std::string& path, std::string source) {
  const std::string buf = read_binary(path);
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  if (buf.size() < 12 || std::memcmp(p, "MEL1", 4) != 0) {
    throw DataError("mel cache: bad magic: " + path);
  }
  const std::uint32_t bins = get_u32(p + 4);
  const std::uint32_t frames = get_u32(p + 8);
  if (bins == 0 || frames == 0 ||
      buf.size() != 12 + static_cast<std::size_t>(bins) * frames * 4) {
    throw DataError("mel cache: size mismatch: " + path);
  }
  MelSpec m;
  m.source = std::move(source);
  m.values = DenseArray({bins, frames});
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    const std::uint32_t bits = get_u32(p + 12 + i * 4);
    float f;
    std::memcpy(&f, &bits, 4);
    m.values[i] = static_cast<double>(f);
  }
  m.values.require_finite("mel cache " + path);
  return m;
}

}  // namespace cuembed
