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
#include <span>
#include <string>
#include <vector>

#include "cuembed/dense.hpp"
#include "cuembed/rng.hpp"

namespace cuembed {

struct DspConfig {
  std::size_t sample_rate = 22050;
  std::size_t fft_size = 1024;
  std::size_t hop = 512;
  std::size_t mel_bins = 128;
  double context_seconds = 3.0;

  // Throws ConfigError on inconsistent settings (hop > fft, non-power-of-two
  // FFT, zero bins/rate).
  void validate() const;

  // 1 + floor((context_seconds*sample_rate - fft_size)/hop)
  std::size_t context_frames() const;
};

// Log-magnitude mel spectrogram, [mel_bins x frames].
struct MelSpec {
  DenseArray values;
  std::string source;

  std::size_t mel_bins() const { return values.extent(0); }
  std::size_t frames() const { return values.extent(1); }
};

// Global (or optional per-bin) mean/std fitted on training items only.
struct Normalizer {
  bool per_bin = false;
  std::vector<double> mean;  // size 1, or mel_bins when per_bin
  std::vector<double> std;
};

// Triangular mel filterbank on HTK spacing (mel = 2595*log10(1 + f/700)),
// 0 Hz to Nyquist, area-normalized by 2/(f_hi - f_lo).
struct MelBank {
  std::size_t mel_bins = 0;
  std::size_t fft_size = 0;
  double sample_rate = 0.0;
  DenseArray weights;                 // [mel_bins x (fft_size/2 + 1)]
  std::vector<double> center_hz;      // triangle peak per bin
  std::vector<std::size_t> bin_begin; // first nonzero FFT bin per filter
  std::vector<std::size_t> bin_end;   // one past the last nonzero FFT bin
};

MelBank make_mel_bank(std::size_t mel_bins, std::size_t fft_size,
                      double sample_rate);

// In-place iterative radix-2 FFT; lengths must be a power of two.
void fft_radix2(std::span<double> re, std::span<double> im);

// RIFF/PCM WAV, 16-bit little-endian mono. Samples scale to [-1, 1).
std::vector<double> read_wav_mono(const std::string& path,
                                  std::size_t expect_rate);
void write_wav_mono(const std::string& path, std::span<const double> samples,
                    std::size_t rate);

// Hann-windowed magnitude STFT (no centering) -> mel filterbank -> log1p.
MelSpec melspectrogram(std::span<const double> pcm, const DspConfig& cfg,
                       std::string source = {});

Normalizer fit_normalizer(std::span<const MelSpec> train, bool per_bin = false);

MelSpec apply_normalizer(const MelSpec& m, const Normalizer& n);

// Contiguous window of `frames` frames starting at `offset`. Throws
// DataError when the slice falls outside the clip.
DenseArray crop_window(const DenseArray& mel, std::size_t offset,
                       std::size_t frames);

// Contiguous window of exactly `frames` frames, start uniform over valid
// offsets. Throws DataError when the clip is shorter than the window.
MelSpec random_crop(const MelSpec& m, std::size_t frames, Rng& rng);

// Binary spectrogram cache: magic "MEL1", u32 LE mel_bins, u32 LE frames,
// then float32 LE row-major values.
void write_mel_cache(const std::string& path, const MelSpec& m);
MelSpec read_mel_cache(const std::string& path, std::string source = {});

}  // namespace cuembed
