/*
 Copyright 2026 The VATTS Authors.

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      http://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

// Signal-processing front end: framing, STFT magnitude, HTK mel filterbank,
// mel cepstra, YIN pitch tracking and per-frame energy.
//
// Frame t of an analysis with window W and hop H covers samples
// [t*H, t*H + W). Trailing samples that do not fill a whole window are
// dropped; nothing is zero-padded.

#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "vatts/audio.h"

namespace vatts::dsp {

struct SpectralConfig {
  double window_ms = 25.0;
  double hop_ms = 10.0;
  int mel_bands = 80;
  double fmin = 0.0;
  std::optional<double> fmax;  // defaults to min(8000, Nyquist)
  int cepstral_order = 13;

  /// 80-band log-mel front end used for per-phoneme speech summaries.
  static SpectralConfig speech() { return SpectralConfig{}; }
  /// 40-band front end feeding the 13-coefficient cepstra.
  static SpectralConfig cepstral() {
    SpectralConfig c;
    c.mel_bands = 40;
    return c;
  }

  int window_samples(int sample_rate) const;
  int hop_samples(int sample_rate) const;
  int fft_size(int sample_rate) const;
  double resolved_fmax(int sample_rate) const;
  void validate(int sample_rate) const;
};

struct F0Config {
  double frame_ms = 40.0;
  double hop_ms = 10.0;
  double fmin = 60.0;
  double fmax = 500.0;
  double cmnd_threshold = 0.15;
  double silence_floor_db = -60.0;

  int frame_samples(int sample_rate) const;
  int hop_samples(int sample_rate) const;
  void validate(int sample_rate) const;
};

struct F0Track {
  std::vector<double> f0_hz;  // 0 where unvoiced
  std::vector<bool> voiced;
  double hop_ms = 10.0;

  std::size_t size() const { return f0_hz.size(); }
};

/// floor((n - window) / hop) + 1, or 0 when n < window.
std::size_t frame_count(std::size_t n_samples, int window, int hop);

/// Center of analysis frame `t` in seconds.
double frame_center_s(std::size_t t, int window, int hop, int sample_rate);

/// Symmetric Hann window of length n.
std::vector<double> hann_window(int n);

/// In-place iterative radix-2 FFT. Size must be a power of two.
void fft(std::vector<std::complex<double>>& data);

/// Triangular HTK-mel filterbank, bands x (fft_size/2 + 1), peaks at 1.0.
Matrix mel_filterbank(int bands, int fft_size, int sample_rate, double fmin, double fmax);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Magnitude spectrogram, frames x (fft_size/2 + 1).
Matrix stft(const AudioBuffer& audio, const SpectralConfig& cfg);

/// Natural-log mel spectrogram (floor 1e-10), frames x mel_bands.
Matrix log_mel_spectrogram(const AudioBuffer& audio, const SpectralConfig& cfg);

/// Orthonormal DCT-II of a vector.
std::vector<double> dct2_orthonormal(std::span<const double> x);

/// Cepstral coefficients c_1..c_order (c_0 dropped), frames x order.
Matrix mel_cepstra(const AudioBuffer& audio, const SpectralConfig& cfg);

/// YIN pitch track with voicing decision.
F0Track estimate_f0(const AudioBuffer& audio, const F0Config& cfg);

/// Per-frame L2 norm of the STFT magnitude rows.
std::vector<double> frame_energy(const AudioBuffer& audio, const SpectralConfig& cfg);

}  // namespace vatts::dsp
