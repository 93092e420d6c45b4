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

#include "vatts/dsp.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "vatts/error.h"

namespace vatts::dsp {

namespace {

constexpr double kLogFloor = 1e-10;

int ms_to_samples(double ms, int sample_rate) {
  return static_cast<int>(std::lround(ms * sample_rate / 1000.0));
}

void check_rate(int sample_rate) {
  if (sample_rate <= 0) throw DataError("sample rate must be positive");
}

}  // namespace

int SpectralConfig::window_samples(int sample_rate) const {
  return ms_to_samples(window_ms, sample_rate);
}

int SpectralConfig::hop_samples(int sample_rate) const {
  return std::max(1, ms_to_samples(hop_ms, sample_rate));
}

int SpectralConfig::fft_size(int sample_rate) const {
  int n = 1;
  while (n < window_samples(sample_rate)) n <<= 1;
  return n;
}

double SpectralConfig::resolved_fmax(int sample_rate) const {
  return fmax.value_or(std::min(8000.0, sample_rate / 2.0));
}

void SpectralConfig::validate(int sample_rate) const {
  check_rate(sample_rate);
  if (window_ms <= 0 || hop_ms <= 0) throw DataError("window and hop must be positive");
  if (hop_ms > window_ms) throw DataError("hop_ms must not exceed window_ms");
  if (window_samples(sample_rate) < 2) throw DataError("window shorter than two samples");
  if (mel_bands < cepstral_order) throw DataError("mel_bands must be >= cepstral_order");
  if (cepstral_order < 1) throw DataError("cepstral_order must be >= 1");
  const double hi = resolved_fmax(sample_rate);
  if (hi > sample_rate / 2.0) throw DataError("fmax exceeds Nyquist");
  if (fmin < 0 || fmin >= hi) throw DataError("fmin must lie in [0, fmax)");
}

int F0Config::frame_samples(int sample_rate) const { return ms_to_samples(frame_ms, sample_rate); }

int F0Config::hop_samples(int sample_rate) const {
  return std::max(1, ms_to_samples(hop_ms, sample_rate));
}

void F0Config::validate(int sample_rate) const {
  check_rate(sample_rate);
  if (!(fmin > 0 && fmin < fmax)) throw DataError("F0 range requires 0 < fmin < fmax");
  if (!(cmnd_threshold > 0 && cmnd_threshold < 1))
    throw DataError("cmnd_threshold must lie in (0, 1)");
  if (fmax > sample_rate / 2.0) throw DataError("F0 fmax exceeds Nyquist");
  const int max_lag = static_cast<int>(std::ceil(sample_rate / fmin));
  if (frame_samples(sample_rate) <= max_lag + 1)
    throw DataError("F0 frame too short for the lowest searchable pitch");
}

std::size_t frame_count(std::size_t n_samples, int window, int hop) {
  if (window <= 0 || hop <= 0 || n_samples < static_cast<std::size_t>(window)) return 0;
  return (n_samples - window) / hop + 1;
}

double frame_center_s(std::size_t t, int window, int hop, int sample_rate) {
  return (static_cast<double>(t) * hop + window / 2.0) / sample_rate;
}

std::vector<double> hann_window(int n) {
  std::vector<double> w(n, 1.0);
  if (n < 2) return w;
  for (int i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (n - 1));
  return w;
}

void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0) throw DataError("FFT size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::size_t half = len / 2;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const std::complex<double> w(std::cos(ang * k), std::sin(ang * k));
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + half] * w;
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Matrix mel_filterbank(int bands, int fft_size, int sample_rate, double fmin, double fmax) {
  const int bins = fft_size / 2 + 1;
  Matrix fb = Matrix::Zero(bands, bins);
  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(bands + 2);
  for (int m = 0; m < bands + 2; ++m)
    edges[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (bands + 1));
  for (int m = 0; m < bands; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      double w = 0.0;
      if (f >= left && f <= center && center > left)
        w = (f - left) / (center - left);
      else if (f > center && f <= right && right > center)
        w = (right - f) / (right - center);
      fb(m, k) = w;
    }
  }
  return fb;
}

Matrix stft(const AudioBuffer& audio, const SpectralConfig& cfg) {
  cfg.validate(audio.sample_rate);
  const int win = cfg.window_samples(audio.sample_rate);
  const int hop = cfg.hop_samples(audio.sample_rate);
  const int nfft = cfg.fft_size(audio.sample_rate);
  const std::size_t frames = frame_count(audio.size(), win, hop);
  if (frames == 0)
    throw DataError("audio shorter than one analysis window (" + std::to_string(audio.size()) +
                    " < " + std::to_string(win) + " samples)");

  const std::vector<double> window = hann_window(win);
  const int bins = nfft / 2 + 1;
  Matrix mag(static_cast<Eigen::Index>(frames), bins);
  std::vector<std::complex<double>> buf(nfft);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t off = t * hop;
    std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
    for (int i = 0; i < win; ++i) buf[i] = audio.samples[off + i] * window[i];
    fft(buf);
    for (int k = 0; k < bins; ++k) mag(static_cast<Eigen::Index>(t), k) = std::abs(buf[k]);
  }
  return mag;
}

Matrix log_mel_spectrogram(const AudioBuffer& audio, const SpectralConfig& cfg) {
  const Matrix mag = stft(audio, cfg);
  const Matrix fb = mel_filterbank(cfg.mel_bands, cfg.fft_size(audio.sample_rate), audio.sample_rate,
                                   cfg.fmin, cfg.resolved_fmax(audio.sample_rate));
  Matrix mel = mag * fb.transpose();
  return mel.unaryExpr([](double v) { return std::log(std::max(v, kLogFloor)); });
}

std::vector<double> dct2_orthonormal(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> out(n, 0.0);
  if (n == 0) return out;
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      acc += x[i] * std::cos(std::numbers::pi * k * (2.0 * i + 1.0) / (2.0 * n));
    out[k] = acc * (k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n));
  }
  return out;
}

Matrix mel_cepstra(const AudioBuffer& audio, const SpectralConfig& cfg) {
  const Matrix logmel = log_mel_spectrogram(audio, cfg);
  Matrix cep(logmel.rows(), cfg.cepstral_order);
  std::vector<double> row(logmel.cols());
  for (Eigen::Index t = 0; t < logmel.rows(); ++t) {
    for (Eigen::Index b = 0; b < logmel.cols(); ++b) row[b] = logmel(t, b);
    const std::vector<double> c = dct2_orthonormal(row);
    for (int d = 0; d < cfg.cepstral_order; ++d) cep(t, d) = c[d + 1];
  }
  return cep;
}

F0Track estimate_f0(const AudioBuffer& audio, const F0Config& cfg) {
  cfg.validate(audio.sample_rate);
  const int sr = audio.sample_rate;
  const int len = cfg.frame_samples(sr);
  const int hop = cfg.hop_samples(sr);
  const std::size_t frames = frame_count(audio.size(), len, hop);
  if (frames == 0)
    throw DataError("audio shorter than one F0 frame (" + std::to_string(audio.size()) + " < " +
                    std::to_string(len) + " samples)");

  const int lag_min = std::max(2, static_cast<int>(std::floor(sr / cfg.fmax)));
  const int lag_max = static_cast<int>(std::ceil(sr / cfg.fmin));
  const int span = len - lag_max;  // integration window of the difference function

  F0Track track;
  track.hop_ms = cfg.hop_ms;
  track.f0_hz.assign(frames, 0.0);
  track.voiced.assign(frames, false);

  std::vector<double> diff(lag_max + 1), cmnd(lag_max + 1);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* x = audio.samples.data() + t * hop;

    double power = 0.0;
    for (int i = 0; i < len; ++i) power += x[i] * x[i];
    const double rms = std::sqrt(power / len);
    const double rms_db = rms > 0 ? 20.0 * std::log10(rms) : -std::numeric_limits<double>::infinity();

    diff[0] = 0.0;
    for (int lag = 1; lag <= lag_max; ++lag) {
      double acc = 0.0;
      for (int j = 0; j < span; ++j) {
        const double d = x[j] - x[j + lag];
        acc += d * d;
      }
      diff[lag] = acc;
    }
    cmnd[0] = 1.0;
    double running = 0.0;
    for (int lag = 1; lag <= lag_max; ++lag) {
      running += diff[lag];
      cmnd[lag] = running > 0 ? diff[lag] * lag / running : 1.0;
    }

    int best = -1;
    for (int lag = lag_min; lag <= lag_max; ++lag) {
      if (cmnd[lag] < cfg.cmnd_threshold) {
        while (lag + 1 <= lag_max && cmnd[lag + 1] < cmnd[lag]) ++lag;
        best = lag;
        break;
      }
    }
    if (best < 0) {
      best = lag_min;
      for (int lag = lag_min + 1; lag <= lag_max; ++lag)
        if (cmnd[lag] < cmnd[best]) best = lag;
    }

    double shift = 0.0;
    if (best > 1 && best < lag_max) {
      const double a = cmnd[best - 1], b = cmnd[best], c = cmnd[best + 1];
      const double denom = a - 2.0 * b + c;
      if (denom > 0) {
        shift = 0.5 * (a - c) / denom;
        if (std::abs(shift) > 1.0) shift = 0.0;
      }
    }
    const double f0 = sr / (best + shift);
    const bool voiced = cmnd[best] < cfg.cmnd_threshold && rms_db > cfg.silence_floor_db &&
                        f0 >= cfg.fmin && f0 <= cfg.fmax;
    track.voiced[t] = voiced;
    track.f0_hz[t] = voiced ? f0 : 0.0;
  }
  return track;
}

std::vector<double> frame_energy(const AudioBuffer& audio, const SpectralConfig& cfg) {
  const Matrix mag = stft(audio, cfg);
  std::vector<double> e(mag.rows());
  for (Eigen::Index t = 0; t < mag.rows(); ++t) e[t] = mag.row(t).norm();
  return e;
}

}  // namespace vatts::dsp
