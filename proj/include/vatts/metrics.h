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

// Objective prosody metrics: MCD13 over a DTW path, GPE, VDE, FFE, and
// phoneme-level MAE of pitch/energy/duration.
//
// All frame metrics are reported as percentages together with the raw
// numerator/denominator so that corpus-level values can be pooled by summing
// counts rather than averaging percentages.

#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "vatts/audio.h"
#include "vatts/dsp.h"
#include "vatts/features.h"

namespace vatts::metrics {

struct F0CompareConfig {
  double rel_threshold = 0.20;
  void validate() const;
};

struct DtwPath {
  std::vector<std::pair<std::size_t, std::size_t>> steps;  // (row, col), from (0,0)
  double cost = 0.0;                                       // sum of visited costs
};

/// Minimal-cost monotone path from (0,0) to (R-1,C-1) with unit steps
/// (1,0), (0,1), (1,1). Ties prefer the diagonal, then (1,0).
DtwPath dtw_align(const Matrix& costs);

/// (10 / ln 10) * mean over the DTW path of sqrt(2 * sum_d (c_d - c'_d)^2).
double mcd_from_cepstra(const Matrix& ref, const Matrix& est);
double mcd13(const AudioBuffer& ref, const AudioBuffer& est,
             const dsp::SpectralConfig& cfg = dsp::SpectralConfig::cepstral());

struct FrameRatio {
  std::size_t errors = 0;
  std::size_t frames = 0;  // denominator; 0 means "no eligible frames"

  double percent() const { return frames ? 100.0 * static_cast<double>(errors) / frames : 0.0; }
  bool empty() const { return frames == 0; }
  FrameRatio& operator+=(const FrameRatio& o) {
    errors += o.errors;
    frames += o.frames;
    return *this;
  }
};

FrameRatio gpe(const dsp::F0Track& ref, const dsp::F0Track& est, const F0CompareConfig& cfg = {});
FrameRatio vde(const dsp::F0Track& ref, const dsp::F0Track& est);
FrameRatio ffe(const dsp::F0Track& ref, const dsp::F0Track& est, const F0CompareConfig& cfg = {});

/// Sums behind a phoneme-level MAE so utterances can be pooled.
struct ProsodyErrorSums {
  double pitch_abs = 0.0;
  std::size_t pitch_count = 0;
  double energy_abs = 0.0;
  std::size_t energy_count = 0;
  double duration_abs_ms = 0.0;
  std::size_t duration_count = 0;

  double mae_pitch() const { return pitch_count ? pitch_abs / pitch_count : 0.0; }
  double mae_energy() const { return energy_count ? energy_abs / energy_count : 0.0; }
  double mae_duration_ms() const { return duration_count ? duration_abs_ms / duration_count : 0.0; }
  ProsodyErrorSums& operator+=(const ProsodyErrorSums& o);
};

/// Phonemes whose duration error is >= this many ms do not contribute to the
/// pitch and energy MAE. Duration MAE always covers every phoneme.
inline constexpr double kDurationGateMs = 50.0;

/// Errors in linear units (Hz, energy, ms). Pitch needs both masks set.
ProsodyErrorSums prosody_mae(std::span<const features::ProsodyTarget> ref,
                             std::span<const features::ProsodyTarget> est);
/// Predictions carry no voicing mask; they are treated as voiced.
ProsodyErrorSums prosody_mae(std::span<const features::ProsodyTarget> ref, const Matrix& predictions);

struct MetricReport {
  FrameRatio gpe, vde, ffe;
  double mcd_sum = 0.0;  // sum of per-utterance MCD13
  std::size_t mcd_utterances = 0;
  ProsodyErrorSums prosody;
  bool has_audio_metrics = false;

  double mcd13() const { return mcd_utterances ? mcd_sum / mcd_utterances : 0.0; }
  MetricReport& operator+=(const MetricReport& o);
};

}  // namespace vatts::metrics
