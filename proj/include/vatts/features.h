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

#pragma once

#include <filesystem>
#include <vector>

#include "vatts/align.h"
#include "vatts/audio.h"
#include "vatts/dsp.h"

namespace vatts::features {

/// Expression coefficients (64) followed by head pose (6).
inline constexpr int kExpressionDims = 64;
inline constexpr int kPoseDims = 6;
inline constexpr int kListenerDims = kExpressionDims + kPoseDims;

inline constexpr double kEnergyFloor = 1e-8;

struct ListenerFeatureStream {
  double fps = 30.0;
  Matrix frames;  // frame_count x 70, row t is frame t+1

  int frame_count() const { return static_cast<int>(frames.rows()); }
  void validate() const;
};

/// Per-phoneme prosody in log scale: ln Hz, ln energy, ln milliseconds.
struct ProsodyTarget {
  double log_pitch = 0.0;  // 0 when !pitch_mask
  bool pitch_mask = false;
  double log_energy = 0.0;
  double log_duration = 0.0;
};

/// Listener CSV: no header, 70 comma-separated reals per row.
ListenerFeatureStream load_listener_features(const std::filesystem::path& path, double fps);
void save_listener_features(const std::filesystem::path& path, const ListenerFeatureStream& stream);

std::vector<ProsodyTarget> extract_prosody_targets(const AudioBuffer& audio,
                                                   const align::PhonemeAlignment& alignment,
                                                   const dsp::F0Config& f0cfg,
                                                   const dsp::SpectralConfig& speccfg);

/// Per-phoneme mean log-mel vectors, phonemes x mel_bands.
Matrix extract_speech_reprs(const AudioBuffer& reference, const align::PhonemeAlignment& alignment,
                            const dsp::SpectralConfig& speccfg);

}  // namespace vatts::features
