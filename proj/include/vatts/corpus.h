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

// Dataset I/O and the synthetic corpus generator.
//
// Synthetic utterances are sequences of 3-harmonic tones, one per phoneme,
// so every prosody value is known exactly. Listener streams carry smooth
// noise plus pattern windows; a phoneme is modified when its causal cutoff
// frame a_i falls inside a window of the matching class.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vatts/align.h"
#include "vatts/audio.h"
#include "vatts/dsp.h"
#include "vatts/features.h"
#include "vatts/train.h"

namespace vatts::corpus {

namespace fs = std::filesystem;

// ------------------------------------------------------------------ WAV I/O

/// PCM 16-bit mono only. Samples are scaled by 1/32768.
AudioBuffer read_wav(const fs::path& path);
/// Round-half-away-from-zero quantization with clamping to int16.
void write_wav(const fs::path& path, const AudioBuffer& audio);

// ----------------------------------------------------------------- manifest

struct ManifestRecord {
  std::string id;
  int speaker = 0;
  fs::path wav;
  fs::path align_tsv;
  fs::path listener_csv;
  double fps = 30.0;
  std::optional<fs::path> ref_wav;        // classical-TTS rendering for s_i
  std::optional<fs::path> ref_align_tsv;  // its alignment; defaults to align_tsv
};

/// One JSON object per line. Relative paths resolve against the manifest's
/// directory. Throws DataError naming the line on malformed input.
std::vector<ManifestRecord> load_manifest(const fs::path& path);
/// Paths are written relative to the manifest directory when possible.
void write_manifest(const fs::path& path, const std::vector<ManifestRecord>& records);

/// Human-readable problems with a record; empty when the record is usable.
std::vector<std::string> validate_record(const ManifestRecord& record, const align::Vocabulary& vocab,
                                         int speaker_count);

/// Vocabulary file: one phoneme symbol per line.
align::Vocabulary read_vocabulary(const fs::path& path);
void write_vocabulary(const fs::path& path, const align::Vocabulary& vocab);

/// Analysis settings shared by extraction, training and evaluation.
struct AnalysisConfig {
  dsp::F0Config f0;
  dsp::SpectralConfig energy = dsp::SpectralConfig::speech();
  dsp::SpectralConfig speech = dsp::SpectralConfig::speech();
  dsp::SpectralConfig cepstral = dsp::SpectralConfig::cepstral();
  double latency_s = 2.67e-3;
};

/// JSON object with optional keys f0_min_hz, f0_max_hz, latency_s; missing
/// keys keep the defaults.
AnalysisConfig load_analysis_config(const fs::path& path);
void save_analysis_config(const fs::path& path, const AnalysisConfig& cfg);

/// Reads every file of a record and produces the model-ready example:
/// targets from (wav, align_tsv), s_i from the reference, offline cutoffs.
model::TrainingExample load_example(const ManifestRecord& record, const align::Vocabulary& vocab,
                                    const AnalysisConfig& cfg);

// ---------------------------------------------------------------- synthesis

enum class PatternClass { kNegative, kPositive };

/// Prosody multipliers applied while a pattern is visible at frame a_i.
struct FeedbackRules {
  bool enabled = true;
  double negative_duration = 1.3;
  double negative_pitch = 0.9;
  double positive_energy = 1.2;
};

struct SyntheticSpec {
  int n_utterances = 16;
  int phonemes_min = 8;
  int phonemes_max = 14;
  double f0_min_hz = 180.0;
  double f0_max_hz = 240.0;
  int sample_rate = 22050;
  double fps = 30.0;
  std::uint64_t seed = 0;
  FeedbackRules rules;
  int vocab_size = 24;
  int speaker_count = 10;
  double latency_s = 2.67e-3;
  double window_probability = 0.9;  // chance each pattern class appears in an utterance

  void validate() const;
  /// Pitch search range for analysing this corpus: [0.85 * lowest F0, 1.5 *
  /// highest F0]. Keeping fmin above half the highest F0 rules out octave-down
  /// picks on frames that straddle two tones.
  dsp::F0Config analysis_f0() const;
};

struct PatternWindow {
  PatternClass cls = PatternClass::kNegative;
  int first_frame = 1;  // 1-based, inclusive
  int last_frame = 1;

  bool contains(int frame) const { return frame >= first_frame && frame <= last_frame; }
};

/// Exact generation parameters of one phoneme.
struct ToneParams {
  int phoneme = 0;
  double duration_ms = 0.0;
  double f0_hz = 0.0;
  double amplitude = 0.0;
};

struct SyntheticUtterance {
  std::string id;
  int speaker = 0;
  AudioBuffer audio;      // listener-conditioned rendering (ground truth)
  AudioBuffer reference;  // neutral rendering without feedback modifiers
  align::PhonemeAlignment alignment;
  align::PhonemeAlignment reference_alignment;
  features::ListenerFeatureStream listener;
  std::vector<ToneParams> tones;
  std::vector<ToneParams> base_tones;
  std::vector<features::ProsodyTarget> targets;  // exact, log scale
  std::vector<int> cutoffs;                      // a_i used to decide modifiers
  std::vector<PatternWindow> windows;
  std::vector<bool> negative, positive;  // modifier applied per phoneme
};

align::Vocabulary synthetic_vocabulary(const SyntheticSpec& spec);

/// Deterministic in (spec, index).
SyntheticUtterance generate_utterance(const SyntheticSpec& spec, int index);

/// Steady-state frame energy (L2 norm of an STFT row) of the 3-harmonic tone
/// at the given amplitude.
double steady_state_energy(double amplitude, int sample_rate, const dsp::SpectralConfig& cfg);

/// Renders gapless tones with 5 ms linear fades.
AudioBuffer render_tones(const std::vector<ToneParams>& tones, int sample_rate);

/// Tone parameters from log-scale prosody (inverse of the target mapping).
std::vector<ToneParams> tones_from_prosody(const std::vector<int>& phonemes, const Matrix& predictions,
                                           int sample_rate, const dsp::SpectralConfig& cfg);

struct CorpusFiles {
  fs::path manifest, train_manifest, test_manifest, vocabulary, analysis;
};

/// Writes wav/tsv/csv files per utterance plus manifest.jsonl, train.jsonl,
/// test.jsonl (seeded split, `test_count` utterances held out), vocab.txt and
/// analysis.json.
CorpusFiles write_corpus(const SyntheticSpec& spec, const fs::path& out_dir, int test_count);

/// Seeded split of [0, n) into (train, test) index lists.
std::pair<std::vector<int>, std::vector<int>> split_indices(int n, int test_count, std::uint64_t seed);

}  // namespace vatts::corpus
