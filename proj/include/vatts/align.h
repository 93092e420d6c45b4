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

// Causal phoneme-to-listener-frame timing.
//
// Listener frame j (1-based) covers [(j-1)*tau, j*tau). A phoneme starting at
// time s begins in frame floor(s/tau) + 1; its prosody may only consume
// frames 1..a where a = start_frame - phi. a == 0 means "no history".

#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace vatts::align {

struct PhonemeEntry {
  int phoneme = 0;
  double start_s = 0.0;
  double end_s = 0.0;

  double duration_s() const { return end_s - start_s; }
};

struct PhonemeAlignment {
  std::vector<PhonemeEntry> entries;

  std::size_t size() const { return entries.size(); }
  /// Throws DataError on empty, inverted, unsorted or overlapping entries.
  void validate() const;
};

struct StreamClock {
  double tau_s = 1.0 / 30.0;
  int phi = 1;
  double latency_s = 0.0;

  /// Clock for a stream at `fps` with phi derived from `latency_s`.
  static StreamClock from_fps(double fps, double latency_s);
};

/// Smallest phi >= 1 with phi * tau >= latency. Ties (phi * tau == latency up
/// to rounding) are accepted.
int compute_phi(double tau_s, double latency_s);

/// 1-based index of the frame containing `start_s`.
int start_frame(double start_s, double tau_s);

/// max(a_hat - phi, 0).
int causal_cutoff(int a_hat, int phi);

struct OfflineCutoffs {
  std::vector<int> cutoffs;
  std::vector<std::string> warnings;
};

OfflineCutoffs align_offline(const PhonemeAlignment& alignment, const StreamClock& clock,
                             int frame_count);

/// Cutoffs from prefix sums of predicted durations (seconds).
std::vector<int> align_streaming(std::span<const double> pred_durations_s, const StreamClock& clock);

/// Symbol table mapping phoneme strings to dense ids.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> symbols);

  int id(const std::string& symbol) const;  // throws DataError when unknown
  const std::string& symbol(int id) const;
  std::size_t size() const { return symbols_.size(); }
  const std::vector<std::string>& symbols() const { return symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::map<std::string, int> index_;
};

/// Reads `phoneme<TAB>start_s<TAB>end_s` lines.
PhonemeAlignment read_alignment_tsv(const std::filesystem::path& path, const Vocabulary& vocab);
void write_alignment_tsv(const std::filesystem::path& path, const PhonemeAlignment& alignment,
                         const Vocabulary& vocab);

}  // namespace vatts::align
