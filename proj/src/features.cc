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

#include "vatts/features.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "vatts/error.h"

namespace vatts::features {

namespace {

std::vector<double> centers(std::size_t frames, int window, int hop, int sample_rate) {
  std::vector<double> c(frames);
  for (std::size_t t = 0; t < frames; ++t) c[t] = dsp::frame_center_s(t, window, hop, sample_rate);
  return c;
}

// Frames whose centers fall in [start, end); falls back to the single frame
// nearest the span midpoint when none do.
std::vector<std::size_t> member_frames(const std::vector<double>& c, double start, double end,
                                       bool nearest_fallback) {
  std::vector<std::size_t> out;
  auto lo = std::lower_bound(c.begin(), c.end(), start);
  for (auto it = lo; it != c.end() && *it < end; ++it) out.push_back(it - c.begin());
  if (out.empty() && nearest_fallback && !c.empty()) {
    const double mid = 0.5 * (start + end);
    std::size_t best = 0;
    for (std::size_t t = 1; t < c.size(); ++t)
      if (std::abs(c[t] - mid) < std::abs(c[best] - mid)) best = t;
    out.push_back(best);
  }
  return out;
}

void check_within_audio(const AudioBuffer& audio, const align::PhonemeAlignment& alignment) {
  alignment.validate();
  const double dur = audio.duration_s();
  for (std::size_t i = 0; i < alignment.size(); ++i) {
    if (alignment.entries[i].start_s >= dur)
      throw DataError("phoneme " + std::to_string(i) + " starts at " +
                      std::to_string(alignment.entries[i].start_s) +
                      " s, outside audio of " + std::to_string(dur) + " s");
  }
}

}  // namespace

void ListenerFeatureStream::validate() const {
  if (!(fps > 0)) throw DataError("listener stream fps must be positive");
  if (frames.cols() != kListenerDims && frames.rows() > 0)
    throw DataError("listener stream: expected 70 columns, got " + std::to_string(frames.cols()));
  if (!frames.allFinite()) throw DataError("listener stream contains non-finite values");
}

ListenerFeatureStream load_listener_features(const std::filesystem::path& path, double fps) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open listener features " + path.string());
  std::vector<double> values;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    int col = 0;
    const char* p = line.data();
    const char* end = p + line.size();
    while (true) {
      const char* comma = std::find(p, end, ',');
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(p, comma, v);
      ++col;
      if (ec != std::errc() || ptr != comma || !std::isfinite(v))
        throw DataError(path.string() + ": row " + std::to_string(row) + ", column " +
                        std::to_string(col) + ": non-numeric cell");
      values.push_back(v);
      if (comma == end) break;
      p = comma + 1;
    }
    if (col != kListenerDims)
      throw DataError(path.string() + ": row " + std::to_string(row) + ": expected 70 columns, got " +
                      std::to_string(col));
  }
  if (row == 0) throw DataError(path.string() + ": empty listener feature file");
  ListenerFeatureStream s;
  s.fps = fps;
  s.frames = Eigen::Map<const Matrix>(values.data(), row, kListenerDims);
  s.validate();
  return s;
}

void save_listener_features(const std::filesystem::path& path, const ListenerFeatureStream& stream) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write listener features " + path.string());
  char buf[32];
  std::string line;
  for (Eigen::Index r = 0; r < stream.frames.rows(); ++r) {
    line.clear();
    for (Eigen::Index c = 0; c < stream.frames.cols(); ++c) {
      if (c) line.push_back(',');
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, stream.frames(r, c));
      line.append(buf, ptr);
    }
    line.push_back('\n');
    out << line;
  }
}

std::vector<ProsodyTarget> extract_prosody_targets(const AudioBuffer& audio,
                                                   const align::PhonemeAlignment& alignment,
                                                   const dsp::F0Config& f0cfg,
                                                   const dsp::SpectralConfig& speccfg) {
  check_within_audio(audio, alignment);
  const int sr = audio.sample_rate;
  const dsp::F0Track track = dsp::estimate_f0(audio, f0cfg);
  const std::vector<double> energy = dsp::frame_energy(audio, speccfg);
  const auto f0_centers = centers(track.size(), f0cfg.frame_samples(sr), f0cfg.hop_samples(sr), sr);
  const auto e_centers =
      centers(energy.size(), speccfg.window_samples(sr), speccfg.hop_samples(sr), sr);

  std::vector<ProsodyTarget> out;
  out.reserve(alignment.size());
  for (const auto& e : alignment.entries) {
    ProsodyTarget t;
    t.log_duration = std::log((e.end_s - e.start_s) * 1000.0);

    double f0_sum = 0.0;
    int voiced = 0;
    for (std::size_t f : member_frames(f0_centers, e.start_s, e.end_s, false)) {
      if (!track.voiced[f]) continue;
      f0_sum += track.f0_hz[f];
      ++voiced;
    }
    t.pitch_mask = voiced > 0;
    t.log_pitch = t.pitch_mask ? std::log(f0_sum / voiced) : 0.0;

    const auto frames = member_frames(e_centers, e.start_s, e.end_s, true);
    double e_sum = 0.0;
    for (std::size_t f : frames) e_sum += energy[f];
    t.log_energy = std::log(std::max(e_sum / frames.size(), kEnergyFloor));
    out.push_back(t);
  }
  return out;
}

Matrix extract_speech_reprs(const AudioBuffer& reference, const align::PhonemeAlignment& alignment,
                            const dsp::SpectralConfig& speccfg) {
  check_within_audio(reference, alignment);
  const int sr = reference.sample_rate;
  const Matrix logmel = dsp::log_mel_spectrogram(reference, speccfg);
  const auto c = centers(logmel.rows(), speccfg.window_samples(sr), speccfg.hop_samples(sr), sr);
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(alignment.size()), logmel.cols());
  for (std::size_t i = 0; i < alignment.size(); ++i) {
    const auto& e = alignment.entries[i];
    const auto frames = member_frames(c, e.start_s, e.end_s, true);
    for (std::size_t f : frames) out.row(i) += logmel.row(f);
    out.row(i) /= static_cast<double>(frames.size());
  }
  return out;
}

}  // namespace vatts::features
