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

#include "vatts/align.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "vatts/error.h"

namespace vatts::align {

namespace {

// Ratios within this relative distance of an integer are treated as that
// integer, so that e.g. 0.1 s / (1/30 s) lands exactly on frame boundary 3.
constexpr double kSnap = 1e-9;

double snap_to_integer(double q) {
  const double r = std::round(q);
  return std::abs(q - r) <= kSnap * std::max(1.0, std::abs(q)) ? r : q;
}

}  // namespace

void PhonemeAlignment::validate() const {
  if (entries.empty()) throw DataError("alignment has no phonemes");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (!std::isfinite(e.start_s) || !std::isfinite(e.end_s) || e.start_s < 0)
      throw DataError("phoneme " + std::to_string(i) + ": invalid time");
    if (!(e.end_s > e.start_s))
      throw DataError("phoneme " + std::to_string(i) + ": end must exceed start");
    if (i > 0 && e.start_s < entries[i - 1].end_s)
      throw DataError("phoneme " + std::to_string(i) + ": overlaps or precedes previous entry");
  }
}

StreamClock StreamClock::from_fps(double fps, double latency_s) {
  if (!(fps > 0)) throw DataError("fps must be positive");
  StreamClock c;
  c.tau_s = 1.0 / fps;
  c.latency_s = latency_s;
  c.phi = compute_phi(c.tau_s, latency_s);
  return c;
}

int compute_phi(double tau_s, double latency_s) {
  if (!(tau_s > 0)) throw DataError("tau must be positive");
  if (latency_s < 0) throw DataError("latency must be non-negative");
  const double q = snap_to_integer(latency_s / tau_s);
  return std::max(1, static_cast<int>(std::ceil(q)));
}

int start_frame(double start_s, double tau_s) {
  if (!(tau_s > 0)) throw DataError("tau must be positive");
  if (start_s < 0) throw DataError("start time must be non-negative");
  return static_cast<int>(std::floor(snap_to_integer(start_s / tau_s))) + 1;
}

int causal_cutoff(int a_hat, int phi) { return std::max(a_hat - phi, 0); }

OfflineCutoffs align_offline(const PhonemeAlignment& alignment, const StreamClock& clock,
                             int frame_count) {
  if (frame_count < 0) throw DataError("frame_count must be non-negative");
  OfflineCutoffs out;
  out.cutoffs.reserve(alignment.size());
  for (const auto& e : alignment.entries) {
    const int a = causal_cutoff(start_frame(e.start_s, clock.tau_s), clock.phi);
    out.cutoffs.push_back(std::min(a, frame_count));
  }
  if (!alignment.entries.empty()) {
    const double end = alignment.entries.back().end_s;
    const double covered = (frame_count + 1) * clock.tau_s;
    if (end > covered) {
      std::ostringstream msg;
      msg << "alignment ends at " << end << " s but listener stream covers only "
          << frame_count * clock.tau_s << " s";
      out.warnings.push_back(msg.str());
    }
  }
  return out;
}

std::vector<int> align_streaming(std::span<const double> pred_durations_s, const StreamClock& clock) {
  std::vector<int> cutoffs;
  cutoffs.reserve(pred_durations_s.size());
  double start = 0.0;
  for (std::size_t i = 0; i < pred_durations_s.size(); ++i) {
    const double d = pred_durations_s[i];
    if (!(d >= 0)) throw DataError("predicted duration " + std::to_string(i) + " is negative");
    cutoffs.push_back(causal_cutoff(start_frame(start, clock.tau_s), clock.phi));
    start += d;
  }
  return cutoffs;
}

Vocabulary::Vocabulary(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (!index_.emplace(symbols_[i], static_cast<int>(i)).second)
      throw DataError("duplicate phoneme symbol '" + symbols_[i] + "'");
  }
}

int Vocabulary::id(const std::string& symbol) const {
  auto it = index_.find(symbol);
  if (it == index_.end()) throw DataError("unknown phoneme symbol '" + symbol + "'");
  return it->second;
}

const std::string& Vocabulary::symbol(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size())
    throw DataError("phoneme id " + std::to_string(id) + " out of range");
  return symbols_[id];
}

PhonemeAlignment read_alignment_tsv(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open alignment file " + path.string());
  PhonemeAlignment out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string sym, start, end, extra;
    if (!std::getline(ss, sym, '\t') || !std::getline(ss, start, '\t') ||
        !std::getline(ss, end, '\t') || std::getline(ss, extra, '\t'))
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 3 tab-separated fields");
    PhonemeEntry e;
    try {
      std::size_t p1 = 0, p2 = 0;
      e.start_s = std::stod(start, &p1);
      e.end_s = std::stod(end, &p2);
      if (p1 != start.size() || p2 != end.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": non-numeric time");
    }
    e.phoneme = vocab.id(sym);
    out.entries.push_back(e);
  }
  out.validate();
  return out;
}

void write_alignment_tsv(const std::filesystem::path& path, const PhonemeAlignment& alignment,
                         const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write alignment file " + path.string());
  char buf[64];
  for (const auto& e : alignment.entries) {
    std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f\n", e.start_s, e.end_s);
    out << vocab.symbol(e.phoneme) << buf;
  }
}

}  // namespace vatts::align
