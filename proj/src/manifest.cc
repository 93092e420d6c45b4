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

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vatts/corpus.h"
#include "vatts/error.h"

namespace vatts::corpus {

using nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

std::string relative_to(const fs::path& p, const fs::path& base) {
  std::error_code ec;
  const fs::path abs = fs::absolute(p, ec);
  const fs::path rel = ec ? fs::path() : fs::relative(abs, fs::absolute(base, ec), ec);
  return ec || rel.empty() ? abs.generic_string() : rel.generic_string();
}

}  // namespace

std::vector<ManifestRecord> load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  std::vector<ManifestRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    try {
      const json j = json::parse(line);
      ManifestRecord r;
      r.id = j.at("id").get<std::string>();
      r.speaker = j.at("speaker").get<int>();
      r.wav = resolve(base, j.at("wav").get<std::string>());
      r.align_tsv = resolve(base, j.at("align_tsv").get<std::string>());
      r.listener_csv = resolve(base, j.at("listener_csv").get<std::string>());
      r.fps = j.at("fps").get<double>();
      if (j.contains("ref_wav")) r.ref_wav = resolve(base, j.at("ref_wav").get<std::string>());
      if (j.contains("ref_align_tsv"))
        r.ref_align_tsv = resolve(base, j.at("ref_align_tsv").get<std::string>());
      if (r.id.empty()) throw DataError(where + "empty id");
      if (!(r.fps > 0)) throw DataError(where + "fps must be positive");
      for (const auto& prev : out)
        if (prev.id == r.id) throw DataError(where + "duplicate id '" + r.id + "'");
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError(where + "malformed record (" + e.what() + ")");
    }
  }
  return out;
}

void write_manifest(const fs::path& path, const std::vector<ManifestRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest " + path.string());
  const fs::path base = path.parent_path();
  for (const auto& r : records) {
    json j = {{"id", r.id},
              {"speaker", r.speaker},
              {"wav", relative_to(r.wav, base)},
              {"align_tsv", relative_to(r.align_tsv, base)},
              {"listener_csv", relative_to(r.listener_csv, base)},
              {"fps", r.fps}};
    if (r.ref_wav) j["ref_wav"] = relative_to(*r.ref_wav, base);
    if (r.ref_align_tsv) j["ref_align_tsv"] = relative_to(*r.ref_align_tsv, base);
    out << j.dump() << '\n';
  }
}

std::vector<std::string> validate_record(const ManifestRecord& r, const align::Vocabulary& vocab,
                                         int speaker_count) {
  std::vector<std::string> diags;
  auto note = [&](const std::string& msg) { diags.push_back(r.id + ": " + msg); };
  if (!(r.fps > 0)) note("fps must be positive");
  if (r.speaker < 0 || r.speaker >= speaker_count)
    note("speaker " + std::to_string(r.speaker) + " outside [0, " + std::to_string(speaker_count) + ")");
  std::vector<fs::path> files = {r.wav, r.align_tsv, r.listener_csv};
  if (r.ref_wav) files.push_back(*r.ref_wav);
  if (r.ref_align_tsv) files.push_back(*r.ref_align_tsv);
  bool missing = false;
  for (const auto& f : files) {
    if (!fs::exists(f)) {
      note("missing file " + f.string());
      missing = true;
    }
  }
  if (missing) return diags;

  try {
    const AudioBuffer audio = read_wav(r.wav);
    const align::PhonemeAlignment al = align::read_alignment_tsv(r.align_tsv, vocab);
    const features::ListenerFeatureStream ls = features::load_listener_features(r.listener_csv, r.fps);
    const double tau = r.fps > 0 ? 1.0 / r.fps : 0.0;
    const double end = al.entries.back().end_s;
    if (std::abs(end - audio.duration_s()) > tau) {
      std::ostringstream msg;
      msg << "alignment ends at " << end << " s but audio lasts " << audio.duration_s()
          << " s (tolerance one frame)";
      note(msg.str());
    }
    if (end > (ls.frame_count() + 1) * tau) {
      std::ostringstream msg;
      msg << "listener stream covers " << ls.frame_count() * tau << " s, alignment ends at " << end
          << " s";
      note(msg.str());
    }
    if (r.ref_wav) {
      const AudioBuffer ref = read_wav(*r.ref_wav);
      if (ref.sample_rate != audio.sample_rate) note("reference sample rate differs from wav");
      const align::PhonemeAlignment ral =
          align::read_alignment_tsv(r.ref_align_tsv.value_or(r.align_tsv), vocab);
      if (ral.size() != al.size()) note("reference alignment has a different phoneme count");
    }
  } catch (const DataError& e) {
    note(e.what());
  }
  return diags;
}

align::Vocabulary read_vocabulary(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary " + path.string());
  std::vector<std::string> symbols;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) symbols.push_back(line);
  }
  if (symbols.empty()) throw DataError("vocabulary " + path.string() + " is empty");
  return align::Vocabulary(std::move(symbols));
}

void write_vocabulary(const fs::path& path, const align::Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary " + path.string());
  for (const auto& s : vocab.symbols()) out << s << '\n';
}

AnalysisConfig load_analysis_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open analysis config " + path.string());
  AnalysisConfig cfg;
  try {
    const json j = json::parse(in);
    if (!j.is_object()) throw DataError(path.string() + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (key == "f0_min_hz") cfg.f0.fmin = value.get<double>();
      else if (key == "f0_max_hz") cfg.f0.fmax = value.get<double>();
      else if (key == "latency_s") cfg.latency_s = value.get<double>();
      else throw DataError(path.string() + ": unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (!(cfg.f0.fmin > 0 && cfg.f0.fmin < cfg.f0.fmax))
    throw DataError(path.string() + ": need 0 < f0_min_hz < f0_max_hz");
  if (!(cfg.latency_s >= 0)) throw DataError(path.string() + ": latency_s must be non-negative");
  return cfg;
}

void save_analysis_config(const fs::path& path, const AnalysisConfig& cfg) {
  const json j = {{"f0_min_hz", cfg.f0.fmin}, {"f0_max_hz", cfg.f0.fmax}, {"latency_s", cfg.latency_s}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write analysis config " + path.string());
  out << j.dump(1) << '\n';
}

model::TrainingExample load_example(const ManifestRecord& r, const align::Vocabulary& vocab,
                                    const AnalysisConfig& cfg) {
  model::TrainingExample ex;
  ex.id = r.id;
  const AudioBuffer audio = read_wav(r.wav);
  const align::PhonemeAlignment al = align::read_alignment_tsv(r.align_tsv, vocab);
  ex.targets = features::extract_prosody_targets(audio, al, cfg.f0, cfg.energy);

  const AudioBuffer ref = r.ref_wav ? read_wav(*r.ref_wav) : audio;
  const align::PhonemeAlignment ref_al =
      r.ref_align_tsv ? align::read_alignment_tsv(*r.ref_align_tsv, vocab) : al;
  if (ref_al.size() != al.size())
    throw DataError(r.id + ": reference alignment has a different phoneme count");
  for (std::size_t i = 0; i < al.size(); ++i)
    if (ref_al.entries[i].phoneme != al.entries[i].phoneme)
      throw DataError(r.id + ": reference alignment phoneme " + std::to_string(i) + " differs");

  ex.input.speaker = r.speaker;
  for (const auto& e : al.entries) ex.input.phonemes.push_back(e.phoneme);
  ex.input.speech = features::extract_speech_reprs(ref, ref_al, cfg.speech);
  const features::ListenerFeatureStream ls = features::load_listener_features(r.listener_csv, r.fps);
  ex.input.listener = ls.frames;
  const align::StreamClock clock = align::StreamClock::from_fps(r.fps, cfg.latency_s);
  ex.input.cutoffs = align::align_offline(al, clock, ls.frame_count()).cutoffs;
  return ex;
}

}  // namespace vatts::corpus
