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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "vatts/corpus.h"
#include "vatts/error.h"

namespace vatts::corpus {

namespace {

constexpr double kFadeS = 0.005;
constexpr double kHarmonics[] = {1.0, 0.5, 0.25};
constexpr double kAmplitudeGrid[] = {0.3, 0.4, 0.5, 0.6};
constexpr int kJitterMs[] = {-10, 0, 10};

// Small self-contained generator so corpora are identical across standard
// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(next() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  double normal() {
    const double u1 = std::max(uniform(), 1e-300);
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  Rng r(seed ^ (0xd1b54a32d192ed03ULL * (index + 1)));
  return r.next();
}

struct SymbolTable {
  std::vector<int> duration_ms;
  std::vector<double> f0_hz;
  std::vector<double> amplitude;
};

SymbolTable symbol_table(const SyntheticSpec& spec) {
  Rng rng(derive_seed(spec.seed, 0xfeedULL));
  SymbolTable t;
  for (int k = 0; k < spec.vocab_size; ++k) {
    t.duration_ms.push_back(10 * rng.integer(9, 29));
    t.f0_hz.push_back(rng.uniform(spec.f0_min_hz, spec.f0_max_hz));
    t.amplitude.push_back(kAmplitudeGrid[rng.integer(0, 3)]);
  }
  return t;
}

features::ProsodyTarget target_of(const ToneParams& tone, int sample_rate) {
  features::ProsodyTarget t;
  t.pitch_mask = true;
  t.log_pitch = std::log(tone.f0_hz);
  t.log_energy = std::log(steady_state_energy(tone.amplitude, sample_rate, dsp::SpectralConfig::speech()));
  t.log_duration = std::log(tone.duration_ms);
  return t;
}

align::PhonemeAlignment alignment_of(const std::vector<ToneParams>& tones) {
  align::PhonemeAlignment al;
  double start_ms = 0.0;
  for (const auto& t : tones) {
    const double end_ms = start_ms + t.duration_ms;
    al.entries.push_back({t.phoneme, start_ms / 1000.0, end_ms / 1000.0});
    start_ms = end_ms;
  }
  return al;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_utterances < 0) throw DataError("synthetic spec: n_utterances must be >= 0");
  if (phonemes_min < 1 || phonemes_max < phonemes_min)
    throw DataError("synthetic spec: phoneme count range is empty");
  if (!(f0_min_hz > 0 && f0_max_hz >= f0_min_hz))
    throw DataError("synthetic spec: base F0 range is empty");
  if (sample_rate < 8000) throw DataError("synthetic spec: sample rate must be >= 8000");
  if (!(fps > 0)) throw DataError("synthetic spec: fps must be positive");
  if (vocab_size < 1 || speaker_count < 1) throw DataError("synthetic spec: vocabulary and speakers must be non-empty");
  if (!(rules.negative_duration > 0 && rules.negative_pitch > 0 && rules.positive_energy > 0))
    throw DataError("synthetic spec: feedback multipliers must be positive");
  if (latency_s < 0) throw DataError("synthetic spec: latency must be non-negative");
  if (3 * f0_max_hz * std::max(1.0, rules.negative_pitch) >= sample_rate / 2.0)
    throw DataError("synthetic spec: harmonics exceed Nyquist");
}

dsp::F0Config SyntheticSpec::analysis_f0() const {
  dsp::F0Config cfg;
  cfg.fmin = 0.85 * f0_min_hz * std::min(1.0, rules.enabled ? rules.negative_pitch : 1.0);
  cfg.fmax = 1.5 * f0_max_hz * std::max(1.0, rules.enabled ? rules.negative_pitch : 1.0);
  return cfg;
}

align::Vocabulary synthetic_vocabulary(const SyntheticSpec& spec) {
  std::vector<std::string> symbols;
  char buf[16];
  for (int k = 0; k < spec.vocab_size; ++k) {
    std::snprintf(buf, sizeof buf, "ph%02d", k);
    symbols.emplace_back(buf);
  }
  return align::Vocabulary(std::move(symbols));
}

double steady_state_energy(double amplitude, int sample_rate, const dsp::SpectralConfig& cfg) {
  // One-sided Parseval: sum_k |X_k|^2 over bins 0..N/2 ~ (N/2) sum_n w_n^2 x_n^2,
  // and a harmonic sum has mean square A^2 * sum(a_h^2) / 2.
  const int len = cfg.window_samples(sample_rate);
  const int nfft = cfg.fft_size(sample_rate);
  double w2 = 0.0;
  for (int i = 0; i < len; ++i) {
    const double w = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / (len - 1)));
    w2 += w * w;
  }
  double h2 = 0.0;
  for (double a : kHarmonics) h2 += a * a;
  return amplitude * std::sqrt(0.5 * nfft * w2 * 0.5 * h2);
}

AudioBuffer render_tones(const std::vector<ToneParams>& tones, int sample_rate) {
  AudioBuffer audio;
  audio.sample_rate = sample_rate;
  double total_ms = 0.0;
  for (const auto& t : tones) total_ms += t.duration_ms;
  const auto total = static_cast<std::size_t>(std::ceil(total_ms * sample_rate / 1000.0 - 1e-9));
  audio.samples.assign(total, 0.0);

  double start_ms = 0.0;
  for (const auto& t : tones) {
    const double start_s = start_ms / 1000.0;
    const double dur_s = t.duration_ms / 1000.0;
    const auto n0 = static_cast<std::size_t>(std::ceil(start_ms * sample_rate / 1000.0 - 1e-9));
    const auto n1 = std::min(
        total, static_cast<std::size_t>(std::ceil((start_ms + t.duration_ms) * sample_rate / 1000.0 - 1e-9)));
    for (std::size_t n = n0; n < n1; ++n) {
      const double tau = static_cast<double>(n) / sample_rate - start_s;
      const double fade = std::clamp(std::min(tau, dur_s - tau) / kFadeS, 0.0, 1.0);
      double v = 0.0;
      for (int h = 0; h < 3; ++h)
        v += kHarmonics[h] * std::sin(2.0 * std::numbers::pi * (h + 1) * t.f0_hz * tau);
      audio.samples[n] = t.amplitude * fade * v;
    }
    start_ms += t.duration_ms;
  }
  return audio;
}

std::vector<ToneParams> tones_from_prosody(const std::vector<int>& phonemes, const Matrix& predictions,
                                           int sample_rate, const dsp::SpectralConfig& cfg) {
  if (static_cast<std::size_t>(predictions.rows()) != phonemes.size() || predictions.cols() != 3)
    throw DataError("prosody rows must match phonemes");
  const double unit = steady_state_energy(1.0, sample_rate, cfg);
  std::vector<ToneParams> tones;
  for (std::size_t i = 0; i < phonemes.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    tones.push_back({phonemes[i], std::exp(predictions(r, 2)), std::exp(predictions(r, 0)),
                     std::min(0.95 / 1.75, std::exp(predictions(r, 1)) / unit)});
  }
  return tones;
}

SyntheticUtterance generate_utterance(const SyntheticSpec& spec, int index) {
  spec.validate();
  const SymbolTable table = symbol_table(spec);
  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(index) + 1));

  SyntheticUtterance u;
  char idbuf[32];
  std::snprintf(idbuf, sizeof idbuf, "utt_%04d", index);
  u.id = idbuf;
  u.speaker = rng.integer(0, spec.speaker_count - 1);

  const int n = rng.integer(spec.phonemes_min, spec.phonemes_max);
  double base_total_ms = 0.0;
  for (int i = 0; i < n; ++i) {
    const int sym = rng.integer(0, spec.vocab_size - 1);
    const double dur = table.duration_ms[sym] + kJitterMs[rng.integer(0, 2)];
    u.base_tones.push_back({sym, dur, table.f0_hz[sym], table.amplitude[sym]});
    base_total_ms += dur;
  }

  const int base_frames = static_cast<int>(std::ceil(base_total_ms * spec.fps / 1000.0));
  for (PatternClass cls : {PatternClass::kNegative, PatternClass::kPositive}) {
    const bool present = rng.uniform() < spec.window_probability;
    const int len = rng.integer(10, 24);
    const int first = rng.integer(1, std::max(1, base_frames - len));
    if (present) u.windows.push_back({cls, first, first + len - 1});
  }

  const align::StreamClock clock = align::StreamClock::from_fps(spec.fps, spec.latency_s);
  double start_ms = 0.0;
  for (const auto& base : u.base_tones) {
    const int a = align::causal_cutoff(align::start_frame(start_ms / 1000.0, clock.tau_s), clock.phi);
    bool neg = false, pos = false;
    for (const auto& w : u.windows) {
      if (!w.contains(a)) continue;
      (w.cls == PatternClass::kNegative ? neg : pos) = true;
    }
    if (!spec.rules.enabled) neg = pos = false;
    ToneParams t = base;
    if (neg) {
      t.duration_ms *= spec.rules.negative_duration;
      t.f0_hz *= spec.rules.negative_pitch;
    }
    if (pos) t.amplitude *= spec.rules.positive_energy;
    u.tones.push_back(t);
    u.cutoffs.push_back(a);
    u.negative.push_back(neg);
    u.positive.push_back(pos);
    start_ms += t.duration_ms;
  }

  u.audio = render_tones(u.tones, spec.sample_rate);
  u.reference = render_tones(u.base_tones, spec.sample_rate);
  u.alignment = alignment_of(u.tones);
  u.reference_alignment = alignment_of(u.base_tones);
  for (const auto& t : u.tones) u.targets.push_back(target_of(t, spec.sample_rate));

  const int frames = static_cast<int>(std::ceil(start_ms * spec.fps / 1000.0 - 1e-9));
  u.listener.fps = spec.fps;
  u.listener.frames = Matrix::Zero(frames, features::kListenerDims);
  Rng noise(derive_seed(spec.seed ^ 0x5eedULL, static_cast<std::uint64_t>(index) + 1));
  for (int d = 0; d < features::kListenerDims; ++d) {
    double level = 0.05 * noise.normal();
    for (int f = 0; f < frames; ++f) {
      level = 0.9 * level + 0.03 * noise.normal();
      u.listener.frames(f, d) = level;
    }
  }
  for (const auto& w : u.windows) {
    for (int j = w.first_frame; j <= std::min(w.last_frame, frames); ++j) {
      const double t = (j - 1) / spec.fps;
      auto row = u.listener.frames.row(j - 1);
      if (w.cls == PatternClass::kNegative) {
        // head pitch/yaw/roll step
        row[features::kExpressionDims + 0] += 0.8;
        row[features::kExpressionDims + 1] -= 0.5;
        row[features::kExpressionDims + 2] += 0.3;
      } else {
        for (int d = 0; d < 10; ++d)
          row[d] += 0.6 + 0.3 * std::sin(2.0 * std::numbers::pi * 2.0 * t + 0.4 * d);
      }
    }
  }
  return u;
}

std::pair<std::vector<int>, std::vector<int>> split_indices(int n, int test_count, std::uint64_t seed) {
  if (test_count < 0 || test_count > n) throw DataError("test split larger than corpus");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x5717ULL));
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.integer(0, i)]);
  std::vector<int> test(order.begin(), order.begin() + test_count);
  std::vector<int> train(order.begin() + test_count, order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {train, test};
}

CorpusFiles write_corpus(const SyntheticSpec& spec, const fs::path& out_dir, int test_count) {
  spec.validate();
  fs::create_directories(out_dir);
  const align::Vocabulary vocab = synthetic_vocabulary(spec);
  CorpusFiles files;
  files.vocabulary = out_dir / "vocab.txt";
  write_vocabulary(files.vocabulary, vocab);

  std::vector<ManifestRecord> records;
  for (int i = 0; i < spec.n_utterances; ++i) {
    const SyntheticUtterance u = generate_utterance(spec, i);
    ManifestRecord r;
    r.id = u.id;
    r.speaker = u.speaker;
    r.fps = spec.fps;
    r.wav = out_dir / (u.id + ".wav");
    r.align_tsv = out_dir / (u.id + ".tsv");
    r.listener_csv = out_dir / (u.id + ".listener.csv");
    r.ref_wav = out_dir / (u.id + ".ref.wav");
    r.ref_align_tsv = out_dir / (u.id + ".ref.tsv");
    write_wav(r.wav, u.audio);
    write_wav(*r.ref_wav, u.reference);
    align::write_alignment_tsv(r.align_tsv, u.alignment, vocab);
    align::write_alignment_tsv(*r.ref_align_tsv, u.reference_alignment, vocab);
    features::save_listener_features(r.listener_csv, u.listener);

    nlohmann::json truth = {{"id", u.id}, {"speaker", u.speaker}};
    nlohmann::json phonemes = nlohmann::json::array();
    for (std::size_t k = 0; k < u.tones.size(); ++k) {
      phonemes.push_back({{"phoneme", vocab.symbol(u.tones[k].phoneme)},
                          {"duration_ms", u.tones[k].duration_ms},
                          {"f0_hz", u.tones[k].f0_hz},
                          {"amplitude", u.tones[k].amplitude},
                          {"log_pitch", u.targets[k].log_pitch},
                          {"log_energy", u.targets[k].log_energy},
                          {"log_duration", u.targets[k].log_duration},
                          {"a", u.cutoffs[k]},
                          {"negative", static_cast<bool>(u.negative[k])},
                          {"positive", static_cast<bool>(u.positive[k])}});
    }
    truth["phonemes"] = std::move(phonemes);
    nlohmann::json windows = nlohmann::json::array();
    for (const auto& w : u.windows)
      windows.push_back({{"class", w.cls == PatternClass::kNegative ? "negative" : "positive"},
                         {"first_frame", w.first_frame},
                         {"last_frame", w.last_frame}});
    truth["windows"] = std::move(windows);
    std::ofstream(out_dir / (u.id + ".truth.json"), std::ios::binary) << truth.dump(1) << '\n';
    records.push_back(std::move(r));
  }

  AnalysisConfig analysis;
  analysis.f0 = spec.analysis_f0();
  analysis.latency_s = spec.latency_s;
  files.analysis = out_dir / "analysis.json";
  save_analysis_config(files.analysis, analysis);

  files.manifest = out_dir / "manifest.jsonl";
  write_manifest(files.manifest, records);
  const auto [train, test] = split_indices(spec.n_utterances, test_count, spec.seed);
  std::vector<ManifestRecord> tr, te;
  for (int i : train) tr.push_back(records[i]);
  for (int i : test) te.push_back(records[i]);
  files.train_manifest = out_dir / "train.jsonl";
  files.test_manifest = out_dir / "test.jsonl";
  write_manifest(files.train_manifest, tr);
  write_manifest(files.test_manifest, te);
  return files;
}

}  // namespace vatts::corpus
