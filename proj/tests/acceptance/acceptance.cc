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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Tolerances and time limits are pinned
// below and never loosened at run time.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "oracles.h"
#include "vatts/align.h"
#include "vatts/cli.h"
#include "vatts/corpus.h"
#include "vatts/dsp.h"
#include "vatts/metrics.h"
#include "vatts/model.h"
#include "vatts/train.h"

namespace fs = std::filesystem;
using namespace vatts;

namespace limits {
constexpr double kPhiSeconds = 1.0;
constexpr double kAlignSeconds = 5.0;
constexpr double kF0Seconds = 5.0;
constexpr double kMetricSeconds = 30.0;
constexpr double kGradSeconds = 60.0;
constexpr double kCausalSeconds = 10.0;
constexpr double kTrainSeconds = 600.0;  // per model

constexpr double kF0Relative = 0.03;
constexpr double kF0VoicedFraction = 0.95;
constexpr double kMcdOffset = 6.1421;
constexpr double kMcdTolerance = 1e-3;
constexpr double kGradStep = 1e-4;
constexpr double kGradRelative = 1e-5;
constexpr int kGradConfigs = 20;
constexpr double kDurationGain = 0.15;
constexpr double kPitchRelative = 0.03;
constexpr double kEnergyRelative = 0.10;
constexpr double kDurationAbsLog = 1e-9;
}  // namespace limits

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > limit_s) {
    o.pass = false;
    o.detail += " [over time limit]";
  }
  if (!o.pass) ++failures;
  std::printf("%s  %-22s %s  (%.2f s, limit %.0f s)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(),
              secs, limit_s);
  std::fflush(stdout);
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "vatts");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cerr << "vatts " << args[1] << " failed (" << code << "): " << err.str();
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string num(double v, int prec = 4) {
  std::ostringstream ss;
  ss.precision(prec);
  ss << v;
  return ss.str();
}

// ---------------------------------------------------------------- criteria

Outcome phi_contract() {
  if (align::compute_phi(1.0 / 30.0, 2.67e-3) != 1) return {false, "compute_phi(1/30 s, 2.67 ms) != 1"};
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> fps(1, 240), lat(0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double tau = 1.0 / fps(rng), T = lat(rng);
    const int phi = align::compute_phi(tau, T);
    if (phi < 1 || phi * tau < T * (1 - 1e-12) || (phi > 1 && (phi - 1) * tau >= T))
      return {false, "minimality violated at tau=" + num(tau) + " T=" + num(T)};
  }
  return {true, "phi=1 at 30 fps/2.67 ms; minimal on 1000 random pairs"};
}

Outcome alignment_oracle() {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const int fps = std::uniform_int_distribution<int>(10, 60)(rng);
    const int phi = std::uniform_int_distribution<int>(1, 4)(rng);
    const int n = std::uniform_int_distribution<int>(1, 20)(rng);
    align::PhonemeAlignment al;
    std::vector<long> starts;
    long t = std::uniform_int_distribution<long>(0, 300)(rng);
    for (int i = 0; i < n; ++i) {
      const long dur = std::uniform_int_distribution<long>(1, 400)(rng);
      starts.push_back(t);
      al.entries.push_back({0, t / 1000.0, (t + dur) / 1000.0});
      t += dur + (std::uniform_int_distribution<int>(0, 2)(rng) == 0 ? std::uniform_int_distribution<long>(1, 150)(rng) : 0);
    }
    const int frames = std::uniform_int_distribution<int>(0, static_cast<int>(t * fps / 1000 + 3))(rng);
    const auto got = align::align_offline(al, {1.0 / fps, phi, 0.0}, frames).cutoffs;
    for (int i = 0; i < n; ++i)
      if (got[i] != oracle::cutoff_by_scan(starts[i], fps, phi, frames))
        return {false, "mismatch in trial " + std::to_string(trial)};
  }
  return {true, "1000 random alignments agree with the frame scan"};
}

AudioBuffer harmonic_tone(double f0, double seconds, int sr) {
  AudioBuffer a;
  a.sample_rate = sr;
  const int n = static_cast<int>(std::lround(seconds * sr));
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    a.samples.push_back(0.4 * (std::sin(2 * std::numbers::pi * f0 * t) + 0.5 * std::sin(4 * std::numbers::pi * f0 * t) +
                               0.25 * std::sin(6 * std::numbers::pi * f0 * t)));
  }
  return a;
}

Outcome f0_accuracy() {
  std::string detail;
  bool ok = true;
  for (double f0 : {80.0, 150.0, 220.0, 380.0}) {
    const dsp::F0Track t = dsp::estimate_f0(harmonic_tone(f0, 1.0, 22050), dsp::F0Config{});
    std::size_t good = 0;
    for (std::size_t i = 0; i < t.size(); ++i)
      good += t.voiced[i] && std::abs(t.f0_hz[i] - f0) <= limits::kF0Relative * f0;
    const double frac = static_cast<double>(good) / t.size();
    ok &= frac >= limits::kF0VoicedFraction;
    detail += num(f0, 3) + " Hz " + num(100 * frac, 4) + "%; ";
  }
  AudioBuffer silence;
  silence.sample_rate = 22050;
  silence.samples.assign(22050, 0.0);
  const dsp::F0Track s = dsp::estimate_f0(silence, dsp::F0Config{});
  std::size_t voiced = 0;
  for (bool v : s.voiced) voiced += v;
  ok &= voiced == 0;
  detail += "silence voiced frames " + std::to_string(voiced);
  return {ok, detail};
}

Outcome metric_oracles() {
  // Frame classification: every (ref, est) voicing pair up to 12 frames; a
  // third mask derived from both decides fine vs gross pitch on both-voiced
  // frames. Up to 8 frames every per-frame category sequence is covered too.
  std::size_t cases = 0;
  auto check = [&](const std::vector<double>& ref, const std::vector<double>& est) {
    const auto c = oracle::classify_frames(ref, est, 0.2);
    const auto r = oracle::track_of(ref), e = oracle::track_of(est);
    const auto g = metrics::gpe(r, e), v = metrics::vde(r, e), f = metrics::ffe(r, e);
    ++cases;
    return g.errors == std::size_t(c.gross) && g.frames == std::size_t(c.both_voiced) &&
           v.errors == std::size_t(c.voicing_mismatch) && v.frames == std::size_t(c.total) &&
           f.errors == std::size_t(c.gross + c.voicing_mismatch) && f.frames == std::size_t(c.total);
  };
  for (int n = 1; n <= 12; ++n) {
    std::vector<double> ref(n), est(n);
    for (unsigned rm = 0; rm < (1u << n); ++rm) {
      for (unsigned em = 0; em < (1u << n); ++em) {
        const unsigned gm = (rm * 2654435761u) ^ em;
        for (int t = 0; t < n; ++t) {
          const double base = 90.0 + 7 * t;
          ref[t] = (rm >> t & 1u) ? base : 0.0;
          est[t] = (em >> t & 1u) ? ((gm >> t & 1u) ? base * 1.35 : base * 0.9) : 0.0;
        }
        if (!check(ref, est)) return {false, "frame metrics disagree with the oracle at n=" + std::to_string(n)};
      }
    }
  }
  for (int n = 1; n <= 8; ++n) {
    std::vector<int> cat(n, 0);
    std::vector<double> ref(n), est(n);
    while (true) {
      for (int t = 0; t < n; ++t) {
        const double base = 120.0 + 11 * t;
        switch (cat[t]) {
          case 0: ref[t] = 0, est[t] = 0; break;
          case 1: ref[t] = 0, est[t] = base; break;
          case 2: ref[t] = base, est[t] = 0; break;
          case 3: ref[t] = base, est[t] = base * 1.19; break;
          default: ref[t] = base, est[t] = base * 1.21; break;
        }
      }
      if (!check(ref, est)) return {false, "frame metrics disagree on category sequence n=" + std::to_string(n)};
      int k = 0;
      while (k < n && ++cat[k] == 5) cat[k++] = 0;
      if (k == n) break;
    }
  }

  const AudioBuffer a = harmonic_tone(170, 0.5, 22050);
  const double self = metrics::mcd13(a, a);
  if (self != 0.0) return {false, "MCD of identical audio = " + num(self)};
  Matrix c0 = Matrix::Zero(40, 13), c1 = c0;
  c1.col(6).array() += 1.0;
  const double mcd = metrics::mcd_from_cepstra(c0, c1);
  if (std::abs(mcd - limits::kMcdOffset) > limits::kMcdTolerance) return {false, "offset MCD = " + num(mcd, 8)};

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const int R = std::uniform_int_distribution<int>(1, 6)(rng), C = std::uniform_int_distribution<int>(1, 7)(rng);
    Matrix m(R, C);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    const double got = metrics::dtw_align(m).cost, want = oracle::dtw_brute_force(m);
    if (std::abs(got - want) > 1e-12 * std::max(1.0, want)) return {false, "DTW cost differs in trial " + std::to_string(trial)};
  }
  return {true, std::to_string(cases) + " frame patterns; MCD self 0, offset " + num(mcd, 6) + "; DTW 200/200"};
}

Outcome gradient_check() {
  double worst = 0.0;
  std::string worst_name;
  std::size_t scalars = 0;
  for (int k = 0; k < limits::kGradConfigs; ++k) {
    const oracle::GradCase gc = oracle::random_grad_case(1000 + k);
    const auto loss = [&](const model::ModelParameters& q) {
      return model::prosody_loss(model::forward(q, gc.input).predictions, gc.targets);
    };
    const auto lg = model::loss_and_gradient(gc.params, gc.input, gc.targets);
    const auto fd = oracle::finite_difference_gradient(gc.params, loss, limits::kGradStep);
    std::string name;
    const double err = oracle::max_relative_error(lg.gradient, fd, &name);
    scalars += gc.params.parameter_count();
    if (err > worst) worst = err, worst_name = name;
  }
  return {worst < limits::kGradRelative, std::to_string(limits::kGradConfigs) + " configs, " + std::to_string(scalars) +
                                             " parameters, max rel err " + num(worst, 3) +
                                             (worst_name.empty() ? "" : " (" + worst_name + ")")};
}

Outcome causality() {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal;
  int checks = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int frames = std::uniform_int_distribution<int>(4, 30)(rng);
    const int n = std::uniform_int_distribution<int>(2, 6)(rng);
    oracle::GradCase gc = oracle::random_grad_case(2000 + trial, frames, n);
    const Matrix base = model::forward(gc.params, gc.input).predictions;

    features::ListenerFeatureStream stream;
    stream.frames = gc.input.listener;
    const auto clock = align::StreamClock::from_fps(30, 2.67e-3);
    const auto sb = model::infer_streaming(gc.params, gc.input.phonemes, gc.input.speaker, gc.input.speech, stream, clock);

    for (int i = 0; i < n; ++i) {
      model::UtteranceInput in = gc.input;
      for (int t = in.cutoffs[i]; t < frames; ++t)
        for (Eigen::Index d = 0; d < in.listener.cols(); ++d) in.listener(t, d) = 50.0 * normal(rng);
      if (model::forward(gc.params, in).predictions.row(i) != base.row(i))
        return {false, "training forward changed in trial " + std::to_string(trial)};

      features::ListenerFeatureStream ps = stream;
      for (int t = sb.cutoffs[i]; t < frames; ++t)
        for (Eigen::Index d = 0; d < ps.frames.cols(); ++d) ps.frames(t, d) = 50.0 * normal(rng);
      const auto sp = model::infer_streaming(gc.params, gc.input.phonemes, gc.input.speaker, gc.input.speech, ps, clock);
      if (sp.predictions.row(i) != sb.predictions.row(i))
        return {false, "streaming inference changed in trial " + std::to_string(trial)};
      checks += 2;
    }
  }
  return {true, "100 trials, " + std::to_string(checks) + " bit-identical comparisons"};
}

struct Mae {
  double pitch = 0, energy = 0, duration = 0;
};

Mae read_mae(const fs::path& csv, const std::string& system) {
  std::ifstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(system + ",", 0) != 0) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return {std::stod(cells.at(5)), std::stod(cells.at(6)), std::stod(cells.at(7))};
  }
  throw std::runtime_error("system " + system + " missing from " + csv.string());
}

Outcome directional(const fs::path& work, double& slowest_train_s) {
  const std::string corpus = (work / "corpus").string();
  const std::string analysis = corpus + "/analysis.json";
  if (cli({"synth", "--n", "64", "--seed", "7", "--test-count", "16", "--out", corpus}) != 0) return {false, "synth failed"};
  slowest_train_s = 0;
  for (const std::string v : {"va", "blind"}) {
    std::vector<std::string> args = {"train", "--manifest", corpus + "/train.jsonl", "--analysis", analysis,
                                     "--seed", "1", "--out", (work / (v + ".ckpt")).string()};
    if (v == "blind") args.push_back("--visual-blind");
    const auto t0 = std::chrono::steady_clock::now();
    if (cli(args) != 0) return {false, "train " + v + " failed"};
    slowest_train_s = std::max(slowest_train_s,
                               std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    if (cli({"infer", "--ckpt", (work / (v + ".ckpt")).string(), "--manifest", corpus + "/test.jsonl", "--analysis",
             analysis, "--out", (work / ("pred_" + v)).string()}) != 0)
      return {false, "infer " + v + " failed"};
  }
  if (cli({"eval", "--ref-manifest", corpus + "/test.jsonl", "--analysis", analysis, "--pred",
           "va=" + (work / "pred_va").string(), "--pred", "blind=" + (work / "pred_blind").string(), "--out",
           (work / "report").string()}) != 0)
    return {false, "eval failed"};
  const Mae va = read_mae(work / "report.csv", "va"), bl = read_mae(work / "report.csv", "blind");
  const double gain = 1.0 - va.duration / bl.duration;
  const bool ok = va.pitch < bl.pitch && va.energy < bl.energy && va.duration < bl.duration &&
                  gain >= limits::kDurationGain && slowest_train_s < limits::kTrainSeconds;
  return {ok, "test MAE visual/blind: pitch " + num(va.pitch) + "/" + num(bl.pitch) + " Hz, energy " + num(va.energy) +
                  "/" + num(bl.energy) + ", duration " + num(va.duration) + "/" + num(bl.duration) + " ms (" +
                  num(100 * gain, 3) + "% lower); slowest training " + num(slowest_train_s, 3) + " s"};
}

Outcome extraction_oracle(const fs::path& work) {
  // Reads the corpus written by the directional run: WAV + TSV on disk.
  const fs::path corpus = work / "corpus";
  corpus::SyntheticSpec spec;
  spec.n_utterances = 64;
  spec.seed = 7;
  const corpus::AnalysisConfig cfg = corpus::load_analysis_config(corpus / "analysis.json");
  const align::Vocabulary vocab = corpus::read_vocabulary(corpus / "vocab.txt");
  const auto records = corpus::load_manifest(corpus / "manifest.jsonl");
  if (records.size() != 64) return {false, "expected 64 records"};
  double wp = 0, we = 0, wd = 0;
  std::size_t phonemes = 0, failures_here = 0;
  for (std::size_t u = 0; u < records.size(); ++u) {
    const corpus::SyntheticUtterance truth = corpus::generate_utterance(spec, static_cast<int>(u));
    const AudioBuffer audio = corpus::read_wav(records[u].wav);
    const auto al = align::read_alignment_tsv(records[u].align_tsv, vocab);
    const auto got = features::extract_prosody_targets(audio, al, cfg.f0, cfg.energy);
    for (std::size_t i = 0; i < got.size(); ++i) {
      const auto& g = truth.targets[i];
      const double ep = got[i].pitch_mask ? std::abs(std::exp(got[i].log_pitch - g.log_pitch) - 1) : 1.0;
      const double ee = std::abs(std::exp(got[i].log_energy - g.log_energy) - 1);
      const double ed = std::abs(got[i].log_duration - g.log_duration);
      wp = std::max(wp, ep), we = std::max(we, ee), wd = std::max(wd, ed);
      failures_here += ep > limits::kPitchRelative || ee > limits::kEnergyRelative || ed > limits::kDurationAbsLog;
      ++phonemes;
    }
  }
  return {failures_here == 0, std::to_string(phonemes) + " phonemes in 64 utterances; worst pitch " + num(100 * wp, 3) +
                                  "%, energy " + num(100 * we, 3) + "%, |d log duration| " + num(wd, 2) +
                                  "; outside tolerance: " + std::to_string(failures_here)};
}

Outcome determinism(const fs::path& work) {
  auto pipeline = [&](const fs::path& dir) {
    const std::string c = (dir / "corpus").string(), an = c + "/analysis.json";
    return cli({"synth", "--n", "8", "--seed", "3", "--out", c}) == 0 &&
           cli({"extract", "--manifest", c + "/manifest.jsonl", "--analysis", an, "--out", (dir / "extract").string()}) == 0 &&
           cli({"train", "--manifest", c + "/manifest.jsonl", "--analysis", an, "--seed", "5", "--epochs", "4", "--out",
                (dir / "model.ckpt").string()}) == 0 &&
           cli({"infer", "--ckpt", (dir / "model.ckpt").string(), "--manifest", c + "/manifest.jsonl", "--analysis", an,
                "--render", "--out", (dir / "pred").string()}) == 0 &&
           cli({"eval", "--ref-manifest", c + "/manifest.jsonl", "--analysis", an, "--pred",
                "m=" + (dir / "pred").string(), "--est-audio", "m=" + (dir / "pred").string(), "--out",
                (dir / "report").string()}) == 0;
  };
  // Both runs use the same directory so path strings inside reports match.
  const fs::path dir = work / "det";
  std::vector<std::pair<std::string, std::string>> first;
  for (int run = 0; run < 2; ++run) {
    fs::remove_all(dir);
    if (!pipeline(dir)) return {false, "pipeline failed on run " + std::to_string(run + 1)};
    std::vector<std::pair<std::string, std::string>> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file()) files.emplace_back(fs::relative(e.path(), dir).generic_string(), slurp(e.path()));
    std::sort(files.begin(), files.end());
    if (run == 0) {
      first = std::move(files);
    } else {
      if (files.size() != first.size()) return {false, "file sets differ"};
      for (std::size_t i = 0; i < files.size(); ++i)
        if (files[i] != first[i]) return {false, files[i].first + " differs between runs"};
      return {true, std::to_string(files.size()) + " files byte-identical (checkpoint, predictions, audio, report)"};
    }
  }
  return {false, "unreachable"};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "vatts_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  report("phi-contract", limits::kPhiSeconds, phi_contract);
  report("alignment-oracle", limits::kAlignSeconds, alignment_oracle);
  report("f0-accuracy", limits::kF0Seconds, f0_accuracy);
  report("metric-oracles", limits::kMetricSeconds, metric_oracles);
  report("gradient-check", limits::kGradSeconds, gradient_check);
  report("causality", limits::kCausalSeconds, causality);
  double slowest = 0;
  report("directional-claim", 2 * limits::kTrainSeconds + 300, [&] { return directional(work, slowest); });
  report("extraction-oracle", 120, [&] { return extraction_oracle(work); });
  report("determinism", 300, [&] { return determinism(work); });

  std::printf("%s: %d criteria failed\n", failures ? "FAILED" : "ALL PASSED", failures);
  fs::remove_all(work);
  return failures ? 1 : 0;
}
