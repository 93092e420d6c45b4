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

#include "vatts/cli.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "vatts/align.h"
#include "vatts/corpus.h"
#include "vatts/dsp.h"
#include "vatts/error.h"
#include "vatts/features.h"
#include "vatts/metrics.h"
#include "vatts/model.h"
#include "vatts/optim.h"
#include "vatts/train.h"

namespace vatts::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------- helpers

int worker_count() {
  if (const char* env = std::getenv("VATTS_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1) throw DataError("VATTS_THREADS must be a positive integer");
    return static_cast<int>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) on a small pool. Results are written by index,
/// so output order never depends on scheduling. The lowest-index failure is
/// rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(worker_count()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_at = n;
  std::exception_ptr failure;
  auto body = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_at) failed_at = i, failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string fmt(double v) {
  if (!std::isfinite(v)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string utc_stamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void print_config(std::ostream& out, const std::string& command, const json& cfg) {
  out << "config " << command << " " << cfg.dump() << "\n";
}

json analysis_json(const corpus::AnalysisConfig& a) {
  return {{"f0_min_hz", a.f0.fmin}, {"f0_max_hz", a.f0.fmax}, {"latency_s", a.latency_s}};
}

corpus::AnalysisConfig resolve_analysis(const std::string& path) {
  return path.empty() ? corpus::AnalysisConfig{} : corpus::load_analysis_config(path);
}

fs::path default_vocab(const std::string& given, const fs::path& manifest) {
  return given.empty() ? manifest.parent_path() / "vocab.txt" : fs::path(given);
}

std::vector<corpus::ManifestRecord> load_nonempty_manifest(const fs::path& path) {
  auto records = corpus::load_manifest(path);
  if (records.empty()) throw DataError("manifest " + path.string() + " has no records");
  return records;
}

json targets_json(const std::vector<features::ProsodyTarget>& targets, const std::vector<int>& phonemes,
                  const std::vector<int>& cutoffs, const align::Vocabulary& vocab) {
  json arr = json::array();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    arr.push_back({{"phoneme", vocab.symbol(phonemes[i])},
                   {"log_pitch", targets[i].log_pitch},
                   {"pitch_mask", targets[i].pitch_mask},
                   {"log_energy", targets[i].log_energy},
                   {"log_duration", targets[i].log_duration},
                   {"a", cutoffs[i]}});
  }
  return arr;
}

std::string matrix_csv(const Matrix& m) {
  std::ostringstream ss;
  ss.precision(17);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) ss << (c ? "," : "") << m(r, c);
    ss << '\n';
  }
  return ss.str();
}

// ------------------------------------------------------------ train config

void apply_model_config(const json& j, model::ModelConfig& c) {
  const std::map<std::string, int*> fields = {
      {"d_model", &c.d_model},       {"heads", &c.heads},         {"blocks", &c.blocks},
      {"lstm_hidden", &c.lstm_hidden}, {"lstm_layers", &c.lstm_layers}, {"ffn_mult", &c.ffn_mult},
      {"speaker_count", &c.speaker_count}};
  for (const auto& [key, value] : j.items()) {
    const auto it = fields.find(key);
    if (it == fields.end()) throw DataError("config: unknown model key '" + key + "'");
    *it->second = value.get<int>();
  }
}

void apply_train_config(const json& j, model::TrainConfig& t) {
  for (const auto& [key, value] : j.items()) {
    if (key == "lr_max") t.lr_max = value.get<double>();
    else if (key == "lr_min") t.lr_min = value.get<double>();
    else if (key == "beta1") t.beta1 = value.get<double>();
    else if (key == "beta2") t.beta2 = value.get<double>();
    else if (key == "eps") t.eps = value.get<double>();
    else if (key == "epochs") t.epochs = value.get<int>();
    else throw DataError("config: unknown train key '" + key + "'");
  }
}

json model_config_json(const model::ModelConfig& c) {
  return {{"d_model", c.d_model},         {"heads", c.heads},           {"blocks", c.blocks},
          {"lstm_hidden", c.lstm_hidden}, {"lstm_layers", c.lstm_layers}, {"ffn_mult", c.ffn_mult},
          {"phoneme_vocab", c.phoneme_vocab}, {"speaker_count", c.speaker_count},
          {"listener_dim", c.listener_dim}, {"speech_dim", c.speech_dim}, {"out_dim", c.out_dim}};
}

json train_config_json(const model::TrainConfig& t) {
  return {{"lr_max", t.lr_max}, {"lr_min", t.lr_min}, {"beta1", t.beta1},   {"beta2", t.beta2},
          {"eps", t.eps},       {"epochs", t.epochs}, {"seed", t.seed},     {"phi", t.phi},
          {"visual_blind", t.visual_blind}};
}

// ---------------------------------------------------------------- commands

struct PhiArgs {
  double fps = 30.0;
  double latency_ms = 2.67;
};

int cmd_phi(const PhiArgs& a, std::ostream& out) {
  if (!(a.fps > 0)) throw DataError("--fps must be positive");
  const double tau = 1.0 / a.fps;
  const int phi = align::compute_phi(tau, a.latency_ms / 1000.0);
  print_config(out, "phi", {{"fps", a.fps}, {"latency_ms", a.latency_ms}});
  out << "phi = " << phi << "\n";
  out << "margin_ms = " << fmt(phi * tau * 1000.0 - a.latency_ms) << "\n";
  return kExitOk;
}

struct SynthArgs {
  int n = 16;
  std::uint64_t seed = 0;
  std::string out;
  int test_count = -1;
  bool no_rules = false;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  corpus::SyntheticSpec spec;
  spec.n_utterances = a.n;
  spec.seed = a.seed;
  spec.rules.enabled = !a.no_rules;
  const int test_count = a.test_count >= 0 ? a.test_count : a.n / 4;
  print_config(out, "synth",
               {{"n", a.n},
                {"seed", a.seed},
                {"out", a.out},
                {"test_count", test_count},
                {"feedback_rules", spec.rules.enabled},
                {"sample_rate", spec.sample_rate},
                {"fps", spec.fps},
                {"f0_range_hz", {spec.f0_min_hz, spec.f0_max_hz}}});
  const corpus::CorpusFiles files = corpus::write_corpus(spec, a.out, test_count);
  out << "wrote " << a.n << " utterances to " << a.out << "\n";
  out << "manifest " << files.manifest.string() << "\n";
  out << "analysis " << files.analysis.string() << "\n";
  return kExitOk;
}

struct ExtractArgs {
  std::string manifest, out, analysis, vocab;
};

int cmd_extract(const ExtractArgs& a, std::ostream& out) {
  const corpus::AnalysisConfig cfg = resolve_analysis(a.analysis);
  const fs::path vocab_path = default_vocab(a.vocab, a.manifest);
  print_config(out, "extract",
               {{"manifest", a.manifest}, {"out", a.out}, {"vocab", vocab_path.string()},
                {"analysis", analysis_json(cfg)}, {"threads", worker_count()}});
  const auto records = load_nonempty_manifest(a.manifest);
  const align::Vocabulary vocab = corpus::read_vocabulary(vocab_path);
  fs::create_directories(a.out);
  parallel_for(records.size(), [&](std::size_t i) {
    const model::TrainingExample ex = corpus::load_example(records[i], vocab, cfg);
    const json doc = {{"id", ex.id},
                      {"speaker", ex.input.speaker},
                      {"phonemes", targets_json(ex.targets, ex.input.phonemes, ex.input.cutoffs, vocab)}};
    write_text(fs::path(a.out) / (ex.id + ".targets.json"), doc.dump(1) + "\n");
    write_text(fs::path(a.out) / (ex.id + ".speech.csv"), matrix_csv(ex.input.speech));
  });
  out << "extracted " << records.size() << " utterances to " << a.out << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string manifest, config, out, analysis, vocab, loss_csv;
  std::uint64_t seed = 0;
  std::optional<int> epochs;
  bool visual_blind = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  model::ModelConfig mc;
  model::TrainConfig tc;
  if (!a.config.empty()) {
    const json j = read_json(a.config);
    for (const auto& [key, value] : j.items()) {
      if (key == "model") apply_model_config(value, mc);
      else if (key == "train") apply_train_config(value, tc);
      else throw DataError(a.config + ": unknown key '" + key + "'");
    }
  }
  if (a.epochs) tc.epochs = *a.epochs;
  tc.seed = a.seed;
  tc.visual_blind = a.visual_blind;
  const corpus::AnalysisConfig cfg = resolve_analysis(a.analysis);

  const auto records = load_nonempty_manifest(a.manifest);
  const fs::path vocab_path = default_vocab(a.vocab, a.manifest);
  const align::Vocabulary vocab = corpus::read_vocabulary(vocab_path);
  mc.phoneme_vocab = static_cast<int>(vocab.size());
  tc.phi = align::StreamClock::from_fps(records.front().fps, cfg.latency_s).phi;
  mc.validate();
  tc.validate();
  const fs::path loss_path = a.loss_csv.empty() ? fs::path(a.out + ".loss.csv") : fs::path(a.loss_csv);
  print_config(out, "train",
               {{"manifest", a.manifest}, {"out", a.out}, {"loss_csv", loss_path.string()},
                {"vocab", vocab_path.string()}, {"model", model_config_json(mc)},
                {"train", train_config_json(tc)}, {"analysis", analysis_json(cfg)}});

  std::vector<std::string> problems;
  for (const auto& r : records)
    for (auto& d : corpus::validate_record(r, vocab, mc.speaker_count)) problems.push_back(std::move(d));
  if (!problems.empty()) {
    std::string msg = "manifest has invalid records:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw DataError(msg);
  }

  std::vector<model::TrainingExample> data(records.size());
  parallel_for(records.size(), [&](std::size_t i) { data[i] = corpus::load_example(records[i], vocab, cfg); });

  const int report_every = std::max(1, tc.epochs / 12);
  const model::TrainResult result = model::train(data, mc, tc, [&](int epoch, double loss) {
    if ((epoch + 1) % report_every == 0 || epoch == 0 || epoch + 1 == tc.epochs)
      out << "epoch " << epoch + 1 << "/" << tc.epochs << " loss " << fmt(loss) << "\n" << std::flush;
  });

  model::save_checkpoint(a.out, {result.params, tc, vocab.symbols()});
  std::ostringstream csv;
  csv << "epoch,loss\n";
  csv.precision(17);
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) csv << e + 1 << "," << result.epoch_loss[e] << "\n";
  write_text(loss_path, csv.str());
  out << "wrote checkpoint " << a.out << " (" << result.params.parameter_count() << " parameters, "
      << result.steps << " steps)\n";
  return kExitOk;
}

/// Model inputs for inference: phonemes and s_i come from the reference
/// rendering when the manifest provides one.
struct InferenceInput {
  std::vector<int> phonemes;
  Matrix speech;
  features::ListenerFeatureStream stream;
  int sample_rate = 22050;
};

InferenceInput load_inference_input(const corpus::ManifestRecord& r, const align::Vocabulary& vocab,
                                    const corpus::AnalysisConfig& cfg) {
  InferenceInput in;
  const AudioBuffer ref = corpus::read_wav(r.ref_wav.value_or(r.wav));
  const align::PhonemeAlignment al = align::read_alignment_tsv(
      r.ref_wav ? r.ref_align_tsv.value_or(r.align_tsv) : r.align_tsv, vocab);
  for (const auto& e : al.entries) in.phonemes.push_back(e.phoneme);
  in.speech = features::extract_speech_reprs(ref, al, cfg.speech);
  in.stream = features::load_listener_features(r.listener_csv, r.fps);
  in.sample_rate = ref.sample_rate;
  return in;
}

struct InferArgs {
  std::string ckpt, manifest, out, analysis;
  bool render = false;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  const corpus::AnalysisConfig cfg = resolve_analysis(a.analysis);
  const model::Checkpoint ck = model::load_checkpoint(a.ckpt);
  const align::Vocabulary vocab(ck.vocabulary);
  print_config(out, "infer",
               {{"ckpt", a.ckpt}, {"manifest", a.manifest}, {"out", a.out}, {"render", a.render},
                {"visual_blind", ck.train.visual_blind}, {"analysis", analysis_json(cfg)},
                {"threads", worker_count()}});
  const auto records = load_nonempty_manifest(a.manifest);
  fs::create_directories(a.out);
  parallel_for(records.size(), [&](std::size_t i) {
    const auto& r = records[i];
    if (r.speaker < 0 || r.speaker >= ck.params.config.speaker_count)
      throw DataError(r.id + ": speaker " + std::to_string(r.speaker) + " unknown to the checkpoint");
    const InferenceInput in = load_inference_input(r, vocab, cfg);
    const align::StreamClock clock = align::StreamClock::from_fps(r.fps, cfg.latency_s);
    const model::StreamingResult res = model::infer_streaming(ck.params, in.phonemes, r.speaker, in.speech,
                                                              in.stream, clock, ck.train.visual_blind);
    json phonemes = json::array();
    for (std::size_t k = 0; k < in.phonemes.size(); ++k) {
      const auto row = static_cast<Eigen::Index>(k);
      phonemes.push_back({{"phoneme", vocab.symbol(in.phonemes[k])},
                          {"log_pitch", res.predictions(row, 0)},
                          {"log_energy", res.predictions(row, 1)},
                          {"log_duration", res.predictions(row, 2)},
                          {"a", res.cutoffs[k]}});
    }
    const json doc = {{"id", r.id}, {"speaker", r.speaker}, {"phonemes", std::move(phonemes)}};
    write_text(fs::path(a.out) / (r.id + ".prosody.json"), doc.dump(1) + "\n");
    if (a.render) {
      const auto tones = corpus::tones_from_prosody(in.phonemes, res.predictions, in.sample_rate, cfg.energy);
      corpus::write_wav(fs::path(a.out) / (r.id + ".wav"), corpus::render_tones(tones, in.sample_rate));
    }
  });
  out << "wrote predictions for " << records.size() << " utterances to " << a.out << "\n";
  return kExitOk;
}

/// One `NAME=DIR` or bare `DIR` argument.
std::pair<std::string, std::string> split_named(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq != std::string::npos && eq > 0) return {arg.substr(0, eq), arg.substr(eq + 1)};
  fs::path p(arg);
  while (!p.empty() && p.filename().empty()) p = p.parent_path();
  return {p.filename().string(), arg};
}

std::vector<features::ProsodyTarget> read_prosody_file(const fs::path& path, const std::string& id,
                                                       const align::Vocabulary& vocab,
                                                       const std::vector<int>& phonemes) {
  const json doc = read_json(path);
  try {
    const json& arr = doc.at("phonemes");
    if (arr.size() != phonemes.size())
      throw DataError(path.string() + ": " + std::to_string(arr.size()) + " phonemes, reference has " +
                      std::to_string(phonemes.size()));
    std::vector<features::ProsodyTarget> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (vocab.id(arr[i].at("phoneme").get<std::string>()) != phonemes[i])
        throw DataError(path.string() + ": phoneme " + std::to_string(i) + " differs from the reference");
      features::ProsodyTarget t;
      t.log_pitch = arr[i].at("log_pitch").get<double>();
      t.pitch_mask = arr[i].value("pitch_mask", true);
      t.log_energy = arr[i].at("log_energy").get<double>();
      t.log_duration = arr[i].at("log_duration").get<double>();
      out.push_back(t);
    }
    if (doc.value("id", id) != id) throw DataError(path.string() + ": id does not match " + id);
    return out;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

dsp::F0Track truncated(dsp::F0Track t, std::size_t n) {
  t.f0_hz.resize(n);
  t.voiced.resize(n);
  return t;
}

json ratio_json(const metrics::FrameRatio& r) {
  return {{"errors", r.errors}, {"frames", r.frames}, {"percent", r.percent()}};
}

json prosody_json(const metrics::ProsodyErrorSums& s) {
  return {{"mae_pitch_hz", s.mae_pitch()},
          {"mae_energy", s.mae_energy()},
          {"mae_duration_ms", s.mae_duration_ms()},
          {"pitch_count", s.pitch_count},
          {"energy_count", s.energy_count},
          {"duration_count", s.duration_count}};
}

json report_json(const metrics::MetricReport& r) {
  json j = {{"prosody", prosody_json(r.prosody)}, {"has_audio_metrics", r.has_audio_metrics}};
  if (r.has_audio_metrics) {
    j["gpe"] = ratio_json(r.gpe);
    j["vde"] = ratio_json(r.vde);
    j["ffe"] = ratio_json(r.ffe);
    j["mcd13"] = r.mcd13();
  }
  return j;
}

struct EvalArgs {
  std::string ref_manifest, out, analysis, vocab;
  std::vector<std::string> preds, est_audio;
  bool stamp = false;
};

struct SystemSpec {
  std::string name, pred_dir, audio_dir;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const corpus::AnalysisConfig cfg = resolve_analysis(a.analysis);
  const fs::path vocab_path = default_vocab(a.vocab, a.ref_manifest);
  std::vector<SystemSpec> systems;
  for (const auto& p : a.preds) {
    auto [name, dir] = split_named(p);
    for (const auto& s : systems)
      if (s.name == name) throw DataError("duplicate system name '" + name + "'");
    systems.push_back({name, dir, ""});
  }
  for (const auto& e : a.est_audio) {
    auto [name, dir] = split_named(e);
    auto it = std::find_if(systems.begin(), systems.end(), [&](const SystemSpec& s) { return s.name == name; });
    if (it == systems.end()) {
      if (systems.size() == 1 && e.find('=') == std::string::npos) it = systems.begin();
      else throw DataError("--est-audio '" + e + "' names no --pred system");
    }
    it->audio_dir = dir;
  }
  json sys_cfg = json::array();
  for (const auto& s : systems) sys_cfg.push_back({{"name", s.name}, {"pred_dir", s.pred_dir}, {"est_audio", s.audio_dir}});
  print_config(out, "eval",
               {{"ref_manifest", a.ref_manifest}, {"out", a.out}, {"vocab", vocab_path.string()},
                {"systems", sys_cfg}, {"analysis", analysis_json(cfg)}, {"threads", worker_count()}});

  const auto records = load_nonempty_manifest(a.ref_manifest);
  const align::Vocabulary vocab = corpus::read_vocabulary(vocab_path);

  struct RefData {
    std::vector<int> phonemes;
    std::vector<features::ProsodyTarget> targets;
    AudioBuffer audio;
    dsp::F0Track f0;
  };
  std::vector<RefData> refs(records.size());
  const bool need_audio = std::any_of(systems.begin(), systems.end(), [](const auto& s) { return !s.audio_dir.empty(); });
  parallel_for(records.size(), [&](std::size_t i) {
    RefData& d = refs[i];
    d.audio = corpus::read_wav(records[i].wav);
    const align::PhonemeAlignment al = align::read_alignment_tsv(records[i].align_tsv, vocab);
    for (const auto& e : al.entries) d.phonemes.push_back(e.phoneme);
    d.targets = features::extract_prosody_targets(d.audio, al, cfg.f0, cfg.energy);
    if (need_audio) d.f0 = dsp::estimate_f0(d.audio, cfg.f0);
  });

  json doc_systems = json::array();
  std::ostringstream csv;
  csv << "system,GPE,VDE,FFE,MCD13,MAE_pitch,MAE_energy,MAE_duration_ms\n";
  for (const auto& sys : systems) {
    std::vector<metrics::MetricReport> per(records.size());
    parallel_for(records.size(), [&](std::size_t i) {
      const auto& r = records[i];
      const auto est = read_prosody_file(fs::path(sys.pred_dir) / (r.id + ".prosody.json"), r.id, vocab,
                                         refs[i].phonemes);
      metrics::MetricReport rep;
      rep.prosody = metrics::prosody_mae(refs[i].targets, est);
      if (!sys.audio_dir.empty()) {
        const AudioBuffer audio = corpus::read_wav(fs::path(sys.audio_dir) / (r.id + ".wav"));
        const dsp::F0Track f0 = dsp::estimate_f0(audio, cfg.f0);
        const std::size_t n = std::min(f0.size(), refs[i].f0.size());
        const dsp::F0Track ref_t = truncated(refs[i].f0, n), est_t = truncated(f0, n);
        rep.gpe = metrics::gpe(ref_t, est_t);
        rep.vde = metrics::vde(ref_t, est_t);
        rep.ffe = metrics::ffe(ref_t, est_t);
        rep.mcd_sum = metrics::mcd13(refs[i].audio, audio, cfg.cepstral);
        rep.mcd_utterances = 1;
        rep.has_audio_metrics = true;
      }
      per[i] = rep;
    });
    metrics::MetricReport total;
    total.has_audio_metrics = !sys.audio_dir.empty();
    json utts = json::array();
    for (std::size_t i = 0; i < records.size(); ++i) {
      total += per[i];
      json u = report_json(per[i]);
      u["id"] = records[i].id;
      utts.push_back(std::move(u));
    }
    total.has_audio_metrics = !sys.audio_dir.empty();
    json s = report_json(total);
    s["name"] = sys.name;
    s["pred_dir"] = sys.pred_dir;
    s["est_audio"] = sys.audio_dir;
    s["utterances"] = std::move(utts);
    doc_systems.push_back(std::move(s));

    const bool audio = total.has_audio_metrics;
    const double na = std::nan("");
    csv << sys.name << "," << fmt(audio ? total.gpe.percent() : na) << "," << fmt(audio ? total.vde.percent() : na)
        << "," << fmt(audio ? total.ffe.percent() : na) << "," << fmt(audio ? total.mcd13() : na) << ","
        << fmt(total.prosody.mae_pitch()) << "," << fmt(total.prosody.mae_energy()) << ","
        << fmt(total.prosody.mae_duration_ms()) << "\n";
    out << sys.name << ": MAE pitch " << fmt(total.prosody.mae_pitch()) << " Hz, energy "
        << fmt(total.prosody.mae_energy()) << ", duration " << fmt(total.prosody.mae_duration_ms()) << " ms";
    if (audio)
      out << "; GPE " << fmt(total.gpe.percent()) << "%, VDE " << fmt(total.vde.percent()) << "%, FFE "
          << fmt(total.ffe.percent()) << "%, MCD13 " << fmt(total.mcd13());
    out << "\n";
  }

  json doc = {{"ref_manifest", a.ref_manifest},
              {"vocab", vocab_path.string()},
              {"analysis", analysis_json(cfg)},
              {"systems", std::move(doc_systems)}};
  if (a.stamp) doc["generated_at"] = utc_stamp();
  write_text(a.out + ".csv", csv.str());
  write_text(a.out + ".json", doc.dump(1) + "\n");
  out << "wrote " << a.out << ".csv and " << a.out << ".json\n";
  return kExitOk;
}

struct ReportArgs {
  std::string in, plots;
};

/// Frame-indexed step curve of per-phoneme predictions on the F0 hop grid.
std::pair<std::vector<double>, std::vector<double>> step_curves(const std::vector<features::ProsodyTarget>& p,
                                                                double hop_s) {
  std::vector<double> f0, energy;
  double start = 0.0;
  for (const auto& t : p) {
    const double end = start + std::exp(t.log_duration) / 1000.0;
    while (static_cast<double>(f0.size()) * hop_s < end) {
      f0.push_back(t.pitch_mask ? std::exp(t.log_pitch) : 0.0);
      energy.push_back(std::exp(t.log_energy));
    }
    start = end;
  }
  return {f0, energy};
}

int cmd_report(const ReportArgs& a, std::ostream& out) {
  print_config(out, "report", {{"in", a.in}, {"plots", a.plots}, {"threads", worker_count()}});
  const json doc = read_json(a.in);
  std::string ref_manifest, vocab_path;
  corpus::AnalysisConfig cfg;
  try {
    ref_manifest = doc.at("ref_manifest").get<std::string>();
    vocab_path = doc.at("vocab").get<std::string>();
    const json& an = doc.at("analysis");
    cfg.f0.fmin = an.at("f0_min_hz");
    cfg.f0.fmax = an.at("f0_max_hz");
    cfg.latency_s = an.at("latency_s");
    doc.at("systems");
  } catch (const json::exception& e) {
    throw DataError(a.in + ": not an eval report (" + e.what() + ")");
  }
  const auto records = load_nonempty_manifest(ref_manifest);
  const align::Vocabulary vocab = corpus::read_vocabulary(vocab_path);
  fs::create_directories(a.plots);
  const double hop_s = cfg.f0.hop_ms / 1000.0;

  std::size_t files = 0;
  for (const json& sys : doc.at("systems")) {
    const std::string name = sys.at("name");
    const std::string pred_dir = sys.at("pred_dir");
    const std::string audio_dir = sys.value("est_audio", "");
    parallel_for(records.size(), [&](std::size_t i) {
      const auto& r = records[i];
      const AudioBuffer ref = corpus::read_wav(r.wav);
      const align::PhonemeAlignment al = align::read_alignment_tsv(r.align_tsv, vocab);
      std::vector<int> phonemes;
      for (const auto& e : al.entries) phonemes.push_back(e.phoneme);
      const dsp::F0Track ref_f0 = dsp::estimate_f0(ref, cfg.f0);
      const std::vector<double> ref_energy = dsp::frame_energy(ref, cfg.energy);

      std::vector<double> est_f0, est_energy;
      if (!audio_dir.empty()) {
        const AudioBuffer est = corpus::read_wav(fs::path(audio_dir) / (r.id + ".wav"));
        est_f0 = dsp::estimate_f0(est, cfg.f0).f0_hz;
        est_energy = dsp::frame_energy(est, cfg.energy);
      } else {
        const auto pred = read_prosody_file(fs::path(pred_dir) / (r.id + ".prosody.json"), r.id, vocab, phonemes);
        std::tie(est_f0, est_energy) = step_curves(pred, hop_s);
      }
      const std::size_t rows = std::max({ref_f0.size(), ref_energy.size(), est_f0.size(), est_energy.size()});
      auto cell = [](const std::vector<double>& v, std::size_t t) { return t < v.size() ? fmt(v[t]) : std::string(); };
      std::ostringstream csv;
      csv << "frame,time_s,ref_f0_hz,ref_energy,est_f0_hz,est_energy\n";
      for (std::size_t t = 0; t < rows; ++t)
        csv << t << "," << fmt(t * hop_s) << "," << cell(ref_f0.f0_hz, t) << "," << cell(ref_energy, t) << ","
            << cell(est_f0, t) << "," << cell(est_energy, t) << "\n";
      write_text(fs::path(a.plots) / (name + "_" + r.id + ".csv"), csv.str());
    });
    files += records.size();
  }
  out << "wrote " << files << " curve files to " << a.plots << "\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Visual-aware prosody prediction toolkit", "vatts"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  PhiArgs phi;
  auto* s_phi = app.add_subcommand("phi", "Causal frame lag for a stream rate and synthesis latency");
  s_phi->add_option("--fps", phi.fps, "Listener stream frames per second")->capture_default_str();
  s_phi->add_option("--latency-ms", phi.latency_ms, "Per-phoneme synthesis latency")->capture_default_str();

  SynthArgs syn;
  auto* s_syn = app.add_subcommand("synth", "Write a synthetic corpus with listener-dependent prosody");
  s_syn->add_option("--n", syn.n, "Number of utterances")->capture_default_str()->check(CLI::NonNegativeNumber);
  s_syn->add_option("--seed", syn.seed, "Generator seed")->capture_default_str();
  s_syn->add_option("--out", syn.out, "Output directory")->required();
  s_syn->add_option("--test-count", syn.test_count, "Held-out utterances (default n/4)");
  s_syn->add_flag("--no-rules", syn.no_rules, "Disable listener feedback modifiers");

  ExtractArgs ext;
  auto* s_ext = app.add_subcommand("extract", "Per-utterance prosody targets and speech representations");
  s_ext->add_option("--manifest", ext.manifest, "Manifest (JSONL)")->required();
  s_ext->add_option("--out", ext.out, "Output directory")->required();
  s_ext->add_option("--analysis", ext.analysis, "Analysis config JSON");
  s_ext->add_option("--vocab", ext.vocab, "Vocabulary file (default: next to the manifest)");

  TrainArgs tr;
  auto* s_tr = app.add_subcommand("train", "Train a prosody predictor");
  s_tr->add_option("--manifest", tr.manifest, "Training manifest (JSONL)")->required();
  s_tr->add_option("--config", tr.config, "JSON with optional \"model\" and \"train\" objects");
  s_tr->add_option("--seed", tr.seed, "Initialization and shuffle seed")->capture_default_str();
  s_tr->add_option("--out", tr.out, "Checkpoint path")->required();
  s_tr->add_option("--epochs", tr.epochs, "Override the epoch count")->check(CLI::PositiveNumber);
  s_tr->add_flag("--visual-blind", tr.visual_blind, "Ignore the listener stream (baseline ablation)");
  s_tr->add_option("--analysis", tr.analysis, "Analysis config JSON");
  s_tr->add_option("--vocab", tr.vocab, "Vocabulary file (default: next to the manifest)");
  s_tr->add_option("--loss-csv", tr.loss_csv, "Loss curve path (default: <out>.loss.csv)");

  InferArgs inf;
  auto* s_inf = app.add_subcommand("infer", "Streaming prosody prediction");
  s_inf->add_option("--ckpt", inf.ckpt, "Checkpoint")->required();
  s_inf->add_option("--manifest", inf.manifest, "Manifest (JSONL)")->required();
  s_inf->add_option("--out", inf.out, "Output directory")->required();
  s_inf->add_option("--analysis", inf.analysis, "Analysis config JSON");
  s_inf->add_flag("--render", inf.render, "Also render predictions as harmonic-tone WAV files");

  EvalArgs ev;
  auto* s_ev = app.add_subcommand("eval", "Objective prosody metrics against a reference manifest");
  s_ev->add_option("--ref-manifest", ev.ref_manifest, "Reference manifest (JSONL)")->required();
  s_ev->add_option("--pred", ev.preds, "[NAME=]DIR of <id>.prosody.json files; repeatable")->required();
  s_ev->add_option("--est-audio", ev.est_audio, "[NAME=]DIR of <id>.wav files for audio metrics; repeatable");
  s_ev->add_option("--out", ev.out, "Report path prefix (writes .csv and .json)")->required();
  s_ev->add_option("--analysis", ev.analysis, "Analysis config JSON");
  s_ev->add_option("--vocab", ev.vocab, "Vocabulary file (default: next to the manifest)");
  s_ev->add_flag("--stamp", ev.stamp, "Record a UTC timestamp in the JSON report");

  ReportArgs rep;
  auto* s_rep = app.add_subcommand("report", "Frame-indexed F0/energy curves for plotting");
  s_rep->add_option("--in", rep.in, "Eval report JSON")->required();
  s_rep->add_option("--plots", rep.plots, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (s_phi->parsed()) return cmd_phi(phi, out);
    if (s_syn->parsed()) return cmd_synth(syn, out);
    if (s_ext->parsed()) return cmd_extract(ext, out);
    if (s_tr->parsed()) return cmd_train(tr, out);
    if (s_inf->parsed()) return cmd_infer(inf, out);
    if (s_ev->parsed()) return cmd_eval(ev, out);
    if (s_rep->parsed()) return cmd_report(rep, out);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace vatts::cli
