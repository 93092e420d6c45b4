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

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vatts/cli.h"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "vatts");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = vatts::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& p) const { return (path / p).string(); }
};

std::vector<std::string> csv_row(const std::string& path, const std::string& system) {
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(system + ",", 0) != 0) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  }
  return {};
}

}  // namespace

TEST_CASE("phi prints one frame of lag for 30 fps and 2.67 ms") {
  const Result r = invoke({"phi", "--fps", "30", "--latency-ms", "2.67"});
  CHECK(r.code == 0);
  CHECK(r.out.find("phi = 1\n") != std::string::npos);
  CHECK(r.out.find("margin_ms = 30.663333") != std::string::npos);
  CHECK(r.out.find("config phi") != std::string::npos);
  CHECK(invoke({"phi", "--fps", "30", "--latency-ms", "40"}).out.find("phi = 2\n") != std::string::npos);
}

TEST_CASE("usage errors exit 1") {
  CHECK(invoke({}).code == 1);
  CHECK(invoke({"phi", "--bogus"}).code == 1);
  CHECK(invoke({"frobnicate"}).code == 1);
  CHECK(invoke({"train", "--manifest", "x.jsonl"}).code == 1);
  CHECK(invoke({"phi", "--fps", "abc"}).code == 1);
  CHECK(invoke({"--help"}).code == 0);
}

TEST_CASE("missing manifest exits 2 and names the path") {
  TempDir d("vatts_cli_missing");
  const Result r = invoke({"train", "--manifest", d / "absent.jsonl", "--out", d / "m.ckpt"});
  CHECK(r.code == 2);
  CHECK(r.err.find("absent.jsonl") != std::string::npos);
}

TEST_CASE("bad config keys are data errors") {
  TempDir d("vatts_cli_config");
  REQUIRE(invoke({"synth", "--n", "2", "--seed", "1", "--out", d / "c"}).code == 0);
  std::ofstream(d / "cfg.json") << R"({"model": {"width": 3}})";
  const Result r = invoke({"train", "--manifest", d / "c/manifest.jsonl", "--config", d / "cfg.json", "--out", d / "m"});
  CHECK(r.code == 2);
  CHECK(r.err.find("width") != std::string::npos);
}

TEST_CASE("non-finite training loss exits 3") {
  TempDir d("vatts_cli_nan");
  REQUIRE(invoke({"synth", "--n", "2", "--seed", "1", "--out", d / "c"}).code == 0);
  std::ofstream(d / "cfg.json") << R"({"train": {"lr_max": 1e300}, "model": {"d_model": 8, "heads": 2, "blocks": 1, "lstm_hidden": 4, "lstm_layers": 1}})";
  const Result r = invoke({"train", "--manifest", d / "c/manifest.jsonl", "--config", d / "cfg.json", "--epochs", "3",
                           "--analysis", d / "c/analysis.json", "--out", d / "m"});
  CHECK(r.code == 3);
}

TEST_CASE("eval rejects predictions that do not match the reference") {
  TempDir d("vatts_cli_mismatch");
  REQUIRE(invoke({"synth", "--n", "2", "--seed", "1", "--out", d / "c"}).code == 0);
  fs::create_directories(d / "p");
  std::ofstream(d / "p/utt_0000.prosody.json") << R"({"id":"utt_0000","phonemes":[]})";
  const Result r = invoke({"eval", "--ref-manifest", d / "c/manifest.jsonl", "--pred", d / "p", "--out", d / "r"});
  CHECK(r.code == 2);
}

TEST_CASE("synth, train, infer, eval: the visual-aware model beats the blind one") {
  TempDir d("vatts_cli_pipeline");
  const std::string corpus = d / "d", manifest = d / "d/manifest.jsonl", analysis = d / "d/analysis.json";
  REQUIRE(invoke({"synth", "--n", "16", "--seed", "7", "--out", corpus}).code == 0);
  for (const std::string variant : {"va", "blind"}) {
    std::vector<std::string> args = {"train", "--manifest", manifest, "--analysis", analysis, "--seed", "1",
                                     "--out", d / (variant + ".ckpt")};
    if (variant == "blind") args.push_back("--visual-blind");
    const Result t = invoke(args);
    REQUIRE_MESSAGE(t.code == 0, t.err);
    REQUIRE(fs::exists(d / (variant + ".ckpt.loss.csv")));
    const Result i = invoke({"infer", "--ckpt", d / (variant + ".ckpt"), "--manifest", manifest, "--analysis",
                             analysis, "--out", d / ("pred_" + variant)});
    REQUIRE_MESSAGE(i.code == 0, i.err);
  }
  const Result e = invoke({"eval", "--ref-manifest", manifest, "--analysis", analysis, "--pred",
                           "va=" + (d / "pred_va"), "--pred", "blind=" + (d / "pred_blind"), "--out", d / "report"});
  REQUIRE_MESSAGE(e.code == 0, e.err);
  const auto va = csv_row(d / "report.csv", "va"), blind = csv_row(d / "report.csv", "blind");
  REQUIRE(va.size() == 8);
  REQUIRE(blind.size() == 8);
  for (int col : {5, 6, 7}) CHECK_MESSAGE(std::stod(va[col]) < std::stod(blind[col]), "column " << col);

  const auto report = nlohmann::json::parse(std::ifstream(d / "report.json"));
  CHECK(report.at("systems").size() == 2);
  CHECK(report.at("systems")[0].at("utterances").size() == 16);
  CHECK(!report.contains("generated_at"));

  const Result p = invoke({"report", "--in", d / "report.json", "--plots", d / "plots"});
  REQUIRE_MESSAGE(p.code == 0, p.err);
  std::ifstream curve(d / "plots/va_utt_0000.csv");
  std::string header;
  std::getline(curve, header);
  CHECK(header == "frame,time_s,ref_f0_hz,ref_energy,est_f0_hz,est_energy");
}
