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

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.h"
#include "vatts/error.h"
#include "vatts/metrics.h"

using namespace vatts;
using namespace vatts::metrics;

namespace {

AudioBuffer chirp(int sr, double seconds) {
  AudioBuffer a;
  a.sample_rate = sr;
  const int n = static_cast<int>(seconds * sr);
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    a.samples.push_back(0.3 * std::sin(2 * std::numbers::pi * (150 + 200 * t) * t) +
                        0.1 * std::sin(2 * std::numbers::pi * 1234 * t));
  }
  return a;
}

/// Pitch pair for a both-voiced frame; gross or fine as requested.
double est_pitch(double ref, bool gross) { return gross ? ref * 1.5 : ref * 1.05; }

}  // namespace

TEST_CASE("dtw picks the cheap diagonal") {
  Matrix c = Matrix::Constant(4, 4, 5.0);
  for (int i = 0; i < 4; ++i) c(i, i) = 0.0;
  const DtwPath p = dtw_align(c);
  REQUIRE(p.steps.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(p.steps[i] == std::make_pair(i, i));
  CHECK(p.cost == 0.0);
}

TEST_CASE("dtw on a single row walks it") {
  Matrix c(1, 5);
  c << 1, 2, 3, 4, 5;
  const DtwPath p = dtw_align(c);
  CHECK(p.steps.size() == 5);
  CHECK(p.cost == 15.0);
  CHECK_THROWS_AS(dtw_align(Matrix(0, 3)), DataError);
}

TEST_CASE("dtw ties prefer the diagonal") {
  const Matrix c = Matrix::Zero(3, 3);
  const DtwPath p = dtw_align(c);
  CHECK(p.steps.size() == 3);
}

TEST_CASE("dtw cost equals the exhaustive minimum") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const int R = 1 + trial % 6, C = 1 + (trial / 6) % 7;
    Matrix c(R, C);
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = u(rng);
    const DtwPath p = dtw_align(c);
    CHECK(p.cost == doctest::Approx(oracle::dtw_brute_force(c)).epsilon(1e-12));
    double sum = 0;
    for (auto [i, j] : p.steps) sum += c(i, j);
    CHECK(sum == doctest::Approx(p.cost).epsilon(1e-12));
    CHECK(p.steps.front() == std::make_pair(std::size_t{0}, std::size_t{0}));
    CHECK(p.steps.back() == std::make_pair(std::size_t(R - 1), std::size_t(C - 1)));
  }
}

TEST_CASE("mcd closed-form single-coefficient offset") {
  Matrix a = Matrix::Zero(20, 13);
  Matrix b = a;
  b.col(4).array() += 1.0;
  CHECK(mcd_from_cepstra(a, b) == doctest::Approx(10.0 / std::numbers::ln10 * std::sqrt(2.0)).epsilon(1e-12));
  CHECK(std::abs(mcd_from_cepstra(a, b) - 6.1421) < 1e-3);
}

TEST_CASE("mcd absorbs duplicated frames") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  Matrix a(30, 13);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n(rng);
  Matrix stretched(60, 13);
  for (int r = 0; r < 30; ++r) stretched.row(2 * r) = stretched.row(2 * r + 1) = a.row(r);
  CHECK(mcd_from_cepstra(a, stretched) <= 0.1);
}

TEST_CASE("mcd13 on audio") {
  const AudioBuffer a = chirp(16000, 0.5);
  CHECK(mcd13(a, a) == 0.0);
  AudioBuffer g = a;
  for (double& s : g.samples) s *= 0.3;
  CHECK(mcd13(a, g) < 1e-6);
  AudioBuffer other = chirp(16000, 0.5);
  for (std::size_t i = 0; i < other.size(); ++i) other.samples[i] += 0.05 * std::sin(0.37 * i);
  CHECK(mcd13(a, other) == doctest::Approx(mcd13(other, a)).epsilon(1e-12));
  AudioBuffer wrong = a;
  wrong.sample_rate = 22050;
  CHECK_THROWS_AS(mcd13(a, wrong), DataError);
}

TEST_CASE("gpe vde ffe examples") {
  const auto ref = oracle::track_of({100, 100, 0, 100});
  const auto est = oracle::track_of({100, 125, 0, 100});
  CHECK(gpe(ref, est).percent() == doctest::Approx(100.0 / 3));
  CHECK(ffe(ref, est).percent() == doctest::Approx(25.0));
  CHECK(gpe(ref, ref).percent() == 0.0);
  CHECK(ffe(ref, ref).percent() == 0.0);

  const auto r2 = oracle::track_of({100, 100, 0, 0});
  const auto e2 = oracle::track_of({100, 0, 0, 100});
  CHECK(vde(r2, e2).percent() == doctest::Approx(50.0));
  CHECK(vde(r2, r2).percent() == 0.0);
  const auto e3 = oracle::track_of({0, 0, 100, 100});
  CHECK(vde(r2, e3).percent() == 100.0);

  std::vector<double> base = {120, 180, 240, 95};
  std::vector<double> near;
  for (double v : base) near.push_back(1.19 * v);
  CHECK(gpe(oracle::track_of(base), oracle::track_of(near)).percent() == 0.0);
}

TEST_CASE("gpe with no both-voiced frames reports an empty denominator") {
  const FrameRatio r = gpe(oracle::track_of({0, 0}), oracle::track_of({100, 0}));
  CHECK(r.empty());
  CHECK(r.percent() == 0.0);
}

TEST_CASE("frame metrics reject mismatched tracks") {
  const auto a = oracle::track_of({100, 0});
  const auto b = oracle::track_of({100});
  CHECK_THROWS_AS(gpe(a, b), DataError);
  CHECK_THROWS_AS(vde(a, b), DataError);
  auto c = a;
  c.hop_ms = 5;
  CHECK_THROWS_AS(ffe(a, c), DataError);
}

TEST_CASE("frame metrics match exhaustive classification up to 8 frames") {
  // Every (ref, est) voicing pair; both-voiced frames alternate fine/gross
  // through a third bitmask so every category mix appears.
  for (int n = 1; n <= 8; ++n) {
    for (unsigned rm = 0; rm < (1u << n); ++rm) {
      for (unsigned em = 0; em < (1u << n); ++em) {
        const unsigned gm = rm ^ (em >> 1) ^ (em << 2);
        std::vector<double> ref(n), est(n);
        for (int t = 0; t < n; ++t) {
          const double base = 100.0 + 10 * t;
          ref[t] = (rm >> t & 1u) ? base : 0.0;
          est[t] = (em >> t & 1u) ? est_pitch(base, gm >> t & 1u) : 0.0;
        }
        const auto c = oracle::classify_frames(ref, est, 0.2);
        const auto r = oracle::track_of(ref), e = oracle::track_of(est);
        const FrameRatio g = gpe(r, e), v = vde(r, e), f = ffe(r, e);
        REQUIRE(g.errors == static_cast<std::size_t>(c.gross));
        REQUIRE(g.frames == static_cast<std::size_t>(c.both_voiced));
        REQUIRE(v.errors == static_cast<std::size_t>(c.voicing_mismatch));
        REQUIRE(v.frames == static_cast<std::size_t>(c.total));
        REQUIRE(f.errors == static_cast<std::size_t>(c.gross + c.voicing_mismatch));
        REQUIRE(f.percent() >= v.percent());
        REQUIRE(f.errors >= g.errors);
      }
    }
  }
}

TEST_CASE("prosody MAE examples") {
  using features::ProsodyTarget;
  const std::vector<ProsodyTarget> ref = {{std::log(220.0), true, std::log(5.0), std::log(100.0)}};
  CHECK(prosody_mae(ref, ref).mae_pitch() == 0.0);

  const std::vector<ProsodyTarget> est = {{std::log(210.0), true, std::log(5.0), std::log(120.0)}};
  const ProsodyErrorSums s = prosody_mae(ref, est);
  CHECK(s.mae_pitch() == doctest::Approx(10.0));
  CHECK(s.mae_energy() == doctest::Approx(0.0));
  CHECK(s.mae_duration_ms() == doctest::Approx(20.0));
  CHECK(s.pitch_count == 1);

  const std::vector<ProsodyTarget> slow = {{std::log(210.0), true, std::log(5.0), std::log(180.0)}};
  const ProsodyErrorSums x = prosody_mae(ref, slow);
  CHECK(x.pitch_count == 0);
  CHECK(x.energy_count == 0);
  CHECK(x.mae_duration_ms() == doctest::Approx(80.0));

  const std::vector<ProsodyTarget> unvoiced = {{0.0, false, std::log(5.0), std::log(100.0)}};
  CHECK(prosody_mae(ref, unvoiced).pitch_count == 0);
  CHECK(prosody_mae(ref, unvoiced).energy_count == 1);

  Matrix pred(1, 3);
  pred << std::log(230.0), std::log(6.0), std::log(110.0);
  const ProsodyErrorSums p = prosody_mae(ref, pred);
  CHECK(p.mae_pitch() == doctest::Approx(10.0));
  CHECK(p.mae_energy() == doctest::Approx(1.0));
  CHECK(p.mae_duration_ms() == doctest::Approx(10.0));

  const std::vector<ProsodyTarget> two(2);
  CHECK_THROWS_AS(prosody_mae(ref, two), DataError);
}

TEST_CASE("report pooling sums counts") {
  MetricReport a, b;
  a.gpe = {1, 10};
  b.gpe = {3, 10};
  a.mcd_sum = 2, a.mcd_utterances = 1;
  b.mcd_sum = 4, b.mcd_utterances = 1;
  a += b;
  CHECK(a.gpe.percent() == doctest::Approx(20.0));
  CHECK(a.mcd13() == doctest::Approx(3.0));
}
