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

#include "vatts/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "vatts/error.h"

namespace vatts::metrics {

void F0CompareConfig::validate() const {
  if (!(rel_threshold > 0 && rel_threshold < 1)) throw DataError("rel_threshold must lie in (0, 1)");
}

DtwPath dtw_align(const Matrix& costs) {
  const Eigen::Index R = costs.rows(), C = costs.cols();
  if (R == 0 || C == 0) throw DataError("DTW cost matrix is empty");
  if (!costs.allFinite()) throw DataError("DTW costs must be finite");

  constexpr double inf = std::numeric_limits<double>::infinity();
  Matrix acc = Matrix::Constant(R, C, inf);
  for (Eigen::Index i = 0; i < R; ++i) {
    for (Eigen::Index j = 0; j < C; ++j) {
      double best = (i == 0 && j == 0) ? 0.0 : inf;
      if (i > 0 && j > 0) best = std::min(best, acc(i - 1, j - 1));
      if (i > 0) best = std::min(best, acc(i - 1, j));
      if (j > 0) best = std::min(best, acc(i, j - 1));
      acc(i, j) = best + costs(i, j);
    }
  }

  DtwPath path;
  path.cost = acc(R - 1, C - 1);
  Eigen::Index i = R - 1, j = C - 1;
  path.steps.emplace_back(i, j);
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const double diag = acc(i - 1, j - 1), up = acc(i - 1, j), left = acc(i, j - 1);
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    } else if (i > 0) {
      --i;
    } else {
      --j;
    }
    path.steps.emplace_back(i, j);
  }
  std::reverse(path.steps.begin(), path.steps.end());
  return path;
}

double mcd_from_cepstra(const Matrix& ref, const Matrix& est) {
  if (ref.cols() != est.cols()) throw DataError("cepstral orders differ");
  if (ref.rows() == 0 || est.rows() == 0) throw DataError("empty cepstral sequence");
  Matrix dist(ref.rows(), est.rows());
  for (Eigen::Index i = 0; i < ref.rows(); ++i)
    for (Eigen::Index j = 0; j < est.rows(); ++j) dist(i, j) = (ref.row(i) - est.row(j)).norm();
  const DtwPath path = dtw_align(dist);
  double sum = 0.0;
  for (const auto& [i, j] : path.steps) sum += std::sqrt(2.0) * dist(i, j);
  return (10.0 / std::numbers::ln10) * sum / static_cast<double>(path.steps.size());
}

double mcd13(const AudioBuffer& ref, const AudioBuffer& est, const dsp::SpectralConfig& cfg) {
  if (ref.sample_rate != est.sample_rate) throw DataError("MCD requires equal sample rates");
  return mcd_from_cepstra(dsp::mel_cepstra(ref, cfg), dsp::mel_cepstra(est, cfg));
}

namespace {

void check_tracks(const dsp::F0Track& ref, const dsp::F0Track& est) {
  if (ref.size() != est.size() || ref.voiced.size() != ref.size() || est.voiced.size() != est.size())
    throw DataError("F0 tracks differ in length (" + std::to_string(ref.size()) + " vs " +
                    std::to_string(est.size()) + ")");
  if (std::abs(ref.hop_ms - est.hop_ms) > 1e-9) throw DataError("F0 tracks differ in hop");
}

bool gross_error(double ref_f0, double est_f0, double rel) {
  return std::abs(est_f0 - ref_f0) > rel * ref_f0;
}

}  // namespace

FrameRatio gpe(const dsp::F0Track& ref, const dsp::F0Track& est, const F0CompareConfig& cfg) {
  check_tracks(ref, est);
  cfg.validate();
  FrameRatio r;
  for (std::size_t t = 0; t < ref.size(); ++t) {
    if (!(ref.voiced[t] && est.voiced[t])) continue;
    ++r.frames;
    if (gross_error(ref.f0_hz[t], est.f0_hz[t], cfg.rel_threshold)) ++r.errors;
  }
  return r;
}

FrameRatio vde(const dsp::F0Track& ref, const dsp::F0Track& est) {
  check_tracks(ref, est);
  FrameRatio r;
  r.frames = ref.size();
  for (std::size_t t = 0; t < ref.size(); ++t)
    if (ref.voiced[t] != est.voiced[t]) ++r.errors;
  return r;
}

FrameRatio ffe(const dsp::F0Track& ref, const dsp::F0Track& est, const F0CompareConfig& cfg) {
  check_tracks(ref, est);
  cfg.validate();
  FrameRatio r;
  r.frames = ref.size();
  for (std::size_t t = 0; t < ref.size(); ++t) {
    if (ref.voiced[t] != est.voiced[t])
      ++r.errors;
    else if (ref.voiced[t] && gross_error(ref.f0_hz[t], est.f0_hz[t], cfg.rel_threshold))
      ++r.errors;
  }
  return r;
}

ProsodyErrorSums& ProsodyErrorSums::operator+=(const ProsodyErrorSums& o) {
  pitch_abs += o.pitch_abs;
  pitch_count += o.pitch_count;
  energy_abs += o.energy_abs;
  energy_count += o.energy_count;
  duration_abs_ms += o.duration_abs_ms;
  duration_count += o.duration_count;
  return *this;
}

ProsodyErrorSums prosody_mae(std::span<const features::ProsodyTarget> ref,
                             std::span<const features::ProsodyTarget> est) {
  if (ref.size() != est.size())
    throw DataError("prosody MAE: " + std::to_string(ref.size()) + " reference vs " +
                    std::to_string(est.size()) + " estimated phonemes");
  ProsodyErrorSums s;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double dur_err = std::abs(std::exp(est[i].log_duration) - std::exp(ref[i].log_duration));
    s.duration_abs_ms += dur_err;
    ++s.duration_count;
    if (dur_err >= kDurationGateMs) continue;
    s.energy_abs += std::abs(std::exp(est[i].log_energy) - std::exp(ref[i].log_energy));
    ++s.energy_count;
    if (ref[i].pitch_mask && est[i].pitch_mask) {
      s.pitch_abs += std::abs(std::exp(est[i].log_pitch) - std::exp(ref[i].log_pitch));
      ++s.pitch_count;
    }
  }
  return s;
}

ProsodyErrorSums prosody_mae(std::span<const features::ProsodyTarget> ref, const Matrix& predictions) {
  if (predictions.cols() != 3) throw DataError("predictions must have 3 columns");
  std::vector<features::ProsodyTarget> est(static_cast<std::size_t>(predictions.rows()));
  for (std::size_t i = 0; i < est.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    est[i] = {predictions(r, 0), true, predictions(r, 1), predictions(r, 2)};
  }
  return prosody_mae(ref, est);
}

MetricReport& MetricReport::operator+=(const MetricReport& o) {
  gpe += o.gpe;
  vde += o.vde;
  ffe += o.ffe;
  mcd_sum += o.mcd_sum;
  mcd_utterances += o.mcd_utterances;
  prosody += o.prosody;
  has_audio_metrics = has_audio_metrics || o.has_audio_metrics;
  return *this;
}

}  // namespace vatts::metrics
