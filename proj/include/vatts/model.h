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

// Visual-aware prosody predictor.
//
// For phoneme i the model builds five d_model tokens
//
//   [fusion, speaker_emb[spk], tanh(Ws s_i + bs), phoneme_emb[q_i], tanh(Wl h_i + bl)]
//
// where h_i is the top-layer LSTM state at the causal cutoff frame a_i (zero
// when a_i == 0). The tokens pass through pre-LN residual blocks
//
//   y = x + MHSA(LN(x));  x' = y + FFN(LN(y))
//
// and the final fusion token is mapped to (ln Hz, ln energy, ln ms).
//
// Everything here is double precision. Gradients are exact reverse-mode
// derivatives of prosody_loss; see loss_and_gradient().

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vatts/audio.h"
#include "vatts/features.h"

namespace vatts::model {

struct ModelConfig {
  int d_model = 64;
  int heads = 4;
  int blocks = 2;
  int lstm_hidden = 64;
  int lstm_layers = 2;
  int ffn_mult = 4;
  int phoneme_vocab = 1;
  int speaker_count = 10;
  int listener_dim = features::kListenerDims;
  int speech_dim = 80;
  int out_dim = 3;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

inline constexpr int kTokens = 5;
inline constexpr double kLayerNormEps = 1e-5;

struct LstmLayerParams {
  Matrix w_ih;  // 4H x in, gate order (input, forget, cell, output)
  Matrix w_hh;  // 4H x H
  Matrix bias;  // 4H x 1
};

struct BlockParams {
  Matrix ln1_gain, ln1_bias;  // d x 1
  Matrix wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix ln2_gain, ln2_bias;
  Matrix ffn_w1, ffn_b1;  // F x d, F x 1
  Matrix ffn_w2, ffn_b2;  // d x F, d x 1
};

struct ModelParameters {
  ModelConfig config;
  Matrix speaker_embedding;  // speaker_count x d
  Matrix phoneme_embedding;  // phoneme_vocab x d
  std::vector<LstmLayerParams> lstm;
  Matrix speech_proj_w, speech_proj_b;      // d x speech_dim, d x 1
  Matrix listener_proj_w, listener_proj_b;  // d x lstm_hidden, d x 1
  Matrix fusion_token;                      // d x 1
  std::vector<BlockParams> blocks;
  Matrix head_w, head_b;  // out x d, out x 1

  /// Correctly shaped, all-zero tensors.
  static ModelParameters zeros(const ModelConfig& config);
  /// Uniform(+-1/sqrt(fan_in)) weights, unit layer-norm gains, zero layer-norm biases.
  static ModelParameters initialize(const ModelConfig& config, std::uint64_t seed);

  /// Every tensor with its dotted name, in a fixed order.
  std::vector<std::pair<std::string, Matrix*>> tensors();
  std::vector<std::pair<std::string, const Matrix*>> tensors() const;

  std::size_t parameter_count() const;
  bool all_finite() const;
};

/// Per-utterance model input. `cutoffs` are the causal frame indices a_i.
struct UtteranceInput {
  int speaker = 0;
  std::vector<int> phonemes;
  Matrix speech;    // n x speech_dim
  Matrix listener;  // m x listener_dim
  std::vector<int> cutoffs;

  std::size_t size() const { return phonemes.size(); }
};

/// Row i = (log_pitch, log_energy, log_duration) for phoneme i.
using Predictions = Matrix;

/// Top-layer hidden states h_1..h_m as rows (m x lstm_hidden).
Matrix lstm_encode(const ModelParameters& params, const Matrix& frames);

/// Incremental LSTM for streaming use; advancing never reads ahead.
class LstmStream {
 public:
  explicit LstmStream(const ModelParameters& params);
  /// Consume one frame (length listener_dim); returns the new top state.
  const Eigen::VectorXd& push(const Eigen::Ref<const Eigen::VectorXd>& frame);
  int frames_consumed() const { return consumed_; }
  const Eigen::VectorXd& top_state() const;

 private:
  const ModelParameters* params_;
  std::vector<Eigen::VectorXd> h_, c_;
  int consumed_ = 0;
};

/// H = h_{a_1}..h_{a_n}; a_i == 0 gives the zero state.
Matrix gather_listener_states(const Matrix& hidden, std::span<const int> cutoffs, int hidden_dim);

struct FuseOutput {
  Eigen::VectorXd fusion_state;  // g^(k), d_model
  Eigen::VectorXd prediction;    // out_dim
};

/// Single-phoneme fusion forward.
FuseOutput fuse_forward(const ModelParameters& params, int speaker, const Eigen::VectorXd& speech,
                        int phoneme, const Eigen::VectorXd& listener_state);

struct ForwardOptions {
  bool visual_blind = false;  // force h_i = 0 and never read the listener stream
  bool keep_attention = false;
};

struct ForwardResult {
  Predictions predictions;
  Matrix listener_states;  // n x lstm_hidden, the gathered H
  /// attention[block][phoneme * heads + head] is a 5x5 row-stochastic matrix
  /// (filled only with keep_attention).
  std::vector<std::vector<Matrix>> attention;
};

ForwardResult forward(const ModelParameters& params, const UtteranceInput& input,
                      const ForwardOptions& opts = {});

/// Masked mean squared error over (pitch if voiced, energy, duration).
double prosody_loss(const Predictions& predictions, std::span<const features::ProsodyTarget> targets);

struct LossAndGradient {
  double loss = 0.0;
  Predictions predictions;
  ModelParameters gradient;
};

LossAndGradient loss_and_gradient(const ModelParameters& params, const UtteranceInput& input,
                                  std::span<const features::ProsodyTarget> targets,
                                  const ForwardOptions& opts = {});

}  // namespace vatts::model
