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

#include "vatts/model.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "vatts/error.h"

namespace vatts::model {

namespace {

using Eigen::Index;
using Mat5 = Eigen::Matrix<double, kTokens, kTokens, Eigen::RowMajor>;

Eigen::Map<const Eigen::RowVectorXd> as_row(const Matrix& m) {
  return Eigen::Map<const Eigen::RowVectorXd>(m.data(), m.size());
}
Eigen::Map<Eigen::RowVectorXd> as_row(Matrix& m) {
  return Eigen::Map<Eigen::RowVectorXd>(m.data(), m.size());
}
Eigen::Map<const Eigen::VectorXd> as_col(const Matrix& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double gelu(double u) { return 0.5 * u * (1.0 + std::erf(u / std::numbers::sqrt2)); }

double gelu_grad(double u) {
  return 0.5 * (1.0 + std::erf(u / std::numbers::sqrt2)) +
         u * std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi);
}

// ---------------------------------------------------------------- layer norm

struct LnCache {
  Matrix xhat;
  Eigen::VectorXd inv_std;
};

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, LnCache& cache) {
  const Index d = x.cols();
  const Eigen::VectorXd mean = x.rowwise().mean();
  cache.xhat = x.colwise() - mean;
  const Eigen::VectorXd var = cache.xhat.array().square().rowwise().sum() / static_cast<double>(d);
  cache.inv_std = (var.array() + kLayerNormEps).rsqrt();
  cache.xhat = cache.inv_std.asDiagonal() * cache.xhat;
  Matrix y = cache.xhat * as_col(gain).asDiagonal();
  y.rowwise() += as_row(bias);
  return y;
}

// Returns dL/dx and accumulates parameter gradients.
Matrix layer_norm_backward(const Matrix& dy, const LnCache& cache, const Matrix& gain,
                           Matrix& dgain, Matrix& dbias) {
  as_row(dgain) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  as_row(dbias) += dy.colwise().sum();
  const Matrix dxhat = dy * as_col(gain).asDiagonal();
  const Index d = dy.cols();
  const Eigen::VectorXd mean_dxhat = dxhat.rowwise().mean();
  const Eigen::VectorXd mean_dxhat_xhat =
      (dxhat.array() * cache.xhat.array()).rowwise().sum() / static_cast<double>(d);
  Matrix dx = dxhat;
  dx.colwise() -= mean_dxhat;
  dx -= mean_dxhat_xhat.asDiagonal() * cache.xhat;
  return cache.inv_std.asDiagonal() * dx;
}

Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y = x * w.transpose();
  y.rowwise() += as_row(b);
  return y;
}

// dL/dW += dy^T x, dL/db += colsum(dy); returns dL/dx.
Matrix affine_backward(const Matrix& dy, const Matrix& x, const Matrix& w, Matrix& dw, Matrix& db) {
  dw.noalias() += dy.transpose() * x;
  as_row(db) += dy.colwise().sum();
  return dy * w;
}

void uniform_fill(Matrix& m, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

// -------------------------------------------------------------------- LSTM

struct LstmLayerCache {
  Matrix input;   // M x in
  Matrix gates;   // M x 4H, post-activation
  Matrix cell;    // M x H
  Matrix tanh_c;  // M x H
  Matrix hidden;  // M x H
};

std::vector<LstmLayerCache> lstm_forward(const ModelParameters& p, const Matrix& frames) {
  const int H = p.config.lstm_hidden;
  const Index M = frames.rows();
  std::vector<LstmLayerCache> caches(p.lstm.size());
  const Matrix* input = &frames;
  for (std::size_t l = 0; l < p.lstm.size(); ++l) {
    const auto& layer = p.lstm[l];
    auto& c = caches[l];
    c.input = *input;
    c.gates = affine(c.input, layer.w_ih, layer.bias);
    c.cell.resize(M, H);
    c.tanh_c.resize(M, H);
    c.hidden.resize(M, H);
    Eigen::VectorXd h = Eigen::VectorXd::Zero(H), cell = Eigen::VectorXd::Zero(H);
    for (Index t = 0; t < M; ++t) {
      Eigen::VectorXd z = c.gates.row(t).transpose() + layer.w_hh * h;
      for (int k = 0; k < H; ++k) {
        z[k] = sigmoid(z[k]);
        z[H + k] = sigmoid(z[H + k]);
        z[2 * H + k] = std::tanh(z[2 * H + k]);
        z[3 * H + k] = sigmoid(z[3 * H + k]);
      }
      cell = z.segment(H, H).cwiseProduct(cell) + z.segment(0, H).cwiseProduct(z.segment(2 * H, H));
      const Eigen::VectorXd tc = cell.array().tanh();
      h = z.segment(3 * H, H).cwiseProduct(tc);
      c.gates.row(t) = z.transpose();
      c.cell.row(t) = cell.transpose();
      c.tanh_c.row(t) = tc.transpose();
      c.hidden.row(t) = h.transpose();
    }
    input = &c.hidden;
  }
  return caches;
}

// dhidden_top: M x H gradient w.r.t. top-layer states.
void lstm_backward(const ModelParameters& p, const std::vector<LstmLayerCache>& caches,
                   Matrix dhidden, ModelParameters& g) {
  const int H = p.config.lstm_hidden;
  for (std::size_t li = caches.size(); li-- > 0;) {
    const auto& c = caches[li];
    const auto& layer = p.lstm[li];
    auto& gl = g.lstm[li];
    const Index M = c.hidden.rows();
    Matrix dz(M, 4 * H);
    Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(H), dc_next = Eigen::VectorXd::Zero(H);
    for (Index t = M - 1; t >= 0; --t) {
      const Eigen::VectorXd dh = dhidden.row(t).transpose() + dh_next;
      const auto gi = c.gates.row(t).segment(0, H).transpose();
      const auto gf = c.gates.row(t).segment(H, H).transpose();
      const auto gg = c.gates.row(t).segment(2 * H, H).transpose();
      const auto go = c.gates.row(t).segment(3 * H, H).transpose();
      const auto tc = c.tanh_c.row(t).transpose();
      const Eigen::VectorXd dc =
          dh.cwiseProduct(go).cwiseProduct((1.0 - tc.array().square()).matrix()) + dc_next;
      for (int k = 0; k < H; ++k) {
        const double c_prev = t > 0 ? c.cell(t - 1, k) : 0.0;
        dz(t, k) = dc[k] * gg[k] * gi[k] * (1.0 - gi[k]);
        dz(t, H + k) = dc[k] * c_prev * gf[k] * (1.0 - gf[k]);
        dz(t, 2 * H + k) = dc[k] * gi[k] * (1.0 - gg[k] * gg[k]);
        dz(t, 3 * H + k) = dh[k] * tc[k] * go[k] * (1.0 - go[k]);
      }
      dc_next = dc.cwiseProduct(gf);
      dh_next = layer.w_hh.transpose() * dz.row(t).transpose();
    }
    if (M > 1)
      gl.w_hh.noalias() += dz.bottomRows(M - 1).transpose() * c.hidden.topRows(M - 1);
    dhidden = affine_backward(dz, c.input, layer.w_ih, gl.w_ih, gl.bias);
  }
}

// ------------------------------------------------------------- fusion stack

struct BlockCache {
  Matrix x_in;
  LnCache ln1;
  Matrix xn, q, k, v;
  std::vector<Mat5> probs;  // n * heads
  Matrix attn;              // concatenated head outputs
  Matrix y;
  LnCache ln2;
  Matrix yn, u, gelu_u;
};

struct FusionCache {
  Matrix speech_act;    // n x d
  Matrix listener_act;  // n x d
  std::vector<BlockCache> blocks;
  Matrix fusion_out;    // n x d
};

void check_ids(const ModelParameters& p, int speaker, std::span<const int> phonemes) {
  if (speaker < 0 || speaker >= p.config.speaker_count)
    throw DataError("unknown speaker id " + std::to_string(speaker));
  for (int q : phonemes)
    if (q < 0 || q >= p.config.phoneme_vocab)
      throw DataError("unknown phoneme id " + std::to_string(q));
}

Predictions fusion_forward(const ModelParameters& p, int speaker, std::span<const int> phonemes,
                           const Matrix& speech, const Matrix& listener_states, FusionCache& fc) {
  const auto& cfg = p.config;
  const Index n = static_cast<Index>(phonemes.size());
  const int d = cfg.d_model;
  const int heads = cfg.heads;
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (speech.rows() != n || speech.cols() != cfg.speech_dim)
    throw DataError("speech representations must be n x " + std::to_string(cfg.speech_dim));
  if (listener_states.rows() != n || listener_states.cols() != cfg.lstm_hidden)
    throw DataError("listener states must be n x " + std::to_string(cfg.lstm_hidden));

  fc.speech_act = affine(speech, p.speech_proj_w, p.speech_proj_b).array().tanh();
  fc.listener_act = affine(listener_states, p.listener_proj_w, p.listener_proj_b).array().tanh();

  Matrix x(kTokens * n, d);
  for (Index i = 0; i < n; ++i) {
    x.row(kTokens * i + 0) = as_row(p.fusion_token);
    x.row(kTokens * i + 1) = p.speaker_embedding.row(speaker);
    x.row(kTokens * i + 2) = fc.speech_act.row(i);
    x.row(kTokens * i + 3) = p.phoneme_embedding.row(phonemes[i]);
    x.row(kTokens * i + 4) = fc.listener_act.row(i);
  }

  fc.blocks.resize(p.blocks.size());
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const auto& bp = p.blocks[b];
    auto& c = fc.blocks[b];
    c.x_in = x;
    c.xn = layer_norm(x, bp.ln1_gain, bp.ln1_bias, c.ln1);
    c.q = affine(c.xn, bp.wq, bp.bq);
    c.k = affine(c.xn, bp.wk, bp.bk);
    c.v = affine(c.xn, bp.wv, bp.bv);
    c.attn.resize(kTokens * n, d);
    c.probs.resize(static_cast<std::size_t>(n) * heads);
    for (Index i = 0; i < n; ++i) {
      for (int h = 0; h < heads; ++h) {
        const auto qi = c.q.block(kTokens * i, h * dh, kTokens, dh);
        const auto ki = c.k.block(kTokens * i, h * dh, kTokens, dh);
        const auto vi = c.v.block(kTokens * i, h * dh, kTokens, dh);
        Mat5 s = (qi * ki.transpose()) * scale;
        for (int r = 0; r < kTokens; ++r) {
          s.row(r).array() -= s.row(r).maxCoeff();
          s.row(r) = s.row(r).array().exp();
          s.row(r) /= s.row(r).sum();
        }
        c.probs[i * heads + h] = s;
        c.attn.block(kTokens * i, h * dh, kTokens, dh) = s * vi;
      }
    }
    c.y = x + affine(c.attn, bp.wo, bp.bo);
    c.yn = layer_norm(c.y, bp.ln2_gain, bp.ln2_bias, c.ln2);
    c.u = affine(c.yn, bp.ffn_w1, bp.ffn_b1);
    c.gelu_u = c.u.unaryExpr(&gelu);
    x = c.y + affine(c.gelu_u, bp.ffn_w2, bp.ffn_b2);
  }

  fc.fusion_out.resize(n, d);
  for (Index i = 0; i < n; ++i) fc.fusion_out.row(i) = x.row(kTokens * i);
  return affine(fc.fusion_out, p.head_w, p.head_b);
}

// Returns dL/d(listener_states).
Matrix fusion_backward(const ModelParameters& p, int speaker, std::span<const int> phonemes,
                       const Matrix& speech, const Matrix& listener_states, const FusionCache& fc,
                       const Matrix& dpred, ModelParameters& g) {
  const auto& cfg = p.config;
  const Index n = static_cast<Index>(phonemes.size());
  const int d = cfg.d_model;
  const int heads = cfg.heads;
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  const Matrix dfusion = affine_backward(dpred, fc.fusion_out, p.head_w, g.head_w, g.head_b);
  Matrix dx = Matrix::Zero(kTokens * n, d);
  for (Index i = 0; i < n; ++i) dx.row(kTokens * i) = dfusion.row(i);

  for (std::size_t b = p.blocks.size(); b-- > 0;) {
    const auto& bp = p.blocks[b];
    auto& gb = g.blocks[b];
    const auto& c = fc.blocks[b];

    // x' = y + FFN(LN(y))
    Matrix dy = dx;
    Matrix dg = affine_backward(dx, c.gelu_u, bp.ffn_w2, gb.ffn_w2, gb.ffn_b2);
    for (Index r = 0; r < dg.rows(); ++r)
      for (Index col = 0; col < dg.cols(); ++col) dg(r, col) *= gelu_grad(c.u(r, col));
    const Matrix dyn = affine_backward(dg, c.yn, bp.ffn_w1, gb.ffn_w1, gb.ffn_b1);
    dy += layer_norm_backward(dyn, c.ln2, bp.ln2_gain, gb.ln2_gain, gb.ln2_bias);

    // y = x + MHSA(LN(x))
    dx = dy;
    const Matrix dattn = affine_backward(dy, c.attn, bp.wo, gb.wo, gb.bo);
    Matrix dq(kTokens * n, d), dk(kTokens * n, d), dv(kTokens * n, d);
    for (Index i = 0; i < n; ++i) {
      for (int h = 0; h < heads; ++h) {
        const Mat5& prob = c.probs[i * heads + h];
        const auto qi = c.q.block(kTokens * i, h * dh, kTokens, dh);
        const auto ki = c.k.block(kTokens * i, h * dh, kTokens, dh);
        const auto vi = c.v.block(kTokens * i, h * dh, kTokens, dh);
        const auto doi = dattn.block(kTokens * i, h * dh, kTokens, dh);
        const Mat5 dprob = doi * vi.transpose();
        dv.block(kTokens * i, h * dh, kTokens, dh) = prob.transpose() * doi;
        Mat5 ds;
        for (int r = 0; r < kTokens; ++r) {
          const double dot = prob.row(r).dot(dprob.row(r));
          ds.row(r) = prob.row(r).cwiseProduct((dprob.row(r).array() - dot).matrix());
        }
        ds *= scale;
        dq.block(kTokens * i, h * dh, kTokens, dh) = ds * ki;
        dk.block(kTokens * i, h * dh, kTokens, dh) = ds.transpose() * qi;
      }
    }
    Matrix dxn = affine_backward(dq, c.xn, bp.wq, gb.wq, gb.bq);
    dxn += affine_backward(dk, c.xn, bp.wk, gb.wk, gb.bk);
    dxn += affine_backward(dv, c.xn, bp.wv, gb.wv, gb.bv);
    dx += layer_norm_backward(dxn, c.ln1, bp.ln1_gain, gb.ln1_gain, gb.ln1_bias);
  }

  Matrix dspeech(n, d), dlistener(n, d);
  for (Index i = 0; i < n; ++i) {
    as_row(g.fusion_token) += dx.row(kTokens * i);
    g.speaker_embedding.row(speaker) += dx.row(kTokens * i + 1);
    dspeech.row(i) = dx.row(kTokens * i + 2);
    g.phoneme_embedding.row(phonemes[i]) += dx.row(kTokens * i + 3);
    dlistener.row(i) = dx.row(kTokens * i + 4);
  }
  dspeech.array() *= 1.0 - fc.speech_act.array().square();
  dlistener.array() *= 1.0 - fc.listener_act.array().square();
  affine_backward(dspeech, speech, p.speech_proj_w, g.speech_proj_w, g.speech_proj_b);
  return affine_backward(dlistener, listener_states, p.listener_proj_w, g.listener_proj_w,
                         g.listener_proj_b);
}

int max_cutoff(std::span<const int> cutoffs) {
  int m = 0;
  for (int a : cutoffs) {
    if (a < 0) throw DataError("negative listener cutoff");
    m = std::max(m, a);
  }
  return m;
}

void check_input(const ModelParameters& p, const UtteranceInput& in, bool visual_blind) {
  check_ids(p, in.speaker, in.phonemes);
  if (in.cutoffs.size() != in.phonemes.size())
    throw DataError("cutoff count does not match phoneme count");
  if (!visual_blind && in.listener.rows() > 0 && in.listener.cols() != p.config.listener_dim)
    throw DataError("listener frames must have " + std::to_string(p.config.listener_dim) +
                    " columns");
}

struct Pass {
  std::vector<LstmLayerCache> lstm;
  Matrix states;  // gathered H
  FusionCache fusion;
  Predictions predictions;
};

Pass run_forward(const ModelParameters& p, const UtteranceInput& in, const ForwardOptions& opts) {
  check_input(p, in, opts.visual_blind);
  Pass pass;
  const int H = p.config.lstm_hidden;
  if (opts.visual_blind) {
    pass.states = Matrix::Zero(static_cast<Index>(in.size()), H);
  } else {
    const int m = max_cutoff(in.cutoffs);
    if (m > in.listener.rows())
      throw DataError("cutoff " + std::to_string(m) + " exceeds listener stream length " +
                      std::to_string(in.listener.rows()));
    if (m > 0) {
      pass.lstm = lstm_forward(p, in.listener.topRows(m));
      pass.states = gather_listener_states(pass.lstm.back().hidden, in.cutoffs, H);
    } else {
      pass.states = Matrix::Zero(static_cast<Index>(in.size()), H);
    }
  }
  pass.predictions = fusion_forward(p, in.speaker, in.phonemes, in.speech, pass.states, pass.fusion);
  return pass;
}

}  // namespace

// ------------------------------------------------------------------ config

void ModelConfig::validate() const {
  if (d_model < 1 || heads < 1 || blocks < 1 || lstm_hidden < 1 || lstm_layers < 1 ||
      ffn_mult < 1 || phoneme_vocab < 1 || speaker_count < 1 || listener_dim < 1 ||
      speech_dim < 1 || out_dim < 1)
    throw DataError("model config: all sizes must be >= 1");
  if (d_model % heads != 0) throw DataError("model config: d_model must be divisible by heads");
  if (out_dim != 3) throw DataError("model config: out_dim must be 3");
}

// -------------------------------------------------------------- parameters

ModelParameters ModelParameters::zeros(const ModelConfig& cfg) {
  cfg.validate();
  const int d = cfg.d_model, H = cfg.lstm_hidden, F = cfg.ffn_mult * cfg.d_model;
  ModelParameters p;
  p.config = cfg;
  p.speaker_embedding = Matrix::Zero(cfg.speaker_count, d);
  p.phoneme_embedding = Matrix::Zero(cfg.phoneme_vocab, d);
  for (int l = 0; l < cfg.lstm_layers; ++l) {
    const int in = l == 0 ? cfg.listener_dim : H;
    p.lstm.push_back({Matrix::Zero(4 * H, in), Matrix::Zero(4 * H, H), Matrix::Zero(4 * H, 1)});
  }
  p.speech_proj_w = Matrix::Zero(d, cfg.speech_dim);
  p.speech_proj_b = Matrix::Zero(d, 1);
  p.listener_proj_w = Matrix::Zero(d, H);
  p.listener_proj_b = Matrix::Zero(d, 1);
  p.fusion_token = Matrix::Zero(d, 1);
  for (int b = 0; b < cfg.blocks; ++b) {
    BlockParams bp;
    bp.ln1_gain = bp.ln1_bias = bp.ln2_gain = bp.ln2_bias = Matrix::Zero(d, 1);
    bp.wq = bp.wk = bp.wv = bp.wo = Matrix::Zero(d, d);
    bp.bq = bp.bk = bp.bv = bp.bo = Matrix::Zero(d, 1);
    bp.ffn_w1 = Matrix::Zero(F, d);
    bp.ffn_b1 = Matrix::Zero(F, 1);
    bp.ffn_w2 = Matrix::Zero(d, F);
    bp.ffn_b2 = Matrix::Zero(d, 1);
    p.blocks.push_back(std::move(bp));
  }
  p.head_w = Matrix::Zero(cfg.out_dim, d);
  p.head_b = Matrix::Zero(cfg.out_dim, 1);
  return p;
}

ModelParameters ModelParameters::initialize(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParameters p = zeros(cfg);
  std::mt19937_64 rng(seed);
  const double d = cfg.d_model;
  const double H = cfg.lstm_hidden;
  const double F = static_cast<double>(cfg.ffn_mult) * cfg.d_model;
  auto fill = [&](Matrix& m, double fan_in) { uniform_fill(m, 1.0 / std::sqrt(fan_in), rng); };

  fill(p.speaker_embedding, d);
  fill(p.phoneme_embedding, d);
  for (int l = 0; l < cfg.lstm_layers; ++l) {
    fill(p.lstm[l].w_ih, l == 0 ? cfg.listener_dim : H);
    fill(p.lstm[l].w_hh, H);
    fill(p.lstm[l].bias, H);
  }
  fill(p.speech_proj_w, cfg.speech_dim);
  fill(p.speech_proj_b, cfg.speech_dim);
  fill(p.listener_proj_w, H);
  fill(p.listener_proj_b, H);
  fill(p.fusion_token, d);
  for (auto& bp : p.blocks) {
    bp.ln1_gain.setOnes();
    bp.ln2_gain.setOnes();
    for (Matrix* m : {&bp.wq, &bp.bq, &bp.wk, &bp.bk, &bp.wv, &bp.bv, &bp.wo, &bp.bo, &bp.ffn_w1,
                      &bp.ffn_b1})
      fill(*m, d);
    fill(bp.ffn_w2, F);
    fill(bp.ffn_b2, F);
  }
  fill(p.head_w, d);
  fill(p.head_b, d);
  return p;
}

std::vector<std::pair<std::string, const Matrix*>> ModelParameters::tensors() const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  out.emplace_back("speaker_embedding", &speaker_embedding);
  out.emplace_back("phoneme_embedding", &phoneme_embedding);
  for (std::size_t l = 0; l < lstm.size(); ++l) {
    const std::string pre = "lstm." + std::to_string(l) + ".";
    out.emplace_back(pre + "w_ih", &lstm[l].w_ih);
    out.emplace_back(pre + "w_hh", &lstm[l].w_hh);
    out.emplace_back(pre + "bias", &lstm[l].bias);
  }
  out.emplace_back("speech_proj.weight", &speech_proj_w);
  out.emplace_back("speech_proj.bias", &speech_proj_b);
  out.emplace_back("listener_proj.weight", &listener_proj_w);
  out.emplace_back("listener_proj.bias", &listener_proj_b);
  out.emplace_back("fusion_token", &fusion_token);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string pre = "blocks." + std::to_string(b) + ".";
    const auto& bp = blocks[b];
    out.emplace_back(pre + "ln1.gain", &bp.ln1_gain);
    out.emplace_back(pre + "ln1.bias", &bp.ln1_bias);
    out.emplace_back(pre + "attn.wq", &bp.wq);
    out.emplace_back(pre + "attn.bq", &bp.bq);
    out.emplace_back(pre + "attn.wk", &bp.wk);
    out.emplace_back(pre + "attn.bk", &bp.bk);
    out.emplace_back(pre + "attn.wv", &bp.wv);
    out.emplace_back(pre + "attn.bv", &bp.bv);
    out.emplace_back(pre + "attn.wo", &bp.wo);
    out.emplace_back(pre + "attn.bo", &bp.bo);
    out.emplace_back(pre + "ln2.gain", &bp.ln2_gain);
    out.emplace_back(pre + "ln2.bias", &bp.ln2_bias);
    out.emplace_back(pre + "ffn.w1", &bp.ffn_w1);
    out.emplace_back(pre + "ffn.b1", &bp.ffn_b1);
    out.emplace_back(pre + "ffn.w2", &bp.ffn_w2);
    out.emplace_back(pre + "ffn.b2", &bp.ffn_b2);
  }
  out.emplace_back("head.weight", &head_w);
  out.emplace_back("head.bias", &head_b);
  return out;
}

std::vector<std::pair<std::string, Matrix*>> ModelParameters::tensors() {
  std::vector<std::pair<std::string, Matrix*>> out;
  for (auto& [name, m] : std::as_const(*this).tensors())
    out.emplace_back(name, const_cast<Matrix*>(m));
  return out;
}

std::size_t ModelParameters::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, m] : tensors()) n += static_cast<std::size_t>(m->size());
  return n;
}

bool ModelParameters::all_finite() const {
  for (const auto& [name, m] : tensors())
    if (!m->allFinite()) return false;
  return true;
}

// -------------------------------------------------------------- operations

Matrix lstm_encode(const ModelParameters& params, const Matrix& frames) {
  if (frames.rows() == 0) return Matrix(0, params.config.lstm_hidden);
  if (frames.cols() != params.config.listener_dim)
    throw DataError("listener frames must have " + std::to_string(params.config.listener_dim) +
                    " columns");
  return lstm_forward(params, frames).back().hidden;
}

LstmStream::LstmStream(const ModelParameters& params) : params_(&params) {
  const int H = params.config.lstm_hidden;
  h_.assign(params.lstm.size(), Eigen::VectorXd::Zero(H));
  c_.assign(params.lstm.size(), Eigen::VectorXd::Zero(H));
}

const Eigen::VectorXd& LstmStream::push(const Eigen::Ref<const Eigen::VectorXd>& frame) {
  const auto& p = *params_;
  const int H = p.config.lstm_hidden;
  if (frame.size() != p.config.listener_dim)
    throw DataError("listener frame must have " + std::to_string(p.config.listener_dim) + " values");
  Eigen::VectorXd x = frame;
  for (std::size_t l = 0; l < p.lstm.size(); ++l) {
    const auto& layer = p.lstm[l];
    Eigen::VectorXd z = layer.w_ih * x + as_col(layer.bias) + layer.w_hh * h_[l];
    for (int k = 0; k < H; ++k) {
      z[k] = sigmoid(z[k]);
      z[H + k] = sigmoid(z[H + k]);
      z[2 * H + k] = std::tanh(z[2 * H + k]);
      z[3 * H + k] = sigmoid(z[3 * H + k]);
    }
    c_[l] = z.segment(H, H).cwiseProduct(c_[l]) + z.segment(0, H).cwiseProduct(z.segment(2 * H, H));
    h_[l] = z.segment(3 * H, H).cwiseProduct(Eigen::VectorXd(c_[l].array().tanh()));
    x = h_[l];
  }
  ++consumed_;
  return h_.back();
}

const Eigen::VectorXd& LstmStream::top_state() const { return h_.back(); }

Matrix gather_listener_states(const Matrix& hidden, std::span<const int> cutoffs, int hidden_dim) {
  Matrix out = Matrix::Zero(static_cast<Index>(cutoffs.size()), hidden_dim);
  for (std::size_t i = 0; i < cutoffs.size(); ++i) {
    const int a = cutoffs[i];
    if (a < 0 || a > hidden.rows())
      throw DataError("cutoff " + std::to_string(a) + " outside hidden sequence of length " +
                      std::to_string(hidden.rows()));
    if (a > 0) out.row(static_cast<Index>(i)) = hidden.row(a - 1);
  }
  return out;
}

FuseOutput fuse_forward(const ModelParameters& params, int speaker, const Eigen::VectorXd& speech,
                        int phoneme, const Eigen::VectorXd& listener_state) {
  const int ids[1] = {phoneme};
  check_ids(params, speaker, ids);
  FusionCache fc;
  const Matrix s = speech.transpose();
  const Matrix h = listener_state.transpose();
  const Predictions pred = fusion_forward(params, speaker, ids, s, h, fc);
  return {fc.fusion_out.row(0).transpose(), pred.row(0).transpose()};
}

ForwardResult forward(const ModelParameters& params, const UtteranceInput& input,
                      const ForwardOptions& opts) {
  Pass pass = run_forward(params, input, opts);
  ForwardResult r;
  r.predictions = std::move(pass.predictions);
  r.listener_states = std::move(pass.states);
  if (opts.keep_attention) {
    for (const auto& b : pass.fusion.blocks) {
      std::vector<Matrix> probs;
      for (const auto& m : b.probs) probs.emplace_back(m);
      r.attention.push_back(std::move(probs));
    }
  }
  return r;
}

namespace {

std::size_t loss_terms(std::span<const features::ProsodyTarget> targets) {
  std::size_t n = 0;
  for (const auto& t : targets) n += (t.pitch_mask ? 1 : 0) + 2;
  return n;
}

}  // namespace

double prosody_loss(const Predictions& pred, std::span<const features::ProsodyTarget> targets) {
  if (static_cast<std::size_t>(pred.rows()) != targets.size() || pred.cols() != 3)
    throw DataError("prediction/target length mismatch");
  if (targets.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = targets[i];
    const Index r = static_cast<Index>(i);
    if (t.pitch_mask) sum += std::pow(pred(r, 0) - t.log_pitch, 2);
    sum += std::pow(pred(r, 1) - t.log_energy, 2);
    sum += std::pow(pred(r, 2) - t.log_duration, 2);
  }
  return sum / static_cast<double>(loss_terms(targets));
}

LossAndGradient loss_and_gradient(const ModelParameters& params, const UtteranceInput& input,
                                  std::span<const features::ProsodyTarget> targets,
                                  const ForwardOptions& opts) {
  Pass pass = run_forward(params, input, opts);
  LossAndGradient out;
  out.loss = prosody_loss(pass.predictions, targets);
  out.gradient = ModelParameters::zeros(params.config);

  const Index n = static_cast<Index>(targets.size());
  Matrix dpred = Matrix::Zero(n, 3);
  const double scale = n > 0 ? 2.0 / static_cast<double>(loss_terms(targets)) : 0.0;
  for (Index i = 0; i < n; ++i) {
    const auto& t = targets[i];
    if (t.pitch_mask) dpred(i, 0) = scale * (pass.predictions(i, 0) - t.log_pitch);
    dpred(i, 1) = scale * (pass.predictions(i, 1) - t.log_energy);
    dpred(i, 2) = scale * (pass.predictions(i, 2) - t.log_duration);
  }

  const Matrix dstates = fusion_backward(params, input.speaker, input.phonemes, input.speech,
                                         pass.states, pass.fusion, dpred, out.gradient);
  if (!pass.lstm.empty()) {
    const Index m = pass.lstm.back().hidden.rows();
    Matrix dhidden = Matrix::Zero(m, params.config.lstm_hidden);
    for (Index i = 0; i < n; ++i) {
      const int a = input.cutoffs[i];
      if (a > 0) dhidden.row(a - 1) += dstates.row(i);
    }
    lstm_backward(params, pass.lstm, std::move(dhidden), out.gradient);
  }
  out.predictions = std::move(pass.predictions);
  return out;
}

}  // namespace vatts::model
