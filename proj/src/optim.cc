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

#include "vatts/optim.h"

#include <cmath>
#include <numbers>

#include "vatts/error.h"

namespace vatts::model {

void TrainConfig::validate() const {
  if (!(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1))
    throw DataError("train config: betas must lie in (0, 1)");
  if (!(lr_max >= lr_min && lr_min >= 0)) throw DataError("train config: need lr_max >= lr_min >= 0");
  if (!(eps > 0)) throw DataError("train config: eps must be positive");
  if (epochs < 1) throw DataError("train config: epochs must be >= 1");
  if (phi < 1) throw DataError("train config: phi must be >= 1");
}

AdamState AdamState::zeros_like(const ModelParameters& params) {
  return {ModelParameters::zeros(params.config), ModelParameters::zeros(params.config), 0};
}

void adam_step(ModelParameters& params, const ModelParameters& grads, AdamState& state, double lr,
               const TrainConfig& cfg) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size())
    throw DataError("adam: tensor count mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < p.size(); ++k) {
    Matrix& theta = *p[k].second;
    const Matrix& grad = *g[k].second;
    Matrix& m1 = *m[k].second;
    Matrix& m2 = *v[k].second;
    if (theta.rows() != grad.rows() || theta.cols() != grad.cols() || theta.rows() != m1.rows() ||
        theta.cols() != m1.cols())
      throw DataError("adam: shape mismatch for " + p[k].first);
    m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * grad;
    m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
    theta.array() -= lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + cfg.eps);
  }
}

double cosine_lr(long step, long total_steps, const TrainConfig& cfg) {
  if (total_steps <= 0 || step >= total_steps) return cfg.lr_min;
  if (step <= 0) return cfg.lr_max;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace vatts::model
