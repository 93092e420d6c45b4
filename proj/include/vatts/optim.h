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

#pragma once

#include <cstdint>

#include "vatts/model.h"

namespace vatts::model {

struct TrainConfig {
  double lr_max = 5e-4;
  double lr_min = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int epochs = 240;
  std::uint64_t seed = 0;
  int phi = 1;
  bool visual_blind = false;

  void validate() const;
};

struct AdamState {
  ModelParameters m;
  ModelParameters v;
  long step = 0;

  static AdamState zeros_like(const ModelParameters& params);
};

/// Bias-corrected Adam: theta -= lr * m_hat / (sqrt(v_hat) + eps).
void adam_step(ModelParameters& params, const ModelParameters& grads, AdamState& state, double lr,
               const TrainConfig& cfg);

/// Cosine annealing from lr_max at step 0 to lr_min at total_steps; clamps
/// to lr_min past the end.
double cosine_lr(long step, long total_steps, const TrainConfig& cfg);

}  // namespace vatts::model
