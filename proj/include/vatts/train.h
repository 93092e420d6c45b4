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

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "vatts/align.h"
#include "vatts/features.h"
#include "vatts/model.h"
#include "vatts/optim.h"

namespace vatts::model {

/// One utterance ready for training: model input plus teacher targets.
struct TrainingExample {
  std::string id;
  UtteranceInput input;
  std::vector<features::ProsodyTarget> targets;
};

struct TrainResult {
  ModelParameters params;
  std::vector<double> epoch_loss;  // mean per-utterance loss, one entry per epoch
  long steps = 0;
  double final_lr = 0.0;  // schedule value after the last step
};

/// Called after every epoch with (epoch index, mean loss).
using EpochCallback = std::function<void(int, double)>;

/// Per-utterance Adam steps over a seeded but fixed utterance order.
/// Throws NumericError on a non-finite loss.
TrainResult train(const std::vector<TrainingExample>& dataset, const ModelConfig& model_cfg,
                  const TrainConfig& train_cfg, const EpochCallback& on_epoch = {});

struct Checkpoint {
  ModelParameters params;
  TrainConfig train;
  std::vector<std::string> vocabulary;
};

inline constexpr int kCheckpointSchema = 1;

/// JSON text with sorted keys; identical models serialize to identical bytes.
std::string checkpoint_to_string(const Checkpoint& ckpt);
Checkpoint checkpoint_from_string(const std::string& text);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct StreamingResult {
  Predictions predictions;   // n x 3, log scale
  std::vector<int> cutoffs;  // a_i actually used
};

/// Sequential causal inference. Cutoffs come from prefix sums of the
/// model's own predicted durations; listener frames past a_i are never read.
StreamingResult infer_streaming(const ModelParameters& params, std::span<const int> phonemes,
                                int speaker, const Matrix& speech_reprs,
                                const features::ListenerFeatureStream& stream,
                                const align::StreamClock& clock, bool visual_blind = false);

}  // namespace vatts::model
