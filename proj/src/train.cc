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

#include "vatts/train.h"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "vatts/error.h"

namespace vatts::model {

TrainResult train(const std::vector<TrainingExample>& dataset, const ModelConfig& model_cfg,
                  const TrainConfig& train_cfg, const EpochCallback& on_epoch) {
  if (dataset.empty()) throw DataError("training set is empty");
  model_cfg.validate();
  train_cfg.validate();

  TrainResult result;
  result.params = ModelParameters::initialize(model_cfg, train_cfg.seed);
  AdamState adam = AdamState::zeros_like(result.params);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(train_cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }

  ForwardOptions opts;
  opts.visual_blind = train_cfg.visual_blind;
  const long total = static_cast<long>(train_cfg.epochs) * static_cast<long>(dataset.size());
  long step = 0;
  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    double sum = 0.0;
    for (std::size_t idx : order) {
      const auto& ex = dataset[idx];
      LossAndGradient lg = loss_and_gradient(result.params, ex.input, ex.targets, opts);
      if (!std::isfinite(lg.loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch + 1 << ", utterance '" << ex.id << "'";
        throw NumericError(msg.str());
      }
      sum += lg.loss;
      adam_step(result.params, lg.gradient, adam, cosine_lr(step, total, train_cfg), train_cfg);
      ++step;
    }
    const double mean = sum / static_cast<double>(dataset.size());
    result.epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  if (!result.params.all_finite()) throw NumericError("parameters diverged to non-finite values");
  result.steps = step;
  result.final_lr = cosine_lr(step, total, train_cfg);
  return result;
}

StreamingResult infer_streaming(const ModelParameters& params, std::span<const int> phonemes,
                                int speaker, const Matrix& speech_reprs,
                                const features::ListenerFeatureStream& stream,
                                const align::StreamClock& clock, bool visual_blind) {
  const std::size_t n = phonemes.size();
  if (static_cast<std::size_t>(speech_reprs.rows()) != n)
    throw DataError("speech representation count does not match phoneme count");
  if (!visual_blind && stream.frame_count() > 0 && stream.frames.cols() != params.config.listener_dim)
    throw DataError("listener frames have the wrong width");

  StreamingResult out;
  out.predictions.resize(static_cast<Eigen::Index>(n), 3);
  out.cutoffs.reserve(n);
  LstmStream lstm(params);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(params.config.lstm_hidden);
  double start_s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    int a = align::causal_cutoff(align::start_frame(start_s, clock.tau_s), clock.phi);
    if (!visual_blind) {
      a = std::min(a, stream.frame_count());
      while (lstm.frames_consumed() < a) lstm.push(stream.frames.row(lstm.frames_consumed()).transpose());
    }
    const Eigen::VectorXd& h = (visual_blind || a == 0) ? zero : lstm.top_state();
    const FuseOutput f = fuse_forward(params, speaker, speech_reprs.row(static_cast<Eigen::Index>(i)).transpose(),
                                      phonemes[i], h);
    out.predictions.row(static_cast<Eigen::Index>(i)) = f.prediction.transpose();
    out.cutoffs.push_back(a);
    const double dur_s = std::exp(f.prediction[2]) / 1000.0;
    if (!std::isfinite(dur_s))
      throw NumericError("non-finite predicted duration at phoneme " + std::to_string(i));
    start_s += dur_s;
  }
  return out;
}

}  // namespace vatts::model
