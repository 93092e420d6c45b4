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

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vatts/error.h"
#include "vatts/train.h"

namespace vatts::model {

using nlohmann::json;

namespace {

json config_json(const ModelConfig& c) {
  return json{{"d_model", c.d_model},         {"heads", c.heads},
              {"blocks", c.blocks},           {"lstm_hidden", c.lstm_hidden},
              {"lstm_layers", c.lstm_layers}, {"ffn_mult", c.ffn_mult},
              {"phoneme_vocab", c.phoneme_vocab}, {"speaker_count", c.speaker_count},
              {"listener_dim", c.listener_dim}, {"speech_dim", c.speech_dim},
              {"out_dim", c.out_dim}};
}

ModelConfig config_from(const json& j) {
  ModelConfig c;
  c.d_model = j.at("d_model");
  c.heads = j.at("heads");
  c.blocks = j.at("blocks");
  c.lstm_hidden = j.at("lstm_hidden");
  c.lstm_layers = j.at("lstm_layers");
  c.ffn_mult = j.at("ffn_mult");
  c.phoneme_vocab = j.at("phoneme_vocab");
  c.speaker_count = j.at("speaker_count");
  c.listener_dim = j.at("listener_dim");
  c.speech_dim = j.at("speech_dim");
  c.out_dim = j.at("out_dim");
  c.validate();
  return c;
}

json tensor_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

void tensor_from(const json& j, Matrix& m, const std::string& name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != m.rows())
    throw DataError("checkpoint tensor '" + name + "' has wrong row count");
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const json& row = j[r];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != m.cols())
      throw DataError("checkpoint tensor '" + name + "' has wrong column count");
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = row[c].get<double>();
  }
}

}  // namespace

std::string checkpoint_to_string(const Checkpoint& ckpt) {
  json params = json::object();
  for (const auto& [name, m] : ckpt.params.tensors()) params[name] = tensor_json(*m);
  const auto& t = ckpt.train;
  json doc = {
      {"schema_version", kCheckpointSchema},
      {"config", config_json(ckpt.params.config)},
      {"seed", t.seed},
      {"train",
       {{"lr_max", t.lr_max},
        {"lr_min", t.lr_min},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"eps", t.eps},
        {"epochs", t.epochs},
        {"phi", t.phi},
        {"visual_blind", t.visual_blind}}},
      {"vocabulary", ckpt.vocabulary},
      {"parameters", std::move(params)},
  };
  return doc.dump() + "\n";
}

Checkpoint checkpoint_from_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (doc.at("schema_version").get<int>() != kCheckpointSchema)
      throw DataError("unsupported checkpoint schema_version");
    Checkpoint ckpt;
    ckpt.params = ModelParameters::zeros(config_from(doc.at("config")));
    ckpt.train.seed = doc.at("seed").get<std::uint64_t>();
    const json& t = doc.at("train");
    ckpt.train.lr_max = t.at("lr_max");
    ckpt.train.lr_min = t.at("lr_min");
    ckpt.train.beta1 = t.at("beta1");
    ckpt.train.beta2 = t.at("beta2");
    ckpt.train.eps = t.at("eps");
    ckpt.train.epochs = t.at("epochs");
    ckpt.train.phi = t.at("phi");
    ckpt.train.visual_blind = t.at("visual_blind");
    ckpt.vocabulary = doc.at("vocabulary").get<std::vector<std::string>>();
    const json& params = doc.at("parameters");
    for (auto& [name, m] : ckpt.params.tensors()) {
      if (!params.contains(name)) throw DataError("checkpoint is missing tensor '" + name + "'");
      tensor_from(params.at(name), *m, name);
    }
    return ckpt;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << checkpoint_to_string(ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace vatts::model
