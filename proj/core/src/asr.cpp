// core/src/asr.cpp

// Copyright 2026  The Lip2Speech Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "lip2speech/asr.hpp"

#include <algorithm>

#include "lip2speech/eval.hpp"
#include "lip2speech/objective.hpp"
#include "lip2speech/tensor_io.hpp"
#include "json.hpp"

using nlohmann::json;

namespace l2s::asr {

void AsrConfig::Validate() const {
  Require(mel_channels >= 1 && dim >= 1, "asr: widths must be positive");
  Require(subsample >= 1, "asr: subsample factor must be >= 1");
  Require(vocab_size >= 2, "asr: vocabulary must have at least two classes");
  Require(dim % encoder.heads == 0, "asr: dim must divide among heads");
}

std::string AsrConfig::ToJson() const {
  json j;
  j["mel_channels"] = mel_channels;
  j["dim"] = dim;
  j["stem_kernel"] = stem_kernel;
  j["subsample"] = subsample;
  j["encoder"] = {{"layers", encoder.layers},
                  {"heads", encoder.heads},
                  {"kernel", encoder.kernel},
                  {"ff_mult", encoder.ff_mult},
                  {"dropout", encoder.dropout}};
  j["vocab_size"] = vocab_size;
  return j.dump();
}

AsrConfig AsrConfig::FromJson(const std::string& text) {
  json j = json::parse(text);
  AsrConfig c;
  c.mel_channels = j.at("mel_channels").get<int>();
  c.dim = j.at("dim").get<int>();
  c.stem_kernel = j.at("stem_kernel").get<int>();
  c.subsample = j.at("subsample").get<int>();
  const json& e = j.at("encoder");
  c.encoder.layers = e.at("layers").get<int>();
  c.encoder.heads = e.at("heads").get<int>();
  c.encoder.kernel = e.at("kernel").get<int>();
  c.encoder.ff_mult = e.at("ff_mult").get<int>();
  c.encoder.dropout = e.at("dropout").get<double>();
  c.vocab_size = j.at("vocab_size").get<int>();
  return c;
}

AsrConfig AsrConfig::FullScale() {
  AsrConfig c;
  c.dim = 256;
  c.encoder = {6, 4, 31, 4, 0.1};
  return c;
}

std::string RoleName(AsrRole role) {
  return role == AsrRole::kFeedback ? "feedback" : "evaluation";
}

AsrModel::AsrModel(const AsrConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.Validate();
  Rng rng(seed, 0x617372ull);
  stem_ = nn::Conv1dLayer(&params_, "asr.stem", cfg_.mel_channels, cfg_.dim,
                          cfg_.stem_kernel, cfg_.subsample, &rng);
  encoder_ = nn::ConformerEncoder(&params_, "asr.encoder", cfg_.dim,
                                  cfg_.encoder, &rng);
  classifier_ =
      nn::Linear(&params_, "asr.classifier", cfg_.dim, cfg_.vocab_size, &rng);
}

nn::Var AsrModel::Features(const nn::Var& mel) const {
  Require(mel->Cols() == cfg_.mel_channels,
          "asr: mel channel count mismatch: expected " +
              std::to_string(cfg_.mel_channels));
  nn::Var x = nn::Relu(stem_.Forward(mel));
  return encoder_.Forward(x);
}

nn::Var AsrModel::Features(const Mat& mel) const {
  return Features(nn::Constant(mel));
}

nn::Var AsrModel::Logits(const nn::Var& features) const {
  return classifier_.Forward(features);
}

std::vector<int> CollapseCtcArgmax(const std::vector<int>& frame_argmax,
                                   int blank) {
  std::vector<int> out;
  int prev = -1;
  for (int s : frame_argmax) {
    if (s != prev && s != blank) out.push_back(s);
    prev = s;
  }
  return out;
}

std::vector<int> AsrModel::GreedyIds(const Mat& mel) const {
  nn::Var logits = Logits(Features(mel));
  std::vector<int> argmax(static_cast<size_t>(logits->Rows()));
  for (int64_t t = 0; t < logits->Rows(); ++t) {
    int best = 0;
    logits->value.row(t).maxCoeff(&best);
    argmax[static_cast<size_t>(t)] = best;
  }
  return CollapseCtcArgmax(argmax);
}

std::string AsrModel::DecodeGreedy(const Mat& mel,
                                   const data::Vocabulary& vocab) const {
  return vocab.Decode(GreedyIds(mel));
}

void SaveAsrCheckpoint(const AsrModel& model, AsrRole role,
                       uint64_t vocab_hash, const std::string& path) {
  io::TensorContainer c;
  model.params().Export(&c);
  json meta;
  meta["kind"] = "asr";
  meta["role"] = RoleName(role);
  meta["config"] = json::parse(model.config().ToJson());
  meta["vocab_hash"] = vocab_hash;
  c.set_meta_json(meta.dump());
  c.Save(path);
}

LoadedAsr LoadAsrCheckpoint(const std::string& path) {
  io::TensorContainer c = io::TensorContainer::Load(path);
  json meta = json::parse(c.meta_json());
  Require(meta.value("kind", "") == "asr",
          "checkpoint is not an asr model: " + path);
  LoadedAsr out;
  const std::string role = meta.at("role").get<std::string>();
  Require(role == "feedback" || role == "evaluation",
          "asr checkpoint has unknown role tag: " + role);
  out.role = role == "feedback" ? AsrRole::kFeedback : AsrRole::kEvaluation;
  AsrConfig cfg = AsrConfig::FromJson(meta.at("config").dump());
  out.model = std::make_unique<AsrModel>(cfg, /*seed=*/0);
  out.model->params().Import(c);
  out.vocab_hash = meta.at("vocab_hash").get<uint64_t>();
  return out;
}

LoadedAsr LoadAsrCheckpoint(const std::string& path, AsrRole expected_role) {
  LoadedAsr out = LoadAsrCheckpoint(path);
  Require(out.role == expected_role,
          "asr checkpoint role mismatch: expected " + RoleName(expected_role) +
              ", found " + RoleName(out.role) + " in " + path);
  return out;
}

double AsrTrainWer(AsrModel* model, data::Dataset* dataset,
                   const std::vector<size_t>& indices) {
  int64_t errors = 0, words = 0;
  for (size_t idx : indices) {
    const data::Utterance& utt = dataset->Get(idx);
    const std::string hyp = model->DecodeGreedy(utt.mel.values,
                                                dataset->vocab());
    eval::WerCount w = eval::Wer(utt.transcript.text, hyp);
    errors += w.errors;
    words += w.ref_words;
  }
  Check(words > 0, "asr train wer: no reference words");
  return static_cast<double>(errors) / static_cast<double>(words);
}

PretrainedAsr PretrainAsr(data::Dataset* dataset,
                          const std::vector<size_t>& indices,
                          const AsrConfig& cfg,
                          const AsrPretrainConfig& train_cfg) {
  Require(!indices.empty(), "asr pretraining needs a non-empty corpus");

  PretrainedAsr out;
  out.model = std::make_unique<AsrModel>(cfg, train_cfg.seed);

  nn::AdamW opt;
  opt.lr = train_cfg.learning_rate;
  opt.weight_decay = train_cfg.weight_decay;

  const std::vector<nn::Var>& params = out.model->params().params();
  for (int epoch = 0; epoch < train_cfg.max_epochs; ++epoch) {
    std::vector<size_t> order = indices;
    Rng shuffle_rng(train_cfg.seed, 0x65700000ull + static_cast<uint64_t>(epoch));
    Shuffle(&order, &shuffle_rng);

    for (size_t b = 0; b < order.size(); b += train_cfg.batch_size) {
      const size_t b_end =
          std::min(order.size(), b + static_cast<size_t>(train_cfg.batch_size));
      std::vector<nn::Var> losses;
      std::vector<double> weights;
      for (size_t i = b; i < b_end; ++i) {
        const data::Utterance& utt = dataset->Get(order[i]);
        nn::Var logits = out.model->Logits(out.model->Features(utt.mel.values));
        losses.push_back(
            objective::CtcLossNode(logits, utt.transcript.tokens));
        weights.push_back(1.0 / static_cast<double>(b_end - b));
      }
      nn::Var loss = nn::WeightedSum(losses, weights);
      Check(IsFinite(loss->Scalar()), "asr pretraining: non-finite loss");
      out.model->params().ZeroGrad();
      nn::Backward(loss);
      const double norm = nn::GlobalGradNorm(params);
      if (norm > train_cfg.grad_clip) {
        nn::ScaleGrads(params, train_cfg.grad_clip / norm);
      }
      opt.Step(params);
    }

    const double wer = AsrTrainWer(out.model.get(), dataset, indices);
    out.report.epoch_train_wer.push_back(wer);
    out.report.epochs_run = epoch + 1;
    out.report.final_train_wer = wer;
    if (wer <= train_cfg.target_train_wer) {
      out.report.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace l2s::asr
