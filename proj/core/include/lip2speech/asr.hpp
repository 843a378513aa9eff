// lip2speech/asr.hpp
//
// The pre-trained speech recognizer: a conv subsampling stem (factor 2 over
// mel frames) feeding conformer blocks and a linear CTC classifier. One
// frozen checkpoint supervises Lip2Speech training (content-feature
// matching); a second, independently seeded checkpoint measures WER. The
// two roles are tagged in the checkpoint and enforced at load.

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

#ifndef LIP2SPEECH_ASR_HPP_
#define LIP2SPEECH_ASR_HPP_

#include <memory>
#include <string>
#include <vector>

#include "lip2speech/data.hpp"
#include "lip2speech/layers.hpp"
#include "lip2speech/nn.hpp"

namespace l2s::asr {

struct AsrConfig {
  int mel_channels = 80;
  int dim = 64;        // feature width before the classifier
  int stem_kernel = 3;
  int subsample = 2;   // stem stride over mel frames
  nn::ConformerConfig encoder{2, 2, 7, 4, 0.0};
  int vocab_size = 0;

  void Validate() const;
  std::string ToJson() const;
  static AsrConfig FromJson(const std::string& text);
  // Paper-scale profile: 6 conformer blocks, 4 heads.
  static AsrConfig FullScale();
};

enum class AsrRole { kFeedback, kEvaluation };
std::string RoleName(AsrRole role);

// Greedy CTC path collapse: merge repeats, then drop blanks.
std::vector<int> CollapseCtcArgmax(const std::vector<int>& frame_argmax,
                                   int blank = 0);

class AsrModel {
 public:
  AsrModel(const AsrConfig& cfg, uint64_t seed);

  // Pre-classifier content representations, S' x dim with S' = ceil(S / 2).
  // Gradient flows through to the input mel when it requires grad; frozen
  // parameters receive none.
  nn::Var Features(const nn::Var& mel) const;
  nn::Var Features(const Mat& mel) const;
  nn::Var Logits(const nn::Var& features) const;

  // Per-frame argmax, collapse repeats, drop blanks.
  std::vector<int> GreedyIds(const Mat& mel) const;
  std::string DecodeGreedy(const Mat& mel, const data::Vocabulary& vocab) const;

  void Freeze() { params_.SetFrozen(true); }
  bool frozen() const { return params_.frozen(); }

  const AsrConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

 private:
  AsrConfig cfg_;
  nn::ParamStore params_;
  nn::Conv1dLayer stem_;
  nn::ConformerEncoder encoder_;
  nn::Linear classifier_;
};

// ---- checkpoints (role-tagged) ----

void SaveAsrCheckpoint(const AsrModel& model, AsrRole role,
                       uint64_t vocab_hash, const std::string& path);

struct LoadedAsr {
  std::unique_ptr<AsrModel> model;
  AsrRole role = AsrRole::kFeedback;
  uint64_t vocab_hash = 0;
};

LoadedAsr LoadAsrCheckpoint(const std::string& path);
// Enforces the embedded role tag; a mismatch is an error.
LoadedAsr LoadAsrCheckpoint(const std::string& path, AsrRole expected_role);

// ---- pretraining ----

struct AsrPretrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 8;
  int max_epochs = 30;
  double target_train_wer = 0.05;
  double grad_clip = 5.0;
  double weight_decay = 0.01;
  uint64_t seed = 1;
};

struct AsrPretrainReport {
  bool converged = false;
  int epochs_run = 0;
  double final_train_wer = 1.0;
  std::vector<double> epoch_train_wer;
};

struct PretrainedAsr {
  std::unique_ptr<AsrModel> model;
  AsrPretrainReport report;
};

// Trains mel -> text with CTC on the given utterances until the training-set
// WER target is reached (or max_epochs expire; the report then says
// "did not converge" and `converged` is false).
PretrainedAsr PretrainAsr(data::Dataset* dataset,
                          const std::vector<size_t>& indices,
                          const AsrConfig& cfg,
                          const AsrPretrainConfig& train_cfg);

// Corpus WER of greedy decodes of the ground-truth mels.
double AsrTrainWer(AsrModel* model, data::Dataset* dataset,
                   const std::vector<size_t>& indices);

}  // namespace l2s::asr

#endif  // LIP2SPEECH_ASR_HPP_
