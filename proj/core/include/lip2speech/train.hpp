// lip2speech/train.hpp
//
// Training orchestration: the optimization loop, mel-window subsampling,
// ASR-loss scheduling, per-epoch checkpointing, and bit-exact resume.
//
// CTC is computed on the full-length encoder output before the mel window is
// drawn (text alignment needs the whole utterance); the reconstruction and
// ASR losses see only the selected window.

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

#ifndef LIP2SPEECH_TRAIN_HPP_
#define LIP2SPEECH_TRAIN_HPP_

#include <string>
#include <vector>

#include "lip2speech/asr.hpp"
#include "lip2speech/data.hpp"
#include "lip2speech/model.hpp"
#include "lip2speech/objective.hpp"

namespace l2s::train {

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  int batch_size = 8;      // paper-scale default is 16
  int max_epochs = 10;
  uint64_t seed = 0;
  int mel_window = 200;    // frames; must be divisible by r
  double grad_clip = 5.0;
  double speaker_ref_seconds = 0.2;
  double erase_prob = 0.0;      // spatial-erase augmentation gate
  double time_mask_frac = 0.0;  // max masked fraction; 0 disables
  objective::LossWeights weights;
  objective::GateConfig gate;

  void Validate(int r) const;
};

// Uniformly chosen aligned window: F rows [t0, t0 + window/r), mel rows
// [r*t0, r*t0 + window). Short utterances are returned whole.
struct WindowSelection {
  int64_t f_start = 0;
  int64_t f_len = 0;
  int64_t mel_start = 0;
  int64_t mel_len = 0;
};
WindowSelection SelectMelWindow(int64_t t_frames, int window, int r, Rng* rng);

struct StepResult {
  objective::LossBundle bundle;
  double grad_norm = 0.0;  // pre-clip global norm
};

class Trainer {
 public:
  // feedback_asr must be frozen; it is checked once here.
  Trainer(model::Lip2SpeechModel* model, asr::AsrModel* feedback_asr,
          data::Dataset* dataset, const TrainConfig& cfg);

  // One optimizer update over a batch of dataset indices. Augmentation,
  // speaker references, and the window draw derive from (seed, epoch, step).
  StepResult TrainStep(const std::vector<size_t>& batch_indices, int epoch,
                       int64_t step);

  const objective::ScheduleState& schedule() const { return schedule_; }
  objective::ScheduleState* mutable_schedule() { return &schedule_; }
  nn::AdamW& optimizer() { return optimizer_; }
  int64_t step_count() const { return step_; }
  void set_step_count(int64_t s) { step_ = s; }

 private:
  model::Lip2SpeechModel* model_;
  asr::AsrModel* asr_;
  data::Dataset* dataset_;
  TrainConfig cfg_;
  int r_ = 4;
  nn::AdamW optimizer_;
  objective::ScheduleState schedule_;
  int64_t step_ = 0;
};

struct FitResult {
  std::string metrics_path;
  std::vector<std::string> checkpoint_paths;
  int64_t flip_step = -1;  // first step with the ASR loss active
  int64_t steps_run = 0;
};

// Epoch loop with per-epoch checkpoints (epoch 0 = initial state) and a
// per-step metrics CSV:
//   step,epoch,l_ctc,l_asr,l_rec,l_tot,lambda_asr_eff,grad_norm
// `resume_path` restores parameters, optimizer moments, schedule, and the
// epoch counter for a bit-identical continuation.
FitResult Fit(model::Lip2SpeechModel* model, asr::AsrModel* feedback_asr,
              data::Dataset* dataset, const std::vector<size_t>& train_indices,
              const TrainConfig& cfg, const std::string& out_dir,
              const std::string& resume_path = "");

// Training-state checkpoint: model parameters + optimizer moments + schedule
// + counters, loadable either as a plain model checkpoint or for resume.
void SaveTrainCheckpoint(const model::Lip2SpeechModel& model,
                         const nn::AdamW& opt,
                         const objective::ScheduleState& schedule, int epoch,
                         int64_t step, uint64_t vocab_hash,
                         const std::string& path);

struct TrainState {
  int epoch = 0;
  int64_t step = 0;
  std::string schedule_json;
};

TrainState LoadTrainCheckpoint(const std::string& path,
                               model::Lip2SpeechModel* model, nn::AdamW* opt);

}  // namespace l2s::train

#endif  // LIP2SPEECH_TRAIN_HPP_
