// lip2speech/objective.hpp
//
// The three supervision losses and their scheduled weighted combination:
// CTC on encoder features, squared-error matching of frozen-ASR content
// features, and L1 mel reconstruction. The ASR term stays disabled for
// early epochs and switches on permanently once the reconstruction loss has
// fallen below a threshold (EMA) or a fallback epoch is reached.

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

#ifndef LIP2SPEECH_OBJECTIVE_HPP_
#define LIP2SPEECH_OBJECTIVE_HPP_

#include <string>
#include <vector>

#include "lip2speech/common.hpp"
#include "lip2speech/mat.hpp"
#include "lip2speech/nn.hpp"

namespace l2s::objective {

struct LossWeights {
  double lambda_ctc = 1.0;
  double lambda_asr = 1.0;
  double lambda_rec = 100.0;

  void Validate() const {
    Require(lambda_ctc >= 0 && lambda_asr >= 0 && lambda_rec >= 0,
            "loss weights must be non-negative");
  }
};

struct GateConfig {
  double ema_decay = 0.98;
  double threshold = 0.3;
  int fallback_epoch = 10;
};

// Owns the warm-up gate for the ASR loss. Once enabled it never disables.
class ScheduleState {
 public:
  explicit ScheduleState(GateConfig gate = {}) : gate_(gate) {}

  // Called at the top of each step; enables the gate when the fallback epoch
  // is reached. Returns whether the ASR loss is active for this step.
  bool BeginStep(int epoch, int64_t step);
  // Called after the step with its reconstruction loss; updates the EMA and
  // may enable the gate for subsequent steps.
  void EndStep(double l_rec, int64_t step);

  bool asr_loss_enabled() const { return enabled_; }
  double rec_loss_ema() const { return ema_; }
  // First step that ran with the ASR loss active; -1 while the gate is off.
  int64_t flip_step() const { return flip_step_; }
  const GateConfig& gate() const { return gate_; }

  std::string ToJson() const;
  static ScheduleState FromJson(const std::string& text, GateConfig gate);

 private:
  GateConfig gate_;
  bool enabled_ = false;
  bool ema_init_ = false;
  double ema_ = 0.0;
  int64_t flip_step_ = -1;
};

struct LossBundle {
  double l_ctc = 0.0;
  double l_asr = 0.0;
  double l_rec = 0.0;
  double l_tot = 0.0;
  double lambda_ctc = 0.0;
  double lambda_asr_eff = 0.0;
  double lambda_rec = 0.0;
};

// ---- pure (non-graph) loss values ----

// Negative log-likelihood over all blank-augmented alignments; posteriors
// rows must be normalized. Throws on an infeasible target length.
double CtcLoss(const Mat& posteriors, const std::vector<int>& labels,
               int blank = 0);

// Mean squared difference (Eq. for the ASR feature match, mean reduction).
double AsrContentLoss(const Mat& z, const Mat& z_hat);

// Mean absolute difference.
double ReconstructionLoss(const Mat& y_hat, const Mat& y);

// l_tot = lc*ctc + la_eff*asr + lr*rec with la_eff = 0 while the gate is
// off. The fold order matches TotalLossNode exactly.
LossBundle TotalLoss(double l_ctc, double l_asr, double l_rec,
                     const LossWeights& w, bool asr_enabled);

// ---- graph builders for training ----

nn::Var CtcLossNode(const nn::Var& logits, const std::vector<int>& labels,
                    int blank = 0);
// z (ground-truth features) is detached inside; gradient reaches z_hat only.
nn::Var AsrContentLossNode(const nn::Var& z_hat, const nn::Var& z);
nn::Var ReconstructionLossNode(const nn::Var& y_hat, const Mat& y);
nn::Var TotalLossNode(const nn::Var& l_ctc, const nn::Var& l_asr_or_null,
                      const nn::Var& l_rec, const LossWeights& w,
                      bool asr_enabled);

}  // namespace l2s::objective

#endif  // LIP2SPEECH_OBJECTIVE_HPP_
