// core/src/objective.cpp

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

#include "lip2speech/objective.hpp"

#include "json.hpp"

using nlohmann::json;

namespace l2s::objective {

bool ScheduleState::BeginStep(int epoch, int64_t step) {
  if (!enabled_ && epoch >= gate_.fallback_epoch) {
    enabled_ = true;
  }
  if (enabled_ && flip_step_ < 0) flip_step_ = step;
  return enabled_;
}

void ScheduleState::EndStep(double l_rec, int64_t step) {
  (void)step;
  if (!ema_init_) {
    ema_ = l_rec;
    ema_init_ = true;
  } else {
    ema_ = gate_.ema_decay * ema_ + (1.0 - gate_.ema_decay) * l_rec;
  }
  if (!enabled_ && ema_ < gate_.threshold) {
    enabled_ = true;  // takes effect at the next BeginStep
  }
}

std::string ScheduleState::ToJson() const {
  json j;
  j["enabled"] = enabled_;
  j["ema_init"] = ema_init_;
  j["ema"] = ema_;
  j["flip_step"] = flip_step_;
  return j.dump();
}

ScheduleState ScheduleState::FromJson(const std::string& text,
                                      GateConfig gate) {
  json j = json::parse(text);
  ScheduleState s(gate);
  s.enabled_ = j.at("enabled").get<bool>();
  s.ema_init_ = j.at("ema_init").get<bool>();
  s.ema_ = j.at("ema").get<double>();
  s.flip_step_ = j.at("flip_step").get<int64_t>();
  return s;
}

double CtcLoss(const Mat& posteriors, const std::vector<int>& labels,
               int blank) {
  return nn::CtcLossValue(posteriors, labels, blank);
}

double AsrContentLoss(const Mat& z, const Mat& z_hat) {
  Require(z.rows() == z_hat.rows() && z.cols() == z_hat.cols(),
          "asr content loss: shape mismatch");
  return (z - z_hat).squaredNorm() / static_cast<double>(z.size());
}

double ReconstructionLoss(const Mat& y_hat, const Mat& y) {
  Require(y.rows() == y_hat.rows() && y.cols() == y_hat.cols(),
          "reconstruction loss: shape mismatch");
  return (y_hat - y).cwiseAbs().sum() / static_cast<double>(y.size());
}

LossBundle TotalLoss(double l_ctc, double l_asr, double l_rec,
                     const LossWeights& w, bool asr_enabled) {
  w.Validate();
  Require(IsFinite(l_ctc) && IsFinite(l_asr) && IsFinite(l_rec),
          "total loss: component losses must be finite");
  LossBundle b;
  b.l_ctc = l_ctc;
  b.l_asr = l_asr;
  b.l_rec = l_rec;
  b.lambda_ctc = w.lambda_ctc;
  b.lambda_asr_eff = asr_enabled ? w.lambda_asr : 0.0;
  b.lambda_rec = w.lambda_rec;
  // Same left-to-right fold as nn::WeightedSum.
  double total = 0.0;
  total += b.lambda_ctc * l_ctc;
  total += b.lambda_asr_eff * l_asr;
  total += b.lambda_rec * l_rec;
  b.l_tot = total;
  return b;
}

nn::Var CtcLossNode(const nn::Var& logits, const std::vector<int>& labels,
                    int blank) {
  return nn::CtcLoss(logits, labels, blank);
}

nn::Var AsrContentLossNode(const nn::Var& z_hat, const nn::Var& z) {
  return nn::MseLoss(z_hat, nn::Detach(z));
}

nn::Var ReconstructionLossNode(const nn::Var& y_hat, const Mat& y) {
  return nn::L1Loss(y_hat, y);
}

nn::Var TotalLossNode(const nn::Var& l_ctc, const nn::Var& l_asr_or_null,
                      const nn::Var& l_rec, const LossWeights& w,
                      bool asr_enabled) {
  w.Validate();
  std::vector<nn::Var> terms{l_ctc};
  std::vector<double> weights{w.lambda_ctc};
  if (l_asr_or_null) {
    terms.push_back(l_asr_or_null);
    weights.push_back(asr_enabled ? w.lambda_asr : 0.0);
  }
  terms.push_back(l_rec);
  weights.push_back(w.lambda_rec);
  return nn::WeightedSum(terms, weights);
}

}  // namespace l2s::objective
