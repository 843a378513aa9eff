// core/src/train.cpp

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

#include "lip2speech/train.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lip2speech/tensor_io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace l2s::train {

void TrainConfig::Validate(int r) const {
  Require(learning_rate > 0, "train: learning rate must be positive");
  Require(batch_size >= 1, "train: batch size must be >= 1");
  Require(max_epochs >= 0, "train: max_epochs must be >= 0");
  Require(mel_window >= r && mel_window % r == 0,
          "train: mel_window must be a positive multiple of r");
  weights.Validate();
}

WindowSelection SelectMelWindow(int64_t t_frames, int window, int r,
                                Rng* rng) {
  WindowSelection sel;
  const int64_t w_frames = window / r;
  if (t_frames * r <= window) {
    sel.f_start = 0;
    sel.f_len = t_frames;
  } else {
    sel.f_start =
        static_cast<int64_t>(rng->UniformInt(
            static_cast<uint64_t>(t_frames - w_frames) + 1));
    sel.f_len = w_frames;
  }
  sel.mel_start = sel.f_start * r;
  sel.mel_len = sel.f_len * r;
  return sel;
}

Trainer::Trainer(model::Lip2SpeechModel* model, asr::AsrModel* feedback_asr,
                 data::Dataset* dataset, const TrainConfig& cfg)
    : model_(model), asr_(feedback_asr), dataset_(dataset), cfg_(cfg),
      schedule_(cfg.gate) {
  Require(asr_ != nullptr, "trainer: feedback ASR checkpoint is required");
  Require(asr_->frozen(), "trainer: feedback ASR must be frozen");
  r_ = model_->config().frames_per_video_frame;
  cfg_.Validate(r_);
  optimizer_.lr = cfg_.learning_rate;
  optimizer_.beta1 = cfg_.beta1;
  optimizer_.beta2 = cfg_.beta2;
  optimizer_.weight_decay = cfg_.weight_decay;
  Require(model_->config().vocab_size == dataset->vocab().NumClasses(),
          "trainer: model vocabulary size does not match the corpus");
  Require(asr_->config().vocab_size == dataset->vocab().NumClasses(),
          "trainer: asr vocabulary size does not match the corpus");
}

StepResult Trainer::TrainStep(const std::vector<size_t>& batch_indices,
                              int epoch, int64_t step) {
  Require(!batch_indices.empty(), "train step: empty batch");
  const bool asr_on = schedule_.BeginStep(epoch, step);
  const double inv_b = 1.0 / static_cast<double>(batch_indices.size());

  std::vector<nn::Var> ctc_terms, rec_terms, asr_terms;
  std::vector<double> mean_w(batch_indices.size(), inv_b);

  for (size_t i = 0; i < batch_indices.size(); ++i) {
    const data::Utterance& utt = dataset_->Get(batch_indices[i]);
    const int64_t t_frames = utt.clip.NumFrames();

    // Per-sample deterministic randomness for augmentation, the speaker
    // reference, and the window draw.
    Rng rng(cfg_.seed, 0x73746570ull);
    rng = rng.Fork(static_cast<uint64_t>(epoch) * 0x10001ull +
                   static_cast<uint64_t>(step))
              .Fork(static_cast<uint64_t>(i));

    data::VideoClip clip = utt.clip;
    if (cfg_.erase_prob > 0.0) data::RandomErase(&clip, &rng, cfg_.erase_prob);
    if (cfg_.time_mask_frac > 0.0) {
      data::TimeMask(&clip, &rng, cfg_.time_mask_frac);
    }

    nn::Var f = model_->Encode(clip.frames);

    // Feature-level content supervision on the whole utterance.
    ctc_terms.push_back(objective::CtcLossNode(model_->CtcLogits(f),
                                               utt.transcript.tokens));

    WindowSelection sel = SelectMelWindow(t_frames, cfg_.mel_window, r_, &rng);
    nn::Var f_sub = sel.f_len == t_frames
                        ? f
                        : nn::SliceRows(f, sel.f_start, sel.f_len);
    Mat y_sub = utt.mel.values.middleRows(sel.mel_start, sel.mel_len);

    dsp::Waveform ref =
        data::SampleSpeakerReference(utt, cfg_.speaker_ref_seconds, &rng);
    nn::Var spk = model_->SpeakerEncode(ref, utt.mel.stft, utt.mel.mel);
    nn::Var y_hat = model_->SynthesizeMel(f_sub, spk);

    rec_terms.push_back(objective::ReconstructionLossNode(y_hat, y_sub));

    if (asr_on && cfg_.weights.lambda_asr > 0.0) {
      nn::Var z = asr_->Features(y_sub);
      nn::Var z_hat = asr_->Features(y_hat);
      asr_terms.push_back(objective::AsrContentLossNode(z_hat, z));
    }
  }

  nn::Var l_ctc = nn::WeightedSum(ctc_terms, mean_w);
  nn::Var l_rec = nn::WeightedSum(rec_terms, mean_w);
  nn::Var l_asr =
      asr_terms.empty() ? nn::Var() : nn::WeightedSum(asr_terms, mean_w);
  nn::Var l_tot =
      objective::TotalLossNode(l_ctc, l_asr, l_rec, cfg_.weights, asr_on);

  if (!IsFinite(l_tot->Scalar())) {
    std::string ids;
    for (size_t idx : batch_indices) {
      ids += dataset_->corpus().entries[idx].id + " ";
    }
    throw InternalError("non-finite loss at step " + std::to_string(step) +
                        "; batch ids: " + ids);
  }

  model_->params().ZeroGrad();
  nn::Backward(l_tot);

  const std::vector<nn::Var>& params = model_->params().params();
  StepResult result;
  result.grad_norm = nn::GlobalGradNorm(params);
  if (result.grad_norm > cfg_.grad_clip && cfg_.grad_clip > 0.0) {
    nn::ScaleGrads(params, cfg_.grad_clip / result.grad_norm);
  }
  optimizer_.Step(params);

  result.bundle = objective::TotalLoss(
      l_ctc->Scalar(), l_asr ? l_asr->Scalar() : 0.0, l_rec->Scalar(),
      cfg_.weights, asr_on);
  Check(result.bundle.l_tot == l_tot->Scalar(),
        "loss bundle disagrees with the graph total");

  schedule_.EndStep(result.bundle.l_rec, step);
  step_ = step + 1;
  return result;
}

// ---------------------------------------------------------------------------

void SaveTrainCheckpoint(const model::Lip2SpeechModel& model,
                         const nn::AdamW& opt,
                         const objective::ScheduleState& schedule, int epoch,
                         int64_t step, uint64_t vocab_hash,
                         const std::string& path) {
  io::TensorContainer c;
  model.params().Export(&c);
  opt.Export(&c);
  json meta;
  meta["kind"] = "lip2speech";
  meta["config"] = json::parse(model.config().ToJson());
  meta["vocab_hash"] = vocab_hash;
  meta["train_state"] = {{"epoch", epoch},
                         {"step", step},
                         {"schedule", json::parse(schedule.ToJson())}};
  c.set_meta_json(meta.dump());
  c.Save(path);
}

TrainState LoadTrainCheckpoint(const std::string& path,
                               model::Lip2SpeechModel* model, nn::AdamW* opt) {
  io::TensorContainer c = io::TensorContainer::Load(path);
  json meta = json::parse(c.meta_json());
  Require(meta.value("kind", "") == "lip2speech",
          "not a lip2speech training checkpoint: " + path);
  Require(meta.contains("train_state"),
          "checkpoint has no training state (cannot resume): " + path);
  Require(model::ModelConfig::FromJson(meta.at("config").dump()).ToJson() ==
              model->config().ToJson(),
          "resume: model config mismatch");
  model->params().Import(c);
  opt->Import(c, model->params().params());
  TrainState st;
  st.epoch = meta["train_state"].at("epoch").get<int>();
  st.step = meta["train_state"].at("step").get<int64_t>();
  st.schedule_json = meta["train_state"].at("schedule").dump();
  return st;
}

FitResult Fit(model::Lip2SpeechModel* model, asr::AsrModel* feedback_asr,
              data::Dataset* dataset, const std::vector<size_t>& train_indices,
              const TrainConfig& cfg, const std::string& out_dir,
              const std::string& resume_path) {
  Require(!train_indices.empty(), "fit: empty training set");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  Require(!ec, "fit: cannot create output directory " + out_dir);

  Trainer trainer(model, feedback_asr, dataset, cfg);
  const uint64_t vocab_hash = dataset->vocab().Hash();

  int start_epoch = 0;
  int64_t step = 0;
  if (!resume_path.empty()) {
    TrainState st =
        LoadTrainCheckpoint(resume_path, model, &trainer.optimizer());
    *trainer.mutable_schedule() =
        objective::ScheduleState::FromJson(st.schedule_json, cfg.gate);
    start_epoch = st.epoch;
    step = st.step;
    trainer.set_step_count(step);
  }

  FitResult result;
  const std::string metrics_path =
      (fs::path(out_dir) / "metrics.csv").string();
  std::ofstream metrics(metrics_path, std::ios::binary);
  Require(metrics.good(), "fit: cannot write metrics file " + metrics_path);
  metrics << "# lip2speech metrics lambda_ctc=" << FormatDouble(cfg.weights.lambda_ctc)
          << " lambda_asr=" << FormatDouble(cfg.weights.lambda_asr)
          << " lambda_rec=" << FormatDouble(cfg.weights.lambda_rec)
          << " lr=" << FormatDouble(cfg.learning_rate)
          << " batch_size=" << cfg.batch_size << " seed=" << cfg.seed
          << " mel_window=" << cfg.mel_window << "\n";
  metrics << "step,epoch,l_ctc,l_asr,l_rec,l_tot,lambda_asr_eff,grad_norm\n";

  auto ckpt_path = [&](int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ckpt_epoch_%04d.l2st", epoch);
    return (fs::path(out_dir) / buf).string();
  };

  if (resume_path.empty()) {
    SaveTrainCheckpoint(*model, trainer.optimizer(), trainer.schedule(),
                        /*epoch=*/0, /*step=*/0, vocab_hash, ckpt_path(0));
    result.checkpoint_paths.push_back(ckpt_path(0));
  }

  for (int epoch = start_epoch; epoch < cfg.max_epochs; ++epoch) {
    std::vector<size_t> order = train_indices;
    Rng shuffle_rng(cfg.seed, 0x65706f63ull + static_cast<uint64_t>(epoch));
    Shuffle(&order, &shuffle_rng);

    for (size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const size_t b_end =
          std::min(order.size(), b + static_cast<size_t>(cfg.batch_size));
      std::vector<size_t> batch(order.begin() + b, order.begin() + b_end);
      StepResult r = trainer.TrainStep(batch, epoch, step);
      metrics << step << "," << epoch << "," << FormatDouble(r.bundle.l_ctc)
              << "," << FormatDouble(r.bundle.l_asr) << ","
              << FormatDouble(r.bundle.l_rec) << ","
              << FormatDouble(r.bundle.l_tot) << ","
              << FormatDouble(r.bundle.lambda_asr_eff) << ","
              << FormatDouble(r.grad_norm) << "\n";
      ++step;
    }
    SaveTrainCheckpoint(*model, trainer.optimizer(), trainer.schedule(),
                        epoch + 1, step, vocab_hash, ckpt_path(epoch + 1));
    result.checkpoint_paths.push_back(ckpt_path(epoch + 1));
  }
  metrics.flush();
  Require(metrics.good(), "fit: metrics write failed");

  result.metrics_path = metrics_path;
  result.flip_step = trainer.schedule().flip_step();
  result.steps_run = step;

  json summary;
  summary["flip_step"] = result.flip_step;
  summary["steps_run"] = step;
  summary["rec_loss_ema"] = trainer.schedule().rec_loss_ema();
  std::ofstream sum((fs::path(out_dir) / "run_summary.json").string(),
                    std::ios::binary);
  sum << summary.dump(2) << "\n";
  return result;
}

}  // namespace l2s::train
