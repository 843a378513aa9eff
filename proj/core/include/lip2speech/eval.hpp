// lip2speech/eval.hpp
//
// Intelligibility and content-accuracy metrics (STOI, ESTOI, WER) and the
// corpus-level evaluation harness: synthesize from full video, vocode with
// Griffin-Lim, score against the ground-truth waveform, and decode the
// predicted mel with the evaluation ASR for WER.

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

#ifndef LIP2SPEECH_EVAL_HPP_
#define LIP2SPEECH_EVAL_HPP_

#include <optional>
#include <string>
#include <vector>

#include "lip2speech/asr.hpp"
#include "lip2speech/data.hpp"
#include "lip2speech/dsp.hpp"
#include "lip2speech/model.hpp"

namespace l2s::eval {

// Rational-ratio resampling with a Hann-windowed sinc kernel.
dsp::Waveform Resample(const dsp::Waveform& in, int out_rate);

// Short-time objective intelligibility: resample to 10 kHz, drop frames more
// than 40 dB below the loudest reference frame, split into 15 one-third-
// octave bands from 150 Hz, and average clipped envelope correlations over
// 384 ms segments. Throws "too short for STOI" when fewer than one segment
// survives silence removal.
double Stoi(const dsp::Waveform& ref, const dsp::Waveform& deg);

// Extended STOI: spectral and temporal normalization of whole band-by-time
// segments, no clipping.
double Estoi(const dsp::Waveform& ref, const dsp::Waveform& deg);

struct WerCount {
  int64_t errors = 0;
  int64_t ref_words = 0;
  double Rate() const {
    return static_cast<double>(errors) / static_cast<double>(ref_words);
  }
};

// Word-level Levenshtein distance at uniform costs, case-folded. The rate
// may exceed 1 under insertions. Empty reference is an error.
WerCount Wer(const std::string& ref_text, const std::string& hyp_text);

struct UtteranceMetrics {
  std::string id;
  double stoi = 0.0;
  double estoi = 0.0;
  std::optional<double> pesq;  // only with an external adapter configured
  int64_t wer_errors = 0;
  int64_t ref_words = 0;
};

struct MetricReport {
  std::vector<UtteranceMetrics> rows;
  double mean_stoi = 0.0;
  double mean_estoi = 0.0;
  double corpus_wer = 0.0;  // sum(errors) / sum(ref_words)

  void Finalize();
  std::string ToCsv() const;   // columns: id,stoi,estoi,pesq,wer_errors,ref_words
  std::string ToJson() const;
  void Write(const std::string& csv_path, const std::string& json_path) const;
};

struct EvaluateOptions {
  int griffin_lim_iters = 60;
  uint64_t seed = 0;
  // Score the ground-truth mels instead of model predictions (oracle run;
  // its corpus WER equals the evaluation ASR's own training WER).
  bool oracle_mels = false;
  double speaker_ref_seconds = 0.2;
  // External PESQ adapter: invoked as "<cmd> <ref.wav> <deg.wav>", expected
  // to print a single float. Empty disables the column.
  std::string pesq_command;
  std::string work_dir;  // scratch space for the adapter
};

MetricReport EvaluateCorpus(const model::Lip2SpeechModel& model,
                            const asr::AsrModel& eval_asr,
                            data::Dataset* dataset,
                            const std::vector<size_t>& indices,
                            const EvaluateOptions& opts);

}  // namespace l2s::eval

#endif  // LIP2SPEECH_EVAL_HPP_
