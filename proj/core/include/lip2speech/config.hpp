// lip2speech/config.hpp
//
// RunConfig: the nested JSON document driving every CLI command. Unknown
// keys are rejected; the fully resolved config is archived verbatim beside
// each run's outputs.

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

#ifndef LIP2SPEECH_CONFIG_HPP_
#define LIP2SPEECH_CONFIG_HPP_

#include <string>

#include "lip2speech/asr.hpp"
#include "lip2speech/data.hpp"
#include "lip2speech/dsp.hpp"
#include "lip2speech/model.hpp"
#include "lip2speech/train.hpp"

namespace l2s::config {

struct RunConfig {
  uint64_t seed = 0;

  struct DataSection {
    std::string corpus_dir = "corpus";
    double val_fraction = 0.15;
    uint64_t split_seed = 0;
    std::string tokenizer_mode = "char";  // "char" | "word"
    int vocab_size = 4000;
    data::SyntheticCorpusConfig gen;
  } data;

  struct DspSection {
    dsp::StftConfig stft;
    dsp::MelConfig mel;
  } dsp;

  // "toy" | "full"; a few width overrides on top of the profile.
  struct ModelSection {
    std::string profile = "toy";
    model::ModelConfig Resolve() const;
    int embed_dim = -1;    // -1 keeps the profile value
    int speaker_dim = -1;
    double speaker_ref_seconds = -1.0;
    int encoder_layers = -1;
    int encoder_heads = -1;
    int encoder_kernel = -1;
  } model;

  train::TrainConfig train;  // weights/gate filled from the objective section

  struct AsrSection {
    int dim = 64;
    int layers = 2;
    int heads = 2;
    int kernel = 7;
    int ff_mult = 4;
    int stem_kernel = 3;
    int subsample = 2;
    asr::AsrPretrainConfig pretrain;
    asr::AsrConfig Resolve(int mel_channels) const;
  } asr;

  struct EvalSection {
    int griffin_lim_iters = 60;
    std::string pesq_command;
  } eval;

  std::string ToJson() const;  // fully resolved, for archiving
  static RunConfig FromJson(const std::string& text);
  static RunConfig Load(const std::string& path);
  void Archive(const std::string& dir) const;  // writes <dir>/config.json
};

}  // namespace l2s::config

#endif  // LIP2SPEECH_CONFIG_HPP_
