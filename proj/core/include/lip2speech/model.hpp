// lip2speech/model.hpp
//
// The trainable Lip2Speech network: 3D-conv residual visual frontend,
// conformer encoder, CTC head, reference-clip speaker encoder, and the
// 1D-conv speech synthesizer that emits r mel frames per video frame.

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

#ifndef LIP2SPEECH_MODEL_HPP_
#define LIP2SPEECH_MODEL_HPP_

#include <memory>
#include <string>
#include <vector>

#include "lip2speech/data.hpp"
#include "lip2speech/dsp.hpp"
#include "lip2speech/layers.hpp"
#include "lip2speech/nn.hpp"

namespace l2s::model {

struct FrontendStage {
  int channels = 16;
  int stride = 2;
  int blocks = 1;
};

struct FrontendConfig {
  int stem_channels = 8;
  int stem_t_kernel = 5;   // temporal kernel, stride 1, zero-padded
  int stem_kernel = 7;
  int stem_stride = 4;
  int pool_after_stem = 1;  // average-pool kernel; 1 disables
  std::vector<FrontendStage> stages = {{16, 2, 1}, {32, 2, 1}};
};

struct ModelConfig {
  int input_size = 112;      // H = W after preprocessing
  int mel_channels = 80;     // K
  int frames_per_video_frame = 4;  // r
  int embed_dim = 64;        // D
  int speaker_dim = 64;      // E
  double speaker_ref_seconds = 0.2;
  int vocab_size = 0;        // N, including the blank

  FrontendConfig frontend;
  nn::ConformerConfig encoder;  // toy: 2 layers, 2 heads, kernel 7

  std::vector<int> synthesizer_channels = {256, 128};
  int synthesizer_out = 320;  // must equal K * r
  int synthesizer_kernel = 7;
  std::vector<int> speaker_channels = {32, 64};
  int speaker_kernel = 7;

  void Validate() const;
  std::string ToJson() const;
  static ModelConfig FromJson(const std::string& text);

  // Paper-scale profile: ResNet18-like frontend widths, 12-layer 8-head
  // conformer with kernel 31, D = 256, synthesizer 256/128/320, speaker
  // encoder 128/256/256.
  static ModelConfig FullScale();
  // CPU-minutes profile used by the tests.
  static ModelConfig Toy();
};

class Lip2SpeechModel {
 public:
  Lip2SpeechModel(const ModelConfig& cfg, uint64_t seed);

  // Per-frame features from the frame stack (T x H*W in [0,1]); output T x D.
  nn::Var VisualFrontend(const Mat& clip) const;
  // Conformer over frontend features; stride-free, output T x D.
  nn::Var ConformerEncode(const nn::Var& feats) const;
  // F = encoder(frontend(X)).
  nn::Var Encode(const Mat& clip) const;

  // Affine map to class logits (T x N); softmax of this is the posterior.
  nn::Var CtcLogits(const nn::Var& f) const;
  nn::Var TokenPosteriors(const nn::Var& f) const;

  // Speaker embedding (1 x E) from a reference mel (frames x K).
  nn::Var SpeakerEncodeMel(const Mat& ref_mel) const;
  // Convenience: validates the reference duration then mel-transforms it.
  nn::Var SpeakerEncode(const dsp::Waveform& ref, const dsp::StftConfig& stft,
                        const dsp::MelConfig& mel) const;

  // (T x D, 1 x E) -> (r*T x K) predicted mel.
  nn::Var SynthesizeMel(const nn::Var& f, const nn::Var& speaker) const;

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

 private:
  struct ResidualBlock {
    nn::Conv2dLayer conv1, conv2;
    nn::Conv2dLayer shortcut;  // 1x1 when shape changes
    bool has_shortcut = false;
    int stride = 1;
  };

  ModelConfig cfg_;
  nn::ParamStore params_;

  nn::Conv3dStemLayer stem_;
  std::vector<ResidualBlock> blocks_;
  nn::Linear frontend_proj_;
  nn::ConformerEncoder encoder_;
  nn::Linear ctc_head_;
  std::vector<nn::Conv1dLayer> speaker_convs_;
  std::vector<nn::Conv1dLayer> synth_convs_;
};

// ---- checkpoints ----

// Saves parameters plus a header carrying kind, config JSON, and the
// vocabulary hash; loading rebuilds the model and verifies compatibility.
void SaveCheckpoint(const Lip2SpeechModel& model, uint64_t vocab_hash,
                    const std::string& path);

struct LoadedModel {
  std::unique_ptr<Lip2SpeechModel> model;
  uint64_t vocab_hash = 0;
};

LoadedModel LoadCheckpoint(const std::string& path);

}  // namespace l2s::model

#endif  // LIP2SPEECH_MODEL_HPP_
