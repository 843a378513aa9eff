// core/src/model.cpp

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

#include "lip2speech/model.hpp"

#include <cmath>

#include "lip2speech/tensor_io.hpp"
#include "json.hpp"

using nlohmann::json;

namespace l2s::model {

void ModelConfig::Validate() const {
  Require(input_size >= 8, "model: input size too small");
  Require(mel_channels >= 1 && frames_per_video_frame >= 1,
          "model: mel geometry invalid");
  Require(embed_dim >= 1 && speaker_dim >= 1, "model: widths must be >= 1");
  Require(vocab_size >= 2, "model: vocabulary must have at least two classes");
  Require(synthesizer_out == mel_channels * frames_per_video_frame,
          "model: synthesizer output width must equal K * r");
  Require(!frontend.stages.empty(), "model: frontend needs stages");
  Require(encoder.layers >= 1 && encoder.heads >= 1,
          "model: encoder config invalid");
  Require(embed_dim % encoder.heads == 0,
          "model: embed dim must divide among heads");
  // The stride plan must leave at least one spatial position.
  int size = input_size;
  size = (size + 2 * ((frontend.stem_kernel - 1) / 2) - frontend.stem_kernel) /
             frontend.stem_stride + 1;
  if (frontend.pool_after_stem > 1) {
    Require(size % frontend.pool_after_stem == 0,
            "model: pool size must divide the stem output");
    size /= frontend.pool_after_stem;
  }
  for (const FrontendStage& st : frontend.stages) {
    size = (size + 2 - 3) / st.stride + 1;
    Require(size >= 1, "model: spatial size too small for the stride plan");
  }
}

namespace {

json FrontendToJson(const FrontendConfig& f) {
  json stages = json::array();
  for (const FrontendStage& s : f.stages) {
    stages.push_back({{"channels", s.channels},
                      {"stride", s.stride},
                      {"blocks", s.blocks}});
  }
  return json{{"stem_channels", f.stem_channels},
              {"stem_t_kernel", f.stem_t_kernel},
              {"stem_kernel", f.stem_kernel},
              {"stem_stride", f.stem_stride},
              {"pool_after_stem", f.pool_after_stem},
              {"stages", stages}};
}

FrontendConfig FrontendFromJson(const json& j) {
  FrontendConfig f;
  f.stem_channels = j.at("stem_channels").get<int>();
  f.stem_t_kernel = j.at("stem_t_kernel").get<int>();
  f.stem_kernel = j.at("stem_kernel").get<int>();
  f.stem_stride = j.at("stem_stride").get<int>();
  f.pool_after_stem = j.at("pool_after_stem").get<int>();
  f.stages.clear();
  for (const json& s : j.at("stages")) {
    f.stages.push_back({s.at("channels").get<int>(), s.at("stride").get<int>(),
                        s.at("blocks").get<int>()});
  }
  return f;
}

}  // namespace

std::string ModelConfig::ToJson() const {
  json j;
  j["input_size"] = input_size;
  j["mel_channels"] = mel_channels;
  j["frames_per_video_frame"] = frames_per_video_frame;
  j["embed_dim"] = embed_dim;
  j["speaker_dim"] = speaker_dim;
  j["speaker_ref_seconds"] = speaker_ref_seconds;
  j["vocab_size"] = vocab_size;
  j["frontend"] = FrontendToJson(frontend);
  j["encoder"] = {{"layers", encoder.layers},
                  {"heads", encoder.heads},
                  {"kernel", encoder.kernel},
                  {"ff_mult", encoder.ff_mult},
                  {"dropout", encoder.dropout}};
  j["synthesizer_channels"] = synthesizer_channels;
  j["synthesizer_out"] = synthesizer_out;
  j["synthesizer_kernel"] = synthesizer_kernel;
  j["speaker_channels"] = speaker_channels;
  j["speaker_kernel"] = speaker_kernel;
  return j.dump();
}

ModelConfig ModelConfig::FromJson(const std::string& text) {
  json j = json::parse(text);
  ModelConfig c;
  c.input_size = j.at("input_size").get<int>();
  c.mel_channels = j.at("mel_channels").get<int>();
  c.frames_per_video_frame = j.at("frames_per_video_frame").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.speaker_dim = j.at("speaker_dim").get<int>();
  c.speaker_ref_seconds = j.at("speaker_ref_seconds").get<double>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.frontend = FrontendFromJson(j.at("frontend"));
  const json& e = j.at("encoder");
  c.encoder.layers = e.at("layers").get<int>();
  c.encoder.heads = e.at("heads").get<int>();
  c.encoder.kernel = e.at("kernel").get<int>();
  c.encoder.ff_mult = e.at("ff_mult").get<int>();
  c.encoder.dropout = e.at("dropout").get<double>();
  c.synthesizer_channels = j.at("synthesizer_channels").get<std::vector<int>>();
  c.synthesizer_out = j.at("synthesizer_out").get<int>();
  c.synthesizer_kernel = j.at("synthesizer_kernel").get<int>();
  c.speaker_channels = j.at("speaker_channels").get<std::vector<int>>();
  c.speaker_kernel = j.at("speaker_kernel").get<int>();
  return c;
}

ModelConfig ModelConfig::FullScale() {
  ModelConfig c;
  c.embed_dim = 256;
  c.speaker_dim = 256;
  c.speaker_ref_seconds = 0.5;
  c.frontend.stem_channels = 64;
  c.frontend.stem_stride = 2;
  c.frontend.pool_after_stem = 2;
  c.frontend.stages = {{64, 1, 2}, {128, 2, 2}, {256, 2, 2}, {512, 2, 2}};
  c.encoder = {12, 8, 31, 4, 0.1};
  c.synthesizer_channels = {256, 128};
  c.speaker_channels = {128, 256};
  return c;
}

ModelConfig ModelConfig::Toy() { return ModelConfig{}; }

// ---------------------------------------------------------------------------

Lip2SpeechModel::Lip2SpeechModel(const ModelConfig& cfg, uint64_t seed)
    : cfg_(cfg) {
  cfg_.Validate();
  Rng rng(seed, 0x6d6f64656cull);

  const FrontendConfig& f = cfg_.frontend;
  stem_ = nn::Conv3dStemLayer(&params_, "frontend.stem", 1, f.stem_channels,
                              f.stem_t_kernel, f.stem_kernel, f.stem_stride,
                              (f.stem_kernel - 1) / 2, &rng);
  int in_ch = f.stem_channels;
  for (size_t si = 0; si < f.stages.size(); ++si) {
    const FrontendStage& st = f.stages[si];
    for (int b = 0; b < st.blocks; ++b) {
      const std::string name = "frontend.stage" + std::to_string(si) +
                               ".block" + std::to_string(b);
      ResidualBlock blk;
      blk.stride = b == 0 ? st.stride : 1;
      blk.conv1 = nn::Conv2dLayer(&params_, name + ".conv1", in_ch,
                                  st.channels, 3, blk.stride, 1, &rng);
      blk.conv2 = nn::Conv2dLayer(&params_, name + ".conv2", st.channels,
                                  st.channels, 3, 1, 1, &rng);
      blk.has_shortcut = blk.stride != 1 || in_ch != st.channels;
      if (blk.has_shortcut) {
        blk.shortcut = nn::Conv2dLayer(&params_, name + ".short", in_ch,
                                       st.channels, 1, blk.stride, 0, &rng);
      }
      blocks_.push_back(std::move(blk));
      in_ch = st.channels;
    }
  }
  frontend_proj_ =
      nn::Linear(&params_, "frontend.proj", in_ch, cfg_.embed_dim, &rng);
  encoder_ = nn::ConformerEncoder(&params_, "encoder", cfg_.embed_dim,
                                  cfg_.encoder, &rng);
  ctc_head_ =
      nn::Linear(&params_, "ctc_head", cfg_.embed_dim, cfg_.vocab_size, &rng);

  int spk_in = cfg_.mel_channels;
  for (size_t i = 0; i < cfg_.speaker_channels.size(); ++i) {
    speaker_convs_.emplace_back(&params_, "speaker.conv" + std::to_string(i),
                                spk_in, cfg_.speaker_channels[i],
                                cfg_.speaker_kernel, 1, &rng);
    spk_in = cfg_.speaker_channels[i];
  }
  speaker_convs_.emplace_back(
      &params_, "speaker.conv" + std::to_string(cfg_.speaker_channels.size()),
      spk_in, cfg_.speaker_dim, cfg_.speaker_kernel, 1, &rng);

  int synth_in = cfg_.embed_dim + cfg_.speaker_dim;
  for (size_t i = 0; i < cfg_.synthesizer_channels.size(); ++i) {
    synth_convs_.emplace_back(&params_, "synth.conv" + std::to_string(i),
                              synth_in, cfg_.synthesizer_channels[i],
                              cfg_.synthesizer_kernel, 1, &rng);
    synth_in = cfg_.synthesizer_channels[i];
  }
  synth_convs_.emplace_back(
      &params_, "synth.conv" + std::to_string(cfg_.synthesizer_channels.size()),
      synth_in, cfg_.synthesizer_out, cfg_.synthesizer_kernel, 1, &rng);
  // Start the synthesizer at silence so early training regresses from the
  // mel floor instead of arbitrary noise.
  synth_convs_.back().b->value.setConstant(std::log(1e-5));
}

nn::Var Lip2SpeechModel::VisualFrontend(const Mat& clip) const {
  Require(clip.cols() ==
              static_cast<int64_t>(cfg_.input_size) * cfg_.input_size,
          "frontend: expected " + std::to_string(cfg_.input_size) + "x" +
              std::to_string(cfg_.input_size) + " frames");
  Require(clip.rows() >= 1, "frontend: empty clip");

  nn::Var x = nn::Constant(clip);
  nn::ImageShape shape{1, cfg_.input_size, cfg_.input_size};
  nn::ImageShape next;
  x = stem_.Forward(x, shape, &next);
  shape = next;
  x = nn::Relu(x);
  if (cfg_.frontend.pool_after_stem > 1) {
    x = nn::AvgPool2d(x, shape, cfg_.frontend.pool_after_stem, &next);
    shape = next;
  }
  for (const ResidualBlock& blk : blocks_) {
    nn::ImageShape mid;
    nn::Var h = nn::Relu(blk.conv1.Forward(x, shape, &mid));
    h = blk.conv2.Forward(h, mid, &next);
    nn::Var skip = blk.has_shortcut ? blk.shortcut.Forward(x, shape, &mid) : x;
    x = nn::Relu(nn::Add(h, skip));
    shape = next;
  }
  x = nn::GlobalAvgPool2d(x, shape);
  return frontend_proj_.Forward(x);
}

nn::Var Lip2SpeechModel::ConformerEncode(const nn::Var& feats) const {
  return encoder_.Forward(feats);
}

nn::Var Lip2SpeechModel::Encode(const Mat& clip) const {
  return ConformerEncode(VisualFrontend(clip));
}

nn::Var Lip2SpeechModel::CtcLogits(const nn::Var& f) const {
  return ctc_head_.Forward(f);
}

nn::Var Lip2SpeechModel::TokenPosteriors(const nn::Var& f) const {
  return nn::SoftmaxRows(CtcLogits(f));
}

nn::Var Lip2SpeechModel::SpeakerEncodeMel(const Mat& ref_mel) const {
  Require(ref_mel.cols() == cfg_.mel_channels,
          "speaker encoder: mel channel mismatch");
  nn::Var x = nn::Constant(ref_mel);
  for (const nn::Conv1dLayer& conv : speaker_convs_) {
    x = nn::LeakyRelu(conv.Forward(x));
  }
  return nn::MeanRows(x);
}

nn::Var Lip2SpeechModel::SpeakerEncode(const dsp::Waveform& ref,
                                       const dsp::StftConfig& stft,
                                       const dsp::MelConfig& mel) const {
  const int64_t expect = std::lround(cfg_.speaker_ref_seconds * ref.sample_rate);
  Require(static_cast<int64_t>(ref.samples.size()) == expect,
          "speaker reference has wrong duration: expected " +
              std::to_string(expect) + " samples, got " +
              std::to_string(ref.samples.size()));
  dsp::MelSpectrogram m = dsp::ComputeMel(ref, stft, mel);
  return SpeakerEncodeMel(m.values);
}

nn::Var Lip2SpeechModel::SynthesizeMel(const nn::Var& f,
                                       const nn::Var& speaker) const {
  Require(f->Cols() == cfg_.embed_dim, "synthesizer: feature width mismatch");
  Require(speaker->Rows() == 1 && speaker->Cols() == cfg_.speaker_dim,
          "synthesizer: speaker embedding shape mismatch");
  nn::Var spk = nn::BroadcastRow(speaker, f->Rows());
  nn::Var x = nn::ConcatCols({f, spk});
  for (size_t i = 0; i + 1 < synth_convs_.size(); ++i) {
    x = nn::LeakyRelu(synth_convs_[i].Forward(x));
  }
  x = synth_convs_.back().Forward(x);
  return nn::ExpandFrames(x, cfg_.frames_per_video_frame);
}

// ---------------------------------------------------------------------------
// checkpoints

void SaveCheckpoint(const Lip2SpeechModel& model, uint64_t vocab_hash,
                    const std::string& path) {
  io::TensorContainer c;
  model.params().Export(&c);
  json meta;
  meta["kind"] = "lip2speech";
  meta["config"] = json::parse(model.config().ToJson());
  meta["vocab_hash"] = vocab_hash;
  c.set_meta_json(meta.dump());
  c.Save(path);
}

LoadedModel LoadCheckpoint(const std::string& path) {
  io::TensorContainer c = io::TensorContainer::Load(path);
  json meta = json::parse(c.meta_json());
  Require(meta.value("kind", "") == "lip2speech",
          "checkpoint is not a lip2speech model: " + path);
  LoadedModel out;
  ModelConfig cfg = ModelConfig::FromJson(meta.at("config").dump());
  out.model = std::make_unique<Lip2SpeechModel>(cfg, /*seed=*/0);
  out.model->params().Import(c);
  out.vocab_hash = meta.at("vocab_hash").get<uint64_t>();
  return out;
}

}  // namespace l2s::model
