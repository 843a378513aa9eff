// core/src/config.cpp

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

#include "lip2speech/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace l2s::config {

namespace {

// Wraps a JSON object; every accessed key is marked, and Done() rejects the
// rest so typos in config files fail loudly.
class StrictObject {
 public:
  StrictObject(const json& j, std::string path)
      : j_(j), path_(std::move(path)) {
    Require(j_.is_object(), "config: " + path_ + " must be an object");
  }

  template <typename T>
  void Get(const char* key, T* out) {
    if (j_.contains(key)) {
      seen_.insert(key);
      *out = j_.at(key).get<T>();
    }
  }

  bool Has(const char* key) {
    if (j_.contains(key)) {
      seen_.insert(key);
      return true;
    }
    return false;
  }

  json Child(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void Done() {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      Require(seen_.count(it.key()) > 0,
              "config: unknown key '" + path_ + "." + it.key() + "'");
    }
  }

 private:
  const json& j_;
  std::set<std::string> seen_;
  std::string path_;
};

}  // namespace

model::ModelConfig RunConfig::ModelSection::Resolve() const {
  Require(profile == "toy" || profile == "full",
          "config: model.profile must be 'toy' or 'full'");
  model::ModelConfig cfg = profile == "toy" ? model::ModelConfig::Toy()
                                            : model::ModelConfig::FullScale();
  if (embed_dim > 0) cfg.embed_dim = embed_dim;
  if (speaker_dim > 0) cfg.speaker_dim = speaker_dim;
  if (speaker_ref_seconds > 0) cfg.speaker_ref_seconds = speaker_ref_seconds;
  if (encoder_layers > 0) cfg.encoder.layers = encoder_layers;
  if (encoder_heads > 0) cfg.encoder.heads = encoder_heads;
  if (encoder_kernel > 0) cfg.encoder.kernel = encoder_kernel;
  return cfg;
}

asr::AsrConfig RunConfig::AsrSection::Resolve(int mel_channels) const {
  asr::AsrConfig cfg;
  cfg.mel_channels = mel_channels;
  cfg.dim = dim;
  cfg.stem_kernel = stem_kernel;
  cfg.subsample = subsample;
  cfg.encoder.layers = layers;
  cfg.encoder.heads = heads;
  cfg.encoder.kernel = kernel;
  cfg.encoder.ff_mult = ff_mult;
  return cfg;
}

std::string RunConfig::ToJson() const {
  json j;
  j["seed"] = seed;
  j["data"] = {{"corpus_dir", data.corpus_dir},
               {"val_fraction", data.val_fraction},
               {"split_seed", data.split_seed},
               {"tokenizer_mode", data.tokenizer_mode},
               {"vocab_size", data.vocab_size},
               {"gen",
                {{"n_glyphs", data.gen.n_glyphs},
                 {"n_speakers", data.gen.n_speakers},
                 {"n_utterances", data.gen.n_utterances},
                 {"tokens_per_utt", data.gen.tokens_per_utt},
                 {"seed", data.gen.seed},
                 {"sample_rate", data.gen.sample_rate},
                 {"fps", data.gen.fps},
                 {"frames_per_token", data.gen.frames_per_token},
                 {"tone_seconds", data.gen.tone_seconds},
                 {"tone_edge_ms", data.gen.tone_edge_ms},
                 {"tone_fmin_hz", data.gen.tone_fmin_hz},
                 {"tone_fmax_hz", data.gen.tone_fmax_hz},
                 {"speaker_offset_max_hz", data.gen.speaker_offset_max_hz},
                 {"amplitude", data.gen.amplitude}}}};
  j["dsp"] = {{"window_ms", dsp.stft.window_ms},
              {"hop_ms", dsp.stft.hop_ms},
              {"mel_channels", dsp.mel.num_channels},
              {"fmin_hz", dsp.mel.fmin_hz},
              {"fmax_hz", dsp.mel.fmax_hz},
              {"log_floor", dsp.mel.log_floor}};
  j["model"] = {{"profile", model.profile},
                {"embed_dim", model.embed_dim},
                {"speaker_dim", model.speaker_dim},
                {"speaker_ref_seconds", model.speaker_ref_seconds},
                {"encoder_layers", model.encoder_layers},
                {"encoder_heads", model.encoder_heads},
                {"encoder_kernel", model.encoder_kernel}};
  j["train"] = {{"learning_rate", train.learning_rate},
                {"beta1", train.beta1},
                {"beta2", train.beta2},
                {"weight_decay", train.weight_decay},
                {"batch_size", train.batch_size},
                {"max_epochs", train.max_epochs},
                {"mel_window", train.mel_window},
                {"grad_clip", train.grad_clip},
                {"speaker_ref_seconds", train.speaker_ref_seconds},
                {"erase_prob", train.erase_prob},
                {"time_mask_frac", train.time_mask_frac}};
  j["objective"] = {{"lambda_ctc", train.weights.lambda_ctc},
                    {"lambda_asr", train.weights.lambda_asr},
                    {"lambda_rec", train.weights.lambda_rec},
                    {"gate_ema_decay", train.gate.ema_decay},
                    {"gate_threshold", train.gate.threshold},
                    {"gate_fallback_epoch", train.gate.fallback_epoch}};
  j["asr"] = {{"dim", asr.dim},
              {"layers", asr.layers},
              {"heads", asr.heads},
              {"kernel", asr.kernel},
              {"ff_mult", asr.ff_mult},
              {"stem_kernel", asr.stem_kernel},
              {"subsample", asr.subsample},
              {"learning_rate", asr.pretrain.learning_rate},
              {"batch_size", asr.pretrain.batch_size},
              {"max_epochs", asr.pretrain.max_epochs},
              {"target_train_wer", asr.pretrain.target_train_wer},
              {"grad_clip", asr.pretrain.grad_clip},
              {"weight_decay", asr.pretrain.weight_decay}};
  j["eval"] = {{"griffin_lim_iters", eval.griffin_lim_iters},
               {"pesq_command", eval.pesq_command}};
  return j.dump(2);
}

RunConfig RunConfig::FromJson(const std::string& text) {
  json root_json = json::parse(text);
  RunConfig cfg;
  StrictObject root(root_json, "");
  root.Get("seed", &cfg.seed);

  if (root.Has("data")) {
    json dj = root.Child("data");
    StrictObject d(dj, "data");
    d.Get("corpus_dir", &cfg.data.corpus_dir);
    d.Get("val_fraction", &cfg.data.val_fraction);
    d.Get("split_seed", &cfg.data.split_seed);
    d.Get("tokenizer_mode", &cfg.data.tokenizer_mode);
    d.Get("vocab_size", &cfg.data.vocab_size);
    if (d.Has("gen")) {
      json gj = d.Child("gen");
      StrictObject g(gj, "data.gen");
      g.Get("n_glyphs", &cfg.data.gen.n_glyphs);
      g.Get("n_speakers", &cfg.data.gen.n_speakers);
      g.Get("n_utterances", &cfg.data.gen.n_utterances);
      g.Get("tokens_per_utt", &cfg.data.gen.tokens_per_utt);
      g.Get("seed", &cfg.data.gen.seed);
      g.Get("sample_rate", &cfg.data.gen.sample_rate);
      g.Get("fps", &cfg.data.gen.fps);
      g.Get("frames_per_token", &cfg.data.gen.frames_per_token);
      g.Get("tone_seconds", &cfg.data.gen.tone_seconds);
      g.Get("tone_edge_ms", &cfg.data.gen.tone_edge_ms);
      g.Get("tone_fmin_hz", &cfg.data.gen.tone_fmin_hz);
      g.Get("tone_fmax_hz", &cfg.data.gen.tone_fmax_hz);
      g.Get("speaker_offset_max_hz", &cfg.data.gen.speaker_offset_max_hz);
      g.Get("amplitude", &cfg.data.gen.amplitude);
      g.Done();
    }
    d.Done();
  }

  if (root.Has("dsp")) {
    json dj = root.Child("dsp");
    StrictObject d(dj, "dsp");
    d.Get("window_ms", &cfg.dsp.stft.window_ms);
    d.Get("hop_ms", &cfg.dsp.stft.hop_ms);
    d.Get("mel_channels", &cfg.dsp.mel.num_channels);
    d.Get("fmin_hz", &cfg.dsp.mel.fmin_hz);
    d.Get("fmax_hz", &cfg.dsp.mel.fmax_hz);
    d.Get("log_floor", &cfg.dsp.mel.log_floor);
    d.Done();
  }

  if (root.Has("model")) {
    json mj = root.Child("model");
    StrictObject m(mj, "model");
    m.Get("profile", &cfg.model.profile);
    m.Get("embed_dim", &cfg.model.embed_dim);
    m.Get("speaker_dim", &cfg.model.speaker_dim);
    m.Get("speaker_ref_seconds", &cfg.model.speaker_ref_seconds);
    m.Get("encoder_layers", &cfg.model.encoder_layers);
    m.Get("encoder_heads", &cfg.model.encoder_heads);
    m.Get("encoder_kernel", &cfg.model.encoder_kernel);
    m.Done();
  }

  if (root.Has("train")) {
    json tj = root.Child("train");
    StrictObject t(tj, "train");
    t.Get("learning_rate", &cfg.train.learning_rate);
    t.Get("beta1", &cfg.train.beta1);
    t.Get("beta2", &cfg.train.beta2);
    t.Get("weight_decay", &cfg.train.weight_decay);
    t.Get("batch_size", &cfg.train.batch_size);
    t.Get("max_epochs", &cfg.train.max_epochs);
    t.Get("mel_window", &cfg.train.mel_window);
    t.Get("grad_clip", &cfg.train.grad_clip);
    t.Get("speaker_ref_seconds", &cfg.train.speaker_ref_seconds);
    t.Get("erase_prob", &cfg.train.erase_prob);
    t.Get("time_mask_frac", &cfg.train.time_mask_frac);
    t.Done();
  }

  if (root.Has("objective")) {
    json oj = root.Child("objective");
    StrictObject o(oj, "objective");
    o.Get("lambda_ctc", &cfg.train.weights.lambda_ctc);
    o.Get("lambda_asr", &cfg.train.weights.lambda_asr);
    o.Get("lambda_rec", &cfg.train.weights.lambda_rec);
    o.Get("gate_ema_decay", &cfg.train.gate.ema_decay);
    o.Get("gate_threshold", &cfg.train.gate.threshold);
    o.Get("gate_fallback_epoch", &cfg.train.gate.fallback_epoch);
    o.Done();
  }

  if (root.Has("asr")) {
    json aj = root.Child("asr");
    StrictObject a(aj, "asr");
    a.Get("dim", &cfg.asr.dim);
    a.Get("layers", &cfg.asr.layers);
    a.Get("heads", &cfg.asr.heads);
    a.Get("kernel", &cfg.asr.kernel);
    a.Get("ff_mult", &cfg.asr.ff_mult);
    a.Get("stem_kernel", &cfg.asr.stem_kernel);
    a.Get("subsample", &cfg.asr.subsample);
    a.Get("learning_rate", &cfg.asr.pretrain.learning_rate);
    a.Get("batch_size", &cfg.asr.pretrain.batch_size);
    a.Get("max_epochs", &cfg.asr.pretrain.max_epochs);
    a.Get("target_train_wer", &cfg.asr.pretrain.target_train_wer);
    a.Get("grad_clip", &cfg.asr.pretrain.grad_clip);
    a.Get("weight_decay", &cfg.asr.pretrain.weight_decay);
    a.Done();
  }

  if (root.Has("eval")) {
    json ej = root.Child("eval");
    StrictObject e(ej, "eval");
    e.Get("griffin_lim_iters", &cfg.eval.griffin_lim_iters);
    e.Get("pesq_command", &cfg.eval.pesq_command);
    e.Done();
  }

  root.Done();
  return cfg;
}

RunConfig RunConfig::Load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Require(in.good(), "cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  try {
    return FromJson(text);
  } catch (const json::exception& e) {
    throw InputError("config parse error in " + path + ": " + e.what());
  }
}

void RunConfig::Archive(const std::string& dir) const {
  std::error_code ec;
  fs::create_directories(dir, ec);
  std::ofstream out((fs::path(dir) / "config.json").string(),
                    std::ios::binary);
  Require(out.good(), "cannot archive config under " + dir);
  out << ToJson() << "\n";
}

}  // namespace l2s::config
