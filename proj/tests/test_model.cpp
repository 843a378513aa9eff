// tests/test_model.cpp

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

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "lip2speech/model.hpp"
#include "lip2speech/objective.hpp"

using namespace l2s;
using namespace l2s::model;

namespace {

// Narrow widths so the suite stays fast; geometry matches the toy profile.
ModelConfig TinyConfig() {
  ModelConfig cfg;
  cfg.vocab_size = 8;
  cfg.embed_dim = 32;
  cfg.speaker_dim = 16;
  cfg.frontend.stem_channels = 4;
  cfg.frontend.stages = {{8, 2, 1}, {16, 2, 1}};
  cfg.encoder = {2, 2, 7, 2, 0.0};
  cfg.synthesizer_channels = {48, 32};
  cfg.speaker_channels = {16, 24};
  return cfg;
}

Mat RandomClip(int t, uint64_t seed) {
  Rng rng(seed, 0x636c6970ull);
  Mat clip(t, 112 * 112);
  for (int64_t i = 0; i < clip.rows(); ++i) {
    for (int64_t j = 0; j < clip.cols(); ++j) clip(i, j) = rng.Uniform();
  }
  return clip;
}

Mat RandomRefMel(int frames, uint64_t seed) {
  Rng rng(seed, 0x72656600ull);
  Mat mel(frames, 80);
  for (int64_t i = 0; i < mel.rows(); ++i) {
    for (int64_t j = 0; j < mel.cols(); ++j) {
      mel(i, j) = rng.Uniform(std::log(1e-5), 2.0);
    }
  }
  return mel;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("config validation rejects a synthesizer width that is not K*r") {
  ModelConfig cfg = TinyConfig();
  cfg.synthesizer_out = 300;
  CHECK_THROWS_WITH_AS(Lip2SpeechModel(cfg, 0), doctest::Contains("K * r"),
                       InputError);
}

TEST_CASE("frontend emits one feature row per input frame") {
  Lip2SpeechModel m(TinyConfig(), 1);
  nn::Var out = m.VisualFrontend(RandomClip(20, 5));
  CHECK(out->Rows() == 20);
  CHECK(out->Cols() == 32);
}

TEST_CASE("frontend on an all-zero clip is constant across frames") {
  Lip2SpeechModel m(TinyConfig(), 2);
  nn::Var out = m.VisualFrontend(Mat::Zero(9, 112 * 112));
  for (int t = 1; t < 9; ++t) {
    CHECK((out->value.row(t) - out->value.row(0)).cwiseAbs().maxCoeff() ==
          0.0);
  }
  CHECK(out->value.allFinite());
}

TEST_CASE("frontend is time-invariant away from the boundaries") {
  Lip2SpeechModel m(TinyConfig(), 3);
  const int t_len = 12, shift = 3;
  Mat clip = RandomClip(t_len, 6);
  Mat shifted(t_len, clip.cols());
  for (int t = 0; t < t_len; ++t) {
    shifted.row((t + shift) % t_len) = clip.row(t);
  }
  Mat a = m.VisualFrontend(clip)->value;
  Mat b = m.VisualFrontend(shifted)->value;
  // Temporal stem kernel 5 (pad 2): rows whose receptive fields avoid the
  // wrap in both versions must match exactly under the shift.
  for (int t = 5; t < t_len - shift; ++t) {
    CHECK((b.row(t) - a.row(t - shift)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("conformer is stride-free for any length") {
  Lip2SpeechModel m(TinyConfig(), 4);
  for (int t : {1, 7, 20}) {
    nn::Var f = m.ConformerEncode(nn::Constant(RandomClip(t, 7).leftCols(32)));
    CHECK(f->Rows() == t);
    CHECK(f->Cols() == 32);
  }
}

TEST_CASE("forward passes are bit-identical in eval conditions") {
  Lip2SpeechModel m(TinyConfig(), 5);
  Mat clip = RandomClip(6, 8);
  Mat a = m.Encode(clip)->value;
  Mat b = m.Encode(clip)->value;
  CHECK(a == b);
}

TEST_CASE("per-sample processing has no cross-sample leakage") {
  Lip2SpeechModel m(TinyConfig(), 6);
  Mat c1 = RandomClip(5, 9);
  Mat c2 = RandomClip(5, 10);
  Mat first = m.Encode(c1)->value;
  Mat second = m.Encode(c2)->value;
  // Reversed processing order leaves each output unchanged.
  Mat second_again = m.Encode(c2)->value;
  Mat first_again = m.Encode(c1)->value;
  CHECK(first == first_again);
  CHECK(second == second_again);
}

TEST_CASE("ctc head: zero weights give uniform posteriors") {
  ModelConfig cfg = TinyConfig();
  Lip2SpeechModel m(cfg, 7);
  for (const nn::Var& p : m.params().params()) {
    if (p->name.rfind("ctc_head", 0) == 0) p->value.setZero();
  }
  nn::Var f = nn::Constant(RandomClip(4, 11).leftCols(32));
  nn::Var post = m.TokenPosteriors(f);
  for (int t = 0; t < 4; ++t) {
    for (int k = 0; k < cfg.vocab_size; ++k) {
      CHECK(post->value(t, k) == doctest::Approx(1.0 / cfg.vocab_size));
    }
  }
}

TEST_CASE("ctc head: a dominant bias saturates the softmax") {
  ModelConfig cfg = TinyConfig();
  Lip2SpeechModel m(cfg, 8);
  for (const nn::Var& p : m.params().params()) {
    if (p->name == "ctc_head.b") p->value(0, 3) = 100.0;
  }
  nn::Var post = m.TokenPosteriors(nn::Constant(RandomClip(5, 12).leftCols(32)));
  for (int t = 0; t < 5; ++t) CHECK(post->value(t, 3) > 0.999);
}

TEST_CASE("posterior rows sum to one") {
  Lip2SpeechModel m(TinyConfig(), 9);
  nn::Var post = m.TokenPosteriors(m.Encode(RandomClip(6, 13)));
  for (int t = 0; t < 6; ++t) {
    CHECK(std::abs(post->value.row(t).sum() - 1.0) < 1e-5);
    CHECK(post->value.row(t).minCoeff() > 0.0);
    CHECK(post->value.row(t).maxCoeff() < 1.0);
  }
}

TEST_CASE("speaker encoder: fixed-size embedding, finite on silence") {
  ModelConfig cfg = TinyConfig();
  Lip2SpeechModel m(cfg, 10);
  nn::Var e = m.SpeakerEncodeMel(RandomRefMel(17, 14));
  CHECK(e->Rows() == 1);
  CHECK(e->Cols() == 16);

  // Silence reference: mel is clamped at the log floor upstream.
  dsp::Waveform silence;
  silence.samples.assign(3200, 0.0);
  nn::Var es = m.SpeakerEncode(silence, dsp::StftConfig{}, dsp::MelConfig{});
  CHECK(es->value.allFinite());

  dsp::Waveform wrong;
  wrong.samples.assign(5000, 0.0);
  CHECK_THROWS_WITH_AS(m.SpeakerEncode(wrong, dsp::StftConfig{}, dsp::MelConfig{}),
                       doctest::Contains("duration"), InputError);
}

TEST_CASE("synthesizer emits r mel frames per video frame") {
  ModelConfig cfg = TinyConfig();
  Lip2SpeechModel m(cfg, 11);
  nn::Var spk = m.SpeakerEncodeMel(RandomRefMel(17, 15));
  for (int t : {1, 7, 50}) {
    nn::Var f = nn::Constant(RandomClip(t, 16).leftCols(32));
    nn::Var y = m.SynthesizeMel(f, spk);
    CHECK(y->Rows() == 4 * t);
    CHECK(y->Cols() == 80);
  }
}

TEST_CASE("changing the speaker embedding changes the synthesized mel") {
  ModelConfig cfg = TinyConfig();
  Lip2SpeechModel m(cfg, 12);
  nn::Var f = nn::Constant(RandomClip(6, 17).leftCols(32));
  nn::Var e1 = m.SpeakerEncodeMel(RandomRefMel(17, 18));
  nn::Var e2 = m.SpeakerEncodeMel(RandomRefMel(17, 19));
  Mat y1 = m.SynthesizeMel(f, e1)->value;
  Mat y2 = m.SynthesizeMel(f, e2)->value;
  CHECK((y1 - y2).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("end-to-end shape law: r*T frames by K channels") {
  Lip2SpeechModel m(TinyConfig(), 13);
  nn::Var spk = m.SpeakerEncodeMel(RandomRefMel(17, 20));
  for (int t : {1, 7}) {
    nn::Var y = m.SynthesizeMel(m.Encode(RandomClip(t, 21)), spk);
    CHECK(y->Rows() == 4 * t);
    CHECK(y->Cols() == 80);
  }
}

TEST_CASE("every parameter receives a finite, non-zero gradient") {
  Lip2SpeechModel m(TinyConfig(), 14);
  Mat clip = RandomClip(8, 22);
  nn::Var f = m.Encode(clip);
  nn::Var logits = m.CtcLogits(f);
  nn::Var spk = m.SpeakerEncodeMel(RandomRefMel(17, 23));
  nn::Var y = m.SynthesizeMel(f, spk);

  Rng rng(24, 0);
  Mat ry(y->Rows(), y->Cols()), rl(logits->Rows(), logits->Cols());
  for (int64_t i = 0; i < ry.size(); ++i) ry.data()[i] = rng.Uniform(-1, 1);
  for (int64_t i = 0; i < rl.size(); ++i) rl.data()[i] = rng.Uniform(-1, 1);
  nn::Var loss = nn::WeightedSum(
      {nn::MseLoss(y, nn::Constant(ry)), nn::MseLoss(logits, nn::Constant(rl))},
      {1.0, 1.0});

  m.params().ZeroGrad();
  nn::Backward(loss);
  for (const nn::Var& p : m.params().params()) {
    INFO("param ", p->name);
    CHECK(p->grad.allFinite());
    CHECK(p->grad.cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("analytic gradients match finite differences through the model") {
  ModelConfig cfg = TinyConfig();
  Lip2SpeechModel m(cfg, 15);
  Mat clip = RandomClip(4, 25);
  Mat ref_mel = RandomRefMel(17, 26);
  Mat target = RandomRefMel(16, 27);
  std::vector<int> labels{1, 2};

  auto build = [&] {
    nn::Var f = m.Encode(clip);
    nn::Var l_ctc = objective::CtcLossNode(m.CtcLogits(f), labels);
    nn::Var spk = m.SpeakerEncodeMel(ref_mel);
    nn::Var y = m.SynthesizeMel(f, spk);
    nn::Var l_rec = objective::ReconstructionLossNode(y, target);
    return nn::WeightedSum({l_ctc, l_rec}, {1.0, 100.0});
  };

  nn::Var loss = build();
  m.params().ZeroGrad();
  nn::Backward(loss);

  Rng pick(31, 0);
  const auto& params = m.params().params();
  // Small step: the relu kinks crossed inside [w-h, w+h] bias the central
  // difference by O(h), so h trades truncation bias against rounding noise.
  const double h = 2e-7;
  for (int probe = 0; probe < 10; ++probe) {
    const size_t pi = pick.UniformInt(params.size());
    Mat& v = params[pi]->value;
    const int64_t i = static_cast<int64_t>(pick.UniformInt(
        static_cast<uint64_t>(v.rows())));
    const int64_t j = static_cast<int64_t>(pick.UniformInt(
        static_cast<uint64_t>(v.cols())));
    const double analytic = params[pi]->grad(i, j);
    const double orig = v(i, j);
    v(i, j) = orig + h;
    const double up = build()->Scalar();
    v(i, j) = orig - h;
    const double down = build()->Scalar();
    v(i, j) = orig;
    const double fd = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(analytic), std::abs(fd), 1e-3});
    INFO("param ", params[pi]->name, " (", i, ",", j, ") analytic ", analytic,
         " fd ", fd);
    CHECK(std::abs(analytic - fd) / scale < 1e-3);
  }
}

TEST_CASE("checkpoint round trip preserves parameters and outputs") {
  ModelConfig cfg = TinyConfig();
  Lip2SpeechModel m(cfg, 16);
  const std::string path = "test_model_ckpt.l2st";
  SaveCheckpoint(m, /*vocab_hash=*/0xabcdef, path);

  LoadedModel back = LoadCheckpoint(path);
  CHECK(back.vocab_hash == 0xabcdef);
  CHECK(back.model->params().ContentHash() == m.params().ContentHash());

  Mat clip = RandomClip(4, 30);
  CHECK(back.model->Encode(clip)->value == m.Encode(clip)->value);
  std::filesystem::remove(path);
}

}  // TEST_SUITE
