// tests/test_train.cpp

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

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "lip2speech/train.hpp"

namespace fs = std::filesystem;
using namespace l2s;
using namespace l2s::train;

namespace {

struct Fixture {
  std::unique_ptr<data::Dataset> dataset;
  std::unique_ptr<model::Lip2SpeechModel> net;
  std::unique_ptr<asr::AsrModel> feedback;
  std::vector<size_t> indices;

  explicit Fixture(const std::string& dir, uint64_t model_seed = 1) {
    data::SyntheticCorpusConfig gen;
    gen.n_glyphs = 5;
    gen.n_speakers = 1;
    gen.n_utterances = 6;
    gen.tokens_per_utt = 3;
    gen.seed = 13;
    fs::remove_all(dir);
    data::Corpus corpus = data::MakeSyntheticCorpus(gen, dir);
    std::vector<std::string> texts;
    for (const auto& e : corpus.entries) texts.push_back(e.text);
    data::Vocabulary vocab =
        data::Vocabulary::Build(texts, data::Vocabulary::Mode::kChar, 100);
    dataset = std::make_unique<data::Dataset>(
        std::move(corpus), std::move(vocab), dsp::StftConfig{},
        dsp::MelConfig{});

    model::ModelConfig mc;
    mc.vocab_size = dataset->vocab().NumClasses();
    mc.embed_dim = 32;
    mc.speaker_dim = 16;
    mc.frontend.stem_channels = 4;
    mc.frontend.stages = {{8, 2, 1}, {16, 2, 1}};
    mc.encoder = {1, 2, 7, 2, 0.0};
    mc.synthesizer_channels = {32, 24};
    mc.speaker_channels = {12, 16};
    net = std::make_unique<model::Lip2SpeechModel>(mc, model_seed);

    asr::AsrConfig ac;
    ac.dim = 32;
    ac.encoder = {1, 2, 7, 2, 0.0};
    ac.vocab_size = dataset->vocab().NumClasses();
    feedback = std::make_unique<asr::AsrModel>(ac, 77);
    feedback->Freeze();

    indices.resize(dataset->Size());
    for (size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  }
};

TrainConfig QuickConfig() {
  TrainConfig cfg;
  cfg.batch_size = 3;
  cfg.max_epochs = 2;
  cfg.seed = 5;
  cfg.gate.fallback_epoch = 1;
  return cfg;
}

std::string ReadAll(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("mel window selection keeps the 4:1 alignment") {
  Rng rng(3, 1);
  for (int trial = 0; trial < 200; ++trial) {
    WindowSelection sel = SelectMelWindow(/*t_frames=*/120, /*window=*/200,
                                          /*r=*/4, &rng);
    CHECK(sel.f_len == 50);
    CHECK(sel.mel_len == 200);
    CHECK(sel.mel_start == 4 * sel.f_start);
    CHECK(sel.f_start + sel.f_len <= 120);
  }
  // Short utterance: returned whole.
  WindowSelection sel = SelectMelWindow(20, 200, 4, &rng);
  CHECK(sel.f_start == 0);
  CHECK(sel.f_len == 20);
  CHECK(sel.mel_len == 80);
}

TEST_CASE("identical seeds give identical parameter updates") {
  Fixture a("test_train_fx1", 1);
  Fixture b("test_train_fx2", 1);
  TrainConfig cfg = QuickConfig();

  Trainer ta(a.net.get(), a.feedback.get(), a.dataset.get(), cfg);
  Trainer tb(b.net.get(), b.feedback.get(), b.dataset.get(), cfg);
  for (int64_t s = 0; s < 2; ++s) {
    StepResult ra = ta.TrainStep({0, 1, 2}, 0, s);
    StepResult rb = tb.TrainStep({0, 1, 2}, 0, s);
    CHECK(ra.bundle.l_tot == rb.bundle.l_tot);
    CHECK(ra.grad_norm == rb.grad_norm);
  }
  CHECK(a.net->params().ContentHash() == b.net->params().ContentHash());
  fs::remove_all("test_train_fx1");
  fs::remove_all("test_train_fx2");
}

TEST_CASE("frozen feedback asr stays bit-identical through training") {
  Fixture fx("test_train_fx3");
  TrainConfig cfg = QuickConfig();
  cfg.gate.fallback_epoch = 0;  // ASR branch active from the first step
  const uint64_t before = fx.feedback->params().ContentHash();

  Trainer t(fx.net.get(), fx.feedback.get(), fx.dataset.get(), cfg);
  for (int64_t s = 0; s < 4; ++s) {
    t.TrainStep({0, 1, 2}, 0, s);
  }
  CHECK(fx.feedback->params().ContentHash() == before);
  CHECK(nn::GlobalGradNorm(fx.feedback->params().params()) == 0.0);
  fs::remove_all("test_train_fx3");
}

TEST_CASE("ctc loss is invariant to the window draw") {
  // CTC is computed on the full-length features before windowing, so two
  // trainers that differ only in the (window/reference) seed agree on l_ctc.
  Fixture a("test_train_fx4", 2);
  Fixture b("test_train_fx5", 2);
  TrainConfig ca = QuickConfig();
  ca.seed = 100;
  // Window the mel: set a window shorter than S=48 so the draw matters.
  ca.mel_window = 24;
  TrainConfig cb = ca;
  cb.seed = 200;

  Trainer ta(a.net.get(), a.feedback.get(), a.dataset.get(), ca);
  Trainer tb(b.net.get(), b.feedback.get(), b.dataset.get(), cb);
  StepResult ra = ta.TrainStep({0, 1, 2}, 0, 0);
  StepResult rb = tb.TrainStep({0, 1, 2}, 0, 0);
  CHECK(ra.bundle.l_ctc == rb.bundle.l_ctc);
  CHECK(ra.bundle.l_rec != rb.bundle.l_rec);  // different windows
  fs::remove_all("test_train_fx4");
  fs::remove_all("test_train_fx5");
}

TEST_CASE("lambda_asr = 0 matches a build with the asr term removed") {
  // Path A: gate on but lambda_asr = 0 (term contributes nothing and the
  // branch is skipped). Path B: gate never opens. Both must produce
  // bit-identical trajectories.
  Fixture a("test_train_fx6", 3);
  Fixture b("test_train_fx7", 3);
  TrainConfig ca = QuickConfig();
  ca.weights.lambda_asr = 0.0;
  ca.gate.fallback_epoch = 0;
  TrainConfig cb = QuickConfig();
  cb.weights.lambda_asr = 1.0;
  cb.gate.fallback_epoch = 1000;
  cb.gate.threshold = 0.0;

  Trainer ta(a.net.get(), a.feedback.get(), a.dataset.get(), ca);
  Trainer tb(b.net.get(), b.feedback.get(), b.dataset.get(), cb);
  for (int64_t s = 0; s < 3; ++s) {
    StepResult ra = ta.TrainStep({0, 1, 2}, 0, s);
    StepResult rb = tb.TrainStep({0, 1, 2}, 0, s);
    CHECK(ra.bundle.l_tot == rb.bundle.l_tot);
  }
  CHECK(a.net->params().ContentHash() == b.net->params().ContentHash());
  fs::remove_all("test_train_fx6");
  fs::remove_all("test_train_fx7");
}

TEST_CASE("a poisoned parameter aborts with the offending batch ids") {
  Fixture fx("test_train_fx8");
  TrainConfig cfg = QuickConfig();
  Trainer t(fx.net.get(), fx.feedback.get(), fx.dataset.get(), cfg);
  fx.net->params().params()[0]->value(0, 0) =
      std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(t.TrainStep({0, 1}, 0, 0),
                       doctest::Contains("utt_000000"), InternalError);
  fs::remove_all("test_train_fx8");
}

TEST_CASE("fit with max_epochs 0 emits only the initial checkpoint") {
  Fixture fx("test_train_fx9");
  TrainConfig cfg = QuickConfig();
  cfg.max_epochs = 0;
  FitResult r = Fit(fx.net.get(), fx.feedback.get(), fx.dataset.get(),
                    fx.indices, cfg, "test_train_out0");
  CHECK(r.steps_run == 0);
  CHECK(r.checkpoint_paths.size() == 1);
  CHECK(fs::exists(r.checkpoint_paths[0]));

  // Metrics file holds only the header lines.
  std::string metrics = ReadAll(r.metrics_path);
  CHECK(metrics.find("lambda_rec=100") != std::string::npos);
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 2);
  fs::remove_all("test_train_fx9");
  fs::remove_all("test_train_out0");
}

TEST_CASE("fit is deterministic and resume continues bit-identically") {
  // Uninterrupted 2-epoch run.
  Fixture a("test_train_fxA", 4);
  TrainConfig cfg = QuickConfig();
  cfg.max_epochs = 2;
  FitResult full = Fit(a.net.get(), a.feedback.get(), a.dataset.get(),
                       a.indices, cfg, "test_train_outA");

  // Identical rerun reproduces the metrics byte-for-byte.
  Fixture b("test_train_fxB", 4);
  FitResult again = Fit(b.net.get(), b.feedback.get(), b.dataset.get(),
                        b.indices, cfg, "test_train_outB");
  CHECK(ReadAll(full.metrics_path) == ReadAll(again.metrics_path));
  CHECK(a.net->params().ContentHash() == b.net->params().ContentHash());

  // Epoch 1 run, then resume for epoch 2.
  Fixture c("test_train_fxC", 4);
  TrainConfig one = cfg;
  one.max_epochs = 1;
  FitResult first = Fit(c.net.get(), c.feedback.get(), c.dataset.get(),
                        c.indices, one, "test_train_outC");
  Fixture d("test_train_fxD", 4);
  FitResult rest =
      Fit(d.net.get(), d.feedback.get(), d.dataset.get(), d.indices, cfg,
          "test_train_outD", first.checkpoint_paths.back());
  CHECK(d.net->params().ContentHash() == a.net->params().ContentHash());

  // The resumed metrics rows equal the tail of the uninterrupted run.
  std::string full_metrics = ReadAll(full.metrics_path);
  std::string rest_metrics = ReadAll(rest.metrics_path);
  auto data_rows = [](const std::string& text) {
    std::vector<std::string> rows;
    size_t pos = 0;
    int line = 0;
    while (pos < text.size()) {
      size_t next = text.find('\n', pos);
      if (next == std::string::npos) next = text.size();
      if (line >= 2) rows.push_back(text.substr(pos, next - pos));
      pos = next + 1;
      ++line;
    }
    return rows;
  };
  std::vector<std::string> full_rows = data_rows(full_metrics);
  std::vector<std::string> rest_rows = data_rows(rest_metrics);
  REQUIRE(full_rows.size() == 4);  // 2 steps/epoch * 2 epochs
  REQUIRE(rest_rows.size() == 2);
  CHECK(rest_rows[0] == full_rows[2]);
  CHECK(rest_rows[1] == full_rows[3]);

  for (const char* dir : {"test_train_fxA", "test_train_fxB", "test_train_fxC",
                          "test_train_fxD", "test_train_outA",
                          "test_train_outB", "test_train_outC",
                          "test_train_outD"}) {
    fs::remove_all(dir);
  }
}

TEST_CASE("trainer validates configuration and inputs") {
  Fixture fx("test_train_fxE");
  TrainConfig cfg = QuickConfig();
  cfg.mel_window = 13;  // not divisible by r = 4
  CHECK_THROWS_AS(
      Trainer(fx.net.get(), fx.feedback.get(), fx.dataset.get(), cfg),
      InputError);

  TrainConfig ok = QuickConfig();
  CHECK_THROWS_AS(Trainer(fx.net.get(), nullptr, fx.dataset.get(), ok),
                  InputError);

  // Unfrozen feedback ASR is rejected.
  asr::AsrConfig ac;
  ac.dim = 32;
  ac.encoder = {1, 2, 7, 2, 0.0};
  ac.vocab_size = fx.dataset->vocab().NumClasses();
  asr::AsrModel thawed(ac, 5);
  CHECK_THROWS_AS(Trainer(fx.net.get(), &thawed, fx.dataset.get(), ok),
                  InputError);
  fs::remove_all("test_train_fxE");
}

}  // TEST_SUITE
