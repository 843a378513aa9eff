// tests/test_eval.cpp

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
#include <fstream>

#include "doctest.h"
#include "lip2speech/eval.hpp"

namespace fs = std::filesystem;
using namespace l2s;
using namespace l2s::eval;

namespace {

// Tone sequence with per-token frequencies and an amplitude envelope; the
// modulated structure gives STOI meaningful band envelopes.
dsp::Waveform SpeechLikeProbe(double seconds, uint64_t seed, int sr = 16000) {
  dsp::Waveform w;
  w.sample_rate = sr;
  Rng rng(seed, 0x70726f62ull);
  const int n = static_cast<int>(seconds * sr);
  w.samples.resize(static_cast<size_t>(n));
  const int seg = sr / 8;  // 125 ms tokens
  double freq = 500.0;
  for (int i = 0; i < n; ++i) {
    if (i % seg == 0) freq = rng.Uniform(300.0, 2500.0);
    const double env = 0.4 + 0.35 * std::sin(2.0 * M_PI * 3.0 * i / sr);
    w.samples[static_cast<size_t>(i)] =
        env * std::sin(2.0 * M_PI * freq * i / sr);
  }
  return w;
}

dsp::Waveform AddNoiseAtSnr(const dsp::Waveform& x, double snr_db,
                            uint64_t seed) {
  double sig_power = 0.0;
  for (double s : x.samples) sig_power += s * s;
  sig_power /= static_cast<double>(x.samples.size());
  const double noise_power = sig_power / std::pow(10.0, snr_db / 10.0);
  const double sigma = std::sqrt(noise_power);

  dsp::Waveform out = x;
  Rng rng(seed, 0x736e7200ull);
  for (double& s : out.samples) s += sigma * rng.Normal();
  return out;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("resample tracks an analytic sine") {
  dsp::Waveform w;
  w.sample_rate = 16000;
  w.samples.resize(16000);
  for (int i = 0; i < 16000; ++i) {
    w.samples[static_cast<size_t>(i)] =
        0.5 * std::sin(2.0 * M_PI * 1000.0 * i / 16000.0);
  }
  dsp::Waveform r = Resample(w, 10000);
  CHECK(r.sample_rate == 10000);
  CHECK(r.samples.size() == 10000);
  // Compare away from the edges.
  for (int i = 500; i < 9500; i += 7) {
    const double expect = 0.5 * std::sin(2.0 * M_PI * 1000.0 * i / 10000.0);
    CHECK(std::abs(r.samples[static_cast<size_t>(i)] - expect) < 2e-3);
  }
  // Identity rate is a copy.
  dsp::Waveform same = Resample(w, 16000);
  CHECK(same.samples == w.samples);
}

TEST_CASE("stoi and estoi score identical signals as 1") {
  dsp::Waveform x = SpeechLikeProbe(2.0, 1);
  CHECK(Stoi(x, x) == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(Estoi(x, x) == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("stoi and estoi strictly decrease down the snr ladder") {
  dsp::Waveform x = SpeechLikeProbe(2.0, 2);
  const double s20 = Stoi(x, AddNoiseAtSnr(x, 20, 3));
  const double s10 = Stoi(x, AddNoiseAtSnr(x, 10, 3));
  const double s0 = Stoi(x, AddNoiseAtSnr(x, 0, 3));
  CHECK(s20 > s10);
  CHECK(s10 > s0);

  const double e20 = Estoi(x, AddNoiseAtSnr(x, 20, 3));
  const double e10 = Estoi(x, AddNoiseAtSnr(x, 10, 3));
  const double e0 = Estoi(x, AddNoiseAtSnr(x, 0, 3));
  CHECK(e20 > e10);
  CHECK(e10 > e0);
}

TEST_CASE("stoi of a sign flip computes and does not beat the identity") {
  dsp::Waveform x = SpeechLikeProbe(1.5, 4);
  dsp::Waveform neg = x;
  for (double& s : neg.samples) s = -s;
  const double flipped = Stoi(x, neg);
  CHECK(flipped <= Stoi(x, x) + 1e-12);
}

TEST_CASE("metrics reject silence and length mismatches") {
  dsp::Waveform silence;
  silence.sample_rate = 16000;
  silence.samples.assign(16000, 0.0);
  CHECK_THROWS_WITH_AS(Stoi(silence, silence), doctest::Contains("too short"),
                       InputError);
  CHECK_THROWS_WITH_AS(Estoi(silence, silence), doctest::Contains("too short"),
                       InputError);

  dsp::Waveform x = SpeechLikeProbe(1.0, 5);
  dsp::Waveform shorter = x;
  shorter.samples.resize(shorter.samples.size() - 100);
  CHECK_THROWS_AS(Stoi(x, shorter), InputError);
}

TEST_CASE("wer oracle cases") {
  WerCount a = Wer("the cat sat", "the cat sat");
  CHECK(a.errors == 0);
  CHECK(a.ref_words == 3);
  CHECK(a.Rate() == 0.0);

  WerCount b = Wer("the cat sat", "the bat sat");
  CHECK(b.errors == 1);
  CHECK(b.ref_words == 3);
  CHECK(b.Rate() == doctest::Approx(1.0 / 3.0));

  // Insertion-dominated: the rate exceeds nothing but stays well defined.
  WerCount c = Wer("a b", "a x b y");
  CHECK(c.errors == 2);
  CHECK(c.ref_words == 2);
  CHECK(c.Rate() == doctest::Approx(1.0));

  CHECK(Wer("The CAT", "the cat").errors == 0);  // case folding
  CHECK_THROWS_WITH_AS(Wer("", "hyp"), doctest::Contains("empty reference"),
                       InputError);
}

TEST_CASE("wer behaves like an edit distance on random triples") {
  // Independent oracle: recursive memoized edit distance over words.
  auto oracle = [](const std::vector<std::string>& a,
                   const std::vector<std::string>& b) {
    std::vector<std::vector<int>> memo(a.size() + 1,
                                       std::vector<int>(b.size() + 1, -1));
    auto rec = [&](auto&& self, size_t i, size_t j) -> int {
      if (i == 0) return static_cast<int>(j);
      if (j == 0) return static_cast<int>(i);
      int& m = memo[i][j];
      if (m >= 0) return m;
      int best = self(self, i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1);
      best = std::min(best, self(self, i - 1, j) + 1);
      best = std::min(best, self(self, i, j - 1) + 1);
      return m = best;
    };
    return rec(rec, a.size(), b.size());
  };

  Rng rng(6, 0);
  const std::vector<std::string> words{"a", "b", "c", "d"};
  auto random_sentence = [&] {
    std::vector<std::string> s(1 + rng.UniformInt(5));
    for (auto& w : s) w = words[rng.UniformInt(4)];
    return s;
  };
  auto join = [](const std::vector<std::string>& s) {
    std::string out;
    for (size_t i = 0; i < s.size(); ++i) {
      if (i) out += ' ';
      out += s[i];
    }
    return out;
  };

  for (int trial = 0; trial < 200; ++trial) {
    auto x = random_sentence();
    auto y = random_sentence();
    auto z = random_sentence();
    const int64_t dxy = Wer(join(x), join(y)).errors;
    CHECK(dxy == oracle(x, y));
    CHECK(Wer(join(x), join(x)).errors == 0);
    // Triangle inequality of the underlying edit distance.
    CHECK(dxy <= Wer(join(x), join(z)).errors + Wer(join(z), join(y)).errors);
    // Symmetric total cost under uniform weights.
    CHECK(dxy == Wer(join(y), join(x)).errors);
  }
}

TEST_CASE("report aggregates equal recomputation and columns are fixed") {
  MetricReport r;
  r.rows.push_back({"u0", 0.8, 0.7, std::nullopt, 1, 4});
  r.rows.push_back({"u1", 0.6, 0.5, 2.5, 3, 6});
  r.Finalize();
  CHECK(r.mean_stoi == doctest::Approx(0.7));
  CHECK(r.mean_estoi == doctest::Approx(0.6));
  CHECK(r.corpus_wer == doctest::Approx(4.0 / 10.0));

  const std::string csv = r.ToCsv();
  CHECK(csv.rfind("id,stoi,estoi,pesq,wer_errors,ref_words\n", 0) == 0);
  CHECK(csv.find("u1") != std::string::npos);
  // Missing PESQ leaves an empty cell.
  const std::string row0 =
      "u0," + FormatDouble(0.8) + "," + FormatDouble(0.7) + ",,1,4";
  CHECK(csv.find(row0) != std::string::npos);
}

TEST_CASE("evaluate corpus: determinism, oracle mode, pesq adapter") {
  // Tiny corpus + untrained models: decoding quality is irrelevant here,
  // only the harness mechanics.
  data::SyntheticCorpusConfig gen;
  gen.n_glyphs = 4;
  gen.n_speakers = 1;
  gen.n_utterances = 3;
  gen.tokens_per_utt = 3;
  gen.seed = 31;
  const std::string dir = "test_eval_corpus";
  fs::remove_all(dir);
  data::Corpus corpus = data::MakeSyntheticCorpus(gen, dir);
  std::vector<std::string> texts;
  for (const auto& e : corpus.entries) texts.push_back(e.text);
  data::Dataset ds(std::move(corpus),
                   data::Vocabulary::Build(texts, data::Vocabulary::Mode::kChar,
                                           100),
                   dsp::StftConfig{}, dsp::MelConfig{});

  model::ModelConfig mc;
  mc.vocab_size = ds.vocab().NumClasses();
  mc.embed_dim = 32;
  mc.speaker_dim = 16;
  mc.frontend.stem_channels = 4;
  mc.frontend.stages = {{8, 2, 1}, {16, 2, 1}};
  mc.encoder = {1, 2, 7, 2, 0.0};
  mc.synthesizer_channels = {32, 24};
  mc.speaker_channels = {12, 16};
  model::Lip2SpeechModel net(mc, 3);

  asr::AsrConfig ac;
  ac.dim = 32;
  ac.encoder = {1, 2, 7, 2, 0.0};
  ac.vocab_size = ds.vocab().NumClasses();
  asr::AsrModel eval_asr(ac, 4);

  std::vector<size_t> indices{0, 1, 2};
  EvaluateOptions opts;
  opts.griffin_lim_iters = 8;
  opts.seed = 9;

  MetricReport a = EvaluateCorpus(net, eval_asr, &ds, indices, opts);
  MetricReport b = EvaluateCorpus(net, eval_asr, &ds, indices, opts);
  CHECK(a.ToCsv() == b.ToCsv());
  CHECK(a.rows.size() == 3);

  // Aggregates match a recomputation from the rows.
  double stoi_sum = 0.0;
  int64_t errs = 0, words = 0;
  for (const auto& row : a.rows) {
    stoi_sum += row.stoi;
    errs += row.wer_errors;
    words += row.ref_words;
  }
  CHECK(a.mean_stoi == doctest::Approx(stoi_sum / 3.0));
  CHECK(a.corpus_wer ==
        doctest::Approx(static_cast<double>(errs) / static_cast<double>(words)));

  // Oracle mels reconstruct the ground truth closely.
  opts.oracle_mels = true;
  opts.griffin_lim_iters = 40;
  MetricReport oracle = EvaluateCorpus(net, eval_asr, &ds, indices, opts);
  CHECK(oracle.mean_stoi > 0.8);

  // External PESQ adapter merges one value per utterance.
  opts.pesq_command = "echo 3.14 #";
  opts.work_dir = "test_eval_pesq";
  MetricReport with_pesq = EvaluateCorpus(net, eval_asr, &ds, indices, opts);
  for (const auto& row : with_pesq.rows) {
    REQUIRE(row.pesq.has_value());
    CHECK(*row.pesq == doctest::Approx(3.14));
  }
  fs::remove_all(dir);
  fs::remove_all("test_eval_pesq");
}

}  // TEST_SUITE
