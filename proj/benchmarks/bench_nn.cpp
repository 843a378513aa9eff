// benchmarks/bench_nn.cpp

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

#include <benchmark/benchmark.h>

#include <cmath>

#include "lip2speech/model.hpp"
#include "lip2speech/nn.hpp"
#include "lip2speech/objective.hpp"

namespace {

using namespace l2s;

Mat RandomClip(int t, uint64_t seed) {
  Rng rng(seed, 0);
  Mat clip(t, 112 * 112);
  for (int64_t i = 0; i < clip.size(); ++i) clip.data()[i] = rng.Uniform();
  return clip;
}

model::Lip2SpeechModel& ToyModel() {
  static model::ModelConfig cfg = [] {
    model::ModelConfig c = model::ModelConfig::Toy();
    c.vocab_size = 12;
    return c;
  }();
  static model::Lip2SpeechModel m(cfg, 1);
  return m;
}

void BM_FrontendForward(benchmark::State& state) {
  model::Lip2SpeechModel& m = ToyModel();
  Mat clip = RandomClip(static_cast<int>(state.range(0)), 2);
  for (auto _ : state) {
    nn::Var f = m.VisualFrontend(clip);
    benchmark::DoNotOptimize(f->value);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FrontendForward)->Arg(16)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_EncodeSynthesizeBackward(benchmark::State& state) {
  model::Lip2SpeechModel& m = ToyModel();
  Mat clip = RandomClip(16, 3);
  Rng rng(4, 0);
  Mat ref_mel(17, 80), target(64, 80);
  for (int64_t i = 0; i < ref_mel.size(); ++i) {
    ref_mel.data()[i] = rng.Uniform(std::log(1e-5), 2.0);
  }
  for (int64_t i = 0; i < target.size(); ++i) {
    target.data()[i] = rng.Uniform(std::log(1e-5), 2.0);
  }
  std::vector<int> labels{1, 2, 3};
  for (auto _ : state) {
    nn::Var f = m.Encode(clip);
    nn::Var l_ctc = objective::CtcLossNode(m.CtcLogits(f), labels);
    nn::Var y = m.SynthesizeMel(f, m.SpeakerEncodeMel(ref_mel));
    nn::Var loss = nn::WeightedSum(
        {l_ctc, objective::ReconstructionLossNode(y, target)}, {1.0, 100.0});
    m.params().ZeroGrad();
    nn::Backward(loss);
    benchmark::DoNotOptimize(loss->value);
  }
}
BENCHMARK(BM_EncodeSynthesizeBackward)->Unit(benchmark::kMillisecond);

void BM_CtcLoss(benchmark::State& state) {
  const int t = static_cast<int>(state.range(0));
  Rng rng(5, 0);
  Mat logits(t, 30);
  for (int64_t i = 0; i < logits.size(); ++i) {
    logits.data()[i] = rng.Uniform(-2, 2);
  }
  std::vector<int> labels;
  for (int i = 0; i < t / 4; ++i) {
    labels.push_back(1 + static_cast<int>(rng.UniformInt(29)));
  }
  for (auto _ : state) {
    nn::Var lv = nn::Parameter(logits, "l");
    nn::Var loss = nn::CtcLoss(lv, labels);
    nn::Backward(loss);
    benchmark::DoNotOptimize(loss->value);
  }
}
BENCHMARK(BM_CtcLoss)->Arg(50)->Arg(200)->Unit(benchmark::kMicrosecond);

}  // namespace
