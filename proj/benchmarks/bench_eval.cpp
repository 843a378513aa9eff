// benchmarks/bench_eval.cpp

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

#include "lip2speech/common.hpp"
#include "lip2speech/eval.hpp"

namespace {

using namespace l2s;

dsp::Waveform Probe(double seconds) {
  dsp::Waveform w;
  w.samples.resize(static_cast<size_t>(seconds * 16000));
  Rng rng(9, 0);
  double freq = 500.0;
  for (size_t i = 0; i < w.samples.size(); ++i) {
    if (i % 2000 == 0) freq = rng.Uniform(300.0, 2500.0);
    w.samples[i] = 0.5 * std::sin(2.0 * M_PI * freq * static_cast<double>(i) /
                                  16000.0);
  }
  return w;
}

void BM_Stoi(benchmark::State& state) {
  dsp::Waveform x = Probe(static_cast<double>(state.range(0)));
  dsp::Waveform y = x;
  Rng rng(10, 0);
  for (double& s : y.samples) s += 0.05 * rng.Normal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval::Stoi(x, y));
  }
}
BENCHMARK(BM_Stoi)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_Estoi(benchmark::State& state) {
  dsp::Waveform x = Probe(2.0);
  dsp::Waveform y = x;
  Rng rng(11, 0);
  for (double& s : y.samples) s += 0.05 * rng.Normal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval::Estoi(x, y));
  }
}
BENCHMARK(BM_Estoi)->Unit(benchmark::kMillisecond);

void BM_Resample16kTo10k(benchmark::State& state) {
  dsp::Waveform x = Probe(2.0);
  for (auto _ : state) {
    dsp::Waveform y = eval::Resample(x, 10000);
    benchmark::DoNotOptimize(y);
  }
}
BENCHMARK(BM_Resample16kTo10k)->Unit(benchmark::kMillisecond);

void BM_Wer(benchmark::State& state) {
  Rng rng(12, 0);
  std::string ref, hyp;
  for (int i = 0; i < 200; ++i) {
    ref += static_cast<char>('a' + rng.UniformInt(10));
    ref += ' ';
    hyp += static_cast<char>('a' + rng.UniformInt(10));
    hyp += ' ';
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval::Wer(ref, hyp));
  }
}
BENCHMARK(BM_Wer)->Unit(benchmark::kMicrosecond);

}  // namespace
