// benchmarks/bench_dsp.cpp

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
#include "lip2speech/dsp.hpp"

namespace {

using namespace l2s;

dsp::Waveform NoiseSeconds(double seconds) {
  dsp::Waveform w;
  w.samples.resize(static_cast<size_t>(seconds * 16000));
  Rng rng(1, 0);
  for (double& s : w.samples) s = rng.Uniform(-0.5, 0.5);
  return w;
}

void BM_Stft(benchmark::State& state) {
  dsp::Waveform w = NoiseSeconds(static_cast<double>(state.range(0)));
  dsp::StftConfig cfg;
  for (auto _ : state) {
    CMat spec = dsp::Stft(w, cfg);
    benchmark::DoNotOptimize(spec);
  }
  state.SetItemsProcessed(state.iterations() *
                          dsp::NumStftFrames(
                              static_cast<int64_t>(w.samples.size()), 640,
                              160));
}
BENCHMARK(BM_Stft)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_ComputeMel(benchmark::State& state) {
  dsp::Waveform w = NoiseSeconds(1.0);
  for (auto _ : state) {
    dsp::MelSpectrogram mel =
        dsp::ComputeMel(w, dsp::StftConfig{}, dsp::MelConfig{});
    benchmark::DoNotOptimize(mel);
  }
}
BENCHMARK(BM_ComputeMel)->Unit(benchmark::kMillisecond);

void BM_GriffinLim(benchmark::State& state) {
  dsp::Waveform w = NoiseSeconds(1.0);
  dsp::MagnitudeSpectrogram mag;
  mag.values = dsp::Stft(w, dsp::StftConfig{}).cwiseAbs();
  mag.sample_rate = 16000;
  const int iters = static_cast<int>(state.range(0));
  for (auto _ : state) {
    dsp::GriffinLimResult r = dsp::GriffinLim(mag, iters, 7);
    benchmark::DoNotOptimize(r.wave);
  }
}
BENCHMARK(BM_GriffinLim)->Arg(10)->Arg(60)->Unit(benchmark::kMillisecond);

void BM_MelToLinear(benchmark::State& state) {
  dsp::MelSpectrogram mel =
      dsp::ComputeMel(NoiseSeconds(1.0), dsp::StftConfig{}, dsp::MelConfig{});
  for (auto _ : state) {
    dsp::MagnitudeSpectrogram lin = dsp::MelToLinear(mel);
    benchmark::DoNotOptimize(lin);
  }
}
BENCHMARK(BM_MelToLinear)->Unit(benchmark::kMillisecond);

}  // namespace
