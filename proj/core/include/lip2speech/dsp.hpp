// lip2speech/dsp.hpp
//
// Waveform <-> spectrogram transforms, mel filtering, Griffin-Lim phase
// retrieval, and 16-bit PCM WAV I/O.
//
// Framing convention (fixed, no padding): a signal of n samples at window w
// and hop h yields  frames = floor((n - w) / h) + 1,  frame f covering
// samples [f*h, f*h + w). Windows are periodic Hann. The FFT size is the
// smallest power of two >= w.

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

#ifndef LIP2SPEECH_DSP_HPP_
#define LIP2SPEECH_DSP_HPP_

#include <string>
#include <vector>

#include "lip2speech/common.hpp"
#include "lip2speech/mat.hpp"

namespace l2s::dsp {

struct Waveform {
  std::vector<double> samples;  // nominal range [-1, 1]
  int sample_rate = 16000;

  double DurationSeconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
  void Validate() const;  // finite samples, positive rate
};

struct StftConfig {
  double window_ms = 40.0;
  double hop_ms = 10.0;

  int WindowSamples(int sample_rate) const;
  int HopSamples(int sample_rate) const;
  int FftSize(int sample_rate) const;  // smallest power of two >= window
  int NumBins(int sample_rate) const { return FftSize(sample_rate) / 2 + 1; }

  bool operator==(const StftConfig&) const = default;
};

struct MelConfig {
  int num_channels = 80;
  double fmin_hz = 0.0;
  double fmax_hz = 8000.0;
  double log_floor = 1e-5;  // clamp on filterbank output before the log

  bool operator==(const MelConfig&) const = default;
};

struct MagnitudeSpectrogram {
  Mat values;  // frames x bins, non-negative
  StftConfig config;
  int sample_rate = 16000;
};

struct MelSpectrogram {
  Mat values;  // S frames x K channels of log-mel energy
  StftConfig stft;
  MelConfig mel;
  int sample_rate = 16000;

  int NumFrames() const { return static_cast<int>(values.rows()); }
  int NumChannels() const { return static_cast<int>(values.cols()); }
};

int NumStftFrames(int64_t num_samples, int window_samples, int hop_samples);

// Periodic Hann: w[n] = 0.5 - 0.5 cos(2 pi n / n_samples).
std::vector<double> PeriodicHann(int n_samples);

// Complex STFT, frames x (fft/2 + 1) one-sided bins. Throws InputError
// ("input too short") when the wave holds less than one window.
CMat Stft(const Waveform& wave, const StftConfig& cfg);

// Overlap-add inverse with squared-window normalization. Exact wherever the
// window-power denominator is nonzero (the very first and last sample of a
// periodic Hann frame have zero weight).
Waveform Istft(const CMat& spec, const StftConfig& cfg, int sample_rate);

Mat Magnitude(const CMat& spec);

// K x bins triangular filterbank, mel-spaced over [fmin, fmax].
Mat BuildMelFilterbank(const MelConfig& mel, const StftConfig& stft,
                       int sample_rate);

// Log-mel of the power spectrum: log(max(fb * |STFT|^2, log_floor)).
// The power convention makes a 2x amplitude scale show up as +log(4).
MelSpectrogram ComputeMel(const Waveform& wave, const StftConfig& stft,
                          const MelConfig& mel);

// Inverse of the mel stage: exp, then the clamped pseudo-inverse of the
// filterbank. Output stays in the filterbank's (power) domain and is
// non-negative; vocoding takes an elementwise sqrt before Griffin-Lim
// (see VocodeMel). Throws on a channel-count mismatch.
MagnitudeSpectrogram MelToLinear(const MelSpectrogram& mel);

struct GriffinLimResult {
  Waveform wave;
  // Spectral convergence error |||STFT(x_i)| - M||_F / ||M||_F per iteration.
  std::vector<double> convergence;
};

// Classic alternating-projection Griffin-Lim (no momentum). Phase is
// initialized from seeded uniform noise, so results are deterministic per
// (mag, n_iters, seed).
GriffinLimResult GriffinLim(const MagnitudeSpectrogram& mag, int n_iters,
                            uint64_t seed);

// mel -> linear power -> sqrt -> Griffin-Lim. The one-call vocoder used by
// synthesis and evaluation.
GriffinLimResult VocodeMel(const MelSpectrogram& mel, int n_iters,
                           uint64_t seed);

// 16-bit PCM mono WAV.
void WriteWav(const std::string& path, const Waveform& wave);
Waveform ReadWav(const std::string& path);

}  // namespace l2s::dsp

#endif  // LIP2SPEECH_DSP_HPP_
