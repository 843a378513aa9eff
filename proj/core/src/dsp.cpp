// core/src/dsp.cpp

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

#include "lip2speech/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>

namespace l2s::dsp {

namespace {

// Iterative radix-2 Cooley-Tukey. n must be a power of two. The inverse
// transform folds in the 1/n scale.
void Fft(std::vector<std::complex<double>>* a, bool inverse) {
  const size_t n = a->size();
  Check((n & (n - 1)) == 0 && n > 0, "fft size must be a power of two");
  auto& x = *a;
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * M_PI / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        std::complex<double> u = x[i + k];
        std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    for (auto& v : x) v /= static_cast<double>(n);
  }
}

int NextPow2(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

// Pseudo-inverses of the filterbank are expensive; memoize per config.
struct FilterbankCacheKey {
  int k;
  double fmin, fmax;
  int fft;
  int sr;
  bool operator<(const FilterbankCacheKey& o) const {
    return std::tie(k, fmin, fmax, fft, sr) <
           std::tie(o.k, o.fmin, o.fmax, o.fft, o.sr);
  }
};

struct FilterbankCacheEntry {
  Mat weights;  // K x bins
  Mat pinv;     // bins x K
};

const FilterbankCacheEntry& CachedFilterbank(const MelConfig& mel,
                                             const StftConfig& stft, int sr) {
  static std::mutex mu;
  static std::map<FilterbankCacheKey, FilterbankCacheEntry> cache;
  FilterbankCacheKey key{mel.num_channels, mel.fmin_hz, mel.fmax_hz,
                         stft.FftSize(sr), sr};
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  FilterbankCacheEntry e;
  e.weights = BuildMelFilterbank(mel, stft, sr);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      Eigen::MatrixXd(e.weights),
      Eigen::ComputeThinU | Eigen::ComputeThinV);
  double tol = 1e-10 * svd.singularValues()(0);
  Eigen::VectorXd inv_sv = svd.singularValues().unaryExpr(
      [tol](double s) { return s > tol ? 1.0 / s : 0.0; });
  e.pinv = Mat(svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose());
  return cache.emplace(key, std::move(e)).first->second;
}

}  // namespace

void Waveform::Validate() const {
  Require(sample_rate > 0, "waveform sample rate must be positive");
  for (double s : samples) {
    Require(std::isfinite(s), "waveform contains non-finite samples");
  }
}

int StftConfig::WindowSamples(int sample_rate) const {
  return static_cast<int>(std::lround(window_ms * sample_rate / 1000.0));
}

int StftConfig::HopSamples(int sample_rate) const {
  return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0));
}

int StftConfig::FftSize(int sample_rate) const {
  return NextPow2(WindowSamples(sample_rate));
}

int NumStftFrames(int64_t num_samples, int window_samples, int hop_samples) {
  if (num_samples < window_samples) return 0;
  return static_cast<int>((num_samples - window_samples) / hop_samples) + 1;
}

std::vector<double> PeriodicHann(int n_samples) {
  std::vector<double> w(static_cast<size_t>(n_samples));
  for (int n = 0; n < n_samples; ++n) {
    w[static_cast<size_t>(n)] =
        0.5 - 0.5 * std::cos(2.0 * M_PI * n / n_samples);
  }
  return w;
}

CMat Stft(const Waveform& wave, const StftConfig& cfg) {
  Require(cfg.hop_ms <= cfg.window_ms, "stft hop must not exceed window");
  Require(cfg.hop_ms > 0, "stft hop must be positive");
  const int sr = wave.sample_rate;
  const int win = cfg.WindowSamples(sr);
  const int hop = cfg.HopSamples(sr);
  const int fft = cfg.FftSize(sr);
  const int bins = fft / 2 + 1;
  Require(static_cast<int64_t>(wave.samples.size()) >= win,
          "input too short: need at least one analysis window");

  const int frames = NumStftFrames(
      static_cast<int64_t>(wave.samples.size()), win, hop);
  const std::vector<double> window = PeriodicHann(win);

  CMat spec(frames, bins);
  std::vector<std::complex<double>> buf(static_cast<size_t>(fft));
  for (int f = 0; f < frames; ++f) {
    const double* x = wave.samples.data() + static_cast<int64_t>(f) * hop;
    for (int n = 0; n < win; ++n) {
      buf[static_cast<size_t>(n)] = x[n] * window[static_cast<size_t>(n)];
    }
    std::fill(buf.begin() + win, buf.end(), std::complex<double>(0.0, 0.0));
    Fft(&buf, /*inverse=*/false);
    for (int b = 0; b < bins; ++b) spec(f, b) = buf[static_cast<size_t>(b)];
  }
  return spec;
}

Waveform Istft(const CMat& spec, const StftConfig& cfg, int sample_rate) {
  const int win = cfg.WindowSamples(sample_rate);
  const int hop = cfg.HopSamples(sample_rate);
  const int fft = cfg.FftSize(sample_rate);
  const int bins = fft / 2 + 1;
  Require(static_cast<int>(spec.cols()) == bins,
          "istft: spectrogram bin count does not match config");
  const int frames = static_cast<int>(spec.rows());
  const std::vector<double> window = PeriodicHann(win);

  Waveform out;
  out.sample_rate = sample_rate;
  if (frames == 0) return out;
  const int64_t n = static_cast<int64_t>(frames - 1) * hop + win;
  out.samples.assign(static_cast<size_t>(n), 0.0);
  std::vector<double> denom(static_cast<size_t>(n), 0.0);

  std::vector<std::complex<double>> buf(static_cast<size_t>(fft));
  for (int f = 0; f < frames; ++f) {
    for (int b = 0; b < bins; ++b) buf[static_cast<size_t>(b)] = spec(f, b);
    for (int b = bins; b < fft; ++b) {
      buf[static_cast<size_t>(b)] = std::conj(spec(f, fft - b));
    }
    Fft(&buf, /*inverse=*/true);
    const int64_t base = static_cast<int64_t>(f) * hop;
    for (int t = 0; t < win; ++t) {
      const double w = window[static_cast<size_t>(t)];
      out.samples[static_cast<size_t>(base + t)] +=
          w * buf[static_cast<size_t>(t)].real();
      denom[static_cast<size_t>(base + t)] += w * w;
    }
  }
  for (size_t i = 0; i < out.samples.size(); ++i) {
    out.samples[i] = denom[i] > 1e-11 ? out.samples[i] / denom[i] : 0.0;
  }
  return out;
}

Mat Magnitude(const CMat& spec) {
  return spec.cwiseAbs();
}

Mat BuildMelFilterbank(const MelConfig& mel, const StftConfig& stft,
                       int sample_rate) {
  Require(mel.num_channels >= 1, "mel channel count must be >= 1");
  Require(mel.fmax_hz > mel.fmin_hz, "mel fmax must exceed fmin");
  const int fft = stft.FftSize(sample_rate);
  const int bins = fft / 2 + 1;
  const int k = mel.num_channels;

  std::vector<double> edges(static_cast<size_t>(k) + 2);
  const double mlo = HzToMel(mel.fmin_hz);
  const double mhi = HzToMel(mel.fmax_hz);
  for (int i = 0; i < k + 2; ++i) {
    edges[static_cast<size_t>(i)] = MelToHz(mlo + (mhi - mlo) * i / (k + 1));
  }

  Mat fb = Mat::Zero(k, bins);
  for (int m = 0; m < k; ++m) {
    const double f0 = edges[static_cast<size_t>(m)];
    const double f1 = edges[static_cast<size_t>(m) + 1];
    const double f2 = edges[static_cast<size_t>(m) + 2];
    for (int b = 0; b < bins; ++b) {
      const double f = static_cast<double>(b) * sample_rate / fft;
      if (f > f0 && f < f1) {
        fb(m, b) = (f - f0) / (f1 - f0);
      } else if (f >= f1 && f < f2) {
        fb(m, b) = (f2 - f) / (f2 - f1);
      }
    }
  }
  return fb;
}

MelSpectrogram ComputeMel(const Waveform& wave, const StftConfig& stft,
                          const MelConfig& mel) {
  wave.Validate();
  const CMat spec = Stft(wave, stft);
  const Mat power = spec.cwiseAbs2();
  const FilterbankCacheEntry& fb = CachedFilterbank(mel, stft, wave.sample_rate);

  MelSpectrogram out;
  out.stft = stft;
  out.mel = mel;
  out.sample_rate = wave.sample_rate;
  out.values = power * fb.weights.transpose();
  out.values = out.values.cwiseMax(mel.log_floor).array().log().matrix();
  return out;
}

MagnitudeSpectrogram MelToLinear(const MelSpectrogram& mel) {
  Require(static_cast<int>(mel.values.cols()) == mel.mel.num_channels,
          "mel channel count does not match its filterbank config");
  const FilterbankCacheEntry& fb =
      CachedFilterbank(mel.mel, mel.stft, mel.sample_rate);

  MagnitudeSpectrogram out;
  out.config = mel.stft;
  out.sample_rate = mel.sample_rate;
  Mat lin = mel.values.array().exp().matrix();
  out.values = (lin * fb.pinv.transpose()).cwiseMax(0.0);
  return out;
}

GriffinLimResult GriffinLim(const MagnitudeSpectrogram& mag, int n_iters,
                            uint64_t seed) {
  Require(n_iters >= 0, "griffin-lim iteration count must be >= 0");
  Require((mag.values.array() >= 0.0).all(),
          "griffin-lim magnitude must be non-negative");
  const int frames = static_cast<int>(mag.values.rows());
  const int bins = static_cast<int>(mag.values.cols());
  const double mag_norm = mag.values.norm();

  // Seeded random phase; DC and Nyquist stay real.
  Rng rng(seed, /*stream=*/0x474c);
  CMat spec(frames, bins);
  for (int f = 0; f < frames; ++f) {
    for (int b = 0; b < bins; ++b) {
      double phase = (b == 0 || b == bins - 1)
                         ? 0.0
                         : rng.Uniform(0.0, 2.0 * M_PI);
      spec(f, b) = std::polar(mag.values(f, b), phase);
    }
  }

  GriffinLimResult result;
  result.convergence.reserve(static_cast<size_t>(n_iters));
  Waveform x = Istft(spec, mag.config, mag.sample_rate);
  for (int it = 0; it < n_iters; ++it) {
    CMat est = Stft(x, mag.config);
    double err = mag_norm > 0.0 ? (est.cwiseAbs() - mag.values).norm() / mag_norm
                                : 0.0;
    result.convergence.push_back(err);
    for (int f = 0; f < frames; ++f) {
      for (int b = 0; b < bins; ++b) {
        const std::complex<double> v = est(f, b);
        const double a = std::abs(v);
        spec(f, b) = a > 0.0 ? v / a * mag.values(f, b)
                             : std::complex<double>(mag.values(f, b), 0.0);
      }
    }
    x = Istft(spec, mag.config, mag.sample_rate);
  }
  result.wave = std::move(x);
  return result;
}

GriffinLimResult VocodeMel(const MelSpectrogram& mel, int n_iters,
                           uint64_t seed) {
  MagnitudeSpectrogram lin = MelToLinear(mel);
  lin.values = lin.values.cwiseSqrt();  // power domain -> magnitude
  return GriffinLim(lin, n_iters, seed);
}

namespace {

struct WavHeader {
  uint32_t sample_rate;
  uint16_t channels;
  uint16_t bits;
  uint32_t data_bytes;
};

}  // namespace

void WriteWav(const std::string& path, const Waveform& wave) {
  wave.Validate();
  std::ofstream out(path, std::ios::binary);
  Require(out.good(), "cannot open wav for writing: " + path);

  const uint32_t n = static_cast<uint32_t>(wave.samples.size());
  const uint32_t data_bytes = n * 2;
  const uint32_t sr = static_cast<uint32_t>(wave.sample_rate);
  const uint32_t byte_rate = sr * 2;

  auto put_u32 = [&](uint32_t v) { out.write(reinterpret_cast<char*>(&v), 4); };
  auto put_u16 = [&](uint16_t v) { out.write(reinterpret_cast<char*>(&v), 2); };

  out.write("RIFF", 4);
  put_u32(36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(sr);
  put_u32(byte_rate);
  put_u16(2);   // block align
  put_u16(16);  // bits per sample
  out.write("data", 4);
  put_u32(data_bytes);
  for (double s : wave.samples) {
    // Symmetric 1/32768 quantization step; re-encoding a decoded file is
    // lossless.
    long q = std::lround(std::clamp(s, -1.0, 1.0) * 32768.0);
    int16_t q16 = static_cast<int16_t>(std::clamp<long>(q, -32768, 32767));
    out.write(reinterpret_cast<char*>(&q16), 2);
  }
  out.flush();
  Require(out.good(), "wav write failed: " + path);
}

Waveform ReadWav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Require(in.good(), "cannot open wav: " + path);

  char tag[4];
  auto get_u32 = [&]() {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  auto get_u16 = [&]() {
    uint16_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 2);
    return v;
  };

  in.read(tag, 4);
  Require(in.good() && std::memcmp(tag, "RIFF", 4) == 0, "not a RIFF file: " + path);
  get_u32();
  in.read(tag, 4);
  Require(std::memcmp(tag, "WAVE", 4) == 0, "not a WAVE file: " + path);

  WavHeader hdr{};
  bool have_fmt = false;
  Waveform wave;
  while (in.read(tag, 4)) {
    uint32_t size = get_u32();
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      uint16_t format = get_u16();
      hdr.channels = get_u16();
      hdr.sample_rate = get_u32();
      get_u32();
      get_u16();
      hdr.bits = get_u16();
      if (size > 16) in.seekg(size - 16, std::ios::cur);
      Require(format == 1, "wav: only PCM supported: " + path);
      Require(hdr.channels == 1, "wav: only mono supported: " + path);
      Require(hdr.bits == 16, "wav: only 16-bit supported: " + path);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      Require(have_fmt, "wav: data chunk before fmt: " + path);
      hdr.data_bytes = size;
      const uint32_t n = size / 2;
      wave.samples.resize(n);
      for (uint32_t i = 0; i < n; ++i) {
        int16_t q = 0;
        in.read(reinterpret_cast<char*>(&q), 2);
        wave.samples[i] = static_cast<double>(q) / 32768.0;
      }
      wave.sample_rate = static_cast<int>(hdr.sample_rate);
      return wave;
    } else {
      in.seekg(size + (size & 1), std::ios::cur);
    }
  }
  Require(false, "wav: no data chunk: " + path);
  return wave;
}

}  // namespace l2s::dsp
