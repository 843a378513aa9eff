// core/src/eval.cpp

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

#include "lip2speech/eval.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace l2s::eval {

namespace {

// STOI constants per the standard description: 10 kHz analysis rate, 256/128
// framing, 512-point FFT, 15 one-third-octave bands from 150 Hz, 384 ms
// (30-frame) segments, -15 dB clipping, 40 dB silence range.
constexpr int kStoiRate = 10000;
constexpr int kFrame = 256;
constexpr int kHop = 128;
constexpr int kFft = 512;
constexpr int kBands = 15;
constexpr double kBandFirstHz = 150.0;
constexpr int kSegment = 30;
constexpr double kBeta = -15.0;
constexpr double kDynRange = 40.0;
constexpr double kEps = 1e-20;

}  // namespace

dsp::Waveform Resample(const dsp::Waveform& in, int out_rate) {
  in.Validate();
  Require(out_rate > 0, "resample: bad target rate");
  if (in.sample_rate == out_rate) return in;

  const int g = static_cast<int>(std::gcd(in.sample_rate, out_rate));
  const int64_t up = out_rate / g;    // L
  const int64_t down = in.sample_rate / g;  // M

  const double cutoff =
      0.5 * std::min(1.0, static_cast<double>(out_rate) / in.sample_rate);
  const int half_width = 32;  // input samples per side

  dsp::Waveform out;
  out.sample_rate = out_rate;
  const int64_t n_in = static_cast<int64_t>(in.samples.size());
  const int64_t n_out = (n_in * up) / down;
  out.samples.resize(static_cast<size_t>(n_out), 0.0);

  for (int64_t n = 0; n < n_out; ++n) {
    // Exact rational source position n * M / L.
    const int64_t num = n * down;
    const int64_t ip = num / up;
    const double frac = static_cast<double>(num % up) / static_cast<double>(up);
    const double pos = static_cast<double>(ip) + frac;

    double acc = 0.0, wsum = 0.0;
    const int64_t k0 = ip - half_width + 1;
    const int64_t k1 = ip + half_width;
    for (int64_t k = std::max<int64_t>(0, k0);
         k <= std::min(n_in - 1, k1); ++k) {
      const double t = pos - static_cast<double>(k);
      const double x = 2.0 * cutoff * t;
      double sinc = x == 0.0 ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
      const double hann =
          0.5 + 0.5 * std::cos(M_PI * t / (half_width + 1.0));
      const double h = 2.0 * cutoff * sinc * hann;
      acc += in.samples[static_cast<size_t>(k)] * h;
      wsum += h;
    }
    // Normalizing by the windowed-kernel sum keeps unity DC gain at the
    // signal edges as well.
    out.samples[static_cast<size_t>(n)] = wsum > kEps ? acc / wsum : 0.0;
  }
  return out;
}

namespace {

struct TfDecomposition {
  Mat ref;  // kBands x frames band envelopes
  Mat deg;
};

std::vector<double> StoiHann(int n) {
  // Periodic Hann keeps exact unity overlap-add at 50% hop.
  std::vector<double> w(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    w[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n);
  }
  return w;
}

// Drop frames whose reference energy is more than kDynRange dB below the
// loudest frame, then rebuild both signals by windowed overlap-add.
void RemoveSilentFrames(std::vector<double>* x, std::vector<double>* y) {
  const std::vector<double> w = StoiHann(kFrame);
  const int64_t n = static_cast<int64_t>(x->size());
  std::vector<int64_t> starts;
  for (int64_t s = 0; s + kFrame <= n; s += kHop) starts.push_back(s);
  if (starts.empty()) {
    x->clear();
    y->clear();
    return;
  }

  std::vector<double> energy_db(starts.size());
  double max_db = -1e300;
  for (size_t f = 0; f < starts.size(); ++f) {
    double ss = 0.0;
    for (int i = 0; i < kFrame; ++i) {
      const double v = (*x)[static_cast<size_t>(starts[f] + i)] *
                       w[static_cast<size_t>(i)];
      ss += v * v;
    }
    const double rms = std::sqrt(ss) / std::sqrt(double(kFrame));
    // Absolute floor: digital silence never counts as speech, so an
    // all-silent input leaves no valid frames at all.
    energy_db[f] = rms < 1e-8 ? -1e306 : 20.0 * std::log10(rms);
    max_db = std::max(max_db, energy_db[f]);
  }

  std::vector<double> xs, ys;
  int64_t count = 0;
  xs.assign(x->size(), 0.0);
  ys.assign(y->size(), 0.0);
  int64_t out_end = 0;
  for (size_t f = 0; f < starts.size(); ++f) {
    if (energy_db[f] <= -1e305) continue;  // digital silence
    if (energy_db[f] - max_db + kDynRange <= 0.0) continue;
    const int64_t src = starts[f];
    const int64_t dst = count * kHop;
    for (int i = 0; i < kFrame; ++i) {
      xs[static_cast<size_t>(dst + i)] +=
          (*x)[static_cast<size_t>(src + i)] * w[static_cast<size_t>(i)];
      ys[static_cast<size_t>(dst + i)] +=
          (*y)[static_cast<size_t>(src + i)] * w[static_cast<size_t>(i)];
    }
    out_end = dst + kFrame;
    ++count;
  }
  xs.resize(static_cast<size_t>(out_end));
  ys.resize(static_cast<size_t>(out_end));
  *x = std::move(xs);
  *y = std::move(ys);
}

// One-third-octave band envelopes: sqrt of summed FFT power per band.
Mat BandEnvelopes(const std::vector<double>& sig) {
  const std::vector<double> w = StoiHann(kFrame);
  const int64_t n = static_cast<int64_t>(sig.size());
  std::vector<int64_t> starts;
  for (int64_t s = 0; s + kFrame <= n; s += kHop) starts.push_back(s);
  const int frames = static_cast<int>(starts.size());

  // Band edge bins.
  std::array<double, kBands> flo, fhi;
  for (int k = 0; k < kBands; ++k) {
    const double cf = kBandFirstHz * std::pow(2.0, k / 3.0);
    flo[static_cast<size_t>(k)] = cf / std::pow(2.0, 1.0 / 6.0);
    fhi[static_cast<size_t>(k)] = cf * std::pow(2.0, 1.0 / 6.0);
  }

  Mat bands = Mat::Zero(kBands, frames);
  std::vector<std::complex<double>> buf(kFft);
  for (int f = 0; f < frames; ++f) {
    for (int i = 0; i < kFrame; ++i) {
      buf[static_cast<size_t>(i)] = sig[static_cast<size_t>(starts[f] + i)] *
                                    w[static_cast<size_t>(i)];
    }
    std::fill(buf.begin() + kFrame, buf.end(), std::complex<double>(0, 0));
    // Small local DFT via radix-2 (kFft is a power of two).
    // Reuse the iterative in-place transform.
    {
      const size_t nn = buf.size();
      for (size_t i = 1, j = 0; i < nn; ++i) {
        size_t bit = nn >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(buf[i], buf[j]);
      }
      for (size_t len = 2; len <= nn; len <<= 1) {
        const double ang = -2.0 * M_PI / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < nn; i += len) {
          std::complex<double> wc(1.0, 0.0);
          for (size_t k = 0; k < len / 2; ++k) {
            const std::complex<double> u = buf[i + k];
            const std::complex<double> v = buf[i + k + len / 2] * wc;
            buf[i + k] = u + v;
            buf[i + k + len / 2] = u - v;
            wc *= wlen;
          }
        }
      }
    }
    for (int k = 0; k < kBands; ++k) {
      double acc = 0.0;
      for (int b = 0; b <= kFft / 2; ++b) {
        const double freq = static_cast<double>(b) * kStoiRate / kFft;
        if (freq >= flo[static_cast<size_t>(k)] &&
            freq < fhi[static_cast<size_t>(k)]) {
          acc += std::norm(buf[static_cast<size_t>(b)]);
        }
      }
      bands(k, f) = std::sqrt(acc);
    }
  }
  return bands;
}

TfDecomposition Decompose(const dsp::Waveform& ref, const dsp::Waveform& deg,
                          const char* metric_name) {
  ref.Validate();
  deg.Validate();
  Require(ref.sample_rate == deg.sample_rate,
          std::string(metric_name) + ": sample rates must match");
  Require(ref.samples.size() == deg.samples.size(),
          std::string(metric_name) +
              ": degraded signal must be length-aligned to the reference");

  dsp::Waveform r10 = Resample(ref, kStoiRate);
  dsp::Waveform d10 = Resample(deg, kStoiRate);
  std::vector<double> x = std::move(r10.samples);
  std::vector<double> y = std::move(d10.samples);
  RemoveSilentFrames(&x, &y);
  Require(static_cast<int64_t>(x.size()) >= kFrame + (kSegment - 1) * kHop,
          std::string("too short for ") + metric_name +
              " after silence removal");
  TfDecomposition tf;
  tf.ref = BandEnvelopes(x);
  tf.deg = BandEnvelopes(y);
  return tf;
}

// Correlation of one band-envelope segment pair. The degraded vector has
// already been energy-normalized and clipped. Envelopes of steady signals
// are near-constant, which makes the textbook mean-removed correlation
// numerically meaningless (0/0), so the raw normalized inner product is used
// instead; for modulated signals the two agree closely.
double SegmentCorrelation(const Eigen::RowVectorXd& x,
                          const Eigen::RowVectorXd& y) {
  const double nx = x.norm();
  const double ny = y.norm();
  if (nx < kEps || ny < kEps) return nx < kEps && ny < kEps ? 1.0 : 0.0;
  return x.dot(y) / (nx * ny);
}

}  // namespace

double Stoi(const dsp::Waveform& ref, const dsp::Waveform& deg) {
  TfDecomposition tf = Decompose(ref, deg, "STOI");
  const int frames = static_cast<int>(tf.ref.cols());
  const double clip_gain = std::pow(10.0, -kBeta / 20.0);  // 10^(15/20)

  double acc = 0.0;
  int64_t cells = 0;
  for (int m = kSegment; m <= frames; ++m) {
    for (int j = 0; j < kBands; ++j) {
      Eigen::RowVectorXd x = tf.ref.row(j).segment(m - kSegment, kSegment);
      Eigen::RowVectorXd y = tf.deg.row(j).segment(m - kSegment, kSegment);
      const double alpha = x.norm() / (y.norm() + kEps);
      Eigen::RowVectorXd y_scaled = y * alpha;
      // Clip at -15 dB signal-to-distortion.
      for (int i = 0; i < kSegment; ++i) {
        y_scaled(i) = std::min(y_scaled(i), x(i) * (1.0 + 1.0 / clip_gain));
      }
      acc += SegmentCorrelation(x, y_scaled);
      ++cells;
    }
  }
  return acc / static_cast<double>(cells);
}

double Estoi(const dsp::Waveform& ref, const dsp::Waveform& deg) {
  TfDecomposition tf = Decompose(ref, deg, "ESTOI");
  const int frames = static_cast<int>(tf.ref.cols());

  auto normalize_rows = [](Mat* m) {
    for (int64_t r = 0; r < m->rows(); ++r) {
      const double mu = m->row(r).mean();
      m->row(r).array() -= mu;
      m->row(r) /= (m->row(r).norm() + kEps);
    }
  };
  auto normalize_cols = [](Mat* m) {
    for (int64_t c = 0; c < m->cols(); ++c) {
      const double mu = m->col(c).mean();
      m->col(c).array() -= mu;
      m->col(c) /= (m->col(c).norm() + kEps);
    }
  };

  double acc = 0.0;
  int64_t segments = 0;
  for (int m = kSegment; m <= frames; ++m) {
    Mat x = tf.ref.middleCols(m - kSegment, kSegment);
    Mat y = tf.deg.middleCols(m - kSegment, kSegment);
    normalize_rows(&x);
    normalize_rows(&y);
    normalize_cols(&x);
    normalize_cols(&y);
    acc += x.cwiseProduct(y).sum() / static_cast<double>(kSegment);
    ++segments;
  }
  return acc / static_cast<double>(segments);
}

// ---------------------------------------------------------------------------
// WER

namespace {

std::vector<std::string> FoldedWords(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

}  // namespace

WerCount Wer(const std::string& ref_text, const std::string& hyp_text) {
  const std::vector<std::string> ref = FoldedWords(ref_text);
  const std::vector<std::string> hyp = FoldedWords(hyp_text);
  Require(!ref.empty(), "wer: empty reference");

  const size_t n = ref.size(), m = hyp.size();
  std::vector<int64_t> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int64_t>(i);
    for (size_t j = 1; j <= m; ++j) {
      const int64_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  WerCount out;
  out.errors = prev[m];
  out.ref_words = static_cast<int64_t>(n);
  return out;
}

// ---------------------------------------------------------------------------
// report & harness

void MetricReport::Finalize() {
  Require(!rows.empty(), "metric report: no rows");
  double s = 0.0, e = 0.0;
  int64_t errors = 0, words = 0;
  for (const UtteranceMetrics& u : rows) {
    s += u.stoi;
    e += u.estoi;
    errors += u.wer_errors;
    words += u.ref_words;
  }
  mean_stoi = s / static_cast<double>(rows.size());
  mean_estoi = e / static_cast<double>(rows.size());
  corpus_wer = static_cast<double>(errors) / static_cast<double>(words);
}

std::string MetricReport::ToCsv() const {
  std::string out = "id,stoi,estoi,pesq,wer_errors,ref_words\n";
  for (const UtteranceMetrics& u : rows) {
    out += u.id + "," + FormatDouble(u.stoi) + "," + FormatDouble(u.estoi) +
           "," + (u.pesq ? FormatDouble(*u.pesq) : std::string()) + "," +
           std::to_string(u.wer_errors) + "," + std::to_string(u.ref_words) +
           "\n";
  }
  return out;
}

std::string MetricReport::ToJson() const {
  json j;
  json utts = json::array();
  for (const UtteranceMetrics& u : rows) {
    json row;
    row["id"] = u.id;
    row["stoi"] = u.stoi;
    row["estoi"] = u.estoi;
    if (u.pesq) {
      row["pesq"] = *u.pesq;
    } else {
      row["pesq"] = nullptr;
    }
    row["wer_errors"] = u.wer_errors;
    row["ref_words"] = u.ref_words;
    utts.push_back(std::move(row));
  }
  j["utterances"] = std::move(utts);
  j["aggregate"] = {{"mean_stoi", mean_stoi},
                    {"mean_estoi", mean_estoi},
                    {"wer", corpus_wer}};
  return j.dump(2);
}

void MetricReport::Write(const std::string& csv_path,
                         const std::string& json_path) const {
  std::ofstream csv(csv_path, std::ios::binary);
  Require(csv.good(), "cannot write report: " + csv_path);
  csv << ToCsv();
  std::ofstream js(json_path, std::ios::binary);
  Require(js.good(), "cannot write report: " + json_path);
  js << ToJson() << "\n";
}

namespace {

std::optional<double> RunPesqAdapter(const std::string& command,
                                     const std::string& work_dir,
                                     const std::string& id,
                                     const dsp::Waveform& ref,
                                     const dsp::Waveform& deg) {
  std::error_code ec;
  fs::create_directories(work_dir, ec);
  const std::string ref_path = (fs::path(work_dir) / (id + "_ref.wav")).string();
  const std::string deg_path = (fs::path(work_dir) / (id + "_deg.wav")).string();
  dsp::WriteWav(ref_path, ref);
  dsp::WriteWav(deg_path, deg);
  const std::string cmd = command + " " + ref_path + " " + deg_path;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return std::nullopt;
  char buf[256];
  std::string output;
  while (fgets(buf, sizeof(buf), pipe)) output += buf;
  const int rc = pclose(pipe);
  if (rc != 0) return std::nullopt;
  try {
    return std::stod(output);
  } catch (...) {
    return std::nullopt;
  }
}

}  // namespace

MetricReport EvaluateCorpus(const model::Lip2SpeechModel& model,
                            const asr::AsrModel& eval_asr,
                            data::Dataset* dataset,
                            const std::vector<size_t>& indices,
                            const EvaluateOptions& opts) {
  Require(!indices.empty(), "evaluate: empty index list");
  MetricReport report;

  for (size_t idx : indices) {
    const data::Utterance& utt = dataset->Get(idx);

    Mat pred_mel;
    if (opts.oracle_mels) {
      pred_mel = utt.mel.values;
    } else {
      // Full-length forward pass; no training window at evaluation.
      nn::Var f = model.Encode(utt.clip.frames);
      Rng rng(opts.seed, 0x6576616cull);
      rng = rng.Fork(idx);
      dsp::Waveform ref_clip = data::SampleSpeakerReference(
          utt, opts.speaker_ref_seconds, &rng);
      nn::Var spk =
          model.SpeakerEncode(ref_clip, utt.mel.stft, utt.mel.mel);
      pred_mel = model.SynthesizeMel(f, spk)->value;
    }

    UtteranceMetrics row;
    row.id = utt.id;

    // Content accuracy: greedy CTC decode of the predicted mel.
    const std::string hyp = eval_asr.DecodeGreedy(pred_mel, dataset->vocab());
    WerCount wer = Wer(utt.transcript.text, hyp);
    row.wer_errors = wer.errors;
    row.ref_words = wer.ref_words;

    // Intelligibility: vocode and score against the ground-truth waveform.
    dsp::MelSpectrogram mel_struct = utt.mel;
    mel_struct.values = pred_mel;
    dsp::GriffinLimResult gl = dsp::VocodeMel(
        mel_struct, opts.griffin_lim_iters, opts.seed ^ Fnv1a64(utt.id));
    dsp::Waveform deg = std::move(gl.wave);
    deg.samples.resize(utt.wave.samples.size(), 0.0);  // tail trim-or-pad
    row.stoi = Stoi(utt.wave, deg);
    row.estoi = Estoi(utt.wave, deg);

    if (!opts.pesq_command.empty()) {
      row.pesq = RunPesqAdapter(
          opts.pesq_command,
          opts.work_dir.empty() ? "pesq_work" : opts.work_dir, utt.id,
          utt.wave, deg);
    }
    report.rows.push_back(std::move(row));
  }
  report.Finalize();
  return report;
}

}  // namespace l2s::eval
