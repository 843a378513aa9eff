// core/src/data.cpp

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

#include "lip2speech/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "lip2speech/tensor_io.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace l2s::data {

void VideoClip::Validate() const {
  Require(frames.rows() >= 1, "video clip must have at least one frame");
  Require(frames.cols() == static_cast<int64_t>(height) * width,
          "video clip frame size mismatch");
  Require(fps > 0, "video clip fps must be positive");
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary Vocabulary::Build(const std::vector<std::string>& corpus_texts,
                             Mode mode, int vocab_size) {
  Require(!corpus_texts.empty(), "tokenizer needs a non-empty corpus");
  std::map<std::string, int64_t> freq;
  if (mode == Mode::kChar) {
    // The space separator is always part of a char vocabulary.
    freq[" "] = 0;
    for (const std::string& text : corpus_texts) {
      for (char c : text) freq[std::string(1, c)] += 1;
    }
  } else {
    for (const std::string& text : corpus_texts) {
      size_t pos = 0;
      while (pos < text.size()) {
        size_t next = text.find(' ', pos);
        if (next == std::string::npos) next = text.size();
        if (next > pos) freq[text.substr(pos, next - pos)] += 1;
        pos = next + 1;
      }
    }
    Require(static_cast<int>(freq.size()) <= vocab_size,
            "word vocabulary needs " + std::to_string(freq.size()) +
                " entries but vocab_size is " + std::to_string(vocab_size));
  }

  std::vector<std::pair<std::string, int64_t>> sorted(freq.begin(), freq.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  v.mode_ = mode;
  v.units_.push_back("<blank>");
  for (const auto& [unit, n] : sorted) v.units_.push_back(unit);
  for (size_t i = 0; i < v.units_.size(); ++i) {
    v.index_[v.units_[i]] = static_cast<int>(i);
  }
  return v;
}

TokenSequence Vocabulary::Encode(const std::string& text) const {
  TokenSequence seq;
  seq.text = text;
  auto push = [&](const std::string& unit) {
    auto it = index_.find(unit);
    Require(it != index_.end() && it->second != blank_id(),
            "out-of-vocabulary: '" + unit + "'");
    seq.tokens.push_back(it->second);
  };
  if (mode_ == Mode::kChar) {
    for (char c : text) push(std::string(1, c));
  } else {
    size_t pos = 0;
    while (pos < text.size()) {
      size_t next = text.find(' ', pos);
      if (next == std::string::npos) next = text.size();
      if (next > pos) push(text.substr(pos, next - pos));
      pos = next + 1;
    }
  }
  return seq;
}

std::string Vocabulary::Decode(const std::vector<int>& ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    Require(ids[i] > 0 && ids[i] < NumClasses(),
            "decode: token id out of range");
    if (mode_ == Mode::kWord && i > 0) out += ' ';
    out += units_[static_cast<size_t>(ids[i])];
  }
  return out;
}

std::string Vocabulary::ToJson() const {
  json j;
  j["mode"] = mode_ == Mode::kChar ? "char" : "word";
  j["units"] = units_;
  return j.dump();
}

Vocabulary Vocabulary::FromJson(const std::string& json_text) {
  json j = json::parse(json_text);
  Vocabulary v;
  v.mode_ = j.at("mode").get<std::string>() == "char" ? Mode::kChar : Mode::kWord;
  v.units_ = j.at("units").get<std::vector<std::string>>();
  Require(!v.units_.empty() && v.units_[0] == "<blank>",
          "vocabulary file must reserve id 0 for the blank");
  for (size_t i = 0; i < v.units_.size(); ++i) {
    v.index_[v.units_[i]] = static_cast<int>(i);
  }
  return v;
}

void Vocabulary::Save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  Require(out.good(), "cannot write vocabulary: " + path);
  out << ToJson() << "\n";
  out.flush();
  Require(out.good(), "vocabulary write failed: " + path);
}

Vocabulary Vocabulary::Load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Require(in.good(), "cannot open vocabulary: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return FromJson(text);
}

uint64_t Vocabulary::Hash() const { return Fnv1a64(ToJson()); }

// ---------------------------------------------------------------------------
// preprocessing

namespace {

Mat BilinearResize(const Mat& img, int in_h, int in_w, int out_h, int out_w) {
  if (in_h == out_h && in_w == out_w) return img;
  Mat out(out_h, out_w);
  const double sy = static_cast<double>(in_h) / out_h;
  const double sx = static_cast<double>(in_w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, in_h - 1.0);
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, in_h - 1);
    double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, in_w - 1.0);
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, in_w - 1);
      double wx = fx - x0;
      out(y, x) = (1 - wy) * ((1 - wx) * img(y0, x0) + wx * img(y0, x1)) +
                  wy * ((1 - wx) * img(y1, x0) + wx * img(y1, x1));
    }
  }
  return out;
}

}  // namespace

VideoClip PreprocessVideo(const std::vector<Mat>& raw_frames, int channels,
                          double fps, int target) {
  Require(!raw_frames.empty(), "preprocess: empty frame list");
  Require(channels >= 1, "preprocess: invalid channel count");
  const int in_h = static_cast<int>(raw_frames[0].rows());
  Require(raw_frames[0].cols() % channels == 0,
          "preprocess: frame width not divisible by channel count");
  const int in_w = static_cast<int>(raw_frames[0].cols()) / channels;
  Require(in_h >= 1 && in_w >= 1, "preprocess: degenerate frame size");

  VideoClip clip;
  clip.height = target;
  clip.width = target;
  clip.fps = fps;
  clip.frames = Mat(static_cast<int64_t>(raw_frames.size()),
                    static_cast<int64_t>(target) * target);

  const int side = std::min(in_h, in_w);
  const int oy = (in_h - side) / 2;
  const int ox = (in_w - side) / 2;

  for (size_t f = 0; f < raw_frames.size(); ++f) {
    Require(raw_frames[f].rows() == in_h &&
                raw_frames[f].cols() == static_cast<int64_t>(in_w) * channels,
            "preprocess: inconsistent frame sizes");
    Mat gray(side, side);
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        const int sy = oy + y;
        const int sx = ox + x;
        double v;
        if (channels == 1) {
          v = raw_frames[f](sy, sx);
        } else if (channels == 3) {
          v = 0.299 * raw_frames[f](sy, static_cast<int64_t>(sx) * 3) +
              0.587 * raw_frames[f](sy, static_cast<int64_t>(sx) * 3 + 1) +
              0.114 * raw_frames[f](sy, static_cast<int64_t>(sx) * 3 + 2);
        } else {
          v = 0.0;
          for (int c = 0; c < channels; ++c) {
            v += raw_frames[f](sy, static_cast<int64_t>(sx) * channels + c);
          }
          v /= channels;
        }
        gray(y, x) = v;
      }
    }
    Mat resized = BilinearResize(gray, side, side, target, target);
    for (int y = 0; y < target; ++y) {
      for (int x = 0; x < target; ++x) {
        clip.frames(static_cast<int64_t>(f),
                    static_cast<int64_t>(y) * target + x) =
            std::clamp(resized(y, x), 0.0, 1.0);
      }
    }
  }
  return clip;
}

EraseInfo RandomErase(VideoClip* clip, Rng* rng, double probability) {
  EraseInfo info;
  if (probability <= 0.0 || rng->Uniform() >= probability) return info;
  const int h = clip->height;
  const int w = clip->width;
  info.applied = true;
  info.w = static_cast<int>(rng->UniformInt(static_cast<uint64_t>(w / 2) + 1));
  info.h = static_cast<int>(rng->UniformInt(static_cast<uint64_t>(h / 2) + 1));
  info.x = static_cast<int>(
      rng->UniformInt(static_cast<uint64_t>(w - info.w) + 1));
  info.y = static_cast<int>(
      rng->UniformInt(static_cast<uint64_t>(h - info.h) + 1));
  for (int64_t t = 0; t < clip->frames.rows(); ++t) {
    for (int dy = 0; dy < info.h; ++dy) {
      for (int dx = 0; dx < info.w; ++dx) {
        clip->frames(t, static_cast<int64_t>(info.y + dy) * w + info.x + dx) =
            0.0;
      }
    }
  }
  return info;
}

TimeMaskInfo TimeMask(VideoClip* clip, Rng* rng, double max_frac) {
  TimeMaskInfo info;
  const int t_len = clip->NumFrames();
  const int max_len = static_cast<int>(max_frac * t_len);
  info.length =
      static_cast<int>(rng->UniformInt(static_cast<uint64_t>(max_len) + 1));
  if (info.length == 0) return info;
  info.start = static_cast<int>(
      rng->UniformInt(static_cast<uint64_t>(t_len - info.length) + 1));
  clip->frames.middleRows(info.start, info.length).setZero();
  return info;
}

// ---------------------------------------------------------------------------
// synthetic corpus

Mat GlyphImage(int glyph, int size) {
  Require(glyph >= 0 && glyph < 26, "glyph index out of range");
  // 4x4 block pattern. The first five blocks carry the glyph index bits, so
  // patterns are distinct by construction; the rest add hashed texture.
  Rng rng(0x676c7970ull, static_cast<uint64_t>(glyph));
  const uint64_t hash_bits = rng.NextU64();
  Mat img(size, size);
  const int cell = size / 4;
  for (int by = 0; by < 4; ++by) {
    for (int bx = 0; bx < 4; ++bx) {
      const int block = by * 4 + bx;
      const bool on = block < 5 ? ((glyph >> block) & 1) != 0
                                : ((hash_bits >> block) & 1) != 0;
      const double v = on ? 0.9 : 0.1;
      for (int y = by * cell; y < (by + 1) * cell; ++y) {
        for (int x = bx * cell; x < (bx + 1) * cell; ++x) {
          img(y, x) = v;
        }
      }
    }
  }
  return img;
}

double GlyphToneHz(const SyntheticCorpusConfig& cfg, int glyph, int speaker) {
  const double span = cfg.tone_fmax_hz - cfg.tone_fmin_hz;
  const double step = cfg.n_glyphs > 1 ? span / (cfg.n_glyphs - 1) : 0.0;
  const double offset =
      cfg.n_speakers > 1
          ? cfg.speaker_offset_max_hz * speaker / (cfg.n_speakers - 1)
          : 0.0;
  return cfg.tone_fmin_hz + step * glyph + offset;
}

namespace {

std::string UttId(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "utt_%06d", index);
  return buf;
}

void WriteVideoContainer(const std::string& path, const VideoClip& clip) {
  io::TensorContainer c;
  std::vector<float> data(static_cast<size_t>(clip.frames.size()));
  for (int64_t i = 0; i < clip.frames.rows(); ++i) {
    for (int64_t j = 0; j < clip.frames.cols(); ++j) {
      data[static_cast<size_t>(i * clip.frames.cols() + j)] =
          static_cast<float>(clip.frames(i, j));
    }
  }
  c.PutF32("frames", {clip.frames.rows(), clip.height, clip.width},
           std::move(data));
  json meta;
  meta["fps"] = clip.fps;
  c.set_meta_json(meta.dump());
  c.Save(path);
}

VideoClip ReadVideoContainer(const std::string& path) {
  io::TensorContainer c = io::TensorContainer::Load(path);
  const io::TensorEntry& e = c.Get("frames");
  Require(e.shape.size() == 3, "video container: expected T x H x W");
  VideoClip clip;
  clip.height = static_cast<int>(e.shape[1]);
  clip.width = static_cast<int>(e.shape[2]);
  clip.fps = json::parse(c.meta_json()).value("fps", 25.0);
  std::vector<double> data = e.AsF64();
  clip.frames = Mat(e.shape[0], e.shape[1] * e.shape[2]);
  std::copy(data.begin(), data.end(), clip.frames.data());
  return clip;
}

}  // namespace

Corpus MakeSyntheticCorpus(const SyntheticCorpusConfig& cfg,
                           const std::string& out_dir) {
  Require(cfg.n_speakers >= 1, "corpus needs at least one speaker");
  Require(cfg.n_glyphs >= 2 && cfg.n_glyphs <= 26,
          "glyph count must be in [2, 26]");
  Require(cfg.n_utterances >= 1 && cfg.tokens_per_utt >= 1,
          "corpus size parameters must be positive");

  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "wav", ec);
  Require(!ec, "cannot create corpus directory: " + out_dir);
  fs::create_directories(fs::path(out_dir) / "video", ec);
  Require(!ec, "cannot create corpus directory: " + out_dir);

  const int tone_samples =
      static_cast<int>(std::lround(cfg.tone_seconds * cfg.sample_rate));

  Corpus corpus;
  corpus.root = out_dir;
  std::ofstream manifest(fs::path(out_dir) / "manifest.jsonl",
                         std::ios::binary);
  Require(manifest.good(), "cannot write manifest under " + out_dir);

  for (int u = 0; u < cfg.n_utterances; ++u) {
    Rng rng(cfg.seed, 0x75747400ull + static_cast<uint64_t>(u));
    const int speaker = u % cfg.n_speakers;

    std::vector<int> glyphs(static_cast<size_t>(cfg.tokens_per_utt));
    std::string text;
    for (int k = 0; k < cfg.tokens_per_utt; ++k) {
      glyphs[static_cast<size_t>(k)] = static_cast<int>(
          rng.UniformInt(static_cast<uint64_t>(cfg.n_glyphs)));
      if (k > 0) text += ' ';
      text += static_cast<char>('a' + glyphs[static_cast<size_t>(k)]);
    }

    // Video: each glyph pattern held for frames_per_token frames.
    VideoClip clip;
    clip.fps = cfg.fps;
    clip.frames =
        Mat(static_cast<int64_t>(cfg.tokens_per_utt) * cfg.frames_per_token,
            112 * 112);
    for (int k = 0; k < cfg.tokens_per_utt; ++k) {
      Mat img = GlyphImage(glyphs[static_cast<size_t>(k)]);
      Eigen::Map<Eigen::RowVectorXd> flat(img.data(), img.size());
      for (int f = 0; f < cfg.frames_per_token; ++f) {
        clip.frames.row(static_cast<int64_t>(k) * cfg.frames_per_token + f) =
            flat;
      }
    }

    // Audio: per-token pure tone at the speaker's offset frequency.
    dsp::Waveform wave;
    wave.sample_rate = cfg.sample_rate;
    wave.samples.reserve(static_cast<size_t>(cfg.tokens_per_utt) *
                         static_cast<size_t>(tone_samples));
    const int edge = std::min(
        tone_samples / 2,
        static_cast<int>(std::lround(cfg.tone_edge_ms * cfg.sample_rate /
                                     1000.0)));
    for (int k = 0; k < cfg.tokens_per_utt; ++k) {
      const double f =
          GlyphToneHz(cfg, glyphs[static_cast<size_t>(k)], speaker);
      for (int n = 0; n < tone_samples; ++n) {
        double env = 1.0;
        if (n < edge) {
          env = 0.5 - 0.5 * std::cos(M_PI * n / edge);
        } else if (n >= tone_samples - edge) {
          env = 0.5 - 0.5 * std::cos(M_PI * (tone_samples - 1 - n) / edge);
        }
        wave.samples.push_back(env * cfg.amplitude *
                               std::sin(2.0 * M_PI * f * n / cfg.sample_rate));
      }
    }

    ManifestEntry entry;
    entry.id = UttId(u);
    entry.speaker_id = "spk" + std::to_string(speaker);
    entry.video_path = "video/" + entry.id + ".l2st";
    entry.wav_path = "wav/" + entry.id + ".wav";
    entry.text = text;
    entry.fps = cfg.fps;

    dsp::WriteWav((fs::path(out_dir) / entry.wav_path).string(), wave);
    WriteVideoContainer((fs::path(out_dir) / entry.video_path).string(), clip);

    json line;
    line["id"] = entry.id;
    line["speaker_id"] = entry.speaker_id;
    line["video_path"] = entry.video_path;
    line["wav_path"] = entry.wav_path;
    line["text"] = entry.text;
    line["fps"] = entry.fps;
    manifest << line.dump() << "\n";
    corpus.entries.push_back(std::move(entry));
  }
  manifest.flush();
  Require(manifest.good(), "manifest write failed under " + out_dir);
  return corpus;
}

Corpus LoadCorpus(const std::string& manifest_path) {
  std::ifstream in(manifest_path, std::ios::binary);
  Require(in.good(), "cannot open manifest: " + manifest_path);
  Corpus corpus;
  corpus.root = fs::path(manifest_path).parent_path().string();
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    ManifestEntry e;
    e.id = j.at("id").get<std::string>();
    e.speaker_id = j.at("speaker_id").get<std::string>();
    e.video_path = j.at("video_path").get<std::string>();
    e.wav_path = j.at("wav_path").get<std::string>();
    e.text = j.at("text").get<std::string>();
    e.fps = j.at("fps").get<double>();
    corpus.entries.push_back(std::move(e));
  }
  Require(!corpus.entries.empty(), "manifest is empty: " + manifest_path);
  return corpus;
}

// ---------------------------------------------------------------------------
// Dataset & batching

Dataset::Dataset(Corpus corpus, Vocabulary vocab, dsp::StftConfig stft,
                 dsp::MelConfig mel)
    : corpus_(std::move(corpus)),
      vocab_(std::move(vocab)),
      stft_(stft),
      mel_(mel) {}

int Dataset::FramesPerVideoFrame(double fps) const {
  return static_cast<int>(std::lround(1000.0 / stft_.hop_ms / fps));
}

const Utterance& Dataset::Get(size_t index) {
  auto it = cache_.find(index);
  if (it != cache_.end()) return it->second;
  Require(index < corpus_.Size(), "utterance index out of range");
  const ManifestEntry& e = corpus_.entries[index];

  Utterance utt;
  utt.id = e.id;
  utt.speaker_id = e.speaker_id;
  utt.wave = dsp::ReadWav((fs::path(corpus_.root) / e.wav_path).string());
  utt.clip =
      ReadVideoContainer((fs::path(corpus_.root) / e.video_path).string());
  utt.clip.fps = e.fps;
  utt.clip.Validate();
  utt.transcript = vocab_.Encode(e.text);
  utt.mel = dsp::ComputeMel(utt.wave, stft_, mel_);

  // Align S = r * T: trim a long tail, pad a short one with log-floor rows.
  const int r = FramesPerVideoFrame(e.fps);
  const int64_t target = static_cast<int64_t>(r) * utt.clip.NumFrames();
  const int64_t have = utt.mel.values.rows();
  if (have > target) {
    utt.mel.values = utt.mel.values.topRows(target).eval();
  } else if (have < target) {
    Mat padded(target, utt.mel.values.cols());
    padded.setConstant(std::log(mel_.log_floor));
    padded.topRows(have) = utt.mel.values;
    utt.mel.values = std::move(padded);
  }
  return cache_.emplace(index, std::move(utt)).first->second;
}

dsp::Waveform SampleSpeakerReference(const Utterance& utt, double duration_s,
                                     Rng* rng) {
  const int64_t n = std::lround(duration_s * utt.wave.sample_rate);
  Require(n >= 1, "speaker reference duration too short");
  Require(static_cast<int64_t>(utt.wave.samples.size()) >= n,
          "speaker reference duration exceeds utterance audio");
  const int64_t start = static_cast<int64_t>(rng->UniformInt(
      static_cast<uint64_t>(utt.wave.samples.size() - n) + 1));
  dsp::Waveform ref;
  ref.sample_rate = utt.wave.sample_rate;
  ref.samples.assign(utt.wave.samples.begin() + start,
                     utt.wave.samples.begin() + start + n);
  return ref;
}

Batch Collate(const std::vector<const Utterance*>& samples,
              double speaker_ref_seconds, Rng* rng) {
  Require(!samples.empty(), "collate: empty batch");

  Batch batch;
  int64_t t_max = 0, s_max = 0;
  size_t l_max = 0;
  int r = -1;
  for (const Utterance* u : samples) {
    const double mel_rate = 1000.0 / u->mel.stft.hop_ms;
    const int ri = static_cast<int>(std::lround(mel_rate / u->clip.fps));
    if (r < 0) r = ri;
    Require(r == ri, "collate: inconsistent mel/video frame-rate ratio");
    Check(u->mel.values.rows() ==
              static_cast<int64_t>(ri) * u->clip.NumFrames(),
          "collate: utterance mel not aligned to r*T");
    t_max = std::max<int64_t>(t_max, u->clip.NumFrames());
    s_max = std::max<int64_t>(s_max, u->mel.values.rows());
    l_max = std::max(l_max, u->transcript.tokens.size());
  }
  batch.r = r;

  for (const Utterance* u : samples) {
    batch.ids.push_back(u->id);
    batch.video_len.push_back(u->clip.NumFrames());
    batch.mel_len.push_back(static_cast<int>(u->mel.values.rows()));
    batch.token_len.push_back(static_cast<int>(u->transcript.tokens.size()));

    Mat clip = Mat::Zero(t_max, u->clip.frames.cols());
    clip.topRows(u->clip.frames.rows()) = u->clip.frames;
    batch.clips.push_back(std::move(clip));

    Mat mel = Mat::Zero(s_max, u->mel.values.cols());
    mel.topRows(u->mel.values.rows()) = u->mel.values;
    batch.mels.push_back(std::move(mel));

    std::vector<int> tokens(l_max, -1);
    std::copy(u->transcript.tokens.begin(), u->transcript.tokens.end(),
              tokens.begin());
    batch.tokens.push_back(std::move(tokens));

    batch.speaker_refs.push_back(
        SampleSpeakerReference(*u, speaker_ref_seconds, rng));
  }
  return batch;
}

Split SplitIndices(size_t n, double val_fraction, uint64_t seed) {
  Require(val_fraction >= 0.0 && val_fraction < 1.0,
          "val_fraction must be in [0, 1)");
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed, 0x73706c69ull);
  Shuffle(&idx, &rng);
  const size_t n_val = static_cast<size_t>(std::lround(
      static_cast<double>(n) * val_fraction));
  Split split;
  split.train.assign(idx.begin(), idx.end() - static_cast<int64_t>(n_val));
  split.val.assign(idx.end() - static_cast<int64_t>(n_val), idx.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  return split;
}

}  // namespace l2s::data
