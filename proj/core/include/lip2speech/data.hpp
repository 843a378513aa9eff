// lip2speech/data.hpp
//
// Corpus representation, video preprocessing and augmentation, tokenization,
// deterministic synthetic corpus generation, and batching.
//
// The synthetic corpus maps each vocabulary glyph to a distinct 112x112
// pattern (held for 4 video frames at 25 fps) and a pure tone (160 ms,
// glyph-specific frequency in 400..3000 Hz plus a speaker-specific offset of
// up to +200 Hz). Text is the space-separated glyph letters, so WER scores
// one word per spoken token.

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

#ifndef LIP2SPEECH_DATA_HPP_
#define LIP2SPEECH_DATA_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lip2speech/common.hpp"
#include "lip2speech/dsp.hpp"
#include "lip2speech/mat.hpp"

namespace l2s::data {

// Grayscale frame stack; one frame per row, flattened row-major (h * W + w),
// values in [0, 1].
struct VideoClip {
  Mat frames;  // T x (H*W)
  int height = 112;
  int width = 112;
  double fps = 25.0;

  int NumFrames() const { return static_cast<int>(frames.rows()); }
  void Validate() const;
};

struct TokenSequence {
  std::vector<int> tokens;
  std::string text;
};

// Dense id space with the CTC blank fixed at id 0.
class Vocabulary {
 public:
  enum class Mode { kChar, kWord };

  static Vocabulary Build(const std::vector<std::string>& corpus_texts,
                          Mode mode, int vocab_size);

  TokenSequence Encode(const std::string& text) const;
  std::string Decode(const std::vector<int>& ids) const;

  int NumClasses() const { return static_cast<int>(units_.size()); }
  int blank_id() const { return 0; }
  Mode mode() const { return mode_; }
  const std::vector<std::string>& units() const { return units_; }

  std::string ToJson() const;
  static Vocabulary FromJson(const std::string& json_text);
  void Save(const std::string& path) const;
  static Vocabulary Load(const std::string& path);
  uint64_t Hash() const;

 private:
  Mode mode_ = Mode::kChar;
  std::vector<std::string> units_;  // units_[0] is the blank
  std::map<std::string, int> index_;
};

struct Utterance {
  std::string id;
  std::string speaker_id;
  VideoClip clip;
  dsp::Waveform wave;
  dsp::MelSpectrogram mel;  // aligned: S = r * T exactly
  TokenSequence transcript;
};

struct Batch {
  int r = 4;
  std::vector<std::string> ids;
  std::vector<int> video_len;              // T_i
  std::vector<int> mel_len;                // S_i = r * T_i
  std::vector<int> token_len;              // L_i
  std::vector<Mat> clips;                  // each padded to T_max rows
  std::vector<Mat> mels;                   // each padded to S_max rows
  std::vector<std::vector<int>> tokens;    // each padded to L_max with -1
  std::vector<dsp::Waveform> speaker_refs;

  size_t Size() const { return ids.size(); }
};

// ---- preprocessing & augmentation ----

// Center-crop to square, bilinear-resize to target x target, convert to
// single-channel luma, clamp to [0, 1]. Raw frames arrive as H x (W*C)
// matrices with interleaved channels. Already-conforming input is returned
// unchanged.
VideoClip PreprocessVideo(const std::vector<Mat>& raw_frames, int channels,
                          double fps = 25.0, int target = 112);

struct EraseInfo {
  bool applied = false;
  int x = 0, y = 0, w = 0, h = 0;
};

// One zero-filled axis-aligned rectangle, identical in every frame. Side
// lengths are uniform on [0, H/2]; `probability` gates the whole draw.
EraseInfo RandomErase(VideoClip* clip, Rng* rng, double probability = 1.0);

struct TimeMaskInfo {
  int start = 0;
  int length = 0;
};

// One contiguous span of zero frames with length uniform on [0, max_frac*T].
TimeMaskInfo TimeMask(VideoClip* clip, Rng* rng, double max_frac = 0.1);

// ---- synthetic corpus ----

struct SyntheticCorpusConfig {
  int n_glyphs = 10;  // glyphs 'a'.., at most 26
  int n_speakers = 2;
  int n_utterances = 200;
  int tokens_per_utt = 5;
  uint64_t seed = 0;
  int sample_rate = 16000;
  double fps = 25.0;
  int frames_per_token = 4;
  double tone_seconds = 0.16;
  // Raised-cosine attack/release inside each tone; the energy dip marks
  // token boundaries (otherwise consecutive repeats are unsegmentable).
  double tone_edge_ms = 10.0;
  double tone_fmin_hz = 400.0;
  double tone_fmax_hz = 3000.0;
  double speaker_offset_max_hz = 200.0;
  double amplitude = 0.3;
};

struct ManifestEntry {
  std::string id;
  std::string speaker_id;
  std::string video_path;  // relative to the corpus root
  std::string wav_path;
  std::string text;
  double fps = 25.0;
};

struct Corpus {
  std::string root;
  std::vector<ManifestEntry> entries;
  size_t Size() const { return entries.size(); }
};

// Writes manifest.jsonl, wav/*.wav, and video/*.l2st under out_dir. Fully
// deterministic per config (seed included).
Corpus MakeSyntheticCorpus(const SyntheticCorpusConfig& cfg,
                           const std::string& out_dir);

Corpus LoadCorpus(const std::string& manifest_path);

// Deterministic glyph image and tone frequency, exposed for the
// learnability checks.
Mat GlyphImage(int glyph, int size = 112);
double GlyphToneHz(const SyntheticCorpusConfig& cfg, int glyph, int speaker);

// ---- loading & batching ----

class Dataset {
 public:
  Dataset(Corpus corpus, Vocabulary vocab, dsp::StftConfig stft,
          dsp::MelConfig mel);

  size_t Size() const { return corpus_.Size(); }
  // Loads (and memoizes) one utterance; mel is aligned to S = r * T by
  // trimming or padding log-floor frames at the tail.
  const Utterance& Get(size_t index);
  const Vocabulary& vocab() const { return vocab_; }
  const Corpus& corpus() const { return corpus_; }
  const dsp::StftConfig& stft() const { return stft_; }
  const dsp::MelConfig& mel() const { return mel_; }
  int FramesPerVideoFrame(double fps) const;  // r = round(100 / fps)

 private:
  Corpus corpus_;
  Vocabulary vocab_;
  dsp::StftConfig stft_;
  dsp::MelConfig mel_;
  std::map<size_t, Utterance> cache_;
};

// Contiguous clip of exactly duration_s * sample_rate samples from the
// utterance's own audio (the desk-scale same-speaker source).
dsp::Waveform SampleSpeakerReference(const Utterance& utt, double duration_s,
                                     Rng* rng);

// Right-pad with zeros, record lengths, and draw one speaker reference per
// sample. All samples must share the same r.
Batch Collate(const std::vector<const Utterance*>& samples,
              double speaker_ref_seconds, Rng* rng);

// Deterministic held-out split: seeded shuffle, first (1 - val_fraction)
// of the ids train.
struct Split {
  std::vector<size_t> train;
  std::vector<size_t> val;
};
Split SplitIndices(size_t n, double val_fraction, uint64_t seed);

}  // namespace l2s::data

#endif  // LIP2SPEECH_DATA_HPP_
