// tools/lip2speech.cpp
//
// Command-line entry points: gen-data, train-asr, train, synthesize,
// evaluate. Exit codes: 0 success, 1 internal failure, 2 usage/input error.

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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "lip2speech/asr.hpp"
#include "lip2speech/config.hpp"
#include "lip2speech/data.hpp"
#include "lip2speech/dsp.hpp"
#include "lip2speech/eval.hpp"
#include "lip2speech/model.hpp"
#include "lip2speech/tensor_io.hpp"
#include "lip2speech/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace l2s;

namespace {

config::RunConfig LoadOrDefaultConfig(const std::string& path) {
  if (path.empty()) return config::RunConfig{};
  return config::RunConfig::Load(path);
}

data::Vocabulary BuildVocab(const data::Corpus& corpus,
                            const config::RunConfig& cfg) {
  std::vector<std::string> texts;
  texts.reserve(corpus.entries.size());
  for (const auto& e : corpus.entries) texts.push_back(e.text);
  const auto mode = cfg.data.tokenizer_mode == "word"
                        ? data::Vocabulary::Mode::kWord
                        : data::Vocabulary::Mode::kChar;
  return data::Vocabulary::Build(texts, mode, cfg.data.vocab_size);
}

data::Dataset OpenDataset(const config::RunConfig& cfg) {
  data::Corpus corpus = data::LoadCorpus(
      (fs::path(cfg.data.corpus_dir) / "manifest.jsonl").string());
  data::Vocabulary vocab = BuildVocab(corpus, cfg);
  return data::Dataset(std::move(corpus), std::move(vocab), cfg.dsp.stft,
                       cfg.dsp.mel);
}

model::ModelConfig ResolveModelConfig(const config::RunConfig& cfg,
                                      int vocab_size) {
  model::ModelConfig mc = cfg.model.Resolve();
  mc.mel_channels = cfg.dsp.mel.num_channels;
  mc.frames_per_video_frame = static_cast<int>(
      std::lround(1000.0 / cfg.dsp.stft.hop_ms / cfg.data.gen.fps));
  mc.vocab_size = vocab_size;
  mc.speaker_ref_seconds = cfg.train.speaker_ref_seconds;
  return mc;
}

// ---- gen-data ----

int CmdGenData(const std::string& config_path, const std::string& out_dir_arg,
               int64_t seed_override, bool force) {
  config::RunConfig cfg = LoadOrDefaultConfig(config_path);
  const std::string out_dir =
      out_dir_arg.empty() ? cfg.data.corpus_dir : out_dir_arg;
  cfg.data.corpus_dir = out_dir;
  if (seed_override >= 0) {
    cfg.data.gen.seed = static_cast<uint64_t>(seed_override);
  }

  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    Require(force, "output directory is not empty (use --force): " + out_dir);
  }
  data::Corpus corpus = data::MakeSyntheticCorpus(cfg.data.gen, out_dir);
  // The archived copy refers to itself, so identical seeds produce
  // identical trees wherever they land.
  cfg.data.corpus_dir = ".";
  cfg.Archive(out_dir);

  std::printf("manifest: %s\n",
              (fs::path(out_dir) / "manifest.jsonl").string().c_str());
  std::printf("utterances: %zu\n", corpus.entries.size());
  std::printf("speakers: %d\n", cfg.data.gen.n_speakers);
  std::printf("glyphs: %d\n", cfg.data.gen.n_glyphs);
  return 0;
}

// ---- train-asr ----

int CmdTrainAsr(const std::string& config_path, const std::string& out_dir,
                int64_t seed_override) {
  config::RunConfig cfg = LoadOrDefaultConfig(config_path);
  if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);

  data::Dataset dataset = OpenDataset(cfg);
  data::Split split = data::SplitIndices(dataset.Size(), cfg.data.val_fraction,
                                         cfg.data.split_seed);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  Require(!ec, "cannot create output directory: " + out_dir);
  dataset.vocab().Save((fs::path(out_dir) / "vocab.json").string());
  cfg.Archive(out_dir);

  asr::AsrConfig arch = cfg.asr.Resolve(cfg.dsp.mel.num_channels);
  arch.vocab_size = dataset.vocab().NumClasses();

  json report;
  bool all_converged = true;
  const struct {
    asr::AsrRole role;
    uint64_t seed;
    const char* file;
  } jobs[] = {
      {asr::AsrRole::kFeedback, cfg.seed * 2 + 1, "asr_feedback.l2st"},
      {asr::AsrRole::kEvaluation, cfg.seed * 2 + 2, "asr_evaluation.l2st"},
  };
  for (const auto& job : jobs) {
    asr::AsrPretrainConfig pc = cfg.asr.pretrain;
    pc.seed = job.seed;
    asr::PretrainedAsr trained =
        asr::PretrainAsr(&dataset, split.train, arch, pc);
    const std::string path = (fs::path(out_dir) / job.file).string();
    asr::SaveAsrCheckpoint(*trained.model, job.role, dataset.vocab().Hash(),
                           path);
    std::printf("%s: epochs=%d train_wer=%.4f %s\n",
                asr::RoleName(job.role).c_str(), trained.report.epochs_run,
                trained.report.final_train_wer,
                trained.report.converged ? "converged" : "DID NOT CONVERGE");
    report[asr::RoleName(job.role)] = {
        {"checkpoint", path},
        {"epochs", trained.report.epochs_run},
        {"train_wer", trained.report.final_train_wer},
        {"converged", trained.report.converged}};
    all_converged = all_converged && trained.report.converged;
  }
  std::ofstream rep((fs::path(out_dir) / "asr_report.json").string(),
                    std::ios::binary);
  rep << report.dump(2) << "\n";

  if (!all_converged) {
    std::fprintf(stderr, "asr pretraining did not converge\n");
    return 1;
  }
  return 0;
}

// ---- train ----

int CmdTrain(const std::string& config_path, const std::string& out_dir,
             int64_t seed_override, const std::string& resume_path,
             const std::string& asr_path) {
  config::RunConfig cfg = LoadOrDefaultConfig(config_path);
  if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
  cfg.train.seed = cfg.seed;

  Require(fs::exists(asr_path), "missing feedback ASR checkpoint: " + asr_path);
  if (!resume_path.empty()) {
    Require(fs::exists(resume_path),
            "resume checkpoint not found: " + resume_path);
  }

  data::Dataset dataset = OpenDataset(cfg);
  data::Split split = data::SplitIndices(dataset.Size(), cfg.data.val_fraction,
                                         cfg.data.split_seed);

  asr::LoadedAsr feedback =
      asr::LoadAsrCheckpoint(asr_path, asr::AsrRole::kFeedback);
  Require(feedback.vocab_hash == dataset.vocab().Hash(),
          "feedback ASR vocabulary hash does not match the corpus");
  feedback.model->Freeze();

  model::ModelConfig mc = ResolveModelConfig(cfg, dataset.vocab().NumClasses());
  model::Lip2SpeechModel net(mc, cfg.seed);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  Require(!ec, "cannot create output directory: " + out_dir);
  dataset.vocab().Save((fs::path(out_dir) / "vocab.json").string());
  cfg.Archive(out_dir);

  train::FitResult result =
      train::Fit(&net, feedback.model.get(), &dataset, split.train, cfg.train,
                 out_dir, resume_path);
  std::printf("metrics: %s\n", result.metrics_path.c_str());
  std::printf("steps: %lld\n", static_cast<long long>(result.steps_run));
  std::printf("asr_loss_flip_step: %lld\n",
              static_cast<long long>(result.flip_step));
  return 0;
}

// ---- synthesize ----

data::VideoClip LoadVideoForSynthesis(const std::string& path,
                                      int input_size) {
  io::TensorContainer c = io::TensorContainer::Load(path);
  const io::TensorEntry& e = c.Get("frames");
  Require(e.shape.size() == 3 || e.shape.size() == 4,
          "video container: expected frames of shape T x H x W (x C)");
  const int64_t t = e.shape[0];
  const int64_t h = e.shape[1];
  const int64_t w = e.shape[2];
  const int64_t ch = e.shape.size() == 4 ? e.shape[3] : 1;
  const double fps = json::parse(c.meta_json()).value("fps", 25.0);

  std::vector<double> raw = e.AsF64();
  std::vector<Mat> frames;
  frames.reserve(static_cast<size_t>(t));
  for (int64_t f = 0; f < t; ++f) {
    Mat frame(h, w * ch);
    std::copy(raw.begin() + f * h * w * ch, raw.begin() + (f + 1) * h * w * ch,
              frame.data());
    frames.push_back(std::move(frame));
  }
  return data::PreprocessVideo(frames, static_cast<int>(ch), fps, input_size);
}

int CmdSynthesize(const std::string& config_path, const std::string& ckpt_path,
                  const std::string& video_path, const std::string& ref_path,
                  const std::string& out_path, int gl_iters, int64_t seed_arg,
                  const std::string& vocab_path) {
  config::RunConfig cfg = LoadOrDefaultConfig(config_path);
  const uint64_t seed = seed_arg >= 0 ? static_cast<uint64_t>(seed_arg) : 0;
  Require(fs::exists(ckpt_path), "checkpoint not found: " + ckpt_path);
  Require(fs::exists(video_path), "video input not found: " + video_path);
  Require(fs::exists(ref_path), "speaker reference not found: " + ref_path);

  model::LoadedModel loaded = model::LoadCheckpoint(ckpt_path);
  if (!vocab_path.empty()) {
    data::Vocabulary vocab = data::Vocabulary::Load(vocab_path);
    Require(vocab.Hash() == loaded.vocab_hash,
            "vocabulary hash does not match the checkpoint");
  }
  const model::ModelConfig& mc = loaded.model->config();

  data::VideoClip clip = LoadVideoForSynthesis(video_path, mc.input_size);
  dsp::Waveform ref = dsp::ReadWav(ref_path);

  nn::Var f = loaded.model->Encode(clip.frames);
  nn::Var spk = loaded.model->SpeakerEncode(ref, cfg.dsp.stft, cfg.dsp.mel);
  Mat pred = loaded.model->SynthesizeMel(f, spk)->value;

  dsp::MelSpectrogram mel;
  mel.values = pred;
  mel.stft = cfg.dsp.stft;
  mel.mel = cfg.dsp.mel;
  mel.sample_rate = ref.sample_rate;
  dsp::GriffinLimResult gl = dsp::VocodeMel(
      mel, gl_iters > 0 ? gl_iters : cfg.eval.griffin_lim_iters, seed);

  // Trim to S * hop so the duration is exactly frames * hop_ms.
  const size_t keep = static_cast<size_t>(pred.rows()) *
                      static_cast<size_t>(mel.stft.HopSamples(mel.sample_rate));
  if (gl.wave.samples.size() > keep) gl.wave.samples.resize(keep);
  dsp::WriteWav(out_path, gl.wave);
  std::printf("wrote %s: %.3f s\n", out_path.c_str(),
              gl.wave.DurationSeconds());
  return 0;
}

// ---- evaluate ----

int CmdEvaluate(const std::string& config_path, const std::string& ckpt_path,
                const std::string& asr_path, const std::string& out_dir,
                const std::string& split_name, bool oracle,
                int64_t seed_override) {
  config::RunConfig cfg = LoadOrDefaultConfig(config_path);
  if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);

  data::Dataset dataset = OpenDataset(cfg);
  data::Split split = data::SplitIndices(dataset.Size(), cfg.data.val_fraction,
                                         cfg.data.split_seed);
  std::vector<size_t> indices;
  if (split_name == "train") {
    indices = split.train;
  } else if (split_name == "val") {
    indices = split.val;
  } else if (split_name == "all") {
    indices.resize(dataset.Size());
    for (size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  } else {
    Require(false, "unknown split (want train|val|all): " + split_name);
  }
  Require(!indices.empty(), "selected split is empty");

  asr::LoadedAsr eval_asr =
      asr::LoadAsrCheckpoint(asr_path, asr::AsrRole::kEvaluation);
  Require(eval_asr.vocab_hash == dataset.vocab().Hash(),
          "evaluation ASR vocabulary hash does not match the corpus");

  model::LoadedModel loaded = model::LoadCheckpoint(ckpt_path);
  Require(loaded.vocab_hash == dataset.vocab().Hash(),
          "model vocabulary hash does not match the corpus");

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  Require(!ec, "cannot create output directory: " + out_dir);
  cfg.Archive(out_dir);

  eval::EvaluateOptions opts;
  opts.griffin_lim_iters = cfg.eval.griffin_lim_iters;
  opts.seed = cfg.seed;
  opts.oracle_mels = oracle;
  opts.speaker_ref_seconds = cfg.train.speaker_ref_seconds;
  opts.pesq_command = cfg.eval.pesq_command;
  opts.work_dir = (fs::path(out_dir) / "pesq_work").string();

  eval::MetricReport report = eval::EvaluateCorpus(
      *loaded.model, *eval_asr.model, &dataset, indices, opts);
  report.Write((fs::path(out_dir) / "report.csv").string(),
               (fs::path(out_dir) / "report.json").string());
  std::printf("STOI %.4f ESTOI %.4f WER%% %.2f\n", report.mean_stoi,
              report.mean_estoi, 100.0 * report.corpus_wer);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-task lip-to-speech synthesis toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir, resume_path, asr_path, ckpt_path;
  std::string video_path, ref_path, out_path, vocab_path;
  std::string split_name = "val";
  int64_t seed = -1;
  bool force = false, oracle = false;
  int gl_iters = 0;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  gen->add_option("--config", config_path, "config file (JSON)");
  gen->add_option("--out", out_dir, "corpus directory");
  gen->add_option("--seed", seed, "generator seed override");
  gen->add_flag("--force", force, "overwrite a non-empty directory");

  CLI::App* tasr = app.add_subcommand(
      "train-asr", "pretrain the feedback and evaluation recognizers");
  tasr->add_option("--config", config_path, "config file (JSON)");
  tasr->add_option("--out", out_dir, "checkpoint directory")->required();
  tasr->add_option("--seed", seed, "seed override");

  CLI::App* tr = app.add_subcommand("train", "train the lip-to-speech model");
  tr->add_option("--config", config_path, "config file (JSON)");
  tr->add_option("--out", out_dir, "run directory")->required();
  tr->add_option("--seed", seed, "seed override");
  tr->add_option("--resume", resume_path, "training checkpoint to resume");
  tr->add_option("--asr", asr_path, "feedback ASR checkpoint")->required();

  CLI::App* syn =
      app.add_subcommand("synthesize", "synthesize speech from a silent video");
  syn->add_option("--config", config_path, "config file (JSON)");
  syn->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
  syn->add_option("--video", video_path, "video tensor container")->required();
  syn->add_option("--speaker-ref", ref_path, "speaker reference wav")
      ->required();
  syn->add_option("--out", out_path, "output wav path")->required();
  syn->add_option("--gl-iters", gl_iters, "Griffin-Lim iterations");
  syn->add_option("--seed", seed, "Griffin-Lim phase seed");
  syn->add_option("--vocab", vocab_path, "vocabulary file to verify against");

  CLI::App* ev = app.add_subcommand("evaluate", "run the metric harness");
  ev->add_option("--config", config_path, "config file (JSON)");
  ev->add_option("--checkpoint", ckpt_path, "model checkpoint")->required();
  ev->add_option("--asr", asr_path, "evaluation ASR checkpoint")->required();
  ev->add_option("--out", out_dir, "report directory")->required();
  ev->add_option("--split", split_name, "train|val|all");
  ev->add_flag("--oracle", oracle, "score ground-truth mels");
  ev->add_option("--seed", seed, "seed override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) return CmdGenData(config_path, out_dir, seed, force);
    if (tasr->parsed()) return CmdTrainAsr(config_path, out_dir, seed);
    if (tr->parsed()) {
      return CmdTrain(config_path, out_dir, seed, resume_path, asr_path);
    }
    if (syn->parsed()) {
      return CmdSynthesize(config_path, ckpt_path, video_path, ref_path,
                           out_path, gl_iters, seed, vocab_path);
    }
    if (ev->parsed()) {
      return CmdEvaluate(config_path, ckpt_path, asr_path, out_dir, split_name,
                         oracle, seed);
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
