// tests/test_cli.cpp
//
// End-to-end checks of the command-line tool: exit codes, determinism of
// gen-data, and one miniature gen -> train-asr -> train -> synthesize ->
// evaluate pipeline.

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
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "lip2speech/common.hpp"
#include "lip2speech/dsp.hpp"

namespace fs = std::filesystem;
using namespace l2s;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string output;
};

CliResult RunCli(const std::string& args) {
  const std::string cmd = std::string(L2S_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CliResult r;
  char buf[512];
  while (fgets(buf, sizeof(buf), pipe)) r.output += buf;
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

void WriteTinyConfig(const std::string& path, const std::string& corpus_dir) {
  std::ofstream out(path);
  out << R"({
  "seed": 1,
  "data": {
    "corpus_dir": ")" << corpus_dir << R"(",
    "val_fraction": 0.2,
    "split_seed": 1,
    "gen": {"n_glyphs": 4, "n_speakers": 1, "n_utterances": 6,
            "tokens_per_utt": 3, "seed": 5}
  },
  "train": {"batch_size": 3, "max_epochs": 1, "mel_window": 80,
            "learning_rate": 0.0005},
  "objective": {"gate_fallback_epoch": 0},
  "asr": {"max_epochs": 2, "target_train_wer": 1.0},
  "eval": {"griffin_lim_iters": 8}
})";
}

uint64_t HashTree(const std::string& root) {
  std::vector<std::string> rel;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) {
      rel.push_back(fs::relative(e.path(), root).string());
    }
  }
  std::sort(rel.begin(), rel.end());
  uint64_t h = 0xcbf29ce484222325ull;
  for (const std::string& r : rel) {
    h = Fnv1a64(r.data(), r.size(), h);
    std::ifstream in((fs::path(root) / r).string(), std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    h = Fnv1a64(bytes.data(), bytes.size(), h);
  }
  return h;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with code 2") {
  CHECK(RunCli("").exit_code == 2);
  CHECK(RunCli("no-such-command").exit_code == 2);
  CHECK(RunCli("train --out x").exit_code == 2);  // missing required --asr
  CHECK(RunCli("--help").exit_code == 0);
}

TEST_CASE("gen-data is deterministic per seed and guards existing output") {
  for (const char* d : {"cli_gen_a", "cli_gen_b"}) fs::remove_all(d);
  WriteTinyConfig("cli_gen_cfg.json", "unused");

  CliResult a = RunCli("gen-data --config cli_gen_cfg.json --out cli_gen_a "
                       "--seed 7");
  CHECK(a.exit_code == 0);
  CHECK(a.output.find("manifest:") != std::string::npos);
  CHECK(a.output.find("utterances: 6") != std::string::npos);

  CliResult b = RunCli("gen-data --config cli_gen_cfg.json --out cli_gen_b "
                       "--seed 7");
  CHECK(b.exit_code == 0);
  CHECK(HashTree("cli_gen_a") == HashTree("cli_gen_b"));

  // Existing non-empty directory requires --force.
  CliResult refuse = RunCli(
      "gen-data --config cli_gen_cfg.json --out cli_gen_a --seed 7");
  CHECK(refuse.exit_code == 2);
  CliResult forced = RunCli(
      "gen-data --config cli_gen_cfg.json --out cli_gen_a --seed 7 --force");
  CHECK(forced.exit_code == 0);

  // Unwritable path (a file used as a directory).
  std::ofstream blocker("cli_gen_file");
  blocker << "x";
  blocker.close();
  CliResult bad = RunCli(
      "gen-data --config cli_gen_cfg.json --out cli_gen_file/sub --seed 7");
  CHECK(bad.exit_code == 2);

  fs::remove_all("cli_gen_a");
  fs::remove_all("cli_gen_b");
  fs::remove("cli_gen_file");
  fs::remove("cli_gen_cfg.json");
}

TEST_CASE("miniature pipeline: gen, train-asr, train, synthesize, evaluate") {
  for (const char* d :
       {"cli_pipe_corpus", "cli_pipe_asr", "cli_pipe_run", "cli_pipe_eval"}) {
    fs::remove_all(d);
  }
  WriteTinyConfig("cli_pipe_cfg.json", "cli_pipe_corpus");

  CHECK(RunCli("gen-data --config cli_pipe_cfg.json").exit_code == 0);

  CliResult tasr =
      RunCli("train-asr --config cli_pipe_cfg.json --out cli_pipe_asr");
  CHECK(tasr.exit_code == 0);
  CHECK(fs::exists("cli_pipe_asr/asr_feedback.l2st"));
  CHECK(fs::exists("cli_pipe_asr/asr_evaluation.l2st"));
  CHECK(fs::exists("cli_pipe_asr/vocab.json"));

  // Rerun with the same seeds reproduces both checkpoints bit-exactly.
  CHECK(RunCli("train-asr --config cli_pipe_cfg.json --out cli_pipe_asr2")
            .exit_code == 0);
  auto file_bytes = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  CHECK(file_bytes("cli_pipe_asr/asr_feedback.l2st") ==
        file_bytes("cli_pipe_asr2/asr_feedback.l2st"));
  CHECK(file_bytes("cli_pipe_asr/asr_evaluation.l2st") ==
        file_bytes("cli_pipe_asr2/asr_evaluation.l2st"));
  fs::remove_all("cli_pipe_asr2");

  // Missing feedback checkpoint fails before any training.
  CHECK(RunCli("train --config cli_pipe_cfg.json --out cli_pipe_run "
               "--asr nonexistent.l2st")
            .exit_code == 2);

  CliResult tr = RunCli(
      "train --config cli_pipe_cfg.json --out cli_pipe_run "
      "--asr cli_pipe_asr/asr_feedback.l2st");
  CHECK(tr.exit_code == 0);
  CHECK(fs::exists("cli_pipe_run/metrics.csv"));
  CHECK(fs::exists("cli_pipe_run/config.json"));
  CHECK(fs::exists("cli_pipe_run/ckpt_epoch_0001.l2st"));

  // Speaker reference of the configured duration (0.2 s at 16 kHz).
  dsp::Waveform ref;
  ref.samples.resize(3200);
  for (int i = 0; i < 3200; ++i) {
    ref.samples[static_cast<size_t>(i)] =
        0.3 * std::sin(2.0 * M_PI * 700.0 * i / 16000.0);
  }
  dsp::WriteWav("cli_pipe_ref.wav", ref);

  // Missing reference file is a usage error.
  CHECK(RunCli("synthesize --config cli_pipe_cfg.json "
               "--checkpoint cli_pipe_run/ckpt_epoch_0001.l2st "
               "--video cli_pipe_corpus/video/utt_000000.l2st "
               "--speaker-ref missing.wav --out cli_pipe_out.wav")
            .exit_code == 2);

  CliResult syn = RunCli(
      "synthesize --config cli_pipe_cfg.json "
      "--checkpoint cli_pipe_run/ckpt_epoch_0001.l2st "
      "--video cli_pipe_corpus/video/utt_000000.l2st "
      "--speaker-ref cli_pipe_ref.wav --out cli_pipe_out.wav "
      "--vocab cli_pipe_run/vocab.json --seed 3");
  CHECK(syn.exit_code == 0);
  REQUIRE(fs::exists("cli_pipe_out.wav"));
  // 12 video frames -> 48 mel frames -> 0.48 s.
  dsp::Waveform out = dsp::ReadWav("cli_pipe_out.wav");
  CHECK(out.samples.size() == 48 * 160);

  // Deterministic with a fixed Griffin-Lim seed.
  RunCli(
      "synthesize --config cli_pipe_cfg.json "
      "--checkpoint cli_pipe_run/ckpt_epoch_0001.l2st "
      "--video cli_pipe_corpus/video/utt_000000.l2st "
      "--speaker-ref cli_pipe_ref.wav --out cli_pipe_out2.wav "
      "--seed 3");
  dsp::Waveform out2 = dsp::ReadWav("cli_pipe_out2.wav");
  CHECK(out.samples == out2.samples);

  // The evaluation command refuses a feedback-tagged recognizer.
  CHECK(RunCli("evaluate --config cli_pipe_cfg.json "
               "--checkpoint cli_pipe_run/ckpt_epoch_0001.l2st "
               "--asr cli_pipe_asr/asr_feedback.l2st --out cli_pipe_eval")
            .exit_code == 2);

  CliResult ev = RunCli(
      "evaluate --config cli_pipe_cfg.json "
      "--checkpoint cli_pipe_run/ckpt_epoch_0001.l2st "
      "--asr cli_pipe_asr/asr_evaluation.l2st --out cli_pipe_eval "
      "--split val");
  CHECK(ev.exit_code == 0);
  CHECK(ev.output.find("STOI") != std::string::npos);
  CHECK(ev.output.find("WER%") != std::string::npos);
  CHECK(fs::exists("cli_pipe_eval/report.csv"));
  CHECK(fs::exists("cli_pipe_eval/report.json"));

  for (const char* d :
       {"cli_pipe_corpus", "cli_pipe_asr", "cli_pipe_run", "cli_pipe_eval"}) {
    fs::remove_all(d);
  }
  fs::remove("cli_pipe_cfg.json");
  fs::remove("cli_pipe_ref.wav");
  fs::remove("cli_pipe_out.wav");
  fs::remove("cli_pipe_out2.wav");
}

}  // TEST_SUITE
