// tests/test_config.cpp

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

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "lip2speech/config.hpp"

namespace fs = std::filesystem;
using namespace l2s;
using namespace l2s::config;

TEST_SUITE("config") {

TEST_CASE("defaults survive a json round trip") {
  RunConfig cfg;
  RunConfig back = RunConfig::FromJson(cfg.ToJson());
  CHECK(back.ToJson() == cfg.ToJson());
  CHECK(back.train.weights.lambda_rec == 100.0);
  CHECK(back.train.learning_rate == 1e-4);
  CHECK(back.dsp.stft.window_ms == 40.0);
  CHECK(back.dsp.mel.num_channels == 80);
  // Default toy corpus: 200 utterances over 2 speakers.
  CHECK(back.data.gen.n_utterances == 200);
  CHECK(back.data.gen.n_speakers == 2);
}

TEST_CASE("unknown keys are rejected with their path") {
  CHECK_THROWS_WITH_AS(RunConfig::FromJson(R"({"sede": 3})"),
                       doctest::Contains(".sede"), InputError);
  CHECK_THROWS_WITH_AS(
      RunConfig::FromJson(R"({"train": {"learning_rat": 0.1}})"),
      doctest::Contains("train.learning_rat"), InputError);
  CHECK_THROWS_WITH_AS(
      RunConfig::FromJson(R"({"data": {"gen": {"glyphs": 4}}})"),
      doctest::Contains("data.gen.glyphs"), InputError);
}

TEST_CASE("partial documents override only their keys") {
  RunConfig cfg = RunConfig::FromJson(
      R"({"seed": 9, "objective": {"lambda_asr": 0.0},
          "train": {"max_epochs": 3}})");
  CHECK(cfg.seed == 9);
  CHECK(cfg.train.weights.lambda_asr == 0.0);
  CHECK(cfg.train.weights.lambda_rec == 100.0);
  CHECK(cfg.train.max_epochs == 3);
}

TEST_CASE("model profiles resolve with overrides") {
  RunConfig cfg = RunConfig::FromJson(
      R"({"model": {"profile": "full", "embed_dim": 128}})");
  model::ModelConfig mc = cfg.model.Resolve();
  CHECK(mc.encoder.layers == 12);
  CHECK(mc.encoder.heads == 8);
  CHECK(mc.encoder.kernel == 31);
  CHECK(mc.embed_dim == 128);

  RunConfig toy;
  CHECK(toy.model.Resolve().encoder.layers == 2);
}

TEST_CASE("archive writes the resolved config beside outputs") {
  RunConfig cfg;
  cfg.seed = 123;
  const std::string dir = "test_config_archive";
  fs::remove_all(dir);
  cfg.Archive(dir);
  std::ifstream in((fs::path(dir) / "config.json").string());
  REQUIRE(in.good());
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  RunConfig back = RunConfig::FromJson(text);
  CHECK(back.seed == 123);
  fs::remove_all(dir);
}

TEST_CASE("config file parse errors are input errors") {
  const std::string path = "test_bad_config.json";
  std::ofstream out(path);
  out << "{not json";
  out.close();
  CHECK_THROWS_AS(RunConfig::Load(path), InputError);
  fs::remove(path);
}

}  // TEST_SUITE
