// lip2speech/layers.hpp
//
// Parameter registry, AdamW, and the layer blocks shared by the Lip2Speech
// network and the ASR: linear/conv layers, layer norm, and the conformer
// block (half-step feed-forwards, self-attention, depthwise conv module).

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

#ifndef LIP2SPEECH_LAYERS_HPP_
#define LIP2SPEECH_LAYERS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "lip2speech/nn.hpp"
#include "lip2speech/tensor_io.hpp"

namespace l2s::nn {

// Ordered registry of trainable parameters. Registration order is the
// construction order of the layers, which keeps seeding and serialization
// deterministic.
class ParamStore {
 public:
  Var Register(const std::string& name, Mat init);
  const std::vector<Var>& params() const { return params_; }

  int64_t TotalWeights() const;
  void ZeroGrad();
  void SetFrozen(bool frozen);
  bool frozen() const { return frozen_; }

  // FNV-1a over the raw parameter bytes, in registration order.
  uint64_t ContentHash() const;

  void Export(io::TensorContainer* out, const std::string& prefix = "") const;
  void Import(const io::TensorContainer& in, const std::string& prefix = "");

 private:
  std::vector<Var> params_;
  bool frozen_ = false;
};

// Decoupled weight-decay Adam. Moment state is serializable so training can
// resume bit-exactly.
struct AdamW {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  int64_t step_count = 0;
  std::vector<Mat> m, v;

  void Step(const std::vector<Var>& params);
  void Export(io::TensorContainer* out) const;
  void Import(const io::TensorContainer& in, const std::vector<Var>& params);
};

double GlobalGradNorm(const std::vector<Var>& params);
void ScaleGrads(const std::vector<Var>& params, double scale);

// ---- initializers ----
Mat GlorotUniform(int64_t rows, int64_t cols, int64_t fan_in, int64_t fan_out,
                  Rng* rng);
Mat HeNormal(int64_t rows, int64_t cols, int64_t fan_in, Rng* rng);

// ---- layers ----
struct Linear {
  Var w;  // in x out
  Var b;  // 1 x out
  Linear() = default;
  Linear(ParamStore* ps, const std::string& name, int64_t in, int64_t out,
         Rng* rng);
  Var Forward(const Var& x) const;
};

struct LayerNorm {
  Var gain, bias;
  LayerNorm() = default;
  LayerNorm(ParamStore* ps, const std::string& name, int64_t dim);
  Var Forward(const Var& x) const;
};

struct Conv1dLayer {
  Var w, b;
  int kernel = 1, stride = 1;
  Conv1dLayer() = default;
  Conv1dLayer(ParamStore* ps, const std::string& name, int64_t in, int64_t out,
              int kernel, int stride, Rng* rng);
  Var Forward(const Var& x) const;
};

struct Conv2dLayer {
  Var w, b;
  int kernel = 3, stride = 1, pad = 1;
  Conv2dLayer() = default;
  Conv2dLayer(ParamStore* ps, const std::string& name, int64_t in, int64_t out,
              int kernel, int stride, int pad, Rng* rng);
  Var Forward(const Var& x, const ImageShape& in, ImageShape* out) const;
};

struct Conv3dStemLayer {
  Var w, b;
  int t_kernel = 5, kernel = 7, stride = 4, pad = 3;
  Conv3dStemLayer() = default;
  Conv3dStemLayer(ParamStore* ps, const std::string& name, int64_t in,
                  int64_t out, int t_kernel, int kernel, int stride, int pad,
                  Rng* rng);
  Var Forward(const Var& x, const ImageShape& in, ImageShape* out) const;
};

Mat SinusoidalPositionalEncoding(int64_t t, int64_t dim);

Var Dropout(const Var& x, double p, Rng* rng);

struct ConformerConfig {
  int layers = 2;
  int heads = 2;
  int kernel = 7;
  int ff_mult = 4;
  double dropout = 0.0;

  bool operator==(const ConformerConfig&) const = default;
};

struct FeedForward {
  LayerNorm ln;
  Linear in, out;
  FeedForward() = default;
  FeedForward(ParamStore* ps, const std::string& name, int64_t dim,
              int ff_mult, Rng* rng);
  Var Forward(const Var& x) const;
};

struct SelfAttention {
  LayerNorm ln;
  Linear qkv, out;
  int heads = 2;
  int64_t dim = 0;
  SelfAttention() = default;
  SelfAttention(ParamStore* ps, const std::string& name, int64_t dim,
                int heads, Rng* rng);
  Var Forward(const Var& x) const;
};

struct ConvModule {
  LayerNorm ln;
  Linear pointwise_in;   // dim -> 2*dim, GLU halves it back
  Var dw_w, dw_b;        // depthwise kernel
  LayerNorm ln_mid;
  Linear pointwise_out;
  int kernel = 7;
  ConvModule() = default;
  ConvModule(ParamStore* ps, const std::string& name, int64_t dim, int kernel,
             Rng* rng);
  Var Forward(const Var& x) const;
};

// Standard conformer block; stride-free, handles any T >= 1 via padding.
struct ConformerBlock {
  FeedForward ff1, ff2;
  SelfAttention attn;
  ConvModule conv;
  LayerNorm final_ln;
  ConformerBlock() = default;
  ConformerBlock(ParamStore* ps, const std::string& name, int64_t dim,
                 const ConformerConfig& cfg, Rng* rng);
  Var Forward(const Var& x) const;
};

// Block stack with sinusoidal positions added at the input.
struct ConformerEncoder {
  std::vector<ConformerBlock> blocks;
  int64_t dim = 0;
  ConformerEncoder() = default;
  ConformerEncoder(ParamStore* ps, const std::string& name, int64_t dim,
                   const ConformerConfig& cfg, Rng* rng);
  Var Forward(const Var& x) const;
};

}  // namespace l2s::nn

#endif  // LIP2SPEECH_LAYERS_HPP_
