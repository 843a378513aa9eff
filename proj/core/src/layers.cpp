// core/src/layers.cpp

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

#include "lip2speech/layers.hpp"

#include <cmath>

namespace l2s::nn {

Var ParamStore::Register(const std::string& name, Mat init) {
  for (const Var& p : params_) {
    Check(p->name != name, "duplicate parameter name: " + name);
  }
  Var p = Parameter(std::move(init), name);
  if (frozen_) p->needs_grad = false;
  params_.push_back(p);
  return p;
}

int64_t ParamStore::TotalWeights() const {
  int64_t n = 0;
  for (const Var& p : params_) n += p->value.size();
  return n;
}

void ParamStore::ZeroGrad() {
  for (const Var& p : params_) {
    p->grad = Mat::Zero(p->value.rows(), p->value.cols());
  }
}

void ParamStore::SetFrozen(bool frozen) {
  frozen_ = frozen;
  for (const Var& p : params_) p->needs_grad = !frozen;
}

uint64_t ParamStore::ContentHash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const Var& p : params_) {
    h = Fnv1a64(p->name.data(), p->name.size(), h);
    h = Fnv1a64(p->value.data(),
                static_cast<size_t>(p->value.size()) * sizeof(double), h);
  }
  return h;
}

void ParamStore::Export(io::TensorContainer* out,
                        const std::string& prefix) const {
  for (const Var& p : params_) {
    std::vector<double> data(p->value.data(),
                             p->value.data() + p->value.size());
    out->PutF64(prefix + p->name, {p->value.rows(), p->value.cols()},
                std::move(data));
  }
}

void ParamStore::Import(const io::TensorContainer& in,
                        const std::string& prefix) {
  for (const Var& p : params_) {
    const io::TensorEntry& e = in.Get(prefix + p->name);
    Require(e.shape.size() == 2 && e.shape[0] == p->value.rows() &&
                e.shape[1] == p->value.cols(),
            "checkpoint shape mismatch for parameter " + p->name);
    std::vector<double> data = e.AsF64();
    std::copy(data.begin(), data.end(), p->value.data());
  }
}

void AdamW::Step(const std::vector<Var>& params) {
  if (m.empty()) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const Var& p : params) {
      m.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
      v.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
    }
  }
  Check(m.size() == params.size(), "AdamW: parameter count changed");
  ++step_count;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
  for (size_t i = 0; i < params.size(); ++i) {
    const Mat& g = params[i]->grad;
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g.cwiseProduct(g);
    Mat mhat = m[i] / bc1;
    Mat vhat = v[i] / bc2;
    params[i]->value -=
        lr * (mhat.array() / (vhat.array().sqrt() + eps)).matrix() +
        (lr * weight_decay) * params[i]->value;
  }
}

void AdamW::Export(io::TensorContainer* out) const {
  out->PutF64("optim/step_count", {1}, {static_cast<double>(step_count)});
  for (size_t i = 0; i < m.size(); ++i) {
    std::vector<double> md(m[i].data(), m[i].data() + m[i].size());
    std::vector<double> vd(v[i].data(), v[i].data() + v[i].size());
    out->PutF64("optim/m" + std::to_string(i), {m[i].rows(), m[i].cols()},
                std::move(md));
    out->PutF64("optim/v" + std::to_string(i), {v[i].rows(), v[i].cols()},
                std::move(vd));
  }
}

void AdamW::Import(const io::TensorContainer& in,
                   const std::vector<Var>& params) {
  step_count = static_cast<int64_t>(in.Get("optim/step_count").AsF64()[0]);
  m.clear();
  v.clear();
  for (size_t i = 0; i < params.size(); ++i) {
    const io::TensorEntry& em = in.Get("optim/m" + std::to_string(i));
    const io::TensorEntry& ev = in.Get("optim/v" + std::to_string(i));
    Mat mm(em.shape[0], em.shape[1]);
    Mat vv(ev.shape[0], ev.shape[1]);
    std::vector<double> md = em.AsF64(), vd = ev.AsF64();
    std::copy(md.begin(), md.end(), mm.data());
    std::copy(vd.begin(), vd.end(), vv.data());
    m.push_back(std::move(mm));
    v.push_back(std::move(vv));
  }
}

double GlobalGradNorm(const std::vector<Var>& params) {
  double ss = 0.0;
  for (const Var& p : params) ss += p->grad.squaredNorm();
  return std::sqrt(ss);
}

void ScaleGrads(const std::vector<Var>& params, double scale) {
  for (const Var& p : params) p->grad *= scale;
}

Mat GlorotUniform(int64_t rows, int64_t cols, int64_t fan_in, int64_t fan_out,
                  Rng* rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Mat w(rows, cols);
  for (int64_t i = 0; i < rows; ++i) {
    for (int64_t j = 0; j < cols; ++j) w(i, j) = rng->Uniform(-limit, limit);
  }
  return w;
}

Mat HeNormal(int64_t rows, int64_t cols, int64_t fan_in, Rng* rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  Mat w(rows, cols);
  for (int64_t i = 0; i < rows; ++i) {
    for (int64_t j = 0; j < cols; ++j) w(i, j) = std * rng->Normal();
  }
  return w;
}

Linear::Linear(ParamStore* ps, const std::string& name, int64_t in,
               int64_t out, Rng* rng) {
  w = ps->Register(name + ".w", GlorotUniform(in, out, in, out, rng));
  b = ps->Register(name + ".b", Mat::Zero(1, out));
}

Var Linear::Forward(const Var& x) const {
  return AddRowVector(MatMul(x, w), b);
}

LayerNorm::LayerNorm(ParamStore* ps, const std::string& name, int64_t dim) {
  gain = ps->Register(name + ".g", Mat::Ones(1, dim));
  bias = ps->Register(name + ".b", Mat::Zero(1, dim));
}

Var LayerNorm::Forward(const Var& x) const {
  return LayerNormRows(x, gain, bias);
}

Conv1dLayer::Conv1dLayer(ParamStore* ps, const std::string& name, int64_t in,
                         int64_t out, int kernel, int stride, Rng* rng)
    : kernel(kernel), stride(stride) {
  w = ps->Register(name + ".w", HeNormal(out, in * kernel, in * kernel, rng));
  b = ps->Register(name + ".b", Mat::Zero(1, out));
}

Var Conv1dLayer::Forward(const Var& x) const {
  return Conv1d(x, w, b, kernel, stride);
}

Conv2dLayer::Conv2dLayer(ParamStore* ps, const std::string& name, int64_t in,
                         int64_t out, int kernel, int stride, int pad,
                         Rng* rng)
    : kernel(kernel), stride(stride), pad(pad) {
  w = ps->Register(name + ".w",
                   HeNormal(out, in * kernel * kernel, in * kernel * kernel,
                            rng));
  b = ps->Register(name + ".b", Mat::Zero(1, out));
}

Var Conv2dLayer::Forward(const Var& x, const ImageShape& in,
                         ImageShape* out) const {
  return Conv2d(x, in, w, b, kernel, stride, pad, out);
}

Conv3dStemLayer::Conv3dStemLayer(ParamStore* ps, const std::string& name,
                                 int64_t in, int64_t out, int t_kernel,
                                 int kernel, int stride, int pad, Rng* rng)
    : t_kernel(t_kernel), kernel(kernel), stride(stride), pad(pad) {
  const int64_t fan_in = in * t_kernel * kernel * kernel;
  w = ps->Register(name + ".w", HeNormal(out, fan_in, fan_in, rng));
  b = ps->Register(name + ".b", Mat::Zero(1, out));
}

Var Conv3dStemLayer::Forward(const Var& x, const ImageShape& in,
                             ImageShape* out) const {
  return Conv3dStem(x, in, w, b, t_kernel, kernel, stride, pad, out);
}

Mat SinusoidalPositionalEncoding(int64_t t, int64_t dim) {
  Mat pe(t, dim);
  for (int64_t pos = 0; pos < t; ++pos) {
    for (int64_t i = 0; i < dim; ++i) {
      const double angle =
          static_cast<double>(pos) /
          std::pow(10000.0, 2.0 * static_cast<double>(i / 2) /
                                static_cast<double>(dim));
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Var Dropout(const Var& x, double p, Rng* rng) {
  if (p <= 0.0) return x;
  Check(rng != nullptr && p < 1.0, "Dropout: invalid rate or missing rng");
  Mat mask(x->Rows(), x->Cols());
  const double scale = 1.0 / (1.0 - p);
  for (int64_t i = 0; i < mask.rows(); ++i) {
    for (int64_t j = 0; j < mask.cols(); ++j) {
      mask(i, j) = rng->Uniform() < p ? 0.0 : scale;
    }
  }
  return Mul(x, Constant(std::move(mask)));
}

FeedForward::FeedForward(ParamStore* ps, const std::string& name, int64_t dim,
                         int ff_mult, Rng* rng)
    : ln(ps, name + ".ln", dim),
      in(ps, name + ".in", dim, dim * ff_mult, rng),
      out(ps, name + ".out", dim * ff_mult, dim, rng) {}

Var FeedForward::Forward(const Var& x) const {
  return out.Forward(Swish(in.Forward(ln.Forward(x))));
}

SelfAttention::SelfAttention(ParamStore* ps, const std::string& name,
                             int64_t dim, int heads, Rng* rng)
    : ln(ps, name + ".ln", dim),
      qkv(ps, name + ".qkv", dim, 3 * dim, rng),
      out(ps, name + ".out", dim, dim, rng),
      heads(heads),
      dim(dim) {
  Check(dim % heads == 0, "attention dim must divide among heads");
}

Var SelfAttention::Forward(const Var& x) const {
  const int64_t dk = dim / heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  Var h = qkv.Forward(ln.Forward(x));
  std::vector<Var> ctx;
  ctx.reserve(static_cast<size_t>(heads));
  for (int i = 0; i < heads; ++i) {
    Var q = SliceCols(h, i * dk, dk);
    Var k = SliceCols(h, dim + i * dk, dk);
    Var v = SliceCols(h, 2 * dim + i * dk, dk);
    Var scores = Scale(MatMul(q, Transpose(k)), inv_sqrt_dk);
    ctx.push_back(MatMul(SoftmaxRows(scores), v));
  }
  return out.Forward(ConcatCols(ctx));
}

ConvModule::ConvModule(ParamStore* ps, const std::string& name, int64_t dim,
                       int kernel, Rng* rng)
    : ln(ps, name + ".ln", dim),
      pointwise_in(ps, name + ".pw_in", dim, 2 * dim, rng),
      ln_mid(ps, name + ".ln_mid", dim),
      pointwise_out(ps, name + ".pw_out", dim, dim, rng),
      kernel(kernel) {
  dw_w = ps->Register(name + ".dw.w", HeNormal(dim, kernel, kernel, rng));
  dw_b = ps->Register(name + ".dw.b", Mat::Zero(1, dim));
}

Var ConvModule::Forward(const Var& x) const {
  const int64_t dim = dw_w->Rows();
  Var h = pointwise_in.Forward(ln.Forward(x));
  // GLU
  Var gated = Mul(SliceCols(h, 0, dim), Sigmoid(SliceCols(h, dim, dim)));
  Var conv = DepthwiseConv1d(gated, dw_w, dw_b, kernel);
  return pointwise_out.Forward(Swish(ln_mid.Forward(conv)));
}

ConformerBlock::ConformerBlock(ParamStore* ps, const std::string& name,
                               int64_t dim, const ConformerConfig& cfg,
                               Rng* rng)
    : ff1(ps, name + ".ff1", dim, cfg.ff_mult, rng),
      ff2(ps, name + ".ff2", dim, cfg.ff_mult, rng),
      attn(ps, name + ".attn", dim, cfg.heads, rng),
      conv(ps, name + ".conv", dim, cfg.kernel, rng),
      final_ln(ps, name + ".ln", dim) {}

Var ConformerBlock::Forward(const Var& x) const {
  Var h = Add(x, Scale(ff1.Forward(x), 0.5));
  h = Add(h, attn.Forward(h));
  h = Add(h, conv.Forward(h));
  h = Add(h, Scale(ff2.Forward(h), 0.5));
  return final_ln.Forward(h);
}

ConformerEncoder::ConformerEncoder(ParamStore* ps, const std::string& name,
                                   int64_t dim, const ConformerConfig& cfg,
                                   Rng* rng)
    : dim(dim) {
  blocks.reserve(static_cast<size_t>(cfg.layers));
  for (int i = 0; i < cfg.layers; ++i) {
    blocks.emplace_back(ps, name + ".block" + std::to_string(i), dim, cfg,
                        rng);
  }
}

Var ConformerEncoder::Forward(const Var& x) const {
  Check(x->Cols() == dim, "conformer: input width mismatch");
  Var h = AddConst(x, SinusoidalPositionalEncoding(x->Rows(), dim));
  for (const ConformerBlock& block : blocks) h = block.Forward(h);
  return h;
}

}  // namespace l2s::nn
