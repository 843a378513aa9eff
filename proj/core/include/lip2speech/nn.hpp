// lip2speech/nn.hpp
//
// Minimal reverse-mode autodiff over dense double matrices. A training step
// builds a fresh DAG of Nodes, calls Backward on the scalar loss, and reads
// gradients off the parameter leaves. Convolutions run as im2col + GEMM and
// re-gather the im2col buffer during the backward pass instead of storing it.
//
// Convention throughout: rows index time (or batch-of-frames), columns index
// channels/features. Image-valued activations keep one video frame per row,
// flattened channel-major: index = (c * H + h) * W + w.

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

#ifndef LIP2SPEECH_NN_HPP_
#define LIP2SPEECH_NN_HPP_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lip2speech/common.hpp"
#include "lip2speech/mat.hpp"

namespace l2s::nn {

class Node;
using Var = std::shared_ptr<Node>;

class Node {
 public:
  Mat value;
  Mat grad;
  bool is_param = false;
  bool needs_grad = false;
  std::string name;
  std::vector<Var> inputs;
  std::function<void(Node&)> backward_fn;

  int64_t Rows() const { return value.rows(); }
  int64_t Cols() const { return value.cols(); }
  double Scalar() const {
    Check(value.size() == 1, "Scalar() on non-scalar node");
    return value(0, 0);
  }
};

Var Constant(Mat v);
Var Parameter(Mat v, std::string name);

// Topological reverse sweep from a scalar root. Grads of every node reached
// from the root are zeroed first, then accumulated; parameter nodes outside
// the graph are untouched.
void Backward(const Var& root);

// ---- elementwise / structural ----
Var Add(const Var& a, const Var& b);
Var Sub(const Var& a, const Var& b);
Var AddRowVector(const Var& a, const Var& row);   // row: 1 x n
Var BroadcastRow(const Var& row, int64_t rows);   // 1 x n -> rows x n
Var Scale(const Var& a, double s);
Var AddConst(const Var& a, const Mat& c);
Var Mul(const Var& a, const Var& b);
Var Sigmoid(const Var& a);
Var Swish(const Var& a);
Var Relu(const Var& a);
// max(x, alpha*x); the mostly-at-floor mel targets plus L1's sign gradients
// can drive a plain-relu conv stack into an all-dead constant-output
// attractor, so the synthesizer-side stacks keep a negative-side slope.
Var LeakyRelu(const Var& a, double alpha = 0.1);
Var Transpose(const Var& a);
Var SliceRows(const Var& a, int64_t r0, int64_t nrows);
Var SliceCols(const Var& a, int64_t c0, int64_t ncols);
Var ConcatCols(const std::vector<Var>& parts);
Var ConcatRows(const std::vector<Var>& parts);
Var MeanRows(const Var& a);  // T x C -> 1 x C

// ---- dense algebra ----
Var MatMul(const Var& a, const Var& b);
Var SoftmaxRows(const Var& a);
Var LogSoftmaxRows(const Var& a);
Var LayerNormRows(const Var& x, const Var& gain, const Var& bias,
                  double eps = 1e-6);

// ---- convolutions (time = rows) ----
// w: Cout x (Cin*k), flat index ci*k + dk; "same" padding (k-1)/2, then
// stride. Output frames = (T + 2p - k)/stride + 1.
Var Conv1d(const Var& x, const Var& w, const Var& b, int kernel, int stride = 1);
// w: C x k, per-channel filters, stride 1, same padding.
Var DepthwiseConv1d(const Var& x, const Var& w, const Var& b, int kernel);

struct ImageShape {
  int c = 1, h = 0, w = 0;
  int64_t Flat() const { return static_cast<int64_t>(c) * h * w; }
};

// w: Cout x (Cin*kh*kw), flat index (ci*k + dh)*k + dw (square kernel).
Var Conv2d(const Var& x, const ImageShape& in, const Var& w, const Var& b,
           int kernel, int stride, int pad, ImageShape* out_shape);
// 3D stem: temporal kernel t_kernel (stride 1, pad (t_kernel-1)/2 with zero
// frames) fused with a square spatial kernel. w: Cout x (tk*Cin*k*k).
Var Conv3dStem(const Var& x, const ImageShape& in, const Var& w, const Var& b,
               int t_kernel, int kernel, int stride, int pad,
               ImageShape* out_shape);
Var GlobalAvgPool2d(const Var& x, const ImageShape& in);  // -> T x C
Var AvgPool2d(const Var& x, const ImageShape& in, int kernel,
              ImageShape* out_shape);  // stride == kernel

// Frame-rate expansion for the synthesizer head: T x (K*r) -> (r*T) x K,
// sub-frame j of frame t taken from columns [j*K, (j+1)*K).
Var ExpandFrames(const Var& x, int r);

// ---- losses (scalars, mean reduction) ----
Var L1Loss(const Var& pred, const Mat& target);
Var MseLoss(const Var& pred, const Var& target);  // grad flows to both unless detached
Var Detach(const Var& a);                          // cuts the graph
Var WeightedSum(const std::vector<Var>& scalars,
                const std::vector<double>& weights);

// CTC negative log-likelihood over logits (T x N); log-softmax and the
// forward-backward recursion run inside the node. Throws InputError when the
// blank-augmented target cannot fit in T frames.
Var CtcLoss(const Var& logits, const std::vector<int>& labels, int blank = 0);

// Pure-function CTC on row-normalized posteriors (the spec-facing overload;
// shares the DP with the node above via log(p)).
double CtcLossValue(const Mat& posteriors, const std::vector<int>& labels,
                    int blank = 0);

// Number of frames required by CTC for a label sequence: L plus the count of
// adjacent repeats.
int CtcMinFrames(const std::vector<int>& labels);

}  // namespace l2s::nn

#endif  // LIP2SPEECH_NN_HPP_
