// core/src/nn.cpp

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

#include "lip2speech/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

namespace l2s::nn {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Var MakeNode(Mat value, std::vector<Var> inputs,
             std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->inputs = std::move(inputs);
  for (const Var& in : n->inputs) {
    if (in->needs_grad) {
      n->needs_grad = true;
      break;
    }
  }
  if (n->needs_grad) n->backward_fn = std::move(backward);
  return n;
}

inline double LogSumExp2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline double LogSumExp3(double a, double b, double c) {
  return LogSumExp2(LogSumExp2(a, b), c);
}

}  // namespace

Var Constant(Mat v) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  return n;
}

Var Parameter(Mat v, std::string name) {
  auto n = std::make_shared<Node>();
  n->value = std::move(v);
  n->grad = Mat::Zero(n->value.rows(), n->value.cols());
  n->is_param = true;
  n->needs_grad = true;
  n->name = std::move(name);
  return n;
}

void Backward(const Var& root) {
  Check(root->value.size() == 1, "Backward expects a scalar root");

  // Iterative post-order DFS.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->inputs.size()) {
      Node* next = node->inputs[idx++].get();
      if (next->needs_grad && !visited.count(next)) {
        visited.insert(next);
        stack.emplace_back(next, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    n->grad = Mat::Zero(n->value.rows(), n->value.cols());
  }
  root->grad(0, 0) = 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// elementwise / structural

Var Add(const Var& a, const Var& b) {
  Check(a->Rows() == b->Rows() && a->Cols() == b->Cols(), "Add: shape mismatch");
  return MakeNode(a->value + b->value, {a, b}, [](Node& n) {
    if (n.inputs[0]->needs_grad) n.inputs[0]->grad += n.grad;
    if (n.inputs[1]->needs_grad) n.inputs[1]->grad += n.grad;
  });
}

Var Sub(const Var& a, const Var& b) {
  Check(a->Rows() == b->Rows() && a->Cols() == b->Cols(), "Sub: shape mismatch");
  return MakeNode(a->value - b->value, {a, b}, [](Node& n) {
    if (n.inputs[0]->needs_grad) n.inputs[0]->grad += n.grad;
    if (n.inputs[1]->needs_grad) n.inputs[1]->grad -= n.grad;
  });
}

Var AddRowVector(const Var& a, const Var& row) {
  Check(row->Rows() == 1 && row->Cols() == a->Cols(),
        "AddRowVector: bias shape mismatch");
  Mat v = a->value;
  v.rowwise() += Eigen::RowVectorXd(row->value.row(0));
  return MakeNode(std::move(v), {a, row}, [](Node& n) {
    if (n.inputs[0]->needs_grad) n.inputs[0]->grad += n.grad;
    if (n.inputs[1]->needs_grad)
      n.inputs[1]->grad += n.grad.colwise().sum();
  });
}

Var BroadcastRow(const Var& row, int64_t rows) {
  Check(row->Rows() == 1, "BroadcastRow: input must be 1 x n");
  Mat v(rows, row->Cols());
  v.rowwise() = Eigen::RowVectorXd(row->value.row(0));
  return MakeNode(std::move(v), {row}, [](Node& n) {
    if (n.inputs[0]->needs_grad)
      n.inputs[0]->grad += n.grad.colwise().sum();
  });
}

Var Scale(const Var& a, double s) {
  return MakeNode(a->value * s, {a}, [s](Node& n) {
    if (n.inputs[0]->needs_grad) n.inputs[0]->grad += s * n.grad;
  });
}

Var AddConst(const Var& a, const Mat& c) {
  Check(a->Rows() == c.rows() && a->Cols() == c.cols(),
        "AddConst: shape mismatch");
  return MakeNode(a->value + c, {a}, [](Node& n) {
    if (n.inputs[0]->needs_grad) n.inputs[0]->grad += n.grad;
  });
}

Var Mul(const Var& a, const Var& b) {
  Check(a->Rows() == b->Rows() && a->Cols() == b->Cols(), "Mul: shape mismatch");
  return MakeNode(a->value.cwiseProduct(b->value), {a, b}, [](Node& n) {
    if (n.inputs[0]->needs_grad)
      n.inputs[0]->grad += n.grad.cwiseProduct(n.inputs[1]->value);
    if (n.inputs[1]->needs_grad)
      n.inputs[1]->grad += n.grad.cwiseProduct(n.inputs[0]->value);
  });
}

Var Sigmoid(const Var& a) {
  Mat y = a->value.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  return MakeNode(std::move(y), {a}, [](Node& n) {
    if (!n.inputs[0]->needs_grad) return;
    n.inputs[0]->grad +=
        n.grad.cwiseProduct(n.value.cwiseProduct((1.0 - n.value.array()).matrix()));
  });
}

Var Swish(const Var& a) {
  Mat s = a->value.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  Mat y = a->value.cwiseProduct(s);
  return MakeNode(std::move(y), {a}, [s](Node& n) {
    if (!n.inputs[0]->needs_grad) return;
    // d/dx x*s(x) = s + x*s*(1-s)
    const Mat& x = n.inputs[0]->value;
    Mat d = s.array() * (1.0 + x.array() * (1.0 - s.array()));
    n.inputs[0]->grad += n.grad.cwiseProduct(d);
  });
}

Var Relu(const Var& a) {
  return MakeNode(a->value.cwiseMax(0.0), {a}, [](Node& n) {
    if (!n.inputs[0]->needs_grad) return;
    Mat mask = (n.inputs[0]->value.array() > 0.0).cast<double>();
    n.inputs[0]->grad += n.grad.cwiseProduct(mask);
  });
}

Var LeakyRelu(const Var& a, double alpha) {
  Mat y = a->value.unaryExpr(
      [alpha](double x) { return x > 0.0 ? x : alpha * x; });
  return MakeNode(std::move(y), {a}, [alpha](Node& n) {
    if (!n.inputs[0]->needs_grad) return;
    Mat d = n.inputs[0]->value.unaryExpr(
        [alpha](double x) { return x > 0.0 ? 1.0 : alpha; });
    n.inputs[0]->grad += n.grad.cwiseProduct(d);
  });
}

Var Transpose(const Var& a) {
  return MakeNode(a->value.transpose(), {a}, [](Node& n) {
    if (n.inputs[0]->needs_grad) n.inputs[0]->grad += n.grad.transpose();
  });
}

Var SliceRows(const Var& a, int64_t r0, int64_t nrows) {
  Check(r0 >= 0 && r0 + nrows <= a->Rows(), "SliceRows: out of range");
  return MakeNode(a->value.middleRows(r0, nrows), {a}, [r0, nrows](Node& n) {
    if (n.inputs[0]->needs_grad)
      n.inputs[0]->grad.middleRows(r0, nrows) += n.grad;
  });
}

Var SliceCols(const Var& a, int64_t c0, int64_t ncols) {
  Check(c0 >= 0 && c0 + ncols <= a->Cols(), "SliceCols: out of range");
  return MakeNode(a->value.middleCols(c0, ncols), {a}, [c0, ncols](Node& n) {
    if (n.inputs[0]->needs_grad)
      n.inputs[0]->grad.middleCols(c0, ncols) += n.grad;
  });
}

Var ConcatCols(const std::vector<Var>& parts) {
  Check(!parts.empty(), "ConcatCols: empty input");
  int64_t rows = parts[0]->Rows();
  int64_t cols = 0;
  for (const Var& p : parts) {
    Check(p->Rows() == rows, "ConcatCols: row mismatch");
    cols += p->Cols();
  }
  Mat v(rows, cols);
  int64_t c = 0;
  for (const Var& p : parts) {
    v.middleCols(c, p->Cols()) = p->value;
    c += p->Cols();
  }
  return MakeNode(std::move(v), parts, [](Node& n) {
    int64_t c = 0;
    for (const Var& p : n.inputs) {
      if (p->needs_grad) p->grad += n.grad.middleCols(c, p->Cols());
      c += p->Cols();
    }
  });
}

Var ConcatRows(const std::vector<Var>& parts) {
  Check(!parts.empty(), "ConcatRows: empty input");
  int64_t cols = parts[0]->Cols();
  int64_t rows = 0;
  for (const Var& p : parts) {
    Check(p->Cols() == cols, "ConcatRows: column mismatch");
    rows += p->Rows();
  }
  Mat v(rows, cols);
  int64_t r = 0;
  for (const Var& p : parts) {
    v.middleRows(r, p->Rows()) = p->value;
    r += p->Rows();
  }
  return MakeNode(std::move(v), parts, [](Node& n) {
    int64_t r = 0;
    for (const Var& p : n.inputs) {
      if (p->needs_grad) p->grad += n.grad.middleRows(r, p->Rows());
      r += p->Rows();
    }
  });
}

Var MeanRows(const Var& a) {
  Mat v = a->value.colwise().mean();
  return MakeNode(std::move(v), {a}, [](Node& n) {
    if (!n.inputs[0]->needs_grad) return;
    const double inv = 1.0 / static_cast<double>(n.inputs[0]->Rows());
    n.inputs[0]->grad.rowwise() += Eigen::RowVectorXd(inv * n.grad.row(0));
  });
}

// ---------------------------------------------------------------------------
// dense algebra

Var MatMul(const Var& a, const Var& b) {
  Check(a->Cols() == b->Rows(), "MatMul: inner dimension mismatch");
  return MakeNode(a->value * b->value, {a, b}, [](Node& n) {
    if (n.inputs[0]->needs_grad)
      n.inputs[0]->grad += n.grad * n.inputs[1]->value.transpose();
    if (n.inputs[1]->needs_grad)
      n.inputs[1]->grad += n.inputs[0]->value.transpose() * n.grad;
  });
}

Var SoftmaxRows(const Var& a) {
  Mat y = a->value;
  for (int64_t r = 0; r < y.rows(); ++r) {
    double m = y.row(r).maxCoeff();
    y.row(r) = (y.row(r).array() - m).exp();
    y.row(r) /= y.row(r).sum();
  }
  return MakeNode(std::move(y), {a}, [](Node& n) {
    if (!n.inputs[0]->needs_grad) return;
    for (int64_t r = 0; r < n.value.rows(); ++r) {
      double dot = n.grad.row(r).dot(n.value.row(r));
      n.inputs[0]->grad.row(r) +=
          n.value.row(r).cwiseProduct(n.grad.row(r).array().matrix() -
                                      Eigen::RowVectorXd::Constant(n.value.cols(), dot));
    }
  });
}

Var LogSoftmaxRows(const Var& a) {
  Mat y = a->value;
  for (int64_t r = 0; r < y.rows(); ++r) {
    double m = y.row(r).maxCoeff();
    double lse = m + std::log((y.row(r).array() - m).exp().sum());
    y.row(r) = y.row(r).array() - lse;
  }
  return MakeNode(std::move(y), {a}, [](Node& n) {
    if (!n.inputs[0]->needs_grad) return;
    for (int64_t r = 0; r < n.value.rows(); ++r) {
      double gsum = n.grad.row(r).sum();
      n.inputs[0]->grad.row(r) +=
          n.grad.row(r) - gsum * n.value.row(r).array().exp().matrix();
    }
  });
}

Var LayerNormRows(const Var& x, const Var& gain, const Var& bias, double eps) {
  const int64_t d = x->Cols();
  Check(gain->Rows() == 1 && gain->Cols() == d, "LayerNorm: gain shape");
  Check(bias->Rows() == 1 && bias->Cols() == d, "LayerNorm: bias shape");

  Mat xhat(x->Rows(), d);
  Vec inv_std(x->Rows());
  for (int64_t r = 0; r < x->Rows(); ++r) {
    double mu = x->value.row(r).mean();
    double var = (x->value.row(r).array() - mu).square().sum() / d;
    double inv = 1.0 / std::sqrt(var + eps);
    inv_std(r) = inv;
    xhat.row(r) = (x->value.row(r).array() - mu) * inv;
  }
  Mat y = xhat;
  y.array().rowwise() *= gain->value.row(0).array();
  y.rowwise() += Eigen::RowVectorXd(bias->value.row(0));

  return MakeNode(std::move(y), {x, gain, bias},
                  [xhat, inv_std](Node& n) {
    const Var& x = n.inputs[0];
    const Var& g = n.inputs[1];
    const Var& b = n.inputs[2];
    const int64_t d = x->Cols();
    if (g->needs_grad)
      g->grad += n.grad.cwiseProduct(xhat).colwise().sum();
    if (b->needs_grad) b->grad += n.grad.colwise().sum();
    if (x->needs_grad) {
      for (int64_t r = 0; r < x->Rows(); ++r) {
        Eigen::RowVectorXd dxhat =
            n.grad.row(r).cwiseProduct(g->value.row(0));
        double m1 = dxhat.mean();
        double m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
        x->grad.row(r) +=
            inv_std(r) *
            (dxhat.array() - m1 - xhat.row(r).array() * m2).matrix();
      }
    }
  });
}

// ---------------------------------------------------------------------------
// convolutions

namespace {

// conv1d gather: row t_out, col ci*k + dk.
Mat Im2ColTime(const Mat& x, int kernel, int stride, int pad, int64_t t_out) {
  const int64_t t_in = x.rows();
  const int64_t cin = x.cols();
  Mat col = Mat::Zero(t_out, cin * kernel);
  for (int64_t t = 0; t < t_out; ++t) {
    for (int dk = 0; dk < kernel; ++dk) {
      const int64_t src = t * stride + dk - pad;
      if (src < 0 || src >= t_in) continue;
      for (int64_t ci = 0; ci < cin; ++ci) {
        col(t, ci * kernel + dk) = x(src, ci);
      }
    }
  }
  return col;
}

void Col2ImTime(const Mat& dcol, int kernel, int stride, int pad, Mat* dx) {
  const int64_t t_in = dx->rows();
  const int64_t cin = dx->cols();
  for (int64_t t = 0; t < dcol.rows(); ++t) {
    for (int dk = 0; dk < kernel; ++dk) {
      const int64_t src = t * stride + dk - pad;
      if (src < 0 || src >= t_in) continue;
      for (int64_t ci = 0; ci < cin; ++ci) {
        (*dx)(src, ci) += dcol(t, ci * kernel + dk);
      }
    }
  }
}

// Shared 2D/3D spatial gather. The temporal kernel is 1 for plain conv2d.
// col rows: t*H'W' + oh*W' + ow; cols: ((dt*Cin + ci)*k + dh)*k + dw.
Mat Im2ColSpace(const Mat& x, const ImageShape& in, int t_kernel, int kernel,
                int stride, int pad, int hw_out, int w_out) {
  const int64_t t_frames = x.rows();
  const int t_pad = (t_kernel - 1) / 2;
  const int64_t cols = static_cast<int64_t>(t_kernel) * in.c * kernel * kernel;
  Mat col = Mat::Zero(t_frames * hw_out, cols);
  const int h_out = hw_out / w_out;
  for (int64_t t = 0; t < t_frames; ++t) {
    for (int dt = 0; dt < t_kernel; ++dt) {
      const int64_t tf = t + dt - t_pad;
      if (tf < 0 || tf >= t_frames) continue;
      for (int oh = 0; oh < h_out; ++oh) {
        for (int ow = 0; ow < w_out; ++ow) {
          const int64_t row = t * hw_out + static_cast<int64_t>(oh) * w_out + ow;
          for (int ci = 0; ci < in.c; ++ci) {
            for (int dh = 0; dh < kernel; ++dh) {
              const int ih = oh * stride + dh - pad;
              if (ih < 0 || ih >= in.h) continue;
              for (int dw = 0; dw < kernel; ++dw) {
                const int iw = ow * stride + dw - pad;
                if (iw < 0 || iw >= in.w) continue;
                const int64_t c =
                    ((static_cast<int64_t>(dt) * in.c + ci) * kernel + dh) *
                        kernel + dw;
                col(row, c) = x(tf, (static_cast<int64_t>(ci) * in.h + ih) *
                                        in.w + iw);
              }
            }
          }
        }
      }
    }
  }
  return col;
}

void Col2ImSpace(const Mat& dcol, const ImageShape& in, int t_kernel,
                 int kernel, int stride, int pad, int hw_out, int w_out,
                 Mat* dx) {
  const int64_t t_frames = dx->rows();
  const int t_pad = (t_kernel - 1) / 2;
  const int h_out = hw_out / w_out;
  for (int64_t t = 0; t < t_frames; ++t) {
    for (int dt = 0; dt < t_kernel; ++dt) {
      const int64_t tf = t + dt - t_pad;
      if (tf < 0 || tf >= t_frames) continue;
      for (int oh = 0; oh < h_out; ++oh) {
        for (int ow = 0; ow < w_out; ++ow) {
          const int64_t row = t * hw_out + static_cast<int64_t>(oh) * w_out + ow;
          for (int ci = 0; ci < in.c; ++ci) {
            for (int dh = 0; dh < kernel; ++dh) {
              const int ih = oh * stride + dh - pad;
              if (ih < 0 || ih >= in.h) continue;
              for (int dw = 0; dw < kernel; ++dw) {
                const int iw = ow * stride + dw - pad;
                if (iw < 0 || iw >= in.w) continue;
                const int64_t c =
                    ((static_cast<int64_t>(dt) * in.c + ci) * kernel + dh) *
                        kernel + dw;
                (*dx)(tf, (static_cast<int64_t>(ci) * in.h + ih) * in.w + iw) +=
                    dcol(row, c);
              }
            }
          }
        }
      }
    }
  }
}

// M (T*H'W' x Cout) -> activation (T x Cout*H'W') and back.
Mat GemmToActivation(const Mat& m, int64_t t_frames, int cout, int hw_out) {
  Mat out(t_frames, static_cast<int64_t>(cout) * hw_out);
  for (int64_t t = 0; t < t_frames; ++t) {
    for (int co = 0; co < cout; ++co) {
      for (int p = 0; p < hw_out; ++p) {
        out(t, static_cast<int64_t>(co) * hw_out + p) =
            m(t * hw_out + p, co);
      }
    }
  }
  return out;
}

Mat ActivationToGemm(const Mat& act, int64_t t_frames, int cout, int hw_out) {
  Mat m(t_frames * hw_out, cout);
  for (int64_t t = 0; t < t_frames; ++t) {
    for (int co = 0; co < cout; ++co) {
      for (int p = 0; p < hw_out; ++p) {
        m(t * hw_out + p, co) = act(t, static_cast<int64_t>(co) * hw_out + p);
      }
    }
  }
  return m;
}

Var SpatialConv(const Var& x, const ImageShape& in, const Var& w, const Var& b,
                int t_kernel, int kernel, int stride, int pad,
                ImageShape* out_shape) {
  const int h_out = (in.h + 2 * pad - kernel) / stride + 1;
  const int w_out = (in.w + 2 * pad - kernel) / stride + 1;
  Check(h_out > 0 && w_out > 0, "conv: spatial size too small for stride plan");
  const int cout = static_cast<int>(w->Rows());
  Check(w->Cols() == static_cast<int64_t>(t_kernel) * in.c * kernel * kernel,
        "conv: weight shape mismatch");
  Check(b->Rows() == 1 && b->Cols() == cout, "conv: bias shape mismatch");
  Check(x->Cols() == in.Flat(), "conv: input shape mismatch");
  const int hw_out = h_out * w_out;
  const int64_t t_frames = x->Rows();

  Mat col = Im2ColSpace(x->value, in, t_kernel, kernel, stride, pad, hw_out,
                        w_out);
  Mat m = col * w->value.transpose();
  m.rowwise() += Eigen::RowVectorXd(b->value.row(0));
  Mat act = GemmToActivation(m, t_frames, cout, hw_out);
  if (out_shape) *out_shape = ImageShape{cout, h_out, w_out};

  ImageShape in_copy = in;
  return MakeNode(std::move(act), {x, w, b},
                  [in_copy, t_kernel, kernel, stride, pad, hw_out, w_out,
                   cout](Node& n) {
    const Var& x = n.inputs[0];
    const Var& w = n.inputs[1];
    const Var& b = n.inputs[2];
    const int64_t t_frames = x->Rows();
    Mat dm = ActivationToGemm(n.grad, t_frames, cout, hw_out);
    if (b->needs_grad) b->grad += dm.colwise().sum();
    if (w->needs_grad) {
      Mat col = Im2ColSpace(x->value, in_copy, t_kernel, kernel, stride, pad,
                            hw_out, w_out);
      w->grad += dm.transpose() * col;
    }
    if (x->needs_grad) {
      Mat dcol = dm * w->value;
      Col2ImSpace(dcol, in_copy, t_kernel, kernel, stride, pad, hw_out, w_out,
                  &x->grad);
    }
  });
}

}  // namespace

Var Conv1d(const Var& x, const Var& w, const Var& b, int kernel, int stride) {
  const int pad = (kernel - 1) / 2;
  const int64_t cin = x->Cols();
  const int64_t cout = w->Rows();
  Check(w->Cols() == cin * kernel, "Conv1d: weight shape mismatch");
  Check(b->Rows() == 1 && b->Cols() == cout, "Conv1d: bias shape mismatch");
  const int64_t t_out = (x->Rows() + 2 * pad - kernel) / stride + 1;
  Check(t_out > 0, "Conv1d: input too short");

  Mat col = Im2ColTime(x->value, kernel, stride, pad, t_out);
  Mat y = col * w->value.transpose();
  y.rowwise() += Eigen::RowVectorXd(b->value.row(0));

  return MakeNode(std::move(y), {x, w, b}, [kernel, stride, pad](Node& n) {
    const Var& x = n.inputs[0];
    const Var& w = n.inputs[1];
    const Var& b = n.inputs[2];
    if (b->needs_grad) b->grad += n.grad.colwise().sum();
    if (w->needs_grad) {
      Mat col = Im2ColTime(x->value, kernel, stride, pad, n.grad.rows());
      w->grad += n.grad.transpose() * col;
    }
    if (x->needs_grad) {
      Mat dcol = n.grad * w->value;
      Col2ImTime(dcol, kernel, stride, pad, &x->grad);
    }
  });
}

Var DepthwiseConv1d(const Var& x, const Var& w, const Var& b, int kernel) {
  const int pad = (kernel - 1) / 2;
  const int64_t c = x->Cols();
  Check(w->Rows() == c && w->Cols() == kernel,
        "DepthwiseConv1d: weight shape mismatch");
  Check(b->Rows() == 1 && b->Cols() == c, "DepthwiseConv1d: bias shape");
  const int64_t t = x->Rows();

  Mat y = Mat::Zero(t, c);
  for (int64_t ti = 0; ti < t; ++ti) {
    for (int dk = 0; dk < kernel; ++dk) {
      const int64_t src = ti + dk - pad;
      if (src < 0 || src >= t) continue;
      y.row(ti) += x->value.row(src).cwiseProduct(w->value.col(dk).transpose());
    }
  }
  y.rowwise() += Eigen::RowVectorXd(b->value.row(0));

  return MakeNode(std::move(y), {x, w, b}, [kernel, pad](Node& n) {
    const Var& x = n.inputs[0];
    const Var& w = n.inputs[1];
    const Var& b = n.inputs[2];
    const int64_t t = x->Rows();
    if (b->needs_grad) b->grad += n.grad.colwise().sum();
    for (int64_t ti = 0; ti < t; ++ti) {
      for (int dk = 0; dk < kernel; ++dk) {
        const int64_t src = ti + dk - pad;
        if (src < 0 || src >= t) continue;
        if (w->needs_grad) {
          w->grad.col(dk) +=
              n.grad.row(ti).cwiseProduct(x->value.row(src)).transpose();
        }
        if (x->needs_grad) {
          x->grad.row(src) +=
              n.grad.row(ti).cwiseProduct(w->value.col(dk).transpose());
        }
      }
    }
  });
}

Var Conv2d(const Var& x, const ImageShape& in, const Var& w, const Var& b,
           int kernel, int stride, int pad, ImageShape* out_shape) {
  return SpatialConv(x, in, w, b, /*t_kernel=*/1, kernel, stride, pad,
                     out_shape);
}

Var Conv3dStem(const Var& x, const ImageShape& in, const Var& w, const Var& b,
               int t_kernel, int kernel, int stride, int pad,
               ImageShape* out_shape) {
  return SpatialConv(x, in, w, b, t_kernel, kernel, stride, pad, out_shape);
}

Var GlobalAvgPool2d(const Var& x, const ImageShape& in) {
  Check(x->Cols() == in.Flat(), "GlobalAvgPool2d: shape mismatch");
  const int hw = in.h * in.w;
  Mat y(x->Rows(), in.c);
  for (int64_t t = 0; t < x->Rows(); ++t) {
    for (int c = 0; c < in.c; ++c) {
      y(t, c) = x->value.row(t).segment(static_cast<int64_t>(c) * hw, hw).mean();
    }
  }
  ImageShape shape = in;
  return MakeNode(std::move(y), {x}, [shape](Node& n) {
    if (!n.inputs[0]->needs_grad) return;
    const int hw = shape.h * shape.w;
    const double inv = 1.0 / hw;
    for (int64_t t = 0; t < n.grad.rows(); ++t) {
      for (int c = 0; c < shape.c; ++c) {
        n.inputs[0]->grad.row(t).segment(static_cast<int64_t>(c) * hw, hw)
            .array() += n.grad(t, c) * inv;
      }
    }
  });
}

Var AvgPool2d(const Var& x, const ImageShape& in, int kernel,
              ImageShape* out_shape) {
  Check(in.h % kernel == 0 && in.w % kernel == 0,
        "AvgPool2d: size not divisible by kernel");
  const int h_out = in.h / kernel;
  const int w_out = in.w / kernel;
  Mat y = Mat::Zero(x->Rows(), static_cast<int64_t>(in.c) * h_out * w_out);
  const double inv = 1.0 / (kernel * kernel);
  for (int64_t t = 0; t < x->Rows(); ++t) {
    for (int c = 0; c < in.c; ++c) {
      for (int oh = 0; oh < h_out; ++oh) {
        for (int ow = 0; ow < w_out; ++ow) {
          double s = 0.0;
          for (int dh = 0; dh < kernel; ++dh) {
            for (int dw = 0; dw < kernel; ++dw) {
              s += x->value(t, (static_cast<int64_t>(c) * in.h +
                                oh * kernel + dh) * in.w + ow * kernel + dw);
            }
          }
          y(t, (static_cast<int64_t>(c) * h_out + oh) * w_out + ow) = s * inv;
        }
      }
    }
  }
  if (out_shape) *out_shape = ImageShape{in.c, h_out, w_out};
  ImageShape shape = in;
  return MakeNode(std::move(y), {x}, [shape, kernel](Node& n) {
    if (!n.inputs[0]->needs_grad) return;
    const int h_out = shape.h / kernel;
    const int w_out = shape.w / kernel;
    const double inv = 1.0 / (kernel * kernel);
    for (int64_t t = 0; t < n.grad.rows(); ++t) {
      for (int c = 0; c < shape.c; ++c) {
        for (int oh = 0; oh < h_out; ++oh) {
          for (int ow = 0; ow < w_out; ++ow) {
            const double g =
                n.grad(t, (static_cast<int64_t>(c) * h_out + oh) * w_out + ow) *
                inv;
            for (int dh = 0; dh < kernel; ++dh) {
              for (int dw = 0; dw < kernel; ++dw) {
                n.inputs[0]->grad(t, (static_cast<int64_t>(c) * shape.h +
                                      oh * kernel + dh) * shape.w +
                                         ow * kernel + dw) += g;
              }
            }
          }
        }
      }
    }
  });
}

Var ExpandFrames(const Var& x, int r) {
  Check(x->Cols() % r == 0, "ExpandFrames: columns not divisible by r");
  const int64_t k = x->Cols() / r;
  Mat y(x->Rows() * r, k);
  for (int64_t t = 0; t < x->Rows(); ++t) {
    for (int j = 0; j < r; ++j) {
      y.row(t * r + j) = x->value.row(t).segment(j * k, k);
    }
  }
  return MakeNode(std::move(y), {x}, [r, k](Node& n) {
    if (!n.inputs[0]->needs_grad) return;
    for (int64_t t = 0; t < n.inputs[0]->Rows(); ++t) {
      for (int j = 0; j < r; ++j) {
        n.inputs[0]->grad.row(t).segment(j * k, k) += n.grad.row(t * r + j);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// losses

Var L1Loss(const Var& pred, const Mat& target) {
  Require(pred->Rows() == target.rows() && pred->Cols() == target.cols(),
          "reconstruction loss: shape mismatch");
  Mat diff = pred->value - target;
  const double n = static_cast<double>(diff.size());
  Mat v(1, 1);
  v(0, 0) = diff.cwiseAbs().sum() / n;
  return MakeNode(std::move(v), {pred}, [diff, n](Node& node) {
    if (!node.inputs[0]->needs_grad) return;
    const double g = node.grad(0, 0) / n;
    node.inputs[0]->grad +=
        g * diff.unaryExpr([](double d) {
          return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        });
  });
}

Var MseLoss(const Var& pred, const Var& target) {
  Require(pred->Rows() == target->Rows() && pred->Cols() == target->Cols(),
          "mse loss: shape mismatch");
  Mat diff = pred->value - target->value;
  const double n = static_cast<double>(diff.size());
  Mat v(1, 1);
  v(0, 0) = diff.squaredNorm() / n;
  return MakeNode(std::move(v), {pred, target}, [diff, n](Node& node) {
    const double g = node.grad(0, 0) * 2.0 / n;
    if (node.inputs[0]->needs_grad) node.inputs[0]->grad += g * diff;
    if (node.inputs[1]->needs_grad) node.inputs[1]->grad -= g * diff;
  });
}

Var Detach(const Var& a) { return Constant(a->value); }

Var WeightedSum(const std::vector<Var>& scalars,
                const std::vector<double>& weights) {
  Check(scalars.size() == weights.size() && !scalars.empty(),
        "WeightedSum: size mismatch");
  double total = 0.0;
  for (size_t i = 0; i < scalars.size(); ++i) {
    Check(scalars[i]->value.size() == 1, "WeightedSum: non-scalar input");
    total += weights[i] * scalars[i]->value(0, 0);
  }
  Mat v(1, 1);
  v(0, 0) = total;
  std::vector<double> w = weights;
  return MakeNode(std::move(v), scalars, [w](Node& n) {
    for (size_t i = 0; i < n.inputs.size(); ++i) {
      if (n.inputs[i]->needs_grad)
        n.inputs[i]->grad(0, 0) += w[i] * n.grad(0, 0);
    }
  });
}

// ---------------------------------------------------------------------------
// CTC

int CtcMinFrames(const std::vector<int>& labels) {
  int repeats = 0;
  for (size_t i = 1; i < labels.size(); ++i) {
    if (labels[i] == labels[i - 1]) ++repeats;
  }
  return static_cast<int>(labels.size()) + repeats;
}

namespace {

struct CtcWork {
  double log_prob = kNegInf;  // log P(U | p)
  Mat gamma;                  // T x N emission posteriors
};

// Forward-backward over the blank-augmented label sequence, log domain.
// logp must already be row-normalized log-probabilities.
CtcWork CtcForwardBackward(const Mat& logp, const std::vector<int>& labels,
                           int blank, bool want_gamma) {
  const int t_len = static_cast<int>(logp.rows());
  const int n_classes = static_cast<int>(logp.cols());
  for (int u : labels) {
    Require(u >= 0 && u < n_classes && u != blank,
            "ctc: label id out of range or equal to blank");
  }
  Require(t_len >= CtcMinFrames(labels),
          "ctc target infeasible: needs " +
              std::to_string(CtcMinFrames(labels)) + " frames, got " +
              std::to_string(t_len));

  const int l = static_cast<int>(labels.size());
  const int r = 2 * l + 1;
  std::vector<int> ext(static_cast<size_t>(r), blank);
  for (int i = 0; i < l; ++i) ext[static_cast<size_t>(2 * i + 1)] = labels[static_cast<size_t>(i)];

  Mat alpha = Mat::Constant(t_len, r, kNegInf);
  alpha(0, 0) = logp(0, blank);
  if (r > 1) alpha(0, 1) = logp(0, ext[1]);
  for (int t = 1; t < t_len; ++t) {
    for (int s = 0; s < r; ++s) {
      double best = alpha(t - 1, s);
      if (s >= 1) best = LogSumExp2(best, alpha(t - 1, s - 1));
      if (s >= 2 && ext[static_cast<size_t>(s)] != blank &&
          ext[static_cast<size_t>(s)] != ext[static_cast<size_t>(s - 2)]) {
        best = LogSumExp2(best, alpha(t - 1, s - 2));
      }
      alpha(t, s) = best == kNegInf ? kNegInf
                                    : best + logp(t, ext[static_cast<size_t>(s)]);
    }
  }

  CtcWork work;
  work.log_prob = alpha(t_len - 1, r - 1);
  if (r > 1) work.log_prob = LogSumExp2(work.log_prob, alpha(t_len - 1, r - 2));
  Check(work.log_prob != kNegInf, "ctc: zero-probability target");
  if (!want_gamma) return work;

  Mat beta = Mat::Constant(t_len, r, kNegInf);
  beta(t_len - 1, r - 1) = logp(t_len - 1, ext[static_cast<size_t>(r - 1)]);
  if (r > 1) beta(t_len - 1, r - 2) = logp(t_len - 1, ext[static_cast<size_t>(r - 2)]);
  for (int t = t_len - 2; t >= 0; --t) {
    for (int s = 0; s < r; ++s) {
      double best = beta(t + 1, s);
      if (s + 1 < r) best = LogSumExp2(best, beta(t + 1, s + 1));
      if (s + 2 < r && ext[static_cast<size_t>(s + 2)] != blank &&
          ext[static_cast<size_t>(s + 2)] != ext[static_cast<size_t>(s)]) {
        best = LogSumExp2(best, beta(t + 1, s + 2));
      }
      beta(t, s) = best == kNegInf ? kNegInf
                                   : best + logp(t, ext[static_cast<size_t>(s)]);
    }
  }

  // gamma(t, k) = sum over states with label k of exp(alpha+beta-emission-logP).
  work.gamma = Mat::Zero(t_len, n_classes);
  for (int t = 0; t < t_len; ++t) {
    for (int s = 0; s < r; ++s) {
      if (alpha(t, s) == kNegInf || beta(t, s) == kNegInf) continue;
      const int k = ext[static_cast<size_t>(s)];
      work.gamma(t, k) += std::exp(alpha(t, s) + beta(t, s) - logp(t, k) -
                                   work.log_prob);
    }
  }
  return work;
}

}  // namespace

Var CtcLoss(const Var& logits, const std::vector<int>& labels, int blank) {
  Mat logp = logits->value;
  Mat p(logp.rows(), logp.cols());
  for (int64_t row = 0; row < logp.rows(); ++row) {
    double m = logp.row(row).maxCoeff();
    double lse = m + std::log((logp.row(row).array() - m).exp().sum());
    logp.row(row) = logp.row(row).array() - lse;
    p.row(row) = logp.row(row).array().exp();
  }
  CtcWork work = CtcForwardBackward(logp, labels, blank,
                                    /*want_gamma=*/logits->needs_grad);
  Mat v(1, 1);
  v(0, 0) = -work.log_prob;
  Mat dlogits;
  if (logits->needs_grad) dlogits = p - work.gamma;
  return MakeNode(std::move(v), {logits}, [dlogits](Node& n) {
    if (n.inputs[0]->needs_grad)
      n.inputs[0]->grad += n.grad(0, 0) * dlogits;
  });
}

double CtcLossValue(const Mat& posteriors, const std::vector<int>& labels,
                    int blank) {
  for (int64_t r = 0; r < posteriors.rows(); ++r) {
    Require(std::abs(posteriors.row(r).sum() - 1.0) < 1e-5,
            "ctc: posterior rows must sum to 1");
  }
  Mat logp = posteriors.unaryExpr(
      [](double x) { return x > 0.0 ? std::log(x) : kNegInf; });
  CtcWork work = CtcForwardBackward(logp, labels, blank, /*want_gamma=*/false);
  return -work.log_prob;
}

}  // namespace l2s::nn
