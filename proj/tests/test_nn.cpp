// tests/test_nn.cpp
//
// Finite-difference checks for every autodiff op, CTC against brute-force
// path enumeration, and optimizer semantics.

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
#include <functional>

#include "doctest.h"
#include "lip2speech/layers.hpp"
#include "lip2speech/nn.hpp"

using namespace l2s;
using namespace l2s::nn;

namespace {

Mat RandomMat(int64_t r, int64_t c, uint64_t seed, double lo = -1.0,
              double hi = 1.0) {
  Rng rng(seed, 0x6d617472ull);
  Mat m(r, c);
  for (int64_t i = 0; i < r; ++i) {
    for (int64_t j = 0; j < c; ++j) m(i, j) = rng.Uniform(lo, hi);
  }
  return m;
}

// Inputs bounded away from zero, for ops with a kink at the origin.
Mat RandomMatAwayFromZero(int64_t r, int64_t c, uint64_t seed) {
  Rng rng(seed, 0x6e7a0000ull);
  Mat m(r, c);
  for (int64_t i = 0; i < r; ++i) {
    for (int64_t j = 0; j < c; ++j) {
      const double mag = rng.Uniform(0.1, 1.0);
      m(i, j) = rng.Uniform() < 0.5 ? -mag : mag;
    }
  }
  return m;
}

// Central-difference check of d(build())/d(param) for every listed parameter
// entry. `build` must reconstruct the whole graph from the params' current
// values.
void CheckGradients(const std::vector<Var>& params,
                    const std::function<Var()>& build, double tol = 2e-5,
                    double h = 1e-6) {
  Var loss = build();
  Backward(loss);
  std::vector<Mat> analytic;
  analytic.reserve(params.size());
  for (const Var& p : params) analytic.push_back(p->grad);

  for (size_t pi = 0; pi < params.size(); ++pi) {
    Mat& v = params[pi]->value;
    for (int64_t i = 0; i < v.rows(); ++i) {
      for (int64_t j = 0; j < v.cols(); ++j) {
        const double orig = v(i, j);
        v(i, j) = orig + h;
        const double up = build()->Scalar();
        v(i, j) = orig - h;
        const double down = build()->Scalar();
        v(i, j) = orig;
        const double fd = (up - down) / (2.0 * h);
        const double a = analytic[pi](i, j);
        const double scale = std::max({std::abs(a), std::abs(fd), 1e-4});
        INFO("param ", pi, " entry (", i, ",", j, "): analytic ", a, " fd ",
             fd);
        CHECK(std::abs(a - fd) / scale < tol);
      }
    }
  }
}

// Scalarizes y against a fixed random target; gradient 2(y - R)/n is
// non-degenerate everywhere.
Var Scalarize(const Var& y, uint64_t seed) {
  return MseLoss(y, Constant(RandomMat(y->Rows(), y->Cols(), seed)));
}

// All-path CTC enumeration on posterior matrix p.
double BruteForceCtc(const Mat& p, const std::vector<int>& labels, int blank) {
  const int t_len = static_cast<int>(p.rows());
  const int n = static_cast<int>(p.cols());
  double total = 0.0;
  std::vector<int> path(static_cast<size_t>(t_len), 0);
  const int64_t count = static_cast<int64_t>(std::pow(n, t_len));
  for (int64_t code = 0; code < count; ++code) {
    int64_t c = code;
    double prob = 1.0;
    for (int t = 0; t < t_len; ++t) {
      path[static_cast<size_t>(t)] = static_cast<int>(c % n);
      c /= n;
      prob *= p(t, path[static_cast<size_t>(t)]);
    }
    // Collapse repeats then drop blanks.
    std::vector<int> collapsed;
    int prev = -1;
    for (int t = 0; t < t_len; ++t) {
      const int s = path[static_cast<size_t>(t)];
      if (s != prev && s != blank) collapsed.push_back(s);
      prev = s;
    }
    if (collapsed == labels) total += prob;
  }
  return -std::log(total);
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("elementwise and structural op gradients match finite differences") {
  Var a = Parameter(RandomMat(3, 4, 1), "a");
  Var b = Parameter(RandomMat(3, 4, 2), "b");
  Var row = Parameter(RandomMat(1, 4, 3), "row");

  CheckGradients({a, b}, [&] { return Scalarize(Add(a, b), 10); });
  CheckGradients({a, b}, [&] { return Scalarize(Sub(a, b), 11); });
  CheckGradients({a, b}, [&] { return Scalarize(Mul(a, b), 12); });
  CheckGradients({a, row}, [&] { return Scalarize(AddRowVector(a, row), 13); });
  CheckGradients({row}, [&] { return Scalarize(BroadcastRow(row, 5), 14); });
  CheckGradients({a}, [&] { return Scalarize(Scale(a, -2.5), 15); });
  CheckGradients({a}, [&] { return Scalarize(Sigmoid(a), 16); });
  CheckGradients({a}, [&] { return Scalarize(Swish(a), 17); });
  CheckGradients({a}, [&] { return Scalarize(Transpose(a), 18); });
  CheckGradients({a}, [&] { return Scalarize(SliceRows(a, 1, 2), 19); });
  CheckGradients({a}, [&] { return Scalarize(SliceCols(a, 1, 3), 20); });
  CheckGradients({a, b}, [&] { return Scalarize(ConcatCols({a, b}), 21); });
  CheckGradients({a, b}, [&] { return Scalarize(ConcatRows({a, b}), 22); });
  CheckGradients({a}, [&] { return Scalarize(MeanRows(a), 23); });

  Var az = Parameter(RandomMatAwayFromZero(3, 4, 4), "az");
  CheckGradients({az}, [&] { return Scalarize(Relu(az), 24); });
  CheckGradients({az}, [&] { return Scalarize(LeakyRelu(az), 25); });
  CheckGradients({az}, [&] { return L1Loss(az, Mat::Zero(3, 4)); });
}

TEST_CASE("dense algebra gradients match finite differences") {
  Var a = Parameter(RandomMat(3, 4, 5), "a");
  Var b = Parameter(RandomMat(4, 2, 6), "b");
  CheckGradients({a, b}, [&] { return Scalarize(MatMul(a, b), 30); });

  Var x = Parameter(RandomMat(4, 5, 7), "x");
  CheckGradients({x}, [&] { return Scalarize(SoftmaxRows(x), 31); });
  CheckGradients({x}, [&] { return Scalarize(LogSoftmaxRows(x), 32); });

  Var g = Parameter(RandomMat(1, 5, 8, 0.5, 1.5), "g");
  Var bia = Parameter(RandomMat(1, 5, 9), "b");
  CheckGradients({x, g, bia},
                 [&] { return Scalarize(LayerNormRows(x, g, bia), 33); });

  Var p = Parameter(RandomMat(3, 4, 40), "p");
  Var q = Parameter(RandomMat(3, 4, 41), "q");
  CheckGradients({p, q}, [&] { return MseLoss(p, q); });
}

TEST_CASE("convolution gradients match finite differences") {
  // conv1d, stride 1 and 2
  Var x = Parameter(RandomMat(7, 3, 50), "x");
  Var w = Parameter(RandomMat(4, 9, 51), "w");  // 4 out, 3 in * k3
  Var b = Parameter(RandomMat(1, 4, 52), "b");
  CheckGradients({x, w, b}, [&] { return Scalarize(Conv1d(x, w, b, 3, 1), 60); });
  CheckGradients({x, w, b}, [&] { return Scalarize(Conv1d(x, w, b, 3, 2), 61); });

  Var dw = Parameter(RandomMat(3, 5, 53), "dw");  // depthwise k5 on 3 ch
  Var db = Parameter(RandomMat(1, 3, 54), "db");
  CheckGradients({x, dw, db},
                 [&] { return Scalarize(DepthwiseConv1d(x, dw, db, 5), 62); });

  // conv2d on 2-channel 6x6 frames
  ImageShape in{2, 6, 6};
  Var img = Parameter(RandomMat(2, in.Flat(), 55), "img");
  Var cw = Parameter(RandomMat(3, 2 * 9, 56), "cw");
  Var cb = Parameter(RandomMat(1, 3, 57), "cb");
  CheckGradients({img, cw, cb}, [&] {
    return Scalarize(Conv2d(img, in, cw, cb, 3, 2, 1, nullptr), 63);
  });

  // 3D stem: temporal kernel 3 over 4 frames
  Var sw = Parameter(RandomMat(2, 3 * 2 * 9, 58), "sw");
  Var sb = Parameter(RandomMat(1, 2, 59), "sb");
  Var vid = Parameter(RandomMat(4, in.Flat(), 60), "vid");
  CheckGradients({vid, sw, sb}, [&] {
    return Scalarize(Conv3dStem(vid, in, sw, sb, 3, 3, 1, 1, nullptr), 64);
  });

  CheckGradients({img}, [&] { return Scalarize(GlobalAvgPool2d(img, in), 65); });
  CheckGradients({img}, [&] {
    return Scalarize(AvgPool2d(img, in, 2, nullptr), 66);
  });
  CheckGradients({x}, [&] { return Scalarize(ExpandFrames(x, 3), 67); });
}

TEST_CASE("gradient accumulates through reused nodes") {
  Var x = Parameter(RandomMat(2, 3, 70), "x");
  CheckGradients({x}, [&] { return Scalarize(Add(Mul(x, x), x), 71); });
}

TEST_CASE("weighted sum combines scalars with the stated fold") {
  Var a = Parameter(RandomMat(1, 1, 80), "a");
  Var b = Parameter(RandomMat(1, 1, 81), "b");
  Var c = Parameter(RandomMat(1, 1, 82), "c");
  Var total = WeightedSum({a, b, c}, {1.0, 2.0, 100.0});
  double expect = 0.0;
  expect += 1.0 * a->Scalar();
  expect += 2.0 * b->Scalar();
  expect += 100.0 * c->Scalar();
  CHECK(total->Scalar() == expect);
  CheckGradients({a, b, c},
                 [&] { return WeightedSum({a, b, c}, {1.0, 2.0, 100.0}); });
}

TEST_CASE("detach cuts the gradient path") {
  Var x = Parameter(RandomMat(2, 2, 85), "x");
  Var loss = MseLoss(Detach(x), Constant(Mat::Zero(2, 2)));
  CHECK_FALSE(loss->needs_grad);
}

// ---- CTC ----

TEST_CASE("ctc: single forced path has zero loss") {
  Mat p(1, 2);
  p << 0.0, 1.0;  // blank prob 0, 'a' prob 1
  CHECK(CtcLossValue(p, {1}) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("ctc: uniform posteriors over T=2, N=3 give -log(1/3)") {
  Mat p(2, 3);
  p.setConstant(1.0 / 3.0);
  // Matching paths for "a": aa, -a, a-; total 3/9.
  CHECK(CtcLossValue(p, {1}) == doctest::Approx(std::log(3.0)).epsilon(1e-9));
}

TEST_CASE("ctc rejects infeasible targets with a defined error") {
  Mat p(2, 3);
  p.setConstant(1.0 / 3.0);
  CHECK_THROWS_WITH_AS(CtcLossValue(p, {1, 1}),
                       doctest::Contains("infeasible"), InputError);
  CHECK(CtcMinFrames({1, 1}) == 3);
  CHECK(CtcMinFrames({1, 2}) == 2);
}

TEST_CASE("ctc node agrees with the pure function") {
  Rng rng(4242, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const int t_len = 2 + static_cast<int>(rng.UniformInt(3));
    Mat logits = RandomMat(t_len, 3, 9000 + static_cast<uint64_t>(trial), -2, 2);
    Mat p(t_len, 3);
    for (int t = 0; t < t_len; ++t) {
      double m = logits.row(t).maxCoeff();
      p.row(t) = (logits.row(t).array() - m).exp();
      p.row(t) /= p.row(t).sum();
    }
    std::vector<int> labels{1 + static_cast<int>(rng.UniformInt(2))};
    Var node = CtcLoss(Constant(logits), labels);
    CHECK(node->Scalar() ==
          doctest::Approx(CtcLossValue(p, labels)).epsilon(1e-9));
  }
}

TEST_CASE("ctc matches brute-force path enumeration on random instances") {
  Rng rng(777, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const int t_len = 1 + static_cast<int>(rng.UniformInt(4));
    const int n = 2 + static_cast<int>(rng.UniformInt(2));
    const int l = 1 + static_cast<int>(rng.UniformInt(2));
    std::vector<int> labels;
    for (int i = 0; i < l; ++i) {
      labels.push_back(1 + static_cast<int>(rng.UniformInt(
                               static_cast<uint64_t>(n - 1))));
    }
    if (t_len < CtcMinFrames(labels)) continue;

    Mat p(t_len, n);
    for (int t = 0; t < t_len; ++t) {
      double sum = 0.0;
      for (int k = 0; k < n; ++k) {
        p(t, k) = rng.Uniform(0.05, 1.0);
        sum += p(t, k);
      }
      p.row(t) /= sum;
    }
    CHECK(CtcLossValue(p, labels) ==
          doctest::Approx(BruteForceCtc(p, labels, 0)).epsilon(1e-6));
  }
}

TEST_CASE("ctc gradient w.r.t. logits matches finite differences") {
  Var logits = Parameter(RandomMat(5, 4, 90, -1.5, 1.5), "logits");
  std::vector<int> labels{2, 1};
  CheckGradients({logits}, [&] { return CtcLoss(logits, labels); }, 1e-4,
                 1e-6);
}

// ---- optimizer ----

TEST_CASE("adamw applies decoupled weight decay") {
  Var p = Parameter(Mat::Constant(1, 1, 2.0), "p");
  AdamW opt;
  opt.lr = 0.1;
  opt.weight_decay = 0.5;
  p->grad = Mat::Zero(1, 1);
  opt.Step({p});
  // Zero gradient: only-decay update p -= lr * wd * p.
  CHECK(p->value(0, 0) == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
}

TEST_CASE("adamw first step moves by roughly lr in the gradient direction") {
  Var p = Parameter(Mat::Constant(1, 1, 0.0), "p");
  AdamW opt;
  opt.lr = 1e-3;
  opt.weight_decay = 0.0;
  p->grad = Mat::Constant(1, 1, 5.0);
  opt.Step({p});
  CHECK(p->value(0, 0) == doctest::Approx(-1e-3).epsilon(1e-4));
}

TEST_CASE("adamw state round-trips through a container") {
  Var p = Parameter(RandomMat(2, 2, 95), "p");
  AdamW opt;
  p->grad = RandomMat(2, 2, 96);
  opt.Step({p});
  p->grad = RandomMat(2, 2, 97);
  opt.Step({p});

  io::TensorContainer c;
  opt.Export(&c);
  AdamW back;
  back.Import(c, {p});
  CHECK(back.step_count == opt.step_count);
  CHECK(back.m[0] == opt.m[0]);
  CHECK(back.v[0] == opt.v[0]);
}

TEST_CASE("param store freeze stops gradient flow") {
  ParamStore ps;
  Rng rng(1, 2);
  Linear lin(&ps, "lin", 3, 2, &rng);
  ps.SetFrozen(true);
  Var x = Parameter(RandomMat(4, 3, 98), "x");
  Var loss = Scalarize(lin.Forward(x), 99);
  ps.ZeroGrad();
  Backward(loss);
  CHECK(lin.w->grad.cwiseAbs().maxCoeff() == 0.0);
  CHECK(x->grad.cwiseAbs().maxCoeff() > 0.0);

  ps.SetFrozen(false);
  Backward(Scalarize(lin.Forward(x), 99));
  CHECK(lin.w->grad.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("param store export/import round trip preserves the hash") {
  ParamStore ps;
  Rng rng(9, 9);
  Linear l1(&ps, "l1", 4, 4, &rng);
  Linear l2(&ps, "l2", 4, 2, &rng);
  const uint64_t h = ps.ContentHash();

  io::TensorContainer c;
  ps.Export(&c);

  ParamStore ps2;
  Rng rng2(10, 10);
  Linear m1(&ps2, "l1", 4, 4, &rng2);
  Linear m2(&ps2, "l2", 4, 2, &rng2);
  CHECK(ps2.ContentHash() != h);
  ps2.Import(c);
  CHECK(ps2.ContentHash() == h);
}

}  // TEST_SUITE
