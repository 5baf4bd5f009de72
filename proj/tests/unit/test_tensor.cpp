// Copyright 2026 The netdissect Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "common/error.hpp"
#include "oracles/gradcheck.hpp"
#include "oracles/reference_ops.hpp"
#include "tensor/ops.hpp"

using nd::ConvSpec;
using nd::Tensor;
namespace ops = nd::ops;

namespace {

Tensor filled(nd::Shape shape, std::vector<float> values) { return Tensor::from_values(std::move(shape), values); }

ConvSpec spec(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride, std::size_t pad) {
  ConvSpec s;
  s.in_channels = cin;
  s.out_channels = cout;
  s.kernel_h = s.kernel_w = k;
  s.stride = stride;
  s.padding = pad;
  return s;
}

nd::ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const nd::Error& e) {
    return e.code();
  }
  return nd::ErrorCode::kInternal;
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("construction rejects non-finite values and wrong lengths") {
    CHECK(code_of([] { Tensor::from_values({2}, {1.0f, std::nanf("")}); }) == nd::ErrorCode::kNumeric);
    CHECK(code_of([] { Tensor::from_values({2}, {1.0f, INFINITY}); }) == nd::ErrorCode::kNumeric);
    CHECK(code_of([] { Tensor::from_values({2, 2}, {1.0f}); }) == nd::ErrorCode::kShape);
    CHECK_THROWS_AS(Tensor({0, 3}), nd::Error);
    const Tensor t({2, 3}, 1.5f);
    CHECK(t.size() == 6);
    CHECK(nd::shape_numel(t.shape()) == t.size());
  }

  TEST_CASE("conv2d: zero input gives the bias everywhere") {
    const Tensor x({1, 3, 3});
    oracle::GradRng rng(1);
    const Tensor w = rng.tensor({2, 1, 3, 3});
    const Tensor b = filled({2}, {0.25f, -1.5f});
    const Tensor y = ops::conv2d_forward(x, w, b, spec(1, 2, 3, 1, 1));
    REQUIRE(y.shape() == nd::Shape{2, 3, 3});
    for (std::size_t i = 0; i < 9; ++i) {
      CHECK(y[i] == 0.25f);
      CHECK(y[9 + i] == -1.5f);
    }
  }

  TEST_CASE("conv2d: 1x1 identity kernel reproduces the input") {
    oracle::GradRng rng(2);
    const Tensor x = rng.tensor({1, 4, 5});
    const Tensor y = ops::conv2d_forward(x, Tensor({1, 1, 1, 1}, 1.0f), Tensor({1}), spec(1, 1, 1, 1, 0));
    CHECK(y.identical(x));
  }

  TEST_CASE("conv2d: stride 2, pad 1 equals the quadruple loop bit for bit") {
    oracle::GradRng rng(3);
    const ConvSpec s = spec(1, 2, 3, 2, 1);
    const Tensor x = rng.tensor({1, 5, 5});
    const Tensor w = rng.tensor({2, 1, 3, 3});
    const Tensor b = rng.tensor({2});
    const Tensor y = ops::conv2d_forward(x, w, b, s);
    CHECK(y.shape() == nd::Shape{2, 3, 3});
    CHECK(y.identical(oracle::conv2d_loops_float(x, w, b, s)));
  }

  TEST_CASE("conv2d: random shapes match the quadruple loop bit for bit") {
    oracle::GradRng rng(4);
    for (int t = 0; t < 50; ++t) {
      const ConvSpec s = spec(rng.index(1, 4), rng.index(1, 9), rng.index(1, 3), rng.index(1, 2), rng.index(0, 1));
      const Tensor x = rng.tensor({s.in_channels, rng.index(3, 20), rng.index(3, 20)});
      const Tensor w = rng.tensor({s.out_channels, s.in_channels, s.kernel_h, s.kernel_w});
      const Tensor b = rng.tensor({s.out_channels});
      CHECK(ops::conv2d_forward(x, w, b, s).identical(oracle::conv2d_loops_float(x, w, b, s)));
    }
  }

  TEST_CASE("conv2d: mismatches name the offending dimension") {
    const ConvSpec s = spec(2, 1, 3, 1, 1);
    try {
      ops::conv2d_forward(Tensor({3, 4, 4}), Tensor({1, 2, 3, 3}), Tensor({1}), s);
      FAIL("expected a shape error");
    } catch (const nd::Error& e) {
      CHECK(e.code() == nd::ErrorCode::kShape);
      CHECK(std::string(e.what()).find("input channels") != std::string::npos);
    }
    CHECK(code_of([&] { ops::conv2d_forward(Tensor({2, 4, 4}), Tensor({1, 2, 3, 2}), Tensor({1}), s); }) ==
          nd::ErrorCode::kShape);
    CHECK_THROWS_AS(ops::conv2d_forward(Tensor({1, 2, 2}), Tensor({1, 1, 3, 3}), Tensor({1}), spec(1, 1, 3, 1, 0)),
                    nd::Error);
  }

  TEST_CASE("conv2d_backward: zero upstream gives zero gradients; bias grad is the channel sum") {
    oracle::GradRng rng(5);
    const ConvSpec s = spec(2, 3, 3, 1, 1);
    const Tensor x = rng.tensor({2, 6, 6});
    const Tensor w = rng.tensor({3, 2, 3, 3});
    const nd::ConvGrads zero = ops::conv2d_backward(Tensor({3, 6, 6}), x, w, s);
    for (const Tensor* g : {&zero.input, &zero.weights, &zero.bias}) {
      for (float v : g->values()) CHECK(v == 0.0f);
    }
    const Tensor go = rng.tensor({3, 6, 6});
    const nd::ConvGrads g = ops::conv2d_backward(go, x, w, s);
    for (std::size_t c = 0; c < 3; ++c) {
      double sum = 0.0;
      for (std::size_t i = 0; i < 36; ++i) sum += go[c * 36 + i];
      CHECK(g.bias[c] == doctest::Approx(sum).epsilon(1e-5));
    }
    CHECK(g.input.shape() == x.shape());
    CHECK(g.weights.shape() == w.shape());
    CHECK_THROWS_AS(ops::conv2d_backward(Tensor({3, 5, 6}), x, w, s), nd::Error);
  }

  TEST_CASE("relu: sign cases and the zero tie") {
    const Tensor x = filled({3}, {-1.0f, 0.0f, 2.0f});
    const Tensor y = ops::relu(x);
    CHECK(y[0] == 0.0f);
    CHECK(y[1] == 0.0f);
    CHECK(y[2] == 2.0f);
    const Tensor g = ops::relu_backward(Tensor({3}, 1.0f), x);
    CHECK(g[0] == 0.0f);
    CHECK(g[1] == 0.0f);
    CHECK(g[2] == 1.0f);
  }

  TEST_CASE("maxpool2: max of four, tie routing and odd sizes") {
    const nd::MaxPoolResult r = ops::maxpool2(filled({1, 2, 2}, {1, 2, 3, 4}));
    CHECK(r.output.size() == 1);
    CHECK(r.output[0] == 4.0f);

    const nd::MaxPoolResult c = ops::maxpool2(Tensor({2, 4, 4}, 7.0f));
    for (float v : c.output.values()) CHECK(v == 7.0f);
    const Tensor g = ops::maxpool2_backward(Tensor(c.output.shape(), 1.0f), c.argmax);
    for (std::size_t ch = 0; ch < 2; ++ch) {
      for (std::size_t y = 0; y < 4; ++y) {
        for (std::size_t x = 0; x < 4; ++x) CHECK(g.at(ch, y, x) == ((y % 2 == 0 && x % 2 == 0) ? 1.0f : 0.0f));
      }
    }
    CHECK(code_of([] { ops::maxpool2(Tensor({1, 3, 4})); }) == nd::ErrorCode::kShape);
    CHECK(code_of([] { ops::maxpool2(Tensor({1, 4, 5})); }) == nd::ErrorCode::kShape);
  }

  TEST_CASE("maxpool2: random 1x8x8 matches the brute-force window max") {
    oracle::GradRng rng(6);
    for (int t = 0; t < 20; ++t) {
      const Tensor x = rng.tensor({1, 8, 8});
      const Tensor y = ops::maxpool2(x).output;
      const oracle::DTensor ref = oracle::maxpool2(oracle::DTensor::from(x));
      for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == static_cast<float>(ref.v[i]));
    }
  }

  TEST_CASE("fc: identity and zero input") {
    oracle::GradRng rng(7);
    const Tensor x = rng.tensor({3});
    Tensor eye({3, 3});
    for (std::size_t i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0f;
    CHECK(ops::fc_forward(x, eye, Tensor({3})).identical(x));
    const Tensor b = rng.tensor({2});
    CHECK(ops::fc_forward(Tensor({4}), rng.tensor({2, 4}), b).identical(b));
    CHECK_THROWS_AS(ops::fc_forward(Tensor({4}), Tensor({2, 3}), Tensor({2})), nd::Error);
  }

  TEST_CASE("global_avgpool: constant field, arithmetic mean, loop oracle") {
    CHECK(ops::global_avgpool(Tensor({1, 3, 5}, 2.5f))[0] == 2.5f);
    CHECK(ops::global_avgpool(filled({1, 2, 2}, {1, 3, 5, 7}))[0] == 4.0f);
    oracle::GradRng rng(8);
    const Tensor x = rng.tensor({4, 5, 3});
    const Tensor y = ops::global_avgpool(x);
    const oracle::DTensor ref = oracle::global_avgpool(oracle::DTensor::from(x));
    for (std::size_t c = 0; c < 4; ++c) CHECK(y[c] == doctest::Approx(ref.v[c]).epsilon(1e-6));
    const Tensor g = ops::global_avgpool_backward(Tensor({4}, 1.0f), x.shape());
    for (float v : g.values()) CHECK(v == doctest::Approx(1.0 / 15.0));
  }

  TEST_CASE("softmax_xent: symmetry, stability and non-negativity") {
    const nd::SoftmaxXent s = ops::softmax_xent(Tensor({2}), 1);
    CHECK(s.loss == doctest::Approx(std::log(2.0)));
    CHECK(s.grad_logits[0] == doctest::Approx(0.5));
    CHECK(s.grad_logits[1] == doctest::Approx(-0.5));
    const nd::SoftmaxXent big = ops::softmax_xent(filled({2}, {1000.0f, -1000.0f}), 0);
    CHECK(std::isfinite(big.loss));
    CHECK(big.loss == doctest::Approx(0.0));
    CHECK(big.grad_logits.all_finite());
    oracle::GradRng rng(9);
    for (int t = 0; t < 100; ++t) {
      const Tensor l = rng.tensor({2}, -50.0, 50.0);
      CHECK(ops::softmax_xent(l, static_cast<int>(t % 2)).loss >= 0.0f);
    }
  }

  TEST_CASE("bilinear_upsample: identity, constants, hand value and corners") {
    oracle::GradRng rng(10);
    const Tensor m = rng.tensor({3, 4});
    CHECK(ops::bilinear_upsample(m, 3, 4).identical(m));
    const Tensor flat = ops::bilinear_upsample(Tensor({2, 3}, 0.7f), 9, 5);
    for (float v : flat.values()) CHECK(v == doctest::Approx(0.7));
    const Tensor up = ops::bilinear_upsample(filled({2, 2}, {0, 1, 1, 2}), 3, 3);
    CHECK(up.at(1, 1) == 1.0f);
    const Tensor big = ops::bilinear_upsample(m, 13, 31);
    CHECK(big.at(0, 0) == m.at(0, 0));
    CHECK(big.at(0, 30) == m.at(0, 3));
    CHECK(big.at(12, 0) == m.at(2, 0));
    CHECK(big.at(12, 30) == m.at(2, 3));
  }

  TEST_CASE("bilinear_upsample: matches the point-wise oracle and resamples back exactly") {
    oracle::GradRng rng(11);
    for (int t = 0; t < 10; ++t) {
      const std::size_t h = rng.index(1, 6), w = rng.index(1, 6);
      const Tensor m = rng.tensor({h, w});
      const std::size_t oh = rng.index(1, 20), ow = rng.index(1, 20);
      const Tensor up = ops::bilinear_upsample(m, oh, ow);
      const Tensor ref = oracle::bilinear(m, oh, ow);
      for (std::size_t i = 0; i < up.size(); ++i) CHECK(up[i] == doctest::Approx(ref[i]).epsilon(1e-6));
    }
    // With (out-1) a multiple of (in-1) every original grid point is sampled.
    const Tensor m = rng.tensor({4, 5});
    const Tensor up = ops::bilinear_upsample(m, 3 * 3 + 1, 4 * 4 + 1);
    for (std::size_t y = 0; y < 4; ++y) {
      for (std::size_t x = 0; x < 5; ++x) CHECK(up.at(3 * y, 4 * x) == m.at(y, x));
    }
  }

  TEST_CASE("batchnorm_inference: identity, beta only, elementwise oracle, negative variance") {
    oracle::GradRng rng(12);
    const Tensor x = rng.tensor({2, 3, 3});
    const Tensor zeros({2}), ones({2}, 1.0f);
    CHECK(ops::batchnorm_inference(x, zeros, ones, ones, zeros, 0.0f).identical(x));
    const Tensor beta = filled({2}, {0.5f, -2.0f});
    const Tensor flat = ops::batchnorm_inference(x, rng.tensor({2}), ones, zeros, beta, 1e-5f);
    for (std::size_t i = 0; i < 9; ++i) {
      CHECK(flat[i] == 0.5f);
      CHECK(flat[9 + i] == -2.0f);
    }
    const Tensor mean = rng.tensor({2}), var = rng.tensor({2}, 0.1, 3.0), gamma = rng.tensor({2});
    const Tensor y = ops::batchnorm_inference(x, mean, var, gamma, beta, 1e-3f);
    const oracle::DTensor ref =
        oracle::batchnorm(oracle::DTensor::from(x), oracle::DTensor::from(mean), oracle::DTensor::from(var),
                          oracle::DTensor::from(gamma), oracle::DTensor::from(beta), 1e-3f);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(ref.v[i]).epsilon(1e-5));
    CHECK(code_of([&] { ops::batchnorm_inference(x, mean, filled({2}, {1.0f, -0.1f}), gamma, beta, 1e-3f); }) ==
          nd::ErrorCode::kInvalidArgument);
  }

  TEST_CASE("every backward kernel matches central finite differences") {
    for (const auto& rep : oracle::run_gradient_suite(20240611, 20)) {
      INFO(rep.kernel << ": max relative error " << rep.max_rel << " over " << rep.checked << " coordinates");
      CHECK(rep.trials == 20);
      CHECK(rep.pass());
    }
  }
}
