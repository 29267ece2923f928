#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "pat/autodiff.hpp"
#include "pat/network.hpp"
#include "pat/rng.hpp"

using namespace pat;
using oracles::max_abs_diff;
using oracles::random_tensor;

namespace {

ConvSpec conv3_same(int64_t cin, int64_t cout, int64_t rate = 1) {
  ConvSpec s;
  s.kernel_shape = {3, 3};
  s.dilation_rate = {rate, rate};
  s.padding = Padding::SameZero;
  s.in_channels = cin;
  s.out_channels = cout;
  return s;
}

}  // namespace

TEST_CASE("a unit 1x1 conv graph is the identity") {
  OpGraph g;
  int in = g.add_input(1, 2);
  ConvSpec s;
  s.kernel_shape = {1, 1};
  s.padding = Padding::SameZero;
  s.in_channels = 1;
  s.out_channels = 1;
  int c = g.add_conv(in, s, "id");
  g.set_output(c);
  g.params().at("id.weights")[0] = 1.0;
  g.params().at("id.bias")[0] = 0.0;

  Rng rng(1);
  Tensor x = random_tensor({2, 1, 5, 5}, rng);
  Tensor y = g.forward(x);
  CHECK(max_abs_diff(x, y) == 0.0);
}

TEST_CASE("relu of a zero conv with positive bias is the bias") {
  OpGraph g;
  int in = g.add_input(1, 2);
  int c = g.add_conv(in, conv3_same(1, 2), "c");
  int r = g.add_relu(c);
  g.set_output(r);
  g.params().at("c.bias")[0] = 0.75;
  g.params().at("c.bias")[1] = 1.5;

  Rng rng(2);
  Tensor y = g.forward(random_tensor({1, 1, 4, 4}, rng));
  for (int64_t p = 0; p < 16; ++p) {
    CHECK(y[p] == 0.75);
    CHECK(y[16 + p] == 1.5);
  }
}

TEST_CASE("forward rejects wrong input shapes and backward needs forward") {
  OpGraph g;
  int in = g.add_input(2, 2);
  int c = g.add_conv(in, conv3_same(2, 2), "c");
  g.set_output(c);

  Rng rng(3);
  CHECK_THROWS_AS(g.forward(random_tensor({1, 3, 4, 4}, rng)), DimensionError);
  CHECK_THROWS_AS(g.forward(random_tensor({4, 4}, rng)), DimensionError);
  CHECK_THROWS_AS(g.backward(Tensor({1, 2, 4, 4})), StateError);
}

TEST_CASE("hand chain rule through a single weight") {
  // y = w * x with x = [3]; loss = mean(y^2) = 9 w^2, dloss/dw = 18 w.
  OpGraph g;
  int in = g.add_input(1, 1);
  ConvSpec s;
  s.kernel_shape = {1};
  s.in_channels = 1;
  s.out_channels = 1;
  s.bias = false;
  int c = g.add_conv(in, s, "w");
  g.set_output(c);
  g.params().at("w.weights")[0] = 1.0;

  Tensor x = Tensor::from_vector({1, 1, 1}, {3.0});
  Tensor y = g.forward(x);
  CHECK(y[0] == 3.0);
  ParamMap grads = g.backward(mse_grad(y, Tensor::zeros(y.shape())));
  CHECK(grads.at("w.weights")[0] == doctest::Approx(18.0).epsilon(1e-12));
}

TEST_CASE("zero output gradient yields zero parameter gradients") {
  OpGraph g;
  int in = g.add_input(1, 2);
  int c = g.add_conv(in, conv3_same(1, 4), "a");
  int r = g.add_relu(c);
  int c2 = g.add_conv(r, conv3_same(4, 1), "b");
  g.set_output(c2);
  init_params(g, 5);

  Rng rng(4);
  Tensor y = g.forward(random_tensor({1, 1, 6, 6}, rng));
  ParamMap grads = g.backward(Tensor::zeros(y.shape()));
  for (const auto& [name, grad] : grads) CHECK(grad.max_abs() == 0.0);
}

TEST_CASE("parameters off the output path get zero gradients") {
  OpGraph g;
  int in = g.add_input(1, 2);
  int used = g.add_conv(in, conv3_same(1, 2), "used");
  g.add_conv(in, conv3_same(1, 2), "unused");
  g.set_output(used);
  init_params(g, 6);

  Rng rng(5);
  Tensor y = g.forward(random_tensor({1, 1, 5, 5}, rng));
  ParamMap grads = g.backward(Tensor::full(y.shape(), 1.0));
  CHECK(grads.at("unused.weights").max_abs() == 0.0);
  CHECK(grads.at("unused.bias").max_abs() == 0.0);
  CHECK(grads.at("used.weights").max_abs() > 0.0);
}

TEST_CASE("mse loss arithmetic") {
  Tensor pred = Tensor::from_vector({2}, {1.0, 2.0});
  Tensor target = Tensor::zeros({2});
  CHECK(mse_loss(pred, target) == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(mse_loss(pred, pred) == 0.0);

  // Scaling the residual by c scales the loss by c^2.
  Tensor scaled = Tensor::from_vector({2}, {3.0, 6.0});
  CHECK(mse_loss(scaled, target) == doctest::Approx(9.0 * 2.5).epsilon(1e-12));

  CHECK_THROWS_AS(mse_loss(pred, Tensor({3})), DimensionError);
  CHECK_THROWS_AS(mse_grad(pred, Tensor({3})), DimensionError);

  Tensor g = mse_grad(pred, target);
  CHECK(g[0] == doctest::Approx(2.0 * 1.0 / 2.0));
  CHECK(g[1] == doctest::Approx(2.0 * 2.0 / 2.0));
}

TEST_CASE("adam first step and fixed point") {
  ParamMap params;
  params["w"] = Tensor::zeros({1});
  ParamMap grads;
  grads["w"] = Tensor::full({1}, 1.0);
  AdamState st;
  st.learning_rate = 0.1;
  adam_step(params, grads, st);
  CHECK(st.step_count == 1);
  // Bias-corrected m-hat = v-hat = 1, so the step is lr / (1 + eps) ~ 0.1.
  CHECK(params["w"][0] == doctest::Approx(-0.1).epsilon(1e-7));

  // From a fresh state a zero gradient gives zero moments, so the update is
  // exactly zero (after a nonzero step the decayed momentum would still move
  // the parameter).
  ParamMap fresh;
  fresh["w"] = Tensor::full({1}, 0.7);
  ParamMap zero;
  zero["w"] = Tensor::zeros({1});
  AdamState st_zero;
  st_zero.learning_rate = 0.1;
  adam_step(fresh, zero, st_zero);
  CHECK(st_zero.step_count == 1);
  CHECK(fresh["w"][0] == 0.7);

  ParamMap bad;
  bad["w"] = Tensor::zeros({2});
  CHECK_THROWS_AS(adam_step(params, bad, st), DimensionError);
}

TEST_CASE("grad check is exact on a linear graph") {
  OpGraph g;
  int in = g.add_input(1, 1);
  ConvSpec s;
  s.kernel_shape = {3};
  s.padding = Padding::SameZero;
  s.in_channels = 1;
  s.out_channels = 2;
  int c = g.add_conv(in, s, "lin");
  g.set_output(c);
  init_params(g, 7);

  Rng rng(6);
  Tensor x = random_tensor({1, 1, 9}, rng);
  // The loss is quadratic in the parameters, so central differences are exact
  // up to rounding for any epsilon in the accepted range.
  CHECK(grad_check(g, x, 1e-3) < 1e-7);
  CHECK(grad_check(g, x, 1e-5) < 1e-7);
}

TEST_CASE("grad check validates every op kind") {
  Rng rng(7);

  auto check_graph = [&](OpGraph& g, Tensor x) {
    init_params(g, 11);
    // Keep relu inputs away from the kink: bias magnitudes dominate epsilon.
    for (auto& [name, p] : g.params())
      if (name.ends_with(".bias"))
        for (int64_t i = 0; i < p.numel(); ++i) p[i] += (i % 2 == 0 ? 0.01 : -0.01);
    double err = grad_check(g, x, 1e-5);
    CHECK(err < 1e-4);
  };

  // conv (same, dilated) + relu
  {
    OpGraph g;
    int in = g.add_input(1, 2);
    int c = g.add_conv(in, conv3_same(1, 4, 2), "c");
    int r = g.add_relu(c);
    g.set_output(r);
    check_graph(g, random_tensor({1, 1, 8, 8}, rng));
  }
  // strided conv
  {
    OpGraph g;
    int in = g.add_input(2, 2);
    ConvSpec s;
    s.kernel_shape = {2, 2};
    s.stride = {2, 2};
    s.in_channels = 2;
    s.out_channels = 3;
    int c = g.add_conv(in, s, "down");
    g.set_output(c);
    check_graph(g, random_tensor({1, 2, 8, 8}, rng));
  }
  // transposed conv
  {
    OpGraph g;
    int in = g.add_input(2, 2);
    ConvSpec s;
    s.kernel_shape = {2, 2};
    s.stride = {2, 2};
    s.in_channels = 2;
    s.out_channels = 2;
    int t = g.add_transposed_conv(in, s, "up");
    g.set_output(t);
    check_graph(g, random_tensor({1, 2, 4, 4}, rng));
  }
  // concat of two branches + 1x1 conv head
  {
    OpGraph g;
    int in = g.add_input(1, 2);
    int a = g.add_conv(in, conv3_same(1, 2), "a");
    int b = g.add_conv(in, conv3_same(1, 3), "b");
    int cat = g.add_concat({a, b});
    ConvSpec head;
    head.kernel_shape = {1, 1};
    head.in_channels = 5;
    head.out_channels = 1;
    int h = g.add_conv(cat, head, "head");
    g.set_output(h);
    check_graph(g, random_tensor({1, 1, 6, 6}, rng));
  }
  // max pool between convs
  {
    OpGraph g;
    int in = g.add_input(1, 2);
    int c = g.add_conv(in, conv3_same(1, 2), "pre");
    int p = g.add_max_pool(c, {2, 2});
    ConvSpec head;
    head.kernel_shape = {1, 1};
    head.in_channels = 2;
    head.out_channels = 1;
    int h = g.add_conv(p, head, "post");
    g.set_output(h);
    check_graph(g, random_tensor({1, 1, 8, 8}, rng));
  }
  // 3D conv
  {
    OpGraph g;
    int in = g.add_input(1, 3);
    ConvSpec s;
    s.kernel_shape = {3, 3, 3};
    s.padding = Padding::SameZero;
    s.dilation_rate = {2, 2, 2};
    s.in_channels = 1;
    s.out_channels = 2;
    int c = g.add_conv(in, s, "c3");
    g.set_output(c);
    check_graph(g, random_tensor({1, 1, 6, 6, 6}, rng));
  }
}

TEST_CASE("a node feeding two consumers accumulates gradient") {
  // Diamond: conv "stem" feeds both branches; its parameter gradient must sum
  // the contributions, which the finite-difference check verifies globally.
  OpGraph g;
  int in = g.add_input(1, 2);
  int stem = g.add_conv(in, conv3_same(1, 2), "stem");
  int a = g.add_conv(stem, conv3_same(2, 2), "left");
  int b = g.add_conv(stem, conv3_same(2, 2), "right");
  int cat = g.add_concat({a, b});
  ConvSpec head;
  head.kernel_shape = {1, 1};
  head.in_channels = 4;
  head.out_channels = 1;
  int h = g.add_conv(cat, head, "head");
  g.set_output(h);
  init_params(g, 13);
  Rng rng(8);
  CHECK(grad_check(g, random_tensor({1, 1, 6, 6}, rng), 1e-5) < 1e-4);
}

TEST_CASE("grad check rejects single precision and bad epsilon") {
  OpGraph g;
  int in = g.add_input(1, 2);
  int c = g.add_conv(in, conv3_same(1, 1), "c");
  g.set_output(c);
  init_params(g, 9);
  Rng rng(9);
  Tensor x = random_tensor({1, 1, 5, 5}, rng);
  Tensor xs = x;
  xs.set_precision(Precision::Single);
  CHECK_THROWS_AS(grad_check(g, xs, 1e-5), ConfigError);
  CHECK_THROWS_AS(grad_check(g, x, 1e-8), ConfigError);
  CHECK_THROWS_AS(grad_check(g, x, 1e-2), ConfigError);
}

TEST_CASE("graph construction errors name their nodes") {
  OpGraph g;
  int in = g.add_input(1, 2);
  CHECK_THROWS_AS(g.add_conv(42, conv3_same(1, 1), "x"), ConfigError);
  // channel mismatch is caught at construction time
  CHECK_THROWS_AS(g.add_conv(in, conv3_same(3, 1), "bad"), ConfigError);
  int c = g.add_conv(in, conv3_same(1, 2), "ok");
  CHECK_THROWS_AS(g.add_conv(in, conv3_same(1, 2), "ok"), ConfigError);  // duplicate name
  g.set_output(c);
  CHECK(g.node_channels(c) == 2);
}

TEST_CASE("forward and backward are deterministic") {
  NetworkConfig cfg;
  cfg.f1 = 8;
  cfg.k1 = 2;
  cfg.levels = 2;
  OpGraph g = build_network(cfg);
  init_params(g, 21);
  Rng rng(10);
  Tensor x = random_tensor({1, 1, 8, 8}, rng);

  Tensor y1 = g.forward(x);
  ParamMap g1 = g.backward(mse_grad(y1, Tensor::zeros(y1.shape())));
  Tensor y2 = g.forward(x);
  ParamMap g2 = g.backward(mse_grad(y2, Tensor::zeros(y2.shape())));
  CHECK(max_abs_diff(y1, y2) == 0.0);
  for (const auto& [name, grad] : g1) CHECK(max_abs_diff(grad, g2.at(name)) == 0.0);
}
