#include <doctest.h>

#include <cmath>

#include "ggt/gradcheck.hpp"
#include "ggt/ops.hpp"
#include "ggt/rng.hpp"

using namespace ggt;

namespace {

TensorD random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  TensorD t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

double dot(const TensorD& a, const TensorD& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

}  // namespace

TEST_CASE("conv2d forward matches hand-computed cases") {
  // identity-shaped scaling
  TensorF x({1, 1, 3, 3}, 1.0f);
  TensorF w = TensorF::from({1, 1, 1, 1}, {2.0f});
  TensorF b({1});
  TensorF y = conv2d_forward(x, w, b, 1, 0);
  CHECK(y.shape == std::vector<int>{1, 1, 3, 3});
  for (float v : y.data) CHECK(v == 2.0f);

  // direct summation by hand: 1*1 + 4*1
  TensorF x2 = TensorF::from({1, 1, 2, 2}, {1, 2, 3, 4});
  TensorF w2 = TensorF::from({1, 1, 2, 2}, {1, 0, 0, 1});
  TensorF y2 = conv2d_forward(x2, w2, b, 1, 0);
  CHECK(y2.shape == std::vector<int>{1, 1, 1, 1});
  CHECK(y2.data[0] == 5.0f);

  // zero weight, bias everywhere
  TensorF w0({1, 1, 3, 3});
  TensorF b7 = TensorF::from({1}, {7.0f});
  TensorF y3 = conv2d_forward(x, w0, b7, 1, 1);
  CHECK(y3.shape == std::vector<int>{1, 1, 3, 3});
  for (float v : y3.data) CHECK(v == 7.0f);
}

TEST_CASE("conv2d output extent follows floor((H + 2p - K)/s) + 1") {
  TensorF x({1, 1, 5, 7});
  TensorF w({2, 1, 3, 3});
  TensorF b({2});
  CHECK(conv2d_forward(x, w, b, 2, 0).shape == std::vector<int>{1, 2, 2, 3});
  CHECK(conv2d_forward(x, w, b, 1, 1).shape == std::vector<int>{1, 2, 5, 7});
}

TEST_CASE("conv2d rejects inconsistent shapes with dimensions named") {
  TensorF x({1, 3, 4, 4});
  TensorF w({2, 2, 3, 3});
  TensorF b({2});
  CHECK_THROWS_WITH_AS(conv2d_forward(x, w, b, 1, 0),
                       doctest::Contains("input channels 3"), std::invalid_argument);
  TensorF w_ok({2, 3, 3, 3});
  CHECK_THROWS_AS(conv2d_forward(x, w_ok, TensorF({3}), 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(conv2d_forward(x, w_ok, b, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(conv2d_forward(x, w_ok, b, 1, -1), std::invalid_argument);
  CHECK_THROWS_AS(conv2d_forward(TensorF({1, 1, 2, 2}), TensorF({1, 1, 3, 3}), TensorF({1}), 1, 0),
                  std::invalid_argument);
}

TEST_CASE("conv2d backward: zero grad and 1x1 scalar chain rule") {
  TensorD x = TensorD::from({1, 1, 2, 2}, {1, 2, 3, 4});
  TensorD w = TensorD::from({1, 1, 1, 1}, {2});
  TensorD zeros({1, 1, 2, 2});
  ConvGrads<double> zg = conv2d_backward(zeros, x, w, 1, 0);
  CHECK(zg.input.max_abs() == 0);
  CHECK(zg.weight.max_abs() == 0);
  CHECK(zg.bias.max_abs() == 0);

  TensorD g = TensorD::from({1, 1, 2, 2}, {0.5, -1, 2, 3});
  ConvGrads<double> cg = conv2d_backward(g, x, w, 1, 0);
  for (std::size_t i = 0; i < g.data.size(); ++i) CHECK(cg.input.data[i] == 2.0 * g.data[i]);
  CHECK(cg.weight.data[0] == doctest::Approx(dot(g, x)).epsilon(1e-12));
  CHECK(cg.bias.data[0] == doctest::Approx(0.5 - 1 + 2 + 3));
}

TEST_CASE("conv2d backward agrees with finite differences (64-bit)") {
  Rng rng(7);
  TensorD x = random_tensor({2, 2, 4, 4}, rng);
  TensorD w = random_tensor({3, 2, 3, 3}, rng);
  TensorD b = random_tensor({3}, rng);
  TensorD probe = random_tensor({2, 3, 4, 4}, rng);

  auto eval = [&]() { return dot(conv2d_forward(x, w, b, 1, 1), probe); };
  ConvGrads<double> analytic = conv2d_backward(probe, x, w, 1, 1);
  double err = gradient_check({&x, &w, &b}, {&analytic.input, &analytic.weight, &analytic.bias}, eval, 1e-5);
  CHECK(err < 1e-6);

  // strided, unpadded variant
  TensorD probe2 = random_tensor({2, 3, 1, 1}, rng);
  auto eval2 = [&]() { return dot(conv2d_forward(x, w, b, 2, 0), probe2); };
  ConvGrads<double> analytic2 = conv2d_backward(probe2, x, w, 2, 0);
  err = gradient_check({&x, &w, &b}, {&analytic2.input, &analytic2.weight, &analytic2.bias}, eval2, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("relu backward reproduces the rule table, zeros included") {
  auto run = [](double in, double sig, BackwardRule rule) {
    TensorD i = TensorD::from({1}, {in});
    TensorD s = TensorD::from({1}, {sig});
    return relu_backward(s, i, rule).data[0];
  };

  // the published sign cases
  CHECK(run(-1, 2, BackwardRule::Backprop) == 0);
  CHECK(run(-1, 2, BackwardRule::Deconvnet) == 2);
  CHECK(run(-1, 2, BackwardRule::Guided) == 0);
  CHECK(run(1, -2, BackwardRule::Backprop) == -2);
  CHECK(run(1, -2, BackwardRule::Deconvnet) == 0);
  CHECK(run(1, -2, BackwardRule::Guided) == 0);
  CHECK(run(1, 2, BackwardRule::Backprop) == 2);
  CHECK(run(1, 2, BackwardRule::Deconvnet) == 2);
  CHECK(run(1, 2, BackwardRule::Guided) == 2);

  // exhaustive sign grid, subgradient 0 at exactly 0
  for (double in : {-1.0, 0.0, 1.0}) {
    for (double sig : {-2.0, 0.0, 2.0}) {
      const double bp = sig * (in > 0 ? 1 : 0);
      const double dc = sig * (sig > 0 ? 1 : 0);
      const double gd = sig * ((in > 0 && sig > 0) ? 1 : 0);
      CHECK(run(in, sig, BackwardRule::Backprop) == bp);
      CHECK(run(in, sig, BackwardRule::Deconvnet) == dc);
      CHECK(run(in, sig, BackwardRule::Guided) == gd);
    }
  }
}

TEST_CASE("guided equals deconvnet masked by the forward-positivity mask") {
  Rng rng(11);
  TensorD pre = random_tensor({1, 3, 5, 5}, rng);
  TensorD sig = random_tensor({1, 3, 5, 5}, rng);
  TensorD guided = relu_backward(sig, pre, BackwardRule::Guided);
  TensorD composed = relu_backward(relu_backward(sig, pre, BackwardRule::Deconvnet), pre, BackwardRule::Backprop);
  for (std::size_t i = 0; i < guided.data.size(); ++i) CHECK(guided.data[i] == composed.data[i]);
}

TEST_CASE("all-positive inputs and signals make the three rules coincide bitwise") {
  Rng rng(13);
  TensorD pre = random_tensor({1, 2, 4, 4}, rng, 0.1, 1.0);
  TensorD sig = random_tensor({1, 2, 4, 4}, rng, 0.1, 1.0);
  TensorD a = relu_backward(sig, pre, BackwardRule::Backprop);
  TensorD b = relu_backward(sig, pre, BackwardRule::Deconvnet);
  TensorD c = relu_backward(sig, pre, BackwardRule::Guided);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    CHECK(a.data[i] == b.data[i]);
    CHECK(b.data[i] == c.data[i]);
  }
}

TEST_CASE("maxpool routes the signal to the argmax") {
  TensorF x = TensorF::from({1, 1, 2, 2}, {1, 2, 3, 4});
  PoolResult<float> pr = maxpool2d_forward(x, 2);
  CHECK(pr.out.data[0] == 4.0f);
  TensorF g = TensorF::from({1, 1, 1, 1}, {5.0f});
  TensorF dx = maxpool2d_backward(g, pr.switches, 2, 2);
  CHECK(dx.at4(0, 0, 1, 1) == 5.0f);
  CHECK(dx.at4(0, 0, 0, 0) == 0.0f);
  CHECK(dx.at4(0, 0, 0, 1) == 0.0f);
  CHECK(dx.at4(0, 0, 1, 0) == 0.0f);

  CHECK_THROWS_AS(maxpool2d_forward(TensorF({1, 1, 3, 3}), 2), std::invalid_argument);
}

TEST_CASE("upsample fans out and its backward fans in") {
  TensorF x = TensorF::from({1, 1, 1, 1}, {5.0f});
  TensorF up = upsample2d_forward(x, 2);
  CHECK(up.shape == std::vector<int>{1, 1, 2, 2});
  for (float v : up.data) CHECK(v == 5.0f);
  TensorF g({1, 1, 2, 2}, 1.0f);
  TensorF dx = upsample2d_backward(g, 2);
  CHECK(dx.data[0] == 4.0f);
  CHECK_THROWS_AS(upsample2d_backward(TensorF({1, 1, 3, 3}), 2), std::invalid_argument);
}

TEST_CASE("pool and upsample agree with finite differences (64-bit)") {
  Rng rng(17);
  TensorD x = random_tensor({1, 2, 4, 4}, rng);
  TensorD probe = random_tensor({1, 2, 2, 2}, rng);

  PoolResult<double> base = maxpool2d_forward(x, 2);
  TensorD analytic = maxpool2d_backward(probe, base.switches, 4, 4);
  auto eval = [&]() { return dot(maxpool2d_forward(x, 2).out, probe); };
  CHECK(gradient_check({&x}, {&analytic}, eval, 1e-6) < 1e-6);

  TensorD probe_up = random_tensor({1, 2, 8, 8}, rng);
  TensorD up_analytic = upsample2d_backward(probe_up, 2);
  auto eval_up = [&]() { return dot(upsample2d_forward(x, 2), probe_up); };
  CHECK(gradient_check({&x}, {&up_analytic}, eval_up, 1e-6) < 1e-6);
}

TEST_CASE("gap, sigmoid and affine match hand cases") {
  TensorF m = TensorF::from({1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(gap_forward(m).data[0] == 2.5f);

  TensorD z = TensorD::from({1}, {0.0});
  TensorD s = sigmoid(z);
  CHECK(s.data[0] == 0.5);
  TensorD g = TensorD::from({1}, {1.0});
  CHECK(sigmoid_backward(g, s).data[0] == 0.25);

  TensorD x = TensorD::from({2}, {1, 2});
  TensorD w = TensorD::from({2, 2}, {1, 0, 0, 1});
  TensorD b = TensorD::from({2}, {10, 20});
  TensorD y = affine_forward(x, w, b);
  CHECK(y.data[0] == 11);
  CHECK(y.data[1] == 22);
}

TEST_CASE("affine and gap agree with finite differences (64-bit)") {
  Rng rng(23);
  TensorD x = random_tensor({5}, rng);
  TensorD w = random_tensor({3, 5}, rng);
  TensorD b = random_tensor({3}, rng);
  TensorD probe = random_tensor({3}, rng);

  auto eval = [&]() { return dot(affine_forward(x, w, b), probe); };
  AffineGrads<double> analytic = affine_backward(probe, x, w);
  CHECK(gradient_check({&x, &w, &b}, {&analytic.input, &analytic.weight, &analytic.bias}, eval, 1e-5) < 1e-6);

  TensorD xm = random_tensor({1, 3, 4, 4}, rng);
  TensorD probe_c = random_tensor({3}, rng);
  TensorD gap_analytic = gap_backward(probe_c, 4, 4);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < 16; ++i) {
      CHECK(gap_analytic.data[c * 16 + i] == doctest::Approx(probe_c.data[c] / 16.0));
    }
  }
  auto eval_gap = [&]() { return dot(gap_forward(xm), probe_c); };
  CHECK(gradient_check({&xm}, {&gap_analytic}, eval_gap, 1e-5) < 1e-6);
}

TEST_CASE("every linear backward is the exact adjoint of its forward") {
  Rng rng(29);
  // conv: <conv(x), g> == <x, convT(g)>
  TensorD x = random_tensor({1, 2, 6, 6}, rng);
  TensorD w = random_tensor({3, 2, 3, 3}, rng);
  TensorD b({3});
  TensorD g = random_tensor({1, 3, 6, 6}, rng);
  const double lhs = dot(conv2d_forward(x, w, b, 1, 1), g);
  const double rhs = dot(x, conv2d_backward_input(g, w, 1, 1, 6, 6));
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));

  // affine
  TensorD xa = random_tensor({4}, rng);
  TensorD wa = random_tensor({2, 4}, rng);
  TensorD ga = random_tensor({2}, rng);
  CHECK(dot(affine_forward(xa, wa, TensorD({2})), ga) ==
        doctest::Approx(dot(xa, affine_backward(ga, xa, wa).input)).epsilon(1e-12));

  // pooling with frozen switches: gather vs scatter
  TensorD xp = random_tensor({1, 2, 4, 4}, rng);
  PoolResult<double> pr = maxpool2d_forward(xp, 2);
  TensorD u = random_tensor({1, 2, 4, 4}, rng);
  TensorD s = random_tensor({1, 2, 2, 2}, rng);
  CHECK(dot(maxpool2d_backward(s, pr.switches, 4, 4), u) ==
        doctest::Approx(dot(s, maxpool2d_gather(u, pr.switches))).epsilon(1e-12));

  // upsample vs block-sum
  TensorD xu = random_tensor({1, 2, 3, 3}, rng);
  TensorD gu = random_tensor({1, 2, 6, 6}, rng);
  CHECK(dot(upsample2d_forward(xu, 2), gu) == doctest::Approx(dot(xu, upsample2d_backward(gu, 2))).epsilon(1e-12));
}

TEST_CASE("gradient_check is exact on linear maps and validates epsilon") {
  Rng rng(31);
  TensorD x = random_tensor({6}, rng);
  TensorD coef = random_tensor({6}, rng);
  auto eval = [&]() { return dot(x, coef); };
  CHECK(gradient_check({&x}, {&coef}, eval, 1e-5) < 1e-9);

  CHECK_THROWS_AS(gradient_check({&x}, {&coef}, eval, 1e-2), std::invalid_argument);
  CHECK_THROWS_AS(gradient_check({&x}, {&coef}, eval, 1e-8), std::invalid_argument);
}

TEST_CASE("gradient_check on relu probed away from the kink") {
  Rng rng(37);
  TensorD x({8});
  for (double& v : x.data) {
    v = rng.uniform(0.01, 1.0) * (rng.below(2) ? 1.0 : -1.0);  // margin 0.01 >> 10 * eps
  }
  TensorD probe = random_tensor({8}, rng);
  Tensor<double> probe_t = probe;
  auto eval = [&]() {
    TensorD y = relu_forward(x);
    return dot(y, probe_t);
  };
  TensorD analytic = relu_backward(probe_t, x, BackwardRule::Backprop);
  CHECK(gradient_check({&x}, {&analytic}, eval, 1e-6) < 1e-6);
}

TEST_CASE("gradient_check reports non-finite objectives") {
  TensorD x = TensorD::from({1}, {1.0});
  TensorD g = TensorD::from({1}, {1.0});
  auto eval = [&]() { return std::log(x.data[0] - 10.0); };  // NaN around the probe point
  CHECK_THROWS_WITH_AS(gradient_check({&x}, {&g}, eval, 1e-5), doctest::Contains("non-finite"),
                       std::runtime_error);
}

TEST_CASE("concat and split are inverse") {
  Rng rng(41);
  TensorD a = random_tensor({1, 2, 3, 3}, rng);
  TensorD b = random_tensor({1, 4, 3, 3}, rng);
  TensorD cat = concat_channels(a, b);
  CHECK(cat.shape == std::vector<int>{1, 6, 3, 3});
  auto [a2, b2] = split_channels(cat, 2);
  for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(a2.data[i] == a.data[i]);
  for (std::size_t i = 0; i < b.data.size(); ++i) CHECK(b2.data[i] == b.data[i]);
}
