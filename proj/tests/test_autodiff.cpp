#include <doctest.h>

#include "ivfuse/autodiff.hpp"
#include "ivfuse/errors.hpp"
#include "support/testutil.hpp"

using namespace ivfuse;
using nn::Value;
namespace tu = testutil;

namespace {
constexpr double kGradTol = 1e-3;
}

TEST_CASE("elementwise op gradients match finite differences") {
  Rng rng(11);
  std::vector<Tensor> inputs = {tu::rand_tensor({2, 3, 3}, rng, 0.1, 0.9),
                                tu::rand_tensor({2, 3, 3}, rng, 0.1, 0.9)};

  auto check = [&](const char* name, auto build) {
    auto r = tu::check_gradients(build, inputs);
    INFO(name << ": " << r.where);
    CHECK(r.ok(kGradTol));
  };

  check("add", [](const std::vector<Value>& v) {
    return tu::project(nn::add(v[0], v[1]), 1);
  });
  check("sub", [](const std::vector<Value>& v) {
    return tu::project(nn::sub(v[0], v[1]), 2);
  });
  check("mul", [](const std::vector<Value>& v) {
    return tu::project(nn::mul(v[0], v[1]), 3);
  });
  check("affine", [](const std::vector<Value>& v) {
    return tu::project(nn::affine(v[0], -1.7, 0.4), 4);
  });
  check("tanh", [](const std::vector<Value>& v) {
    return tu::project(nn::tanh_op(v[0]), 5);
  });
  check("leaky_relu", [](const std::vector<Value>& v) {
    return tu::project(nn::leaky_relu(nn::affine(v[0], 1.0, -0.5), 0.2), 6);
  });
  check("concat+slice+permute", [](const std::vector<Value>& v) {
    Value cat = nn::concat_channels({v[0], v[1]});
    Value perm = nn::permute_channels(cat, {3, 1, 0, 2});
    return tu::project(nn::slice_channels(perm, 1, 2), 7);
  });
}

TEST_CASE("conv2d gradients: input, kernel, bias") {
  Rng rng(21);
  std::vector<Tensor> inputs = {tu::rand_tensor({2, 4, 4}, rng),
                                tu::rand_tensor({3, 2, 3, 3}, rng, -0.5, 0.5),
                                tu::rand_tensor({3}, rng, -0.2, 0.2)};
  auto r = tu::check_gradients(
      [](const std::vector<Value>& v) {
        return tu::project(nn::conv2d(v[0], v[1], v[2]), 8);
      },
      inputs);
  INFO(r.where);
  CHECK(r.ok(kGradTol));

  SUBCASE("1x1 kernel") {
    std::vector<Tensor> in1 = {tu::rand_tensor({2, 4, 4}, rng),
                               tu::rand_tensor({2, 2, 1, 1}, rng),
                               tu::rand_tensor({2}, rng)};
    auto r1 = tu::check_gradients(
        [](const std::vector<Value>& v) {
          return tu::project(nn::conv2d(v[0], v[1], v[2]), 9);
        },
        in1);
    INFO(r1.where);
    CHECK(r1.ok(kGradTol));
  }
}

TEST_CASE("conv2d validates channel mismatch") {
  Value x = Value::constant(Tensor({3, 4, 4}));
  Value w = Value::constant(Tensor({2, 2, 3, 3}));
  Value b = Value::constant(Tensor({2}));
  CHECK_THROWS_AS(nn::conv2d(x, w, b), ValidationError);
}

TEST_CASE("laplacian gradient and replicate-pad adjoint") {
  Rng rng(31);
  std::vector<Tensor> inputs = {tu::rand_tensor({1, 4, 4}, rng, 0.0, 1.0)};
  auto r = tu::check_gradients(
      [](const std::vector<Value>& v) {
        return tu::project(nn::laplacian(v[0]), 10);
      },
      inputs);
  INFO(r.where);
  CHECK(r.ok(kGradTol));
}

TEST_CASE("attention primitive gradients") {
  Rng rng(41);
  std::vector<Tensor> inputs = {tu::rand_tensor({2, 2, 2}, rng),
                                tu::rand_tensor({2, 2, 2}, rng),
                                tu::rand_tensor({2, 2, 2}, rng)};
  auto r = tu::check_gradients(
      [](const std::vector<Value>& v) {
        Value a = nn::softmax_rows(nn::gram(v[0], v[1], 0.5));
        return tu::project(nn::channel_mix(a, v[2]), 11);
      },
      inputs);
  INFO(r.where);
  CHECK(r.ok(kGradTol));
}

TEST_CASE("l1_mean gradient away from ties") {
  Rng rng(51);
  // keep |a-b| > 0.05 so the FD step never crosses the kink
  Tensor a = tu::rand_tensor({1, 4, 4}, rng, 0.6, 0.9);
  Tensor b = tu::rand_tensor({1, 4, 4}, rng, 0.1, 0.4);
  auto r = tu::check_gradients(
      [](const std::vector<Value>& v) { return nn::l1_mean(v[0], v[1]); },
      {a, b});
  INFO(r.where);
  CHECK(r.ok(kGradTol));
}

TEST_CASE("kl_from_target gradient and zero at equality") {
  Rng rng(61);
  Tensor p = tu::rand_tensor({1, 3, 3}, rng, 0.1, 0.9);
  Tensor q = tu::rand_tensor({1, 3, 3}, rng, 0.1, 0.9);
  auto r = tu::check_gradients(
      [&](const std::vector<Value>& v) {
        return nn::kl_from_target(p, v[0], 1e-8);
      },
      {q});
  INFO(r.where);
  CHECK(r.ok(kGradTol));

  Value same = Value::leaf(p, true);
  CHECK(nn::kl_from_target(p, same, 1e-8).item() == doctest::Approx(0.0));
}

TEST_CASE("gradients accumulate across backward calls and reused nodes") {
  Tensor t = Tensor::full({2, 2}, 1.5);
  Value x = Value::leaf(t, true);
  Value y = nn::add(x, x);  // dy/dx = 2
  Value s = nn::reduce_sum(y);
  nn::backward(s);
  for (double g : x.node()->grad.data) CHECK(g == doctest::Approx(2.0));
  nn::backward(nn::reduce_sum(nn::add(x, x)));
  for (double g : x.node()->grad.data) CHECK(g == doctest::Approx(4.0));
}

TEST_CASE("constants and detached values stop gradient flow") {
  Tensor t = Tensor::full({2, 2}, 0.5);
  Value x = Value::leaf(t, true);
  Value frozen = nn::detach(nn::affine(x, 2.0, 0.0));
  CHECK_FALSE(frozen.node()->requires_grad);
  Value s = nn::reduce_sum(nn::add(frozen, x));
  nn::backward(s);
  for (double g : x.node()->grad.data) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("determinism: identical inputs give bitwise-identical outputs") {
  Rng rng(71);
  Tensor x = tu::rand_tensor({3, 5, 5}, rng);
  Tensor w = tu::rand_tensor({4, 3, 3, 3}, rng);
  Tensor b = tu::rand_tensor({4}, rng);
  auto run = [&]() {
    return nn::conv2d(Value::constant(x), Value::constant(w),
                      Value::constant(b))
        .val()
        .data;
  };
  CHECK(run() == run());
}
