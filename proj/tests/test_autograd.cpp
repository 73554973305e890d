#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <casgnn/adam.hpp>
#include <casgnn/gradcheck.hpp>
#include <casgnn/ops.hpp>
#include <casgnn/tape.hpp>

#include "oracles.hpp"

using namespace casgnn;

TEST_CASE("every op passes central finite differences at double precision") {
  GradCheckOptions opts;
  opts.eps = 1e-5;
  opts.tolerance = 1e-6;
  opts.coords_per_tensor = 100;
  for (const auto& report : run_ops_gradcheck<double>(opts)) {
    INFO(report.name, " max_rel_err ", report.max_rel_err);
    CHECK(report.pass);
  }
}

TEST_CASE("every op passes central finite differences at single precision") {
  GradCheckOptions opts;
  opts.eps = 1e-3;
  opts.tolerance = 1e-3;
  opts.coords_per_tensor = 100;
  for (const auto& report : run_ops_gradcheck<float>(opts)) {
    INFO(report.name, " max_rel_err ", report.max_rel_err);
    CHECK(report.pass);
  }
}

TEST_CASE("fault injection hook makes the named op fail") {
  GradCheckOptions opts;
  opts.eps = 1e-5;
  opts.tolerance = 1e-6;
  opts.coords_per_tensor = 16;
  opts.fault_target = "sub";
  bool sub_failed = false;
  for (const auto& report : run_ops_gradcheck<double>(opts)) {
    if (report.name.starts_with("sub")) sub_failed = sub_failed || !report.pass;
  }
  CHECK(sub_failed);
}

TEST_CASE("backward closed form: d/dw sum(sigmoid(w*x)) at w=0 is 0.25") {
  auto w = TensorF::scalar(0.0f, /*requires_grad=*/true);
  auto x = TensorF::scalar(1.0f);
  Tape<float> tape;
  auto loss = sum(sigmoid(mul(w, x)));
  tape.backward(loss);
  CHECK(w.grad()[0] == doctest::Approx(0.25f));
}

TEST_CASE("parameters outside the loss get zero gradient") {
  auto used = TensorF::scalar(1.0f, true);
  auto unused = TensorF::scalar(2.0f, true);
  Tape<float> tape;
  auto loss = sum(mul(used, used));
  tape.backward(loss);
  CHECK(used.grad()[0] == doctest::Approx(2.0f));
  CHECK_FALSE(unused.has_grad());
}

TEST_CASE("backward usage errors") {
  Tape<float> tape;
  auto loss = TensorF::scalar(1.0f, true);
  CHECK_THROWS_AS(tape.backward(loss), UsageError);  // nothing recorded

  auto x = TensorF::full({1, 1, 2, 2}, 1.0f);
  x.set_requires_grad(true);
  auto y = relu(x);
  CHECK_THROWS_AS(tape.backward(y), UsageError);  // non-scalar loss
}

TEST_CASE("tape clears after backward") {
  auto x = TensorF::scalar(2.0f, true);
  Tape<float> tape;
  auto loss = sum(mul(x, x));
  CHECK(tape.size() > 0);
  tape.backward(loss);
  CHECK(tape.size() == 0);
  CHECK_THROWS_AS(tape.backward(loss), UsageError);
}

TEST_CASE("no recording happens without an active tape") {
  auto x = TensorF::scalar(2.0f, true);
  auto y = mul(x, x);  // outside any tape
  Tape<float> tape;
  CHECK(tape.size() == 0);
  (void)y;
}

TEST_CASE("concat backward routes gradients to the right source") {
  Rng rng(3);
  auto a = oracles::random_tensor<float>({1, 2, 3, 3}, rng, -1, 1, true);
  auto b = oracles::random_tensor<float>({1, 3, 3, 3}, rng, -1, 1, true);
  Tape<float> tape;
  auto y = concat_channels<float>({a, b});
  auto s = slice_channels(y, 2, 3);  // exactly the b block
  auto loss = sum(s);
  tape.backward(loss);
  CHECK_FALSE(a.has_grad());
  REQUIRE(b.has_grad());
  for (float g : b.grad()) CHECK(g == 1.0f);
}

TEST_CASE("gradients accumulate across multiple uses") {
  auto x = TensorF::scalar(3.0f, true);
  Tape<float> tape;
  auto loss = sum(add(mul(x, x), mul(x, x)));  // 2 x^2
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(12.0f));
}

TEST_CASE("adam fixed point: zero gradient, zero weight decay") {
  AdamHyper hyper;
  hyper.weight_decay = 0.0;
  hyper.lr = 0.1;
  AdamState<float> adam(hyper);
  std::vector<TensorF> params = {TensorF::from({1, 1, 1, 2}, {1.5f, -0.5f}, true)};
  adam.attach(params);
  const auto before = params[0].data();
  for (int i = 0; i < 5; ++i) adam.step(params, hyper.lr);
  CHECK(params[0].data() == before);
  CHECK(adam.step_count() == 5);
}

TEST_CASE("adam first step is approximately -lr * sign(g)") {
  AdamHyper hyper;
  hyper.weight_decay = 0.0;
  const double lr = 0.01;
  AdamState<double> adam(hyper);
  std::vector<TensorD> params = {TensorD::from({1, 1, 1, 2}, {1.0, -2.0}, true)};
  adam.attach(params);
  params[0].grad() = {10.0, -0.5};
  adam.step(params, lr);
  CHECK(params[0].data()[0] == doctest::Approx(1.0 - lr).epsilon(1e-6));
  CHECK(params[0].data()[1] == doctest::Approx(-2.0 + lr).epsilon(1e-6));
}

TEST_CASE("adam on the quadratic bowl matches a scalar simulation") {
  // independent scalar Adam oracle
  double theta_ref = 1.0, m = 0.0, v = 0.0;
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int t = 1; t <= 100; ++t) {
    const double g = 2.0 * theta_ref;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    theta_ref -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
  }

  AdamHyper hyper;
  hyper.weight_decay = 0.0;
  AdamState<double> adam(hyper);
  std::vector<TensorD> params = {TensorD::scalar(1.0, true)};
  adam.attach(params);
  for (int t = 0; t < 100; ++t) {
    params[0].zero_grad();
    Tape<double> tape;
    auto loss = sum(mul(params[0], params[0]));
    tape.backward(loss);
    adam.step(params, 0.1);
  }
  CHECK(std::abs(params[0].data()[0]) < 0.05);
  CHECK(params[0].data()[0] == doctest::Approx(theta_ref).epsilon(1e-9));
}

TEST_CASE("GR module end-to-end gradcheck at double precision") {
  GradCheckOptions opts;
  opts.eps = 1e-5;
  opts.tolerance = 1e-5;
  opts.coords_per_tensor = 6;
  for (const auto& report : run_gr_gradcheck<double>(opts)) {
    INFO(report.name, " max_rel_err ", report.max_rel_err);
    CHECK(report.pass);
  }
}
