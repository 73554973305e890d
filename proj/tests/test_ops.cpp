#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <casgnn/ops.hpp>
#include <casgnn/rng.hpp>

#include "oracles.hpp"

using namespace casgnn;

TEST_CASE("conv2d single multiply-add") {
  auto x = TensorF::from({1, 1, 1, 1}, {2.0f});
  auto w = TensorF::from({1, 1, 1, 1}, {3.0f});
  auto b = TensorF::from({1, 1, 1, 1}, {0.5f});
  auto y = conv2d(x, w, b, 1, 0);
  CHECK(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y.item() == doctest::Approx(6.5f));
}

TEST_CASE("conv2d all-ones 3x3 with padding counts overlaps") {
  auto x = TensorF::full({1, 1, 3, 3}, 1.0f);
  auto w = TensorF::full({1, 1, 3, 3}, 1.0f);
  auto b = TensorF::zeros({1, 1, 1, 1});
  auto y = conv2d(x, w, b, 1, 1);
  CHECK(y.at(0, 0, 1, 1) == doctest::Approx(9.0f));
  CHECK(y.at(0, 0, 0, 1) == doctest::Approx(6.0f));
  CHECK(y.at(0, 0, 1, 0) == doctest::Approx(6.0f));
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(4.0f));
  CHECK(y.at(0, 0, 2, 2) == doctest::Approx(4.0f));
}

TEST_CASE("conv2d matches the nested-loop oracle") {
  Rng rng(42);
  auto x = oracles::random_tensor<double>({2, 3, 5, 5}, rng);
  auto w = oracles::random_tensor<double>({4, 3, 3, 3}, rng);
  auto b = oracles::random_tensor<double>({1, 4, 1, 1}, rng);
  auto got = conv2d(x, w, b, 1, 0);
  auto want = oracles::conv_oracle(x, w, b, 1, 0);
  CHECK(oracles::max_abs_diff(got, want) < 1e-6);
}

TEST_CASE("conv2d oracle equivalence over 50 random shapes") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int b = rng.uniform_int(1, 2);
    const int ci = rng.uniform_int(1, 4);
    const int co = rng.uniform_int(1, 4);
    const int k = rng.coin() ? 1 : 3;
    const int stride = rng.uniform_int(1, 2);
    const int pad = rng.uniform_int(0, 2);
    const int h = rng.uniform_int(k, 9);
    const int w = rng.uniform_int(k, 9);
    auto x = oracles::random_tensor<double>({b, ci, h, w}, rng);
    auto wt = oracles::random_tensor<double>({co, ci, k, k}, rng);
    auto bias = oracles::random_tensor<double>({1, co, 1, 1}, rng);
    auto got = conv2d(x, wt, bias, stride, pad);
    auto want = oracles::conv_oracle(x, wt, bias, stride, pad);
    CHECK(oracles::max_abs_diff(got, want) < 1e-6);
  }
}

TEST_CASE("conv2d dimension errors carry the offending extents") {
  auto x = TensorF::zeros({1, 2, 4, 4});
  auto w = TensorF::zeros({3, 5, 3, 3});
  auto b = TensorF::zeros({1, 3, 1, 1});
  CHECK_THROWS_WITH_AS(conv2d(x, w, b, 1, 1), doctest::Contains("1x2x4x4"), DimensionError);
  auto wbig = TensorF::zeros({3, 2, 9, 9});
  CHECK_THROWS_AS(conv2d(x, wbig, b, 1, 0), DimensionError);
  CHECK_THROWS_AS(conv2d(x, w, TensorF::zeros({1, 7, 1, 1}), 1, 0), DimensionError);
}

TEST_CASE("conv2d rejects non-finite results") {
  auto x = TensorF::from({1, 1, 1, 1}, {std::numeric_limits<float>::max()});
  auto w = TensorF::from({1, 1, 1, 1}, {std::numeric_limits<float>::max()});
  auto b = TensorF::zeros({1, 1, 1, 1});
  CHECK_THROWS_AS(conv2d(x, w, b, 1, 0), NumericError);
}

TEST_CASE("adaptive_avg_pool block means on 1..16") {
  std::vector<float> vals(16);
  for (int i = 0; i < 16; ++i) vals[i] = static_cast<float>(i + 1);
  auto x = TensorF::from({1, 1, 4, 4}, std::move(vals));
  auto y = adaptive_avg_pool(x, 2, 2);
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(3.5f));
  CHECK(y.at(0, 0, 0, 1) == doctest::Approx(5.5f));
  CHECK(y.at(0, 0, 1, 0) == doctest::Approx(11.5f));
  CHECK(y.at(0, 0, 1, 1) == doctest::Approx(13.5f));
}

TEST_CASE("adaptive_avg_pool to own size is the identity") {
  Rng rng(3);
  auto x = oracles::random_tensor<float>({1, 2, 5, 7}, rng);
  auto y = adaptive_avg_pool(x, 5, 7);
  CHECK(oracles::max_abs_diff(x, y) == 0.0);
}

TEST_CASE("adaptive_avg_pool matches the window oracle") {
  Rng rng(11);
  auto x = oracles::random_tensor<double>({1, 2, 7, 5}, rng);
  CHECK(oracles::max_abs_diff(adaptive_avg_pool(x, 3, 2),
                              oracles::adaptive_pool_oracle(x, 3, 2)) < 1e-6);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = rng.uniform_int(1, 9), w = rng.uniform_int(1, 9);
    const int oh = rng.uniform_int(1, h), ow = rng.uniform_int(1, w);
    auto t = oracles::random_tensor<double>({1, rng.uniform_int(1, 3), h, w}, rng);
    CHECK(oracles::max_abs_diff(adaptive_avg_pool(t, oh, ow),
                                oracles::adaptive_pool_oracle(t, oh, ow)) < 1e-6);
  }
  CHECK_THROWS_AS(adaptive_avg_pool(x, 0, 2), DimensionError);
  CHECK_THROWS_AS(adaptive_avg_pool(x, 9, 2), DimensionError);
}

TEST_CASE("bilinear_resize preserves constants exactly") {
  auto x = TensorF::from({1, 1, 1, 1}, {7.0f});
  auto y = bilinear_resize(x, 4, 4);
  for (float v : y.data()) CHECK(v == 7.0f);

  Rng rng(5);
  auto k = static_cast<float>(rng.uniform(-3, 3));
  auto c = TensorF::full({1, 2, 5, 3}, k);
  auto r = bilinear_resize(c, 8, 11);
  for (float v : r.data()) CHECK(std::abs(v - k) < 1e-7);
}

TEST_CASE("bilinear_resize half-pixel row fixture") {
  auto x = TensorF::from({1, 1, 2, 2}, {0.0f, 1.0f, 0.0f, 1.0f});
  auto y = bilinear_resize(x, 2, 4);
  // hand-evaluated half-pixel taps: src_x = (dst+0.5)*0.5 - 0.5
  const float expect[4] = {0.0f, 0.25f, 0.75f, 1.0f};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(y.at(0, 0, i, j) == doctest::Approx(expect[j]).epsilon(1e-6));
}

TEST_CASE("bilinear_resize identity and oracle equivalence") {
  Rng rng(9);
  auto x = oracles::random_tensor<double>({1, 2, 6, 4}, rng);
  CHECK(oracles::max_abs_diff(x, bilinear_resize(x, 6, 4)) < 1e-6);
  for (int trial = 0; trial < 50; ++trial) {
    const int h = rng.uniform_int(1, 8), w = rng.uniform_int(1, 8);
    const int oh = rng.uniform_int(1, 9), ow = rng.uniform_int(1, 9);
    auto t =
        oracles::random_tensor<double>({rng.uniform_int(1, 2), rng.uniform_int(1, 3), h, w}, rng);
    CHECK(oracles::max_abs_diff(bilinear_resize(t, oh, ow), oracles::resize_oracle(t, oh, ow)) <
          1e-6);
  }
}

TEST_CASE("pointwise fixed points and definitions") {
  Rng rng(13);
  auto z = TensorF::zeros({1, 2, 3, 3});
  auto s = sigmoid(z);
  for (float v : s.data()) CHECK(v == doctest::Approx(0.5f));

  auto v = oracles::random_tensor<float>({1, 2, 3, 3}, rng);
  auto d = sub(v, v);
  for (float x : d.data()) CHECK(x == 0.0f);

  auto ones = TensorF::full({1, 2, 2, 2}, 1.0f);
  auto gate = TensorF::from({1, 2, 1, 1}, {0.5f, 2.0f});
  auto scaled = scale_channels(ones, gate);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) {
      CHECK(scaled.at(0, 0, y, x) == 0.5f);
      CHECK(scaled.at(0, 1, y, x) == 2.0f);
    }

  auto neg = TensorF::from({1, 1, 1, 2}, {-1.5f, 2.5f});
  auto rl = relu(neg);
  CHECK(rl.data()[0] == 0.0f);
  CHECK(rl.data()[1] == 2.5f);

  CHECK_THROWS_AS(add(v, TensorF::zeros({1, 2, 3, 4})), DimensionError);
  CHECK_THROWS_AS(scale_channels(ones, TensorF::zeros({1, 3, 1, 1})), DimensionError);
}

TEST_CASE("global_avg_pool means") {
  auto x = TensorF::from({1, 1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
  CHECK(global_avg_pool(x).item() == doctest::Approx(2.5f));

  auto c = TensorF::full({2, 3, 4, 5}, 1.25f);
  auto y = global_avg_pool(c);
  CHECK(y.shape() == Shape{2, 3, 1, 1});
  for (float v : y.data()) CHECK(v == doctest::Approx(1.25f));

  Rng rng(17);
  auto r = oracles::random_tensor<double>({2, 4, 6, 6}, rng);
  CHECK(oracles::max_abs_diff(global_avg_pool(r), oracles::gap_oracle(r)) < 1e-7);
}

TEST_CASE("concat_channels preserves order") {
  Rng rng(19);
  auto a = oracles::random_tensor<float>({1, 2, 3, 4}, rng);
  auto b = oracles::random_tensor<float>({1, 3, 3, 4}, rng);
  auto y = concat_channels<float>({a, b});
  CHECK(y.shape() == Shape{1, 5, 3, 4});
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) CHECK(y.at(0, c, i, j) == a.at(0, c, i, j));
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) CHECK(y.at(0, 2 + c, i, j) == b.at(0, c, i, j));

  auto single = concat_channels<float>({a});
  CHECK(oracles::max_abs_diff(single, a) == 0.0);

  CHECK_THROWS_AS(concat_channels<float>({a, TensorF::zeros({1, 2, 3, 5})}), DimensionError);
}

TEST_CASE("bce_with_logits fixtures and naive-formula oracle") {
  auto z = TensorF::zeros({1, 1, 2, 2});
  auto half = TensorF::full({1, 1, 2, 2}, 0.5f);
  CHECK(bce_with_logits(z, half).item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));

  auto big = TensorF::full({1, 1, 1, 1}, 20.0f);
  auto one = TensorF::full({1, 1, 1, 1}, 1.0f);
  CHECK(bce_with_logits(big, one).item() < 1e-8);

  Rng rng(23);
  auto logits = oracles::random_tensor<double>({1, 1, 3, 3}, rng, -3.0, 3.0);
  auto target = oracles::random_tensor<double>({1, 1, 3, 3}, rng, 0.0, 1.0);
  double naive = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double x = logits.data()[i], t = target.data()[i];
    const double sig = 1.0 / (1.0 + std::exp(-x));
    naive += -(t * std::log(sig) + (1.0 - t) * std::log(1.0 - sig));
  }
  naive /= static_cast<double>(logits.size());
  CHECK(bce_with_logits(logits, target).item() == doctest::Approx(naive).epsilon(1e-6));

  auto bad = TensorF::full({1, 1, 2, 2}, 1.5f);
  CHECK_THROWS_AS(bce_with_logits(z, bad), DomainError);
}

TEST_CASE("identical inputs give bit-identical outputs") {
  Rng rng_a(31), rng_b(31);
  auto xa = oracles::random_tensor<float>({2, 3, 6, 6}, rng_a);
  auto wa = oracles::random_tensor<float>({4, 3, 3, 3}, rng_a);
  auto xb = oracles::random_tensor<float>({2, 3, 6, 6}, rng_b);
  auto wb = oracles::random_tensor<float>({4, 3, 3, 3}, rng_b);
  auto bias = TensorF::zeros({1, 4, 1, 1});
  auto ya = conv2d(xa, wa, bias, 1, 1);
  auto yb = conv2d(xb, wb, bias, 1, 1);
  CHECK(ya.data() == yb.data());
}
