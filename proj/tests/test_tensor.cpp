#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "r2p/tensor.hpp"
#include "test_util.hpp"

using namespace r2p;

TEST_CASE("linear: identity weight reproduces the input") {
  Tensor x = Tensor::from_data({1, 2, 2}, {1, 0, 0, 1});
  Tensor w = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor b = Tensor::zeros({2});
  Tensor y = linear(x, w, b);
  CHECK(y.shape() == Shape{1, 2, 2});
  for (std::size_t i = 0; i < 4; ++i) CHECK(y.data()[i] == x.data()[i]);
}

TEST_CASE("linear: zero input yields the bias on every row") {
  auto gen = testutil::rng(21);
  Tensor x = Tensor::zeros({2, 3, 4});
  Tensor w = Tensor::uniform({4, 5}, -1, 1, gen);
  Tensor b = Tensor::from_data({5}, {0.5, -0.25, 1.0, 2.0, -3.0});
  Tensor y = linear(x, w, b);
  for (std::size_t bi = 0; bi < 2; ++bi)
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t d = 0; d < 5; ++d)
        CHECK(y.at(bi, n, d) == b.at(d));
}

TEST_CASE("linear: matches the scalar triple-loop oracle to 1e-12") {
  auto gen = testutil::rng(22);
  const std::size_t B = 2, N = 7, din = 5, dout = 9;
  Tensor x = Tensor::uniform({B, N, din}, -2, 2, gen);
  Tensor w = Tensor::uniform({din, dout}, -1, 1, gen);
  Tensor b = Tensor::uniform({dout}, -1, 1, gen);
  Tensor y = linear(x, w, b);

  std::vector<double> xa(x.data().begin(), x.data().end());
  std::vector<double> wa(w.data().begin(), w.data().end());
  auto prod = testutil::matmul_oracle(xa, wa, B * N, din, dout);
  for (std::size_t r = 0; r < B * N; ++r)
    for (std::size_t d = 0; d < dout; ++d)
      CHECK(y.data()[r * dout + d] ==
            doctest::Approx(prod[r * dout + d] + b.at(d)).epsilon(1e-12));
}

TEST_CASE("linear: shape mismatch names both shapes") {
  Tensor x = Tensor::zeros({1, 2, 3});
  Tensor w = Tensor::zeros({4, 5});
  Tensor b = Tensor::zeros({5});
  CHECK_THROWS_WITH_AS(linear(x, w, b),
                       doctest::Contains("[1,2,3]"), ShapeError);
  try {
    linear(x, w, b);
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("[4,5]") != std::string::npos);
  }
}

TEST_CASE("linear gradients match finite differences") {
  auto gen = testutil::rng(23);
  Tensor x = Tensor::uniform({2, 4, 3}, -1, 1, gen, true);
  Tensor w = Tensor::uniform({3, 6}, -1, 1, gen, true);
  Tensor b = Tensor::uniform({6}, -1, 1, gen, true);

  auto loss_fn = [&] { return sum(mul(linear(x, w, b), linear(x, w, b))).value(); };
  Tensor y = linear(x, w, b);
  Tensor loss = sum(mul(y, y));
  loss.backward();
  for (Tensor* t : {&x, &w, &b}) {
    auto res = testutil::finite_diff_check(*t, loss_fn, 1e-5, 1e-6);
    CHECK(res.ok);
  }
}

TEST_CASE("relu forward and gradient routing") {
  Tensor x = Tensor::from_data({3}, {-1, 0, 2}, true);
  Tensor y = relu(x);
  CHECK(y.data()[0] == 0);
  CHECK(y.data()[1] == 0);
  CHECK(y.data()[2] == 2);

  sum(y).backward();
  CHECK(x.grad()[0] == 0);  // negative side blocked
  CHECK(x.grad()[1] == 0);  // defined as 0 at the kink
  CHECK(x.grad()[2] == 1);

  Tensor neg = Tensor::from_data({4}, {-3, -2, -1, -0.5}, true);
  Tensor z = relu(neg);
  for (double v : z.data()) CHECK(v == 0.0);
  sum(z).backward();
  for (double g : neg.grad()) CHECK(g == 0.0);
}

TEST_CASE("relu gradient matches finite differences away from zero") {
  auto gen = testutil::rng(24);
  Tensor x = Tensor::uniform({40}, 0.1, 2.0, gen, true);
  {  // mix in firmly negative entries
    auto w = x.mutable_data();
    for (std::size_t i = 0; i < w.size(); i += 3) w[i] = -w[i];
  }
  auto loss_fn = [&] { return sum(mul(relu(x), relu(x))).value(); };
  Tensor loss = sum(mul(relu(x), relu(x)));
  loss.backward();
  auto res = testutil::finite_diff_check(x, loss_fn, 1e-5, 1e-6);
  CHECK(res.ok);
}

TEST_CASE("batchnorm: constant features collapse to beta") {
  Tensor x = Tensor::from_data({2, 3, 2},
                               {5, -1, 5, -1, 5, -1, 5, -1, 5, -1, 5, -1});
  Tensor gamma = Tensor::from_data({2}, {2.0, 3.0});
  Tensor beta = Tensor::from_data({2}, {0.25, -0.5});
  BatchNormState state;
  Tensor y = batchnorm(x, gamma, beta, state, /*training=*/true);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(y.data()[2 * i] == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(y.data()[2 * i + 1] == doctest::Approx(-0.5).epsilon(1e-9));
  }
}

TEST_CASE("batchnorm: standard-normal batch keeps mean 0 and var 1") {
  auto gen = testutil::rng(25);
  const std::size_t B = 8, N = 256, D = 4;
  std::normal_distribution<double> normal(0.3, 1.7);
  std::vector<double> data(B * N * D);
  for (double& v : data) v = normal(gen);
  Tensor x = Tensor::from_data({B, N, D}, std::move(data));
  Tensor gamma = Tensor::full({D}, 1.0);
  Tensor beta = Tensor::zeros({D});
  BatchNormState state;
  Tensor y = batchnorm(x, gamma, beta, state, true);

  for (std::size_t d = 0; d < D; ++d) {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < B * N; ++i) mean += y.data()[i * D + d];
    mean /= B * N;
    for (std::size_t i = 0; i < B * N; ++i) {
      double c = y.data()[i * D + d] - mean;
      var += c * c;
    }
    var /= B * N;
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::abs(var - 1.0) < 0.05);
  }
}

namespace {

// Scalar reference batchnorm (plain loops, no canonical summation), forward
// and input gradient, for the oracle comparison.
struct BnRef {
  std::vector<double> out, dx, dgamma, dbeta;
};

BnRef batchnorm_reference(const std::vector<double>& x,
                          const std::vector<double>& gamma,
                          const std::vector<double>& beta,
                          const std::vector<double>& gout, std::size_t m,
                          std::size_t feat, double eps) {
  BnRef r;
  r.out.resize(m * feat);
  r.dx.resize(m * feat);
  r.dgamma.assign(feat, 0.0);
  r.dbeta.assign(feat, 0.0);
  for (std::size_t d = 0; d < feat; ++d) {
    double mu = 0;
    for (std::size_t i = 0; i < m; ++i) mu += x[i * feat + d];
    mu /= m;
    double var = 0;
    for (std::size_t i = 0; i < m; ++i) {
      double c = x[i * feat + d] - mu;
      var += c * c;
    }
    var /= m;
    double istd = 1.0 / std::sqrt(var + eps);
    double sum_g = 0, sum_gh = 0;
    std::vector<double> xhat(m);
    for (std::size_t i = 0; i < m; ++i) {
      xhat[i] = (x[i * feat + d] - mu) * istd;
      r.out[i * feat + d] = gamma[d] * xhat[i] + beta[d];
      sum_g += gout[i * feat + d];
      sum_gh += gout[i * feat + d] * xhat[i];
      r.dgamma[d] += gout[i * feat + d] * xhat[i];
      r.dbeta[d] += gout[i * feat + d];
    }
    for (std::size_t i = 0; i < m; ++i)
      r.dx[i * feat + d] = gamma[d] * istd / m *
                           (m * gout[i * feat + d] - sum_g - xhat[i] * sum_gh);
  }
  return r;
}

}  // namespace

TEST_CASE("batchnorm: train forward/backward matches the scalar reference") {
  auto gen = testutil::rng(26);
  const std::size_t B = 2, N = 5, D = 3;
  Tensor x = Tensor::uniform({B, N, D}, -2, 2, gen, true);
  Tensor gamma = Tensor::uniform({D}, 0.5, 1.5, gen, true);
  Tensor beta = Tensor::uniform({D}, -0.5, 0.5, gen, true);
  BatchNormState state;
  Tensor y = batchnorm(x, gamma, beta, state, true);

  // Upstream gradient = y itself via loss = sum(y*y)/2... use sum(y*y).
  Tensor loss = sum(mul(y, y));
  loss.backward();
  std::vector<double> gout(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) gout[i] = 2.0 * y.data()[i];

  auto ref = batchnorm_reference(
      std::vector<double>(x.data().begin(), x.data().end()),
      std::vector<double>(gamma.data().begin(), gamma.data().end()),
      std::vector<double>(beta.data().begin(), beta.data().end()), gout, B * N,
      D, 1e-5);
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK(y.data()[i] == doctest::Approx(ref.out[i]).epsilon(1e-10));
    CHECK(x.grad()[i] == doctest::Approx(ref.dx[i]).epsilon(1e-10));
  }
  for (std::size_t d = 0; d < D; ++d) {
    CHECK(gamma.grad()[d] == doctest::Approx(ref.dgamma[d]).epsilon(1e-10));
    CHECK(beta.grad()[d] == doctest::Approx(ref.dbeta[d]).epsilon(1e-10));
  }
}

TEST_CASE("batchnorm: eval without statistics is a usage error") {
  Tensor x = Tensor::zeros({1, 2, 2});
  Tensor gamma = Tensor::full({2}, 1.0);
  Tensor beta = Tensor::zeros({2});
  BatchNormState state;
  CHECK_THROWS_AS(batchnorm(x, gamma, beta, state, /*training=*/false),
                  UsageError);
}

TEST_CASE("batchnorm: gradient matches finite differences (train mode)") {
  auto gen = testutil::rng(27);
  Tensor x = Tensor::uniform({2, 6, 3}, -1, 1, gen, true);
  Tensor gamma = Tensor::uniform({3}, 0.5, 1.5, gen, true);
  Tensor beta = Tensor::uniform({3}, -0.5, 0.5, gen, true);
  auto loss_fn = [&] {
    BatchNormState fresh;
    Tensor y = batchnorm(x, gamma, beta, fresh, true);
    return sum(mul(y, y)).value();
  };
  BatchNormState state;
  Tensor y = batchnorm(x, gamma, beta, state, true);
  sum(mul(y, y)).backward();
  for (Tensor* t : {&x, &gamma, &beta}) {
    auto res = testutil::finite_diff_check(*t, loss_fn, 1e-5, 1e-5);
    CHECK(res.ok);
  }
}

TEST_CASE("max_pool_points: single point and ramp inputs") {
  Tensor one = Tensor::from_data({1, 1, 3}, {4, -2, 7});
  auto r1 = max_pool_points(one);
  CHECK(r1.values.shape() == Shape{1, 3});
  CHECK(r1.values.at(0, 0) == 4);
  CHECK(r1.values.at(0, 1) == -2);
  CHECK(r1.values.at(0, 2) == 7);

  const std::size_t B = 2, N = 5, D = 3;
  std::vector<double> ramp(B * N * D);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t d = 0; d < D; ++d) ramp[(b * N + n) * D + d] = double(n);
  auto r2 = max_pool_points(Tensor::from_data({B, N, D}, std::move(ramp)));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t d = 0; d < D; ++d) {
      CHECK(r2.values.at(b, d) == double(N - 1));
      CHECK(r2.argmax[b * D + d] == N - 1);
    }
}

TEST_CASE("max_pool_points: ties go to the lowest point index") {
  Tensor x = Tensor::from_data({1, 3, 1}, {5, 5, 5}, true);
  auto r = max_pool_points(x);
  CHECK(r.argmax[0] == 0);
  sum(r.values).backward();
  CHECK(x.grad()[0] == 1);
  CHECK(x.grad()[1] == 0);
  CHECK(x.grad()[2] == 0);
}

TEST_CASE("max_pool_points: empty point axis is rejected") {
  CHECK_THROWS_AS(Tensor::zeros({1, 0, 3}), ShapeError);
}

TEST_CASE("max_pool_points: gradient matches finite differences") {
  auto gen = testutil::rng(28);
  Tensor x = Tensor::uniform({2, 6, 4}, -1, 1, gen, true);
  auto loss_fn = [&] {
    auto v = max_pool_points(x).values;
    return sum(mul(v, v)).value();
  };
  auto v = max_pool_points(x).values;
  sum(mul(v, v)).backward();
  auto res = testutil::finite_diff_check(x, loss_fn, 1e-6, 1e-6);
  CHECK(res.ok);
}

TEST_CASE("max_pool_points backward touches exactly one point per slot") {
  auto gen = testutil::rng(29);
  Tensor x = Tensor::uniform({3, 7, 5}, -1, 1, gen, true);
  sum(max_pool_points(x).values).backward();
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t d = 0; d < 5; ++d) {
      int touched = 0;
      for (std::size_t n = 0; n < 7; ++n)
        if (x.grad()[(b * 7 + n) * 5 + d] != 0.0) ++touched;
      CHECK(touched == 1);
    }
}

TEST_CASE("concat_global: layout, zero tail, and batch mismatch") {
  Tensor x = Tensor::from_data({1, 1, 2}, {1, 2});
  Tensor g = Tensor::from_data({1, 3}, {7, 8, 9});
  Tensor y = concat_global(x, g);
  CHECK(y.shape() == Shape{1, 1, 5});
  CHECK(y.data()[0] == 1);
  CHECK(y.data()[2] == 7);
  CHECK(y.data()[4] == 9);

  Tensor gz = Tensor::zeros({1, 2});
  Tensor y2 = concat_global(x, gz);
  CHECK(y2.at(0, 0, 0) == 1);
  CHECK(y2.at(0, 0, 2) == 0);
  CHECK(y2.at(0, 0, 3) == 0);

  Tensor bad = Tensor::zeros({2, 3});
  CHECK_THROWS_AS(concat_global(x, bad), ShapeError);
}

TEST_CASE("concat_global: global branch accumulates N gradient copies") {
  auto gen = testutil::rng(30);
  const std::size_t N = 6;
  Tensor x = Tensor::uniform({2, N, 3}, -1, 1, gen, true);
  Tensor g = Tensor::uniform({2, 4}, -1, 1, gen, true);
  sum(concat_global(x, g)).backward();
  for (double v : g.grad()) CHECK(v == doctest::Approx(double(N)));
  for (double v : x.grad()) CHECK(v == 1.0);
}

TEST_CASE("reshape: row-major preserved, inverse composes to identity") {
  Tensor x = Tensor::from_data({1, 12}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11},
                               true);
  Tensor y = reshape(x, {4, 3});
  CHECK(y.at(0, 0) == 0);
  CHECK(y.at(1, 0) == 3);
  CHECK(y.at(3, 2) == 11);
  Tensor z = reshape(y, {1, 12});
  for (std::size_t i = 0; i < 12; ++i) CHECK(z.data()[i] == x.data()[i]);
  CHECK_THROWS_AS(reshape(x, {5, 3}), ShapeError);

  sum(z).backward();
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward: sum and quadratic identities") {
  auto gen = testutil::rng(31);
  Tensor x = Tensor::uniform({7}, -2, 2, gen, true);
  sum(x).backward();
  for (double g : x.grad()) CHECK(g == 1.0);

  Tensor y = Tensor::uniform({5}, -2, 2, gen, true);
  scale(sum(mul(y, y)), 0.5).backward();
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(y.grad()[i] == doctest::Approx(y.data()[i]).epsilon(1e-12));
}

TEST_CASE("backward: non-scalar loss is a usage error") {
  Tensor x = Tensor::zeros({2, 2}, true);
  CHECK_THROWS_AS(x.backward(), UsageError);
}

TEST_CASE("backward: repeated calls accumulate on leaves") {
  Tensor x = Tensor::full({3}, 2.0, true);
  Tensor loss = sum(x);
  loss.backward();
  loss.backward();
  for (double g : x.grad()) CHECK(g == 2.0);
  x.zero_grad();
  loss.backward();
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("backward: diamond-shaped graph sums both paths") {
  Tensor x = Tensor::from_data({2}, {3, 4}, true);
  Tensor a = scale(x, 2.0);
  Tensor loss = sum(add(a, mul(a, x)));  // d/dx (2x + 2x^2) = 2 + 4x
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(2 + 4 * 3.0));
  CHECK(x.grad()[1] == doctest::Approx(2 + 4 * 4.0));
}

TEST_CASE("ops do not mutate their inputs") {
  auto gen = testutil::rng(32);
  Tensor x = Tensor::uniform({2, 4, 3}, -1, 1, gen, true);
  Tensor w = Tensor::uniform({3, 5}, -1, 1, gen, true);
  Tensor b = Tensor::uniform({5}, -1, 1, gen, true);
  std::vector<double> snap_x(x.data().begin(), x.data().end());
  std::vector<double> snap_w(w.data().begin(), w.data().end());

  Tensor y = relu(linear(x, w, b));
  auto pooled = max_pool_points(y);
  sum(pooled.values).backward();

  CHECK(std::vector<double>(x.data().begin(), x.data().end()) == snap_x);
  CHECK(std::vector<double>(w.data().begin(), w.data().end()) == snap_w);
}

TEST_CASE("forward determinism: identical seeds give identical bits") {
  auto run = [] {
    auto gen = testutil::rng(77);
    Tensor x = Tensor::uniform({2, 8, 3}, -1, 1, gen, true);
    Tensor w = Tensor::uniform({3, 16}, -1, 1, gen, true);
    Tensor b = Tensor::uniform({16}, -1, 1, gen, true);
    Tensor gamma = Tensor::full({16}, 1.0);
    Tensor beta = Tensor::zeros({16});
    BatchNormState st;
    Tensor y = batchnorm(linear(x, w, b), gamma, beta, st, true);
    return std::vector<double>(y.data().begin(), y.data().end());
  };
  CHECK(run() == run());
}

TEST_CASE("non-finite forward values raise NumericError") {
  Tensor x = Tensor::from_data({2}, {1e308, 1e308});
  CHECK_THROWS_AS(add(x, x), NumericError);
  CHECK_THROWS_AS(Tensor::from_data({1}, {std::nan("")}), NumericError);
}

TEST_CASE("tensor serialization round trip and corruption handling") {
  auto gen = testutil::rng(33);
  Tensor t = Tensor::uniform({3, 4, 5}, -10, 10, gen);
  std::stringstream ss;
  save_tensor(ss, t);

  // magic + rank + 3 dims + payload
  CHECK(ss.str().size() == 4 + 1 + 3 * 8 + 60 * 8);
  CHECK(ss.str().substr(0, 4) == "R2PT");

  Tensor back = load_tensor(ss);
  CHECK(back.shape() == t.shape());
  for (std::size_t i = 0; i < t.size(); ++i)
    CHECK(back.data()[i] == t.data()[i]);

  std::stringstream truncated(ss.str().substr(0, 20));
  CHECK_THROWS_AS(load_tensor(truncated), IoError);
  std::stringstream bad("XXXX");
  CHECK_THROWS_AS(load_tensor(bad), IoError);
}
