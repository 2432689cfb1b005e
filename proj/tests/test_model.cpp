#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "r2p/model.hpp"
#include "test_util.hpp"

using namespace r2p;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.n = 8;
  c.m = 16;
  c.h1 = 6;
  c.h2 = 10;
  c.h3 = 12;
  c.h4 = 14;
  c.d1 = 12;
  c.d2 = 12;
  return c;
}

Tensor random_points(std::size_t b, std::size_t n, std::uint64_t seed,
                     bool requires_grad = false) {
  auto gen = testutil::rng(seed);
  return Tensor::uniform({b, n, 3}, -1, 1, gen, requires_grad);
}

Tensor permute_points(const Tensor& x, std::uint64_t seed) {
  const std::size_t B = x.dim(0), N = x.dim(1), D = x.dim(2);
  auto gen = testutil::rng(seed);
  std::vector<double> out(x.size());
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<std::size_t> perm(N);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t d = 0; d < D; ++d)
        out[(b * N + n) * D + d] = x.data()[(b * N + perm[n]) * D + d];
  }
  return Tensor::from_data(x.shape(), std::move(out), x.requires_grad());
}

std::uint64_t fnv1a(std::span<const double> values) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

PointCloud cloud_of(std::initializer_list<Vec3> pts) {
  PointCloud pc;
  pc.points = pts;
  return pc;
}

}  // namespace

TEST_CASE("encode: permuting the points leaves the global feature unchanged") {
  R2PModel model(tiny_config(), 101);
  Tensor x = random_points(2, 8, 1);
  Tensor g1 = encode(model.encoder(0), x, /*training=*/true);
  Tensor g2 = encode(model.encoder(0), permute_points(x, 2), true);
  REQUIRE(g1.shape() == g2.shape());
  for (std::size_t i = 0; i < g1.size(); ++i)
    CHECK(g1.data()[i] == g2.data()[i]);
}

TEST_CASE("encode: duplicating every point leaves the feature unchanged") {
  ModelConfig no_bn = tiny_config();
  no_bn.use_batchnorm = false;
  R2PModel model(no_bn, 102);
  Tensor x = random_points(2, 8, 3);
  std::vector<double> doubled;
  for (std::size_t b = 0; b < 2; ++b)
    for (int rep = 0; rep < 2; ++rep)
      for (std::size_t i = 0; i < 8 * 3; ++i)
        doubled.push_back(x.data()[b * 24 + i]);
  Tensor x2 = Tensor::from_data({2, 16, 3}, std::move(doubled));

  Tensor g1 = encode(model.encoder(0), x, true);
  Tensor g2 = encode(model.encoder(0), x2, true);
  for (std::size_t i = 0; i < g1.size(); ++i)
    CHECK(g1.data()[i] == g2.data()[i]);  // exact: max-pool, shared weights

  // With batchnorm the statistics are mathematically unchanged as well;
  // only summation rounding differs.
  R2PModel bn_model(tiny_config(), 102);
  Tensor h1 = encode(bn_model.encoder(0), x, true);
  Tensor h2 = encode(bn_model.encoder(0), x2, true);
  for (std::size_t i = 0; i < h1.size(); ++i)
    CHECK(h1.data()[i] == doctest::Approx(h2.data()[i]).epsilon(1e-9));
}

TEST_CASE("encode: single point becomes its own global feature") {
  R2PModel model(tiny_config(), 103);
  Tensor x = random_points(1, 1, 4);
  Tensor g = encode(model.encoder(0), x, true);
  CHECK(g.shape() == Shape{1, 14});
  // With one point, pooling is the identity: the feature must match the
  // second shared MLP's single output row end to end. Recompute it.
  EncoderParams& enc = model.encoder(0);
  Tensor f = enc.mlp1.forward(x, true);
  Tensor fc = concat_global(f, max_pool_points(f).values);
  Tensor fp = enc.mlp2.forward(fc, true);
  for (std::size_t d = 0; d < 14; ++d)
    CHECK(g.at(0, d) == fp.at(0, 0, d));
}

TEST_CASE("decode: zero feature produces a bias-only output, batch-constant") {
  R2PModel model(tiny_config(), 104);
  Tensor g = Tensor::zeros({3, 14});
  Tensor out = decode(model.decoder(0), g, 16);
  CHECK(out.shape() == Shape{3, 16, 3});
  for (std::size_t b = 1; b < 3; ++b)
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t d = 0; d < 3; ++d)
        CHECK(out.at(b, i, d) == out.at(0, i, d));
  for (double v : out.data()) CHECK(std::isfinite(v));
}

TEST_CASE("decode: gradient w.r.t. the global feature matches finite differences") {
  R2PModel model(tiny_config(), 105);
  auto gen = testutil::rng(6);
  Tensor g = Tensor::uniform({2, 14}, -1, 1, gen, true);
  auto loss_fn = [&] {
    Tensor out = decode(model.decoder(0), g, 16);
    return sum(mul(out, out)).value();
  };
  Tensor out = decode(model.decoder(0), g, 16);
  sum(mul(out, out)).backward();
  auto res = testutil::finite_diff_check(g, loss_fn, 1e-5, 1e-4);
  CHECK(res.ok);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("forward: output shapes and input permutation invariance") {
  R2PModel model(tiny_config(), 106);
  Tensor x = random_points(2, 8, 7);
  auto [pm, po] = model.forward(x, true);
  CHECK(pm.shape() == Shape{2, 16, 3});
  CHECK(po.shape() == Shape{2, 16, 3});

  for (std::uint64_t s = 1; s <= 10; ++s) {
    auto [pm2, po2] = model.forward(permute_points(x, s), true);
    for (std::size_t i = 0; i < pm.size(); ++i) {
      CHECK(pm.data()[i] == pm2.data()[i]);
      CHECK(po.data()[i] == po2.data()[i]);
    }
  }
}

TEST_CASE("forward: wrong point count is rejected") {
  R2PModel model(tiny_config(), 107);
  CHECK_THROWS_AS(model.forward(random_points(1, 9, 8), true), ShapeError);
}

TEST_CASE("forward: seeded init reproduces the recorded golden hash") {
  R2PModel model(tiny_config(), 42);
  Tensor x = random_points(2, 8, 42);
  auto [pm, po] = model.forward(x, true);
  std::uint64_t h = fnv1a(pm.data()) ^ (fnv1a(po.data()) << 1);
  // Regression fixture generated by this implementation at seed 42.
  CHECK(h == 10257265162009076669ULL);
}

TEST_CASE("loss: perfect predictions score zero for every variant") {
  auto gen = testutil::rng(8);
  PointCloud gt = testutil::random_cloud(16, gen);
  Tensor pred = clouds_to_tensor({gt});
  for (const char* v : {"l1", "l2", "l3", "l4", "l5"}) {
    LossSpec spec = LossSpec::variant(v);
    Tensor loss = r2p_loss(pred, pred, {gt}, spec);
    CHECK(loss.value() == 0.0);
  }
}

TEST_CASE("loss: alpha=0 reduces to the first term") {
  auto gen = testutil::rng(9);
  PointCloud gt = testutil::random_cloud(12, gen);
  PointCloud pm = testutil::random_cloud(12, gen);
  PointCloud po = testutil::random_cloud(12, gen);
  LossSpec spec = LossSpec::variant("l1", /*alpha=*/0.0);
  Tensor loss =
      r2p_loss(clouds_to_tensor({pm}), clouds_to_tensor({po}), {gt}, spec);
  CHECK(loss.value() == doctest::Approx(chamfer(pm, gt)).epsilon(1e-15));
}

TEST_CASE("loss: hand-computed two-point fixtures for all five variants") {
  PointCloud gt = cloud_of({{0, 0, 0}, {1, 0, 0}});
  PointCloud pm = cloud_of({{0, 0, 1}, {1, 0, 1}});  // CD 2, EMD 1
  PointCloud po = cloud_of({{0, 0, 2}, {1, 0, 2}});  // CD 4, EMD 2
  Tensor tm = clouds_to_tensor({pm});
  Tensor to = clouds_to_tensor({po});

  const struct {
    const char* variant;
    double want;
  } cases[] = {
      {"l1", 2.0 + 0.1 * 4.0}, {"l2", 1.0 + 0.1 * 2.0}, {"l3", 3.0 + 0.1 * 6.0},
      {"l4", 2.0 + 0.1 * 2.0}, {"l5", 1.0 + 0.1 * 4.0},
  };
  for (const auto& c : cases) {
    Tensor loss = r2p_loss(tm, to, {gt}, LossSpec::variant(c.variant));
    CHECK(loss.value() == doctest::Approx(c.want).epsilon(1e-12));
  }
}

TEST_CASE("loss: non-negative, zero only for set-equal predictions") {
  auto gen = testutil::rng(12);
  PointCloud gt = testutil::random_cloud(10, gen);
  PointCloud shuffled_gt = gt;
  std::shuffle(shuffled_gt.points.begin(), shuffled_gt.points.end(), gen);
  PointCloud nudged = gt;
  nudged.points[4].x += 1e-3;

  Tensor perm = clouds_to_tensor({shuffled_gt});
  Tensor off = clouds_to_tensor({nudged});
  for (const char* v : {"l1", "l2", "l3", "l4", "l5"}) {
    LossSpec spec = LossSpec::variant(v);
    CHECK(r2p_loss(perm, perm, {gt}, spec).value() == 0.0);
    CHECK(r2p_loss(off, off, {gt}, spec).value() > 0.0);
    CHECK(r2p_loss(off, perm, {gt}, spec).value() >= 0.0);
  }
}

TEST_CASE("loss: EMD variant rejects mismatched point counts") {
  auto gen = testutil::rng(10);
  PointCloud gt = testutil::random_cloud(10, gen);
  PointCloud pred = testutil::random_cloud(12, gen);
  Tensor t = clouds_to_tensor({pred});
  CHECK_THROWS_AS(r2p_loss(t, t, {gt}, LossSpec::variant("l2")), UsageError);
  CHECK_NOTHROW(r2p_loss(t, t, {gt}, LossSpec::variant("l1")));
}

TEST_CASE("loss: gradient flows into both blocks' outputs") {
  auto gen = testutil::rng(11);
  PointCloud gt = testutil::random_cloud(8, gen);
  Tensor pm = Tensor::from_data(
      {1, 8, 3},
      testutil::random_values(24, gen), true);
  Tensor po = Tensor::from_data(
      {1, 8, 3},
      testutil::random_values(24, gen), true);
  Tensor loss = r2p_loss(pm, po, {gt}, LossSpec::variant("l3"));
  loss.backward();
  double gm = 0, go = 0;
  for (double v : pm.grad()) gm += std::abs(v);
  for (double v : po.grad()) go += std::abs(v);
  CHECK(gm > 0.0);
  CHECK(go > 0.0);
}

TEST_CASE("checkpoint: bitwise round trip through a stream") {
  ModelConfig cfg = tiny_config();
  R2PModel model(cfg, 201);
  model.loss_spec() = LossSpec::variant("l4", 0.25);

  // Populate batchnorm running statistics.
  model.forward(random_points(2, 8, 12), true);

  std::stringstream ss;
  save_model(ss, model);
  CHECK(ss.str().substr(0, 4) == "R2PM");
  R2PModel back = load_model(ss);

  CHECK(back.config().m == cfg.m);
  CHECK(back.loss_spec().name() == "l4");
  CHECK(back.loss_spec().alpha == 0.25);
  auto pa = model.parameters();
  auto pb = back.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i]->shape() == pb[i]->shape());
    for (std::size_t j = 0; j < pa[i]->size(); ++j)
      CHECK(pa[i]->data()[j] == pb[i]->data()[j]);
  }

  // Eval-mode forward identical before and after the round trip.
  Tensor x = random_points(2, 8, 13);
  auto [pm1, po1] = model.forward(x, false);
  auto [pm2, po2] = back.forward(x, false);
  for (std::size_t i = 0; i < po1.size(); ++i) {
    CHECK(pm1.data()[i] == pm2.data()[i]);
    CHECK(po1.data()[i] == po2.data()[i]);
  }
}

TEST_CASE("checkpoint: truncated files fail cleanly") {
  R2PModel model(tiny_config(), 202);
  std::stringstream ss;
  save_model(ss, model);
  std::string full = ss.str();
  for (std::size_t cut : {3ul, 20ul, full.size() / 2, full.size() - 4}) {
    std::stringstream damaged(full.substr(0, cut));
    CHECK_THROWS_AS(load_model(damaged), IoError);
  }
}

TEST_CASE("checkpoint: architecture metadata mismatch is detected") {
  R2PModel model(tiny_config(), 203);
  std::stringstream ss;
  save_model(ss, model);
  std::string bytes = ss.str();
  bytes[0] = 'X';
  std::stringstream bad(bytes);
  CHECK_THROWS_AS(load_model(bad), IoError);
}

TEST_CASE("model file round trip on disk") {
  auto dir = std::filesystem::temp_directory_path() / "r2p_model_tests";
  std::filesystem::create_directories(dir);
  std::string path = (dir / "model.r2pm").string();
  R2PModel model(tiny_config(), 204);
  model.forward(random_points(2, 8, 14), true);
  save_model(path, model);
  R2PModel back = load_model(path);
  Tensor x = random_points(1, 8, 15);
  auto [pm1, po1] = model.forward(x, false);
  auto [pm2, po2] = back.forward(x, false);
  for (std::size_t i = 0; i < po1.size(); ++i)
    CHECK(po1.data()[i] == po2.data()[i]);
}
