#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <numeric>

#include "r2p/metrics.hpp"
#include "test_util.hpp"

using namespace r2p;

namespace {

// Independent double-loop chamfer oracle.
double chamfer_oracle(const PointCloud& a, const PointCloud& b) {
  auto term = [](const PointCloud& from, const PointCloud& to) {
    double s = 0;
    for (const Vec3& p : from.points) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& q : to.points) best = std::min(best, dist(p, q));
      s += best;
    }
    return s / double(from.size());
  };
  return term(a, b) + term(b, a);
}

// Exhaustive assignment oracle: minimum mean matched distance over all n!
// bijections.
double emd_bruteforce(const PointCloud& a, const PointCloud& b) {
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0;
    for (std::size_t i = 0; i < perm.size(); ++i)
      s += dist(a.points[i], b.points[perm[i]]);
    best = std::min(best, s / double(perm.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

PointCloud translated(const PointCloud& pc, const Vec3& t) {
  PointCloud out = pc;
  for (Vec3& p : out.points) p += t;
  return out;
}

PointCloud shuffled(const PointCloud& pc, std::uint64_t seed) {
  PointCloud out = pc;
  auto gen = testutil::rng(seed);
  std::shuffle(out.points.begin(), out.points.end(), gen);
  return out;
}

}  // namespace

TEST_CASE("chamfer: identical clouds score zero") {
  auto gen = testutil::rng(51);
  PointCloud pc = testutil::random_cloud(30, gen);
  CHECK(chamfer(pc, pc) == 0.0);
}

TEST_CASE("chamfer: two single points at distance 1 score 1+1") {
  PointCloud a, b;
  a.points = {{0, 0, 0}};
  b.points = {{1, 0, 0}};
  CHECK(chamfer(a, b) == doctest::Approx(2.0).epsilon(1e-15));
  ChamferOptions sq;
  sq.squared = true;
  CHECK(chamfer(a, b, sq) == doctest::Approx(2.0).epsilon(1e-15));
  b.points = {{2, 0, 0}};
  CHECK(chamfer(a, b) == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(chamfer(a, b, sq) == doctest::Approx(8.0).epsilon(1e-15));
}

TEST_CASE("chamfer: empty input is rejected") {
  PointCloud a, b;
  a.points = {{0, 0, 0}};
  CHECK_THROWS_AS(chamfer(a, b), UsageError);
  CHECK_THROWS_AS(chamfer(b, a), UsageError);
}

TEST_CASE("chamfer: k-d tree path equals brute force bitwise") {
  auto gen = testutil::rng(52);
  ChamferOptions brute, kd;
  brute.mode = ChamferOptions::Mode::bruteforce;
  kd.mode = ChamferOptions::Mode::kdtree;
  for (int rep = 0; rep < 20; ++rep) {
    PointCloud a = testutil::random_cloud(256, gen);
    PointCloud b = testutil::random_cloud(256, gen);
    double vb = chamfer(a, b, brute);
    double vk = chamfer(a, b, kd);
    CHECK(vb == vk);
    CHECK(vb == doctest::Approx(chamfer_oracle(a, b)).epsilon(1e-12));
  }
  // Duplicate points keep both paths in agreement.
  PointCloud a = testutil::random_cloud(64, gen);
  PointCloud b = a;
  b.points[3] = b.points[1];
  CHECK(chamfer(a, b, brute) == chamfer(a, b, kd));
}

TEST_CASE("chamfer: symmetric by construction, invariant to shuffles and shifts") {
  auto gen = testutil::rng(53);
  PointCloud a = testutil::random_cloud(100, gen);
  PointCloud b = testutil::random_cloud(80, gen);
  CHECK(chamfer(a, b) == chamfer(b, a));
  CHECK(chamfer(shuffled(a, 1), shuffled(b, 2)) == chamfer(a, b));
  Vec3 t{12.5, -3.25, 0.125};
  CHECK(chamfer(translated(a, t), translated(b, t)) ==
        doctest::Approx(chamfer(a, b)).epsilon(1e-12));
}

TEST_CASE("chamfer_grad: zero for identical clouds") {
  auto gen = testutil::rng(54);
  PointCloud pc = testutil::random_cloud(20, gen);
  for (const Vec3& g : chamfer_grad(pc, pc)) CHECK(g.norm() == 0.0);
}

TEST_CASE("chamfer_grad: single-point pair has magnitude 1/|S1|+1/|S2| = 2") {
  PointCloud a, b;
  a.points = {{0, 0, 0}};
  b.points = {{1, 0, 0}};
  auto g = chamfer_grad(a, b);
  REQUIRE(g.size() == 1);
  CHECK(g[0].x == doctest::Approx(-2.0).epsilon(1e-15));
  CHECK(g[0].y == 0.0);
  CHECK(g[0].z == 0.0);
}

TEST_CASE("chamfer_grad: finite differences on jittered 16-point clouds") {
  auto gen = testutil::rng(55);
  PointCloud a = testutil::random_cloud(16, gen);
  PointCloud b = testutil::random_cloud(16, gen);
  auto grad = chamfer_grad(a, b);
  const double h = 1e-6;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (int axis = 0; axis < 3; ++axis) {
      double* c = axis == 0 ? &a.points[i].x : axis == 1 ? &a.points[i].y
                                                         : &a.points[i].z;
      double keep = *c;
      *c = keep + h;
      double up = chamfer(a, b);
      *c = keep - h;
      double down = chamfer(a, b);
      *c = keep;
      double numeric = (up - down) / (2 * h);
      double analytic = axis == 0 ? grad[i].x : axis == 1 ? grad[i].y
                                                          : grad[i].z;
      CHECK(testutil::grad_close(analytic, numeric, 1e-5, 1e-9));
    }
  }
}

TEST_CASE("emd_exact: identity and swapped clouds") {
  auto gen = testutil::rng(56);
  PointCloud pc = testutil::random_cloud(12, gen);
  Matching m = emd_exact(pc, pc);
  CHECK(m.cost == 0.0);
  for (std::size_t i = 0; i < pc.size(); ++i)
    CHECK(dist(pc.points[i], pc.points[m.assignment[i]]) == 0.0);

  PointCloud a, b;
  a.points = {{0, 0, 0}, {1, 0, 0}};
  b.points = {{1, 0, 0}, {0, 0, 0}};
  Matching swap = emd_exact(a, b);
  CHECK(swap.cost == 0.0);
  CHECK(swap.assignment[0] == 1);
  CHECK(swap.assignment[1] == 0);
}

TEST_CASE("emd_exact: equals the exhaustive permutation minimum for n<=6") {
  auto gen = testutil::rng(57);
  for (std::size_t n = 1; n <= 6; ++n) {
    for (int rep = 0; rep < 30; ++rep) {
      PointCloud a = testutil::random_cloud(n, gen);
      PointCloud b = testutil::random_cloud(n, gen);
      Matching m = emd_exact(a, b);
      CHECK(m.cost == doctest::Approx(emd_bruteforce(a, b)).epsilon(1e-9));
      // The stored assignment realizes the stored cost.
      double s = 0;
      for (std::size_t i = 0; i < n; ++i)
        s += dist(a.points[i], b.points[m.assignment[i]]);
      CHECK(m.cost == doctest::Approx(s / double(n)).epsilon(1e-12));
    }
  }
}

TEST_CASE("emd_exact: contract errors for size mismatch and cap") {
  auto gen = testutil::rng(58);
  PointCloud a = testutil::random_cloud(5, gen);
  PointCloud b = testutil::random_cloud(7, gen);
  CHECK_THROWS_WITH_AS(emd_exact(a, b),
                       doctest::Contains("same number of points"), UsageError);
  PointCloud big = testutil::random_cloud(40, gen);
  PointCloud big2 = testutil::random_cloud(40, gen);
  CHECK_THROWS_WITH_AS(emd_exact(big, big2, 32),
                       doctest::Contains("emd_approx"), UsageError);
}

TEST_CASE("emd_exact: never beaten by a sampled bijection") {
  auto gen = testutil::rng(59);
  PointCloud a = testutil::random_cloud(24, gen);
  PointCloud b = testutil::random_cloud(24, gen);
  Matching m = emd_exact(a, b);
  std::vector<std::size_t> perm(24);
  std::iota(perm.begin(), perm.end(), 0);
  for (int rep = 0; rep < 200; ++rep) {
    std::shuffle(perm.begin(), perm.end(), gen);
    double s = 0;
    for (std::size_t i = 0; i < 24; ++i)
      s += dist(a.points[i], b.points[perm[i]]);
    CHECK(m.cost <= s / 24.0 + 1e-12);
  }
}

TEST_CASE("emd_approx: identical clouds cost zero") {
  auto gen = testutil::rng(60);
  PointCloud pc = testutil::random_cloud(50, gen);
  Matching m = emd_approx(pc, pc);
  CHECK(m.cost == 0.0);
}

TEST_CASE("emd_approx: within 1% of the exact solver at n=128") {
  auto gen = testutil::rng(61);
  for (int rep = 0; rep < 8; ++rep) {
    PointCloud a = testutil::random_cloud(128, gen);
    PointCloud b = testutil::random_cloud(128, gen);
    double exact = emd_exact(a, b).cost;
    Matching m = emd_approx(a, b);
    CHECK(m.cost >= exact - 1e-12);  // approximation never beats the optimum
    CHECK(m.cost <= exact * 1.01);

    // Complete bijection.
    std::vector<char> used(128, 0);
    for (std::size_t j : m.assignment) {
      CHECK(!used[j]);
      used[j] = 1;
    }
  }
}

TEST_CASE("emd_approx: deterministic and honors the documented bound") {
  auto gen = testutil::rng(62);
  PointCloud a = testutil::random_cloud(100, gen);
  PointCloud b = testutil::random_cloud(100, gen);
  Matching m1 = emd_approx(a, b, 1e-3);
  Matching m2 = emd_approx(a, b, 1e-3);
  CHECK(m1.cost == m2.cost);
  CHECK(m1.assignment == m2.assignment);
  // Mean cost within eps_final of optimal (total within n*eps_final).
  double exact = emd_exact(a, b).cost;
  CHECK(m1.cost <= exact + 1e-3 + 1e-12);
}

TEST_CASE("emd_approx: n=4096 completes under the recorded time budget") {
  auto gen = testutil::rng(63);
  PointCloud a = testutil::random_cloud(4096, gen);
  PointCloud b = testutil::random_cloud(4096, gen);
  auto t0 = std::chrono::steady_clock::now();
  Matching m = emd_approx(a, b);
  double seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  CHECK(m.assignment.size() == 4096);
  CHECK(m.cost > 0.0);
  // Budget from the shipped benchmark (r2p_bench): ~2 s single-threaded.
  CHECK(seconds < 60.0);
}

TEST_CASE("emd cost is invariant to shuffles and translations") {
  auto gen = testutil::rng(64);
  PointCloud a = testutil::random_cloud(32, gen);
  PointCloud b = testutil::random_cloud(32, gen);
  double base = emd_exact(a, b).cost;
  CHECK(emd_exact(shuffled(a, 3), shuffled(b, 4)).cost ==
        doctest::Approx(base).epsilon(1e-12));
  Vec3 t{-4.5, 2.25, 9.0};
  CHECK(emd_exact(translated(a, t), translated(b, t)).cost ==
        doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("chamfer is bounded by twice the EMD on equal-size clouds") {
  auto gen = testutil::rng(65);
  for (int rep = 0; rep < 25; ++rep) {
    PointCloud a = testutil::random_cloud(48, gen);
    PointCloud b = testutil::random_cloud(48, gen);
    CHECK(chamfer(a, b) <= 2.0 * emd_exact(a, b).cost + 1e-12);
  }
}

TEST_CASE("emd_grad: zero-cost matching yields zero gradient") {
  auto gen = testutil::rng(66);
  PointCloud pc = testutil::random_cloud(10, gen);
  Matching m = emd_exact(pc, pc);
  for (const Vec3& g : emd_grad(pc, pc, m)) CHECK(g.norm() == 0.0);
}

TEST_CASE("emd_grad: single-point pair gives a unit vector") {
  PointCloud a, b;
  a.points = {{0, 0, 0}};
  b.points = {{0, 3, 0}};
  Matching m = emd_exact(a, b);
  auto g = emd_grad(a, b, m);
  CHECK(g[0].norm() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(g[0].y == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("emd_grad: stale matching is rejected") {
  auto gen = testutil::rng(67);
  PointCloud a = testutil::random_cloud(6, gen);
  PointCloud b = testutil::random_cloud(6, gen);
  Matching m = emd_exact(a, b);
  m.cost += 0.5;
  CHECK_THROWS_WITH_AS(emd_grad(a, b, m), doctest::Contains("stale"),
                       UsageError);
  Matching broken = emd_exact(a, b);
  broken.assignment[0] = broken.assignment[1];
  CHECK_THROWS_WITH_AS(emd_grad(a, b, broken),
                       doctest::Contains("bijection"), UsageError);
}

TEST_CASE("emd_grad: finite differences with refreshed matchings, n=8") {
  auto gen = testutil::rng(68);
  PointCloud a = testutil::random_cloud(8, gen);
  PointCloud b = testutil::random_cloud(8, gen);
  auto grad = emd_grad(a, b, emd_exact(a, b));
  const double h = 1e-6;
  for (std::size_t i = 0; i < 8; ++i) {
    for (int axis = 0; axis < 3; ++axis) {
      double* c = axis == 0 ? &a.points[i].x : axis == 1 ? &a.points[i].y
                                                         : &a.points[i].z;
      double keep = *c;
      *c = keep + h;
      double up = emd_exact(a, b).cost;
      *c = keep - h;
      double down = emd_exact(a, b).cost;
      *c = keep;
      double numeric = (up - down) / (2 * h);
      double analytic = axis == 0 ? grad[i].x : axis == 1 ? grad[i].y
                                                          : grad[i].z;
      CHECK(testutil::grad_close(analytic, numeric, 1e-4, 1e-9));
    }
  }
}
