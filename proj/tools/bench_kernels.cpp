// Compares the OpenMP kernels against their serial reference twins and the
// two EMD solvers against each other. Wall times only; the equality of
// results is covered by the test suite.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <vector>

#include "r2p/kdtree.hpp"
#include "r2p/kernels.hpp"
#include "r2p/metrics.hpp"
#include "r2p/pointcloud.hpp"

using namespace r2p;

namespace {

double now_ms() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double, std::milli>(
             clock::now().time_since_epoch())
      .count();
}

template <typename F>
double time_ms(F&& fn, int reps = 3) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    double t0 = now_ms();
    fn();
    best = std::min(best, now_ms() - t0);
  }
  return best;
}

PointCloud random_cloud(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PointCloud pc;
  pc.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    pc.points.push_back({u(rng), u(rng), u(rng)});
  return pc;
}

}  // namespace

int main() {
  if (const char* threads = std::getenv("R2P_THREADS")) {
    int t = std::atoi(threads);
    if (t > 0) omp_set_num_threads(t);
  }
  std::printf("threads: %d\n\n", omp_get_max_threads());
  std::mt19937_64 rng(7);

  {
    const std::size_t m = 512, k = 512, n = 512;
    std::vector<double> a(m * k), b(k * n), c(m * n);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& v : a) v = u(rng);
    for (double& v : b) v = u(rng);
    double ts = time_ms([&] { serial::matmul_nn(a, b, c, m, k, n); });
    double tp = time_ms([&] { matmul_nn(a, b, c, m, k, n); });
    std::printf("matmul %zux%zux%zu        serial %8.2f ms   omp %8.2f ms   x%.2f\n",
                m, k, n, ts, tp, ts / tp);
  }

  {
    PointCloud q = random_cloud(4096, rng), r = random_cloud(4096, rng);
    double ts = time_ms([&] { serial::nearest_bruteforce(q.points, r.points); });
    double tp = time_ms([&] { nearest_bruteforce(q.points, r.points); });
    double tk = time_ms([&] {
      KdTree3 tree(r.points);
      for (const Vec3& p : q.points) tree.nearest(p);
    });
    std::printf("nn 4096 vs 4096          serial %8.2f ms   omp %8.2f ms   x%.2f   kdtree %8.2f ms\n",
                ts, tp, ts / tp, tk);
  }

  {
    PointCloud a = random_cloud(1024, rng), b = random_cloud(1024, rng);
    std::vector<double> out(a.size() * b.size());
    double ts = time_ms([&] { serial::distance_matrix(a.points, b.points, out); });
    double tp = time_ms([&] { distance_matrix(a.points, b.points, out); });
    std::printf("distance matrix 1024^2   serial %8.2f ms   omp %8.2f ms   x%.2f\n",
                ts, tp, ts / tp);
  }

  {
    PointCloud a = random_cloud(512, rng), b = random_cloud(512, rng);
    double th = time_ms([&] { emd_exact(a, b); }, 1);
    double ta = time_ms([&] { emd_approx(a, b); }, 1);
    double hc = emd_exact(a, b).cost;
    double ac = emd_approx(a, b).cost;
    std::printf("emd n=512                exact  %8.2f ms   auction %6.2f ms   gap %.3g%%\n",
                th, ta, 100.0 * (ac - hc) / hc);
  }

  {
    PointCloud a = random_cloud(4096, rng), b = random_cloud(4096, rng);
    double ta = time_ms([&] { emd_approx(a, b); }, 1);
    std::printf("emd n=4096               auction %7.2f ms\n", ta);
  }

  return 0;
}
