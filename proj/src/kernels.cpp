#include "r2p/kernels.hpp"

#include <cassert>
#include <limits>

namespace r2p {

namespace {

// One output row of C = A*B; the inner k-loop order is the contract that
// keeps serial and parallel variants bit-identical.
inline void row_nn(const double* a, const double* b, double* c, std::size_t k,
                   std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) c[j] = 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a[p];
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
  }
}

inline void row_nt(const double* a, const double* b, double* c, std::size_t k,
                   std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    const double* brow = b + j * k;
    double s = 0.0;
    for (std::size_t p = 0; p < k; ++p) s += a[p] * brow[p];
    c[j] = s;
  }
}

inline void row_tn(const double* a, const double* b, double* c, std::size_t i,
                   std::size_t k, std::size_t n, std::size_t m) {
  // c = row i of A^T * B where A is [K,M]: c[j] = sum_p A[p,i] * B[p,j].
  for (std::size_t j = 0; j < n; ++j) c[j] = 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a[p * m + i];
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
  }
}

inline NearestHit nearest_one(const Vec3& q, std::span<const Vec3> refs) {
  NearestHit hit{0, std::numeric_limits<double>::infinity()};
  double best2 = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < refs.size(); ++j) {
    double d2 = dist2(q, refs[j]);
    if (d2 < best2) {
      best2 = d2;
      hit.index = j;
    }
  }
  hit.distance = std::sqrt(best2);
  return hit;
}

inline TopTwo bid_scan_range(std::span<const double> cost_row,
                             std::span<const double> prices, std::size_t lo,
                             std::size_t hi) {
  TopTwo t;
  t.best = -std::numeric_limits<double>::infinity();
  t.second = -std::numeric_limits<double>::infinity();
  for (std::size_t j = lo; j < hi; ++j) {
    double v = -cost_row[j] - prices[j];
    if (v > t.best) {
      t.second = t.best;
      t.best = v;
      t.best_index = j;
    } else if (v > t.second) {
      t.second = v;
    }
  }
  return t;
}

// Merging partial top-two results in ascending chunk order reproduces the
// full-range scan exactly, including the lowest-index tie rule.
inline TopTwo merge_toptwo(const TopTwo& a, const TopTwo& b) {
  TopTwo r;
  if (b.best > a.best) {
    r.best = b.best;
    r.best_index = b.best_index;
    r.second = a.best > b.second ? a.best : b.second;
  } else {
    r.best = a.best;
    r.best_index = a.best_index;
    r.second = b.best > a.second ? b.best : a.second;
  }
  return r;
}

}  // namespace

namespace serial {

void matmul_nn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t k,
               std::size_t n) {
  assert(a.size() == m * k && b.size() == k * n && c.size() == m * n);
  for (std::size_t i = 0; i < m; ++i)
    row_nn(a.data() + i * k, b.data(), c.data() + i * n, k, n);
}

void matmul_nt(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t k,
               std::size_t n) {
  assert(a.size() == m * k && b.size() == n * k && c.size() == m * n);
  for (std::size_t i = 0; i < m; ++i)
    row_nt(a.data() + i * k, b.data(), c.data() + i * n, k, n);
}

void matmul_tn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t k,
               std::size_t n) {
  assert(a.size() == k * m && b.size() == k * n && c.size() == m * n);
  for (std::size_t i = 0; i < m; ++i)
    row_tn(a.data(), b.data(), c.data() + i * n, i, k, n, m);
}

std::vector<NearestHit> nearest_bruteforce(std::span<const Vec3> queries,
                                           std::span<const Vec3> refs) {
  std::vector<NearestHit> hits(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i)
    hits[i] = nearest_one(queries[i], refs);
  return hits;
}

void distance_matrix(std::span<const Vec3> a, std::span<const Vec3> b,
                     std::span<double> out) {
  assert(out.size() == a.size() * b.size());
  const std::size_t nb = b.size();
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < nb; ++j) out[i * nb + j] = dist(a[i], b[j]);
}

TopTwo bid_scan(std::span<const double> cost_row,
                std::span<const double> prices) {
  return bid_scan_range(cost_row, prices, 0, cost_row.size());
}

}  // namespace serial

void matmul_nn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t k,
               std::size_t n) {
  assert(a.size() == m * k && b.size() == k * n && c.size() == m * n);
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i)
    row_nn(ap + i * k, bp, cp + i * n, k, n);
}

void matmul_nt(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t k,
               std::size_t n) {
  assert(a.size() == m * k && b.size() == n * k && c.size() == m * n);
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i)
    row_nt(ap + i * k, bp, cp + i * n, k, n);
}

void matmul_tn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t k,
               std::size_t n) {
  assert(a.size() == k * m && b.size() == k * n && c.size() == m * n);
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i)
    row_tn(ap, bp, cp + i * n, static_cast<std::size_t>(i), k, n, m);
}

std::vector<NearestHit> nearest_bruteforce(std::span<const Vec3> queries,
                                           std::span<const Vec3> refs) {
  std::vector<NearestHit> hits(queries.size());
  const Vec3* qp = queries.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(queries.size());
       ++i)
    hits[i] = nearest_one(qp[i], refs);
  return hits;
}

void distance_matrix(std::span<const Vec3> a, std::span<const Vec3> b,
                     std::span<double> out) {
  assert(out.size() == a.size() * b.size());
  const std::size_t nb = b.size();
  double* op = out.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(a.size()); ++i)
    for (std::size_t j = 0; j < nb; ++j) op[i * nb + j] = dist(a[i], b[j]);
}

TopTwo bid_scan(std::span<const double> cost_row,
                std::span<const double> prices) {
  const std::size_t n = cost_row.size();
  // Fixed chunk width, not thread count, decides the partition; the merged
  // result is the same as one serial scan for any schedule.
  constexpr std::size_t kChunk = 1024;
  if (n <= kChunk) return bid_scan_range(cost_row, prices, 0, n);

  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<TopTwo> partial(chunks);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(chunks); ++ci) {
    std::size_t lo = static_cast<std::size_t>(ci) * kChunk;
    std::size_t hi = lo + kChunk < n ? lo + kChunk : n;
    partial[ci] = bid_scan_range(cost_row, prices, lo, hi);
  }
  TopTwo acc = partial[0];
  for (std::size_t ci = 1; ci < chunks; ++ci) acc = merge_toptwo(acc, partial[ci]);
  return acc;
}

}  // namespace r2p
