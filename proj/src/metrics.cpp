#include "r2p/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "r2p/error.hpp"
#include "r2p/kdtree.hpp"
#include "r2p/kernels.hpp"

namespace r2p {

namespace {

constexpr std::size_t kBruteforceLimit = 512;

void require_nonempty(const char* op, const PointCloud& s1,
                      const PointCloud& s2) {
  if (s1.empty() || s2.empty())
    throw UsageError(std::string(op) + ": point clouds must be non-empty");
}

void require_equal_sizes(const char* op, const PointCloud& s1,
                         const PointCloud& s2) {
  if (s1.size() != s2.size())
    throw UsageError(
        std::string(op) +
        ": the bijective matching requires both clouds to have the same "
        "number of points, got " +
        std::to_string(s1.size()) + " vs " + std::to_string(s2.size()));
}

bool use_bruteforce(const ChamferOptions& opts, std::size_t n1, std::size_t n2) {
  switch (opts.mode) {
    case ChamferOptions::Mode::bruteforce:
      return true;
    case ChamferOptions::Mode::kdtree:
      return false;
    case ChamferOptions::Mode::automatic:
    default:
      return std::max(n1, n2) <= kBruteforceLimit;
  }
}

std::vector<NearestHit> all_nearest(std::span<const Vec3> queries,
                                    std::span<const Vec3> refs, bool brute) {
  if (brute) return nearest_bruteforce(queries, refs);
  KdTree3 tree(refs);
  std::vector<NearestHit> hits(queries.size());
  const Vec3* qp = queries.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(queries.size());
       ++i)
    hits[i] = tree.nearest(qp[i]);
  return hits;
}

// Sorted accumulation: the term value depends only on the multiset of
// nearest distances, so shuffling a cloud cannot move the result by an ulp.
double directional_term(const std::vector<NearestHit>& hits, bool squared) {
  std::vector<double> d(hits.size());
  for (std::size_t i = 0; i < hits.size(); ++i)
    d[i] = squared ? hits[i].distance * hits[i].distance : hits[i].distance;
  std::sort(d.begin(), d.end());
  double s = 0.0;
  for (double v : d) s += v;
  return s / static_cast<double>(hits.size());
}

}  // namespace

double chamfer(const PointCloud& s1, const PointCloud& s2,
               const ChamferOptions& opts) {
  require_nonempty("chamfer", s1, s2);
  bool brute = use_bruteforce(opts, s1.size(), s2.size());
  auto fwd = all_nearest(s1.points, s2.points, brute);
  auto rev = all_nearest(s2.points, s1.points, brute);
  return directional_term(fwd, opts.squared) + directional_term(rev, opts.squared);
}

std::vector<Vec3> chamfer_grad(const PointCloud& s1, const PointCloud& s2,
                               const ChamferOptions& opts) {
  require_nonempty("chamfer_grad", s1, s2);
  bool brute = use_bruteforce(opts, s1.size(), s2.size());
  auto fwd = all_nearest(s1.points, s2.points, brute);
  auto rev = all_nearest(s2.points, s1.points, brute);

  const double w1 = 1.0 / static_cast<double>(s1.size());
  const double w2 = 1.0 / static_cast<double>(s2.size());
  std::vector<Vec3> grad(s1.size());

  for (std::size_t i = 0; i < s1.size(); ++i) {
    const NearestHit& h = fwd[i];
    Vec3 diff = s1.points[i] - s2.points[h.index];
    if (opts.squared) {
      grad[i] += diff * (2.0 * w1);
    } else if (h.distance > 0.0) {
      grad[i] += diff * (w1 / h.distance);
    }
  }
  for (std::size_t j = 0; j < s2.size(); ++j) {
    const NearestHit& h = rev[j];
    Vec3 diff = s1.points[h.index] - s2.points[j];
    if (opts.squared) {
      grad[h.index] += diff * (2.0 * w2);
    } else if (h.distance > 0.0) {
      grad[h.index] += diff * (w2 / h.distance);
    }
  }
  return grad;
}

// ---- exact solver -----------------------------------------------------------

namespace {

// Shortest augmenting path over the dual (Jonker-Volgenant flavor).
// `cost` is row-major n x n; returns row -> column.
std::vector<std::size_t> hungarian(const std::vector<double>& cost,
                                   std::size_t n) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);

  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      std::size_t i0 = p[j0], j1 = 0;
      double delta = inf;
      const double* row = cost.data() + (i0 - 1) * n;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = row[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::size_t> row_to_col(n, 0);
  for (std::size_t j = 1; j <= n; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

double assignment_cost(const PointCloud& s1, const PointCloud& s2,
                       const std::vector<std::size_t>& assignment) {
  // Sorted for the same permutation-invariance reason as the chamfer terms.
  std::vector<double> d(assignment.size());
  for (std::size_t i = 0; i < assignment.size(); ++i)
    d[i] = dist(s1.points[i], s2.points[assignment[i]]);
  std::sort(d.begin(), d.end());
  double total = 0.0;
  for (double v : d) total += v;
  return total / static_cast<double>(assignment.size());
}

}  // namespace

Matching emd_exact(const PointCloud& s1, const PointCloud& s2,
                   std::size_t exact_cap) {
  require_nonempty("emd_exact", s1, s2);
  require_equal_sizes("emd_exact", s1, s2);
  const std::size_t n = s1.size();
  if (n > exact_cap)
    throw UsageError("emd_exact: " + std::to_string(n) +
                     " points exceeds the exact-solver cap of " +
                     std::to_string(exact_cap) + "; use emd_approx instead");

  std::vector<double> cost(n * n);
  distance_matrix(s1.points, s2.points, cost);
  Matching m;
  m.assignment = hungarian(cost, n);
  m.cost = assignment_cost(s1, s2, m.assignment);
  return m;
}

// ---- auction solver ---------------------------------------------------------

namespace {

struct AuctionWorkspace {
  const PointCloud* s1;
  const PointCloud* s2;
  const std::vector<double>* matrix;  // null when rows are computed on the fly
  std::vector<double> row_scratch;

  std::span<const double> row(std::size_t i) {
    const std::size_t n = s1->size();
    if (matrix) return {matrix->data() + i * n, n};
    const Vec3 a = s1->points[i];
    const Vec3* bp = s2->points.data();
    double* out = row_scratch.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(n); ++j)
      out[j] = dist(a, bp[j]);
    return {row_scratch.data(), n};
  }
};

// One full auction round at a fixed epsilon. Prices persist across rounds.
void auction_phase(AuctionWorkspace& ws, double eps,
                   std::vector<double>& prices,
                   std::vector<std::ptrdiff_t>& owner_of,
                   std::vector<std::ptrdiff_t>& item_of) {
  const std::size_t n = ws.s1->size();
  std::fill(owner_of.begin(), owner_of.end(), -1);
  std::fill(item_of.begin(), item_of.end(), -1);
  std::deque<std::size_t> pending;
  for (std::size_t i = 0; i < n; ++i) pending.push_back(i);

  while (!pending.empty()) {
    std::size_t bidder = pending.front();
    pending.pop_front();
    TopTwo top = bid_scan(ws.row(bidder), prices);
    double increment = top.best - top.second + eps;
    // Single item: second stays at -inf; a flat eps raise suffices.
    if (!std::isfinite(increment)) increment = eps;
    prices[top.best_index] += increment;
    std::ptrdiff_t previous = owner_of[top.best_index];
    if (previous >= 0) {
      item_of[previous] = -1;
      pending.push_back(static_cast<std::size_t>(previous));
    }
    owner_of[top.best_index] = static_cast<std::ptrdiff_t>(bidder);
    item_of[bidder] = static_cast<std::ptrdiff_t>(top.best_index);
  }
}

}  // namespace

Matching emd_approx(const PointCloud& s1, const PointCloud& s2, double eps) {
  require_nonempty("emd_approx", s1, s2);
  require_equal_sizes("emd_approx", s1, s2);
  const std::size_t n = s1.size();
  if (!(eps > 0.0)) eps = 1e-12;  // termination needs a strictly positive slack

  double max_cost = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < std::min<std::size_t>(n, 8); ++j)
      max_cost = std::max(max_cost, dist(s1.points[i], s2.points[j]));

  Matching m;
  m.assignment.resize(n);
  if (max_cost == 0.0 && dist(s1.points[0], s2.points[0]) == 0.0) {
    // Degenerate all-zero instance; identity is optimal.
    bool all_zero = true;
    for (std::size_t i = 0; i < n && all_zero; ++i)
      all_zero = dist(s1.points[i], s2.points[i]) == 0.0;
    if (all_zero) {
      for (std::size_t i = 0; i < n; ++i) m.assignment[i] = i;
      m.cost = 0.0;
      return m;
    }
  }

  // Dense matrix up to ~32 MB, rows on the fly beyond that.
  constexpr std::size_t kMatrixLimit = 2048;
  std::vector<double> matrix;
  AuctionWorkspace ws{&s1, &s2, nullptr, {}};
  if (n <= kMatrixLimit) {
    matrix.resize(n * n);
    distance_matrix(s1.points, s2.points, matrix);
    ws.matrix = &matrix;
  } else {
    ws.row_scratch.resize(n);
  }

  std::vector<double> eps_schedule;
  double e = std::max(max_cost / 4.0, eps);
  while (e > eps) {
    eps_schedule.push_back(e);
    e /= 5.0;
  }
  eps_schedule.push_back(eps);

  std::vector<double> prices(n, 0.0);
  std::vector<std::ptrdiff_t> owner_of(n, -1), item_of(n, -1);
  for (double phase_eps : eps_schedule)
    auction_phase(ws, phase_eps, prices, owner_of, item_of);

  for (std::size_t i = 0; i < n; ++i)
    m.assignment[i] = static_cast<std::size_t>(item_of[i]);
  m.cost = assignment_cost(s1, s2, m.assignment);
  return m;
}

std::vector<Vec3> emd_grad(const PointCloud& s1, const PointCloud& s2,
                           const Matching& matching) {
  require_nonempty("emd_grad", s1, s2);
  require_equal_sizes("emd_grad", s1, s2);
  const std::size_t n = s1.size();
  if (matching.assignment.size() != n)
    throw UsageError("emd_grad: matching size " +
                     std::to_string(matching.assignment.size()) +
                     " does not cover " + std::to_string(n) + " points");

  std::vector<char> used(n, 0);
  for (std::size_t j : matching.assignment) {
    if (j >= n || used[j])
      throw UsageError("emd_grad: matching is not a bijection");
    used[j] = 1;
  }
  double recomputed = assignment_cost(s1, s2, matching.assignment);
  if (std::abs(recomputed - matching.cost) >
      1e-9 * std::max(1.0, std::abs(matching.cost)))
    throw UsageError(
        "emd_grad: stale matching (stored cost " +
        std::to_string(matching.cost) + ", recomputed " +
        std::to_string(recomputed) + ")");

  const double w = 1.0 / static_cast<double>(n);
  std::vector<Vec3> grad(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 diff = s1.points[i] - s2.points[matching.assignment[i]];
    double d = diff.norm();
    if (d > 0.0) grad[i] = diff * (w / d);
  }
  return grad;
}

}  // namespace r2p
