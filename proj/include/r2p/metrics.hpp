#pragma once

#include <cstddef>
#include <vector>

#include "r2p/geometry.hpp"
#include "r2p/pointcloud.hpp"

namespace r2p {

// Bijective assignment S1[i] -> S2[assignment[i]] together with the mean
// matched Euclidean distance it realizes.
struct Matching {
  std::vector<std::size_t> assignment;
  double cost = 0.0;
};

struct ChamferOptions {
  enum class Mode { automatic, bruteforce, kdtree };
  Mode mode = Mode::automatic;  // automatic: brute force up to 512 points
  bool squared = false;         // interop flag; evaluation uses plain distances
};

// Symmetric mean nearest-neighbor distance. The brute-force and k-d-tree
// paths produce bit-identical values; `automatic` switches on cloud size.
double chamfer(const PointCloud& s1, const PointCloud& s2,
               const ChamferOptions& opts = {});

// d(chamfer)/d(s1 points), treating each nearest-neighbor pair as locally
// constant. Zero-distance pairs contribute nothing.
std::vector<Vec3> chamfer_grad(const PointCloud& s1, const PointCloud& s2,
                               const ChamferOptions& opts = {});

inline constexpr std::size_t kDefaultExactCap = 1024;

// Optimal assignment (shortest augmenting path Hungarian, O(n^3)) on the
// Euclidean cost matrix. Throws on unequal sizes and above the cap.
Matching emd_exact(const PointCloud& s1, const PointCloud& s2,
                   std::size_t exact_cap = kDefaultExactCap);

// Auction with epsilon scaling. The refund phase ends at eps_final = eps, so
// the total assigned cost is within n*eps_final of optimal and the reported
// mean cost within eps_final.
Matching emd_approx(const PointCloud& s1, const PointCloud& s2,
                    double eps = 2e-4);

// Fixed-matching subgradient of the mean matched distance w.r.t. s1 points.
// Rejects matchings whose recomputed cost disagrees with the stored one.
std::vector<Vec3> emd_grad(const PointCloud& s1, const PointCloud& s2,
                           const Matching& matching);

}  // namespace r2p
