#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "r2p/geometry.hpp"

// Data-parallel inner loops. Every kernel here computes each output element
// with a fixed serial inner order, so the OpenMP version is bit-identical to
// the serial reference for any thread count. The serial twins under
// r2p::serial are kept as test oracles and benchmark baselines.

namespace r2p {

struct NearestHit {
  std::size_t index = 0;
  double distance = 0.0;  // Euclidean, not squared
};

namespace serial {

// C[M,N] = A[M,K] * B[K,N], row-major.
void matmul_nn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t k, std::size_t n);

// C[M,N] = A[M,K] * B[N,K]^T.
void matmul_nt(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t k, std::size_t n);

// C[M,N] = A[K,M]^T * B[K,N].
void matmul_tn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t k, std::size_t n);

// For each query, the nearest reference point; exact-distance ties resolve to
// the lowest reference index.
std::vector<NearestHit> nearest_bruteforce(std::span<const Vec3> queries,
                                           std::span<const Vec3> refs);

// Dense pairwise Euclidean distances, row-major |a| x |b|.
void distance_matrix(std::span<const Vec3> a, std::span<const Vec3> b,
                     std::span<double> out);

}  // namespace serial

void matmul_nn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t k, std::size_t n);
void matmul_nt(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t k, std::size_t n);
void matmul_tn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t k, std::size_t n);

std::vector<NearestHit> nearest_bruteforce(std::span<const Vec3> queries,
                                           std::span<const Vec3> refs);

void distance_matrix(std::span<const Vec3> a, std::span<const Vec3> b,
                     std::span<double> out);

// Top-two scan of value[j] = -cost[j] - price[j] over one cost-matrix row.
// Returns (best index, best value, second-best value); ties go to the lowest
// index, so the result does not depend on the chunking. Used by the auction
// solver's bidding step.
struct TopTwo {
  std::size_t best_index = 0;
  double best = 0.0;
  double second = 0.0;
};
TopTwo bid_scan(std::span<const double> cost_row, std::span<const double> prices);

namespace serial {
TopTwo bid_scan(std::span<const double> cost_row, std::span<const double> prices);
}

}  // namespace r2p
