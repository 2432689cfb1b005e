#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "r2p/geometry.hpp"
#include "r2p/kernels.hpp"

namespace r2p {

// Static 3-d tree for nearest-neighbor queries. Selection rule matches the
// brute-force kernel exactly: smallest squared distance, ties to the lowest
// original point index, so either search path yields identical results.
class KdTree3 {
 public:
  explicit KdTree3(std::span<const Vec3> points);

  NearestHit nearest(const Vec3& query) const;
  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    int axis = -1;          // -1 marks a leaf
    double split = 0.0;
    std::size_t begin = 0;  // leaf range into order_
    std::size_t end = 0;
    int left = -1;
    int right = -1;
  };

  int build(std::size_t begin, std::size_t end);
  void search(int node_idx, const Vec3& q, double& best2,
              std::size_t& best_idx) const;

  std::vector<Vec3> points_;         // original order
  std::vector<std::size_t> order_;   // permutation grouped by leaf
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace r2p
