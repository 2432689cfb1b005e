#include "r2p/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace r2p {

namespace {
constexpr std::size_t kLeafSize = 16;

inline double coord(const Vec3& p, int axis) {
  return axis == 0 ? p.x : axis == 1 ? p.y : p.z;
}
}  // namespace

KdTree3::KdTree3(std::span<const Vec3> points)
    : points_(points.begin(), points.end()), order_(points.size()) {
  std::iota(order_.begin(), order_.end(), 0);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    root_ = build(0, points_.size());
  }
}

int KdTree3::build(std::size_t begin, std::size_t end) {
  Node node;
  if (end - begin <= kLeafSize) {
    node.begin = begin;
    node.end = end;
    nodes_.push_back(node);
    return static_cast<int>(nodes_.size() - 1);
  }

  Vec3 lo{std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi{-std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity()};
  for (std::size_t i = begin; i < end; ++i) {
    const Vec3& p = points_[order_[i]];
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  Vec3 extent = hi - lo;
  int axis = 0;
  if (extent.y > coord(extent, axis)) axis = 1;
  if (extent.z > coord(extent, axis)) axis = 2;

  std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end,
                   [&](std::size_t a, std::size_t b) {
                     double ca = coord(points_[a], axis);
                     double cb = coord(points_[b], axis);
                     return ca < cb || (ca == cb && a < b);
                   });
  node.axis = axis;
  node.split = coord(points_[order_[mid]], axis);

  nodes_.push_back(node);
  int self = static_cast<int>(nodes_.size() - 1);
  int left = build(begin, mid);
  int right = build(mid, end);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

void KdTree3::search(int node_idx, const Vec3& q, double& best2,
                     std::size_t& best_idx) const {
  const Node& node = nodes_[node_idx];
  if (node.axis < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      std::size_t idx = order_[i];
      double d2 = dist2(q, points_[idx]);
      if (d2 < best2 || (d2 == best2 && idx < best_idx)) {
        best2 = d2;
        best_idx = idx;
      }
    }
    return;
  }
  double delta = coord(q, node.axis) - node.split;
  int near = delta < 0.0 ? node.left : node.right;
  int far = delta < 0.0 ? node.right : node.left;
  search(near, q, best2, best_idx);
  // <= keeps equal-distance candidates reachable so the index tie rule holds.
  if (delta * delta <= best2) search(far, q, best2, best_idx);
}

NearestHit KdTree3::nearest(const Vec3& query) const {
  NearestHit hit;
  double best2 = std::numeric_limits<double>::infinity();
  std::size_t best_idx = std::numeric_limits<std::size_t>::max();
  search(root_, query, best2, best_idx);
  hit.index = best_idx;
  hit.distance = std::sqrt(best2);
  return hit;
}

}  // namespace r2p
