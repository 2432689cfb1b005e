#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "r2p/geometry.hpp"

namespace r2p {

enum class CloudSource : std::uint8_t {
  ground_truth,
  view_converted,
  union_input,
  intermediate,
  output,
};

// Ordered point list; every metric on it is permutation-invariant but the
// ordering is kept stable because matchings and training index into it.
struct PointCloud {
  std::vector<Vec3> points;
  CloudSource source = CloudSource::ground_truth;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

struct Intrinsics {
  double fx = 0, fy = 0;  // focal lengths, pixels
  double cx = 0, cy = 0;  // principal point, pixels
};

// Range image; depth 0 encodes "no return" at that pixel.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<double> depth;  // row-major H*W, meters
  Intrinsics intrinsics;
  Pose pose;  // camera-to-world

  double at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
  double& at(int u, int v) { return depth[static_cast<std::size_t>(v) * width + u]; }
  std::size_t nonzero_count() const;

  // Throws if depths are negative or the rotation is not orthonormal with
  // determinant +1 (tolerance 1e-9).
  void validate() const;
};

struct ViewSet {
  std::vector<DepthImage> views;
  std::size_t k() const { return views.size(); }
};

// Back-projects every pixel with depth > 0 through the pinhole model into the
// world frame. An all-zero image yields an empty cloud.
PointCloud depth_to_cloud(const DepthImage& img);

// Z-buffered pinhole projection; the nearest point wins each pixel, points
// behind the camera or outside the image are dropped.
DepthImage project_cloud(const PointCloud& pc, const Intrinsics& intr,
                         const Pose& pose, int width, int height);

// Concatenated back-projection of all views, in world frame.
PointCloud union_views(const ViewSet& vs);

// Exactly n points: subsample without replacement when |pc| >= n, pad by
// sampling with replacement otherwise. Deterministic per seed.
PointCloud resample(const PointCloud& pc, std::size_t n, std::uint64_t seed);

struct NormalizeParams {
  Vec3 centroid;
  double scale = 1.0;  // max distance from centroid, clamped to >= tiny
};

std::pair<PointCloud, NormalizeParams> normalize(const PointCloud& pc);
PointCloud denormalize(const PointCloud& pc, const NormalizeParams& p);
PointCloud apply_normalize(const PointCloud& pc, const NormalizeParams& p);

enum class CloudFormat { xyz, ply };

PointCloud read_cloud(const std::string& path, CloudFormat format);
void write_cloud(const std::string& path, const PointCloud& pc, CloudFormat format);

// Format guessed from the extension (.xyz / .ply).
PointCloud read_cloud_auto(const std::string& path);
void write_cloud_auto(const std::string& path, const PointCloud& pc);

}  // namespace r2p
