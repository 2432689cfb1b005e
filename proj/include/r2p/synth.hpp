#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "r2p/pointcloud.hpp"
#include "r2p/train.hpp"

namespace r2p {

enum class Category { box, l_shape, chair_like, desk_like, car_like };

Category parse_category(const std::string& name);
std::string category_name(Category c);

// Axis-aligned part in the object's canonical frame (z up, resting on z=0).
// Parts touch but never penetrate, so the union of their boundaries is the
// object surface. skip_bottom drops the -z face of ground-contact parts.
struct Cuboid {
  Vec3 center;
  Vec3 half;
  bool skip_bottom = false;
};

struct ObjectSpec {
  Category category = Category::box;
  std::vector<double> dims;  // per-category parameters, meters
  double yaw = 0.0;
  Vec3 translation{0, 0, 0};

  void validate() const;
};

// Canonical-frame decomposition (pose not applied).
std::vector<Cuboid> object_parts(const ObjectSpec& spec);

// Area-proportional uniform sampling of the object surface, posed into the
// world frame. Deterministic per seed.
PointCloud sample_object(const ObjectSpec& spec, std::size_t count,
                         std::uint64_t seed);

// Distance from a world point to the object surface (0 on the surface).
double surface_distance(const ObjectSpec& spec, const Vec3& world_point);

// Camera ring: k sensors spread over the edge midpoints of a square arena,
// raised and pitched down toward the arena center.
struct RigConfig {
  double square_side = 4.0;
  double camera_height = 2.0;
  Vec3 look_at{0, 0, 0.5};
  int width = 128;
  int height = 128;
  double fov_deg = 60.0;
};

Pose ring_camera_pose(const RigConfig& rig, std::size_t index, std::size_t k);
Intrinsics rig_intrinsics(const RigConfig& rig);

ViewSet render_views(const PointCloud& pc, std::size_t k = 4,
                     const RigConfig& rig = {});

struct CorruptionSpec {
  double dropout_rate = 0.2;          // fraction of returns removed per view
  double ghost_rate = 0.05;           // spurious returns added per view
  double jitter_sigma = 0.005;        // per-pixel depth noise, meters
  double orientation_error_deg = 2.0; // per-view pose perturbation
  double shape_warp = 0.03;           // low-frequency depth warp amplitude, m

  void validate() const;
  static CorruptionSpec none();
  // key=value file, unknown keys rejected.
  static CorruptionSpec load(const std::string& path);
};

// Independent per-view corruption; an all-zero spec is the identity.
ViewSet corrupt_views(const ViewSet& vs, const CorruptionSpec& c,
                      std::uint64_t seed);

struct SynthConfig {
  std::vector<Category> categories{Category::box};
  std::size_t count = 100;
  CorruptionSpec corruption;
  std::uint64_t seed = 1;
  std::size_t n = 256;   // input cloud size
  std::size_t m = 1024;  // ground-truth cloud size
  std::size_t views = 4;
  std::size_t surface_samples = 8192;  // density of the rendered cloud
  RigConfig rig;
};

// Per sample: random object of the cycled category, dense surface cloud,
// k rendered views, corruption, union, resample to n, normalize; the
// ground truth is the same surface resampled to m in the same frame.
Dataset build_dataset(const SynthConfig& cfg);

// One random object of the category with dimensions in per-category ranges,
// random yaw, and a bounded translation inside the arena.
ObjectSpec random_object_spec(Category c, std::mt19937_64& rng);

std::vector<std::pair<std::string, std::string>> synth_config_kv(
    const SynthConfig& cfg);

}  // namespace r2p
