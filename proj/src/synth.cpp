#include "r2p/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "r2p/error.hpp"
#include "r2p/rng.hpp"

namespace r2p {

Category parse_category(const std::string& name) {
  if (name == "box") return Category::box;
  if (name == "l_shape") return Category::l_shape;
  if (name == "chair_like") return Category::chair_like;
  if (name == "desk_like") return Category::desk_like;
  if (name == "car_like") return Category::car_like;
  throw UsageError("unknown category '" + name +
                   "' (want box|l_shape|chair_like|desk_like|car_like)");
}

std::string category_name(Category c) {
  switch (c) {
    case Category::box: return "box";
    case Category::l_shape: return "l_shape";
    case Category::chair_like: return "chair_like";
    case Category::desk_like: return "desk_like";
    case Category::car_like: return "car_like";
  }
  return "?";
}

namespace {

std::size_t dims_required(Category c) {
  switch (c) {
    case Category::box: return 3;         // w, d, h
    case Category::l_shape: return 5;     // w, d, h, arm_w, arm_d
    case Category::chair_like: return 5;  // seat_w, seat_d, leg_h, seat_t, back_h
    case Category::desk_like: return 4;   // top_w, top_d, leg_h, top_t
    case Category::car_like: return 5;    // body_l, body_w, body_h, cabin_l, cabin_h
  }
  return 0;
}

Cuboid make_box(double x0, double x1, double y0, double y1, double z0,
                double z1, bool on_ground) {
  Cuboid c;
  c.center = {(x0 + x1) / 2, (y0 + y1) / 2, (z0 + z1) / 2};
  c.half = {(x1 - x0) / 2, (y1 - y0) / 2, (z1 - z0) / 2};
  c.skip_bottom = on_ground;
  return c;
}

}  // namespace

void ObjectSpec::validate() const {
  std::size_t want = dims_required(category);
  if (dims.size() != want)
    throw UsageError("object spec: " + category_name(category) + " needs " +
                     std::to_string(want) + " dimensions, got " +
                     std::to_string(dims.size()));
  for (double d : dims)
    if (!(d > 0.0) || !std::isfinite(d))
      throw UsageError("object spec: dimensions must be positive and finite");
  if (category == Category::l_shape &&
      (dims[3] >= dims[0] || dims[4] >= dims[1]))
    throw UsageError("object spec: l_shape arm must be smaller than the body");
  if (category == Category::car_like && dims[3] >= dims[0])
    throw UsageError("object spec: cabin must be shorter than the body");
}

std::vector<Cuboid> object_parts(const ObjectSpec& spec) {
  spec.validate();
  const std::vector<double>& d = spec.dims;
  std::vector<Cuboid> parts;
  switch (spec.category) {
    case Category::box: {
      double w = d[0], dd = d[1], h = d[2];
      parts.push_back(make_box(-w / 2, w / 2, -dd / 2, dd / 2, 0, h, true));
      break;
    }
    case Category::l_shape: {
      // Front strip spans the full width; the rear arm sits on the left.
      double w = d[0], dd = d[1], h = d[2], aw = d[3], ad = d[4];
      parts.push_back(make_box(-w / 2, w / 2, -dd / 2, -dd / 2 + ad, 0, h, true));
      parts.push_back(
          make_box(-w / 2, -w / 2 + aw, -dd / 2 + ad, dd / 2, 0, h, true));
      break;
    }
    case Category::chair_like: {
      double sw = d[0], sd = d[1], leg_h = d[2], seat_t = d[3], back_h = d[4];
      double lt = std::min(sw, sd) * 0.12;  // leg thickness
      for (double sx : {-1.0, 1.0})
        for (double sy : {-1.0, 1.0}) {
          double cx = sx * (sw / 2 - lt / 2), cy = sy * (sd / 2 - lt / 2);
          parts.push_back(make_box(cx - lt / 2, cx + lt / 2, cy - lt / 2,
                                   cy + lt / 2, 0, leg_h, true));
        }
      parts.push_back(make_box(-sw / 2, sw / 2, -sd / 2, sd / 2, leg_h,
                               leg_h + seat_t, false));
      double bt = sd * 0.12;  // backrest thickness
      parts.push_back(make_box(-sw / 2, sw / 2, sd / 2 - bt, sd / 2,
                               leg_h + seat_t, leg_h + seat_t + back_h, false));
      break;
    }
    case Category::desk_like: {
      double tw = d[0], td = d[1], leg_h = d[2], top_t = d[3];
      double lt = std::min(tw, td) * 0.08;
      for (double sx : {-1.0, 1.0})
        for (double sy : {-1.0, 1.0}) {
          double cx = sx * (tw / 2 - lt / 2), cy = sy * (td / 2 - lt / 2);
          parts.push_back(make_box(cx - lt / 2, cx + lt / 2, cy - lt / 2,
                                   cy + lt / 2, 0, leg_h, true));
        }
      parts.push_back(make_box(-tw / 2, tw / 2, -td / 2, td / 2, leg_h,
                               leg_h + top_t, false));
      break;
    }
    case Category::car_like: {
      double bl = d[0], bw = d[1], bh = d[2], cl = d[3], ch = d[4];
      parts.push_back(make_box(-bl / 2, bl / 2, -bw / 2, bw / 2, 0, bh, true));
      double cw = bw * 0.85;
      double cab_rear = -bl / 2 + bl * 0.15;  // cabin shifted toward the rear
      parts.push_back(make_box(cab_rear, cab_rear + cl, -cw / 2, cw / 2, bh,
                               bh + ch, false));
      break;
    }
  }
  return parts;
}

namespace {

struct Face {
  // Face = center + s*tangent_u*hu + t*tangent_v*hv, s,t in [-1,1].
  Vec3 center, tu, tv;
  double hu, hv;
  double area() const { return 4.0 * hu * hv; }
};

std::vector<Face> cuboid_faces(const Cuboid& c) {
  std::vector<Face> faces;
  const Vec3& h = c.half;
  // +x / -x
  for (double s : {1.0, -1.0})
    faces.push_back({{c.center.x + s * h.x, c.center.y, c.center.z},
                     {0, 1, 0},
                     {0, 0, 1},
                     h.y,
                     h.z});
  // +y / -y
  for (double s : {1.0, -1.0})
    faces.push_back({{c.center.x, c.center.y + s * h.y, c.center.z},
                     {1, 0, 0},
                     {0, 0, 1},
                     h.x,
                     h.z});
  // +z, then -z unless skipped
  faces.push_back({{c.center.x, c.center.y, c.center.z + h.z},
                   {1, 0, 0},
                   {0, 1, 0},
                   h.x,
                   h.y});
  if (!c.skip_bottom)
    faces.push_back({{c.center.x, c.center.y, c.center.z - h.z},
                     {1, 0, 0},
                     {0, 1, 0},
                     h.x,
                     h.y});
  return faces;
}

Vec3 apply_pose_to_object(const ObjectSpec& spec, const Vec3& p) {
  return Mat3::rot_z(spec.yaw) * p + spec.translation;
}

double box_sdf(const Cuboid& c, const Vec3& p) {
  Vec3 q{std::abs(p.x - c.center.x) - c.half.x,
         std::abs(p.y - c.center.y) - c.half.y,
         std::abs(p.z - c.center.z) - c.half.z};
  Vec3 outside{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
  double inside = std::min(std::max(q.x, std::max(q.y, q.z)), 0.0);
  return outside.norm() + inside;
}

}  // namespace

PointCloud sample_object(const ObjectSpec& spec, std::size_t count,
                         std::uint64_t seed) {
  if (count == 0) throw UsageError("sample_object: count must be positive");
  std::vector<Face> faces;
  for (const Cuboid& c : object_parts(spec)) {
    auto f = cuboid_faces(c);
    faces.insert(faces.end(), f.begin(), f.end());
  }
  std::vector<double> cumulative;
  double total = 0.0;
  for (const Face& f : faces) {
    total += f.area();
    cumulative.push_back(total);
  }

  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PointCloud pc;
  pc.source = CloudSource::ground_truth;
  pc.points.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    double pick = unit(rng) * total;
    std::size_t fi =
        std::lower_bound(cumulative.begin(), cumulative.end(), pick) -
        cumulative.begin();
    if (fi >= faces.size()) fi = faces.size() - 1;
    const Face& f = faces[fi];
    double s = 2.0 * unit(rng) - 1.0;
    double t = 2.0 * unit(rng) - 1.0;
    Vec3 p = f.center + f.tu * (s * f.hu) + f.tv * (t * f.hv);
    pc.points.push_back(apply_pose_to_object(spec, p));
  }
  return pc;
}

double surface_distance(const ObjectSpec& spec, const Vec3& world_point) {
  Vec3 local = Mat3::rot_z(-spec.yaw) * (world_point - spec.translation);
  double best = std::numeric_limits<double>::infinity();
  for (const Cuboid& c : object_parts(spec))
    best = std::min(best, std::abs(box_sdf(c, local)));
  return best;
}

// ---- camera rig ------------------------------------------------------------

Intrinsics rig_intrinsics(const RigConfig& rig) {
  Intrinsics in;
  double f = rig.width / (2.0 * std::tan(rig.fov_deg * std::numbers::pi / 360.0));
  in.fx = f;
  in.fy = f;
  in.cx = rig.width / 2.0;
  in.cy = rig.height / 2.0;
  return in;
}

Pose ring_camera_pose(const RigConfig& rig, std::size_t index, std::size_t k) {
  if (k == 0) throw UsageError("ring_camera_pose: k must be positive");
  double angle = 2.0 * std::numbers::pi * static_cast<double>(index) /
                 static_cast<double>(k);
  double r = rig.square_side / 2.0;
  Vec3 eye{r * std::cos(angle), r * std::sin(angle), rig.camera_height};
  Vec3 forward = (rig.look_at - eye).normalized();
  Vec3 up{0, 0, 1};
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-12) right = {1, 0, 0};  // camera looking straight down
  right = right.normalized();
  Vec3 down = forward.cross(right);  // image v axis, points below the horizon

  Pose pose;
  for (int i = 0; i < 3; ++i) {
    pose.rotation(i, 0) = i == 0 ? right.x : i == 1 ? right.y : right.z;
    pose.rotation(i, 1) = i == 0 ? down.x : i == 1 ? down.y : down.z;
    pose.rotation(i, 2) = i == 0 ? forward.x : i == 1 ? forward.y : forward.z;
  }
  pose.translation = eye;
  return pose;
}

ViewSet render_views(const PointCloud& pc, std::size_t k,
                     const RigConfig& rig) {
  if (pc.empty()) throw UsageError("render_views: input cloud is empty");
  if (k == 0) throw UsageError("render_views: k must be positive");
  ViewSet vs;
  Intrinsics intr = rig_intrinsics(rig);
  for (std::size_t i = 0; i < k; ++i) {
    Pose pose = ring_camera_pose(rig, i, k);
    vs.views.push_back(project_cloud(pc, intr, pose, rig.width, rig.height));
  }
  return vs;
}

// ---- corruption ------------------------------------------------------------

void CorruptionSpec::validate() const {
  if (dropout_rate < 0 || dropout_rate > 1 || ghost_rate < 0 || ghost_rate > 1)
    throw UsageError("corruption: rates must lie in [0,1]");
  if (jitter_sigma < 0 || orientation_error_deg < 0 || shape_warp < 0)
    throw UsageError("corruption: sigmas must be >= 0");
}

CorruptionSpec CorruptionSpec::none() {
  CorruptionSpec c;
  c.dropout_rate = 0;
  c.ghost_rate = 0;
  c.jitter_sigma = 0;
  c.orientation_error_deg = 0;
  c.shape_warp = 0;
  return c;
}

CorruptionSpec CorruptionSpec::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open for read: " + path);
  CorruptionSpec c = CorruptionSpec::none();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError(path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = line.substr(0, eq);
    double value = 0.0;
    try {
      value = std::stod(line.substr(eq + 1));
    } catch (const std::exception&) {
      throw IoError(path + ":" + std::to_string(lineno) + ": bad number");
    }
    if (key == "dropout_rate") c.dropout_rate = value;
    else if (key == "ghost_rate") c.ghost_rate = value;
    else if (key == "jitter_sigma") c.jitter_sigma = value;
    else if (key == "orientation_error_deg") c.orientation_error_deg = value;
    else if (key == "shape_warp") c.shape_warp = value;
    else
      throw IoError(path + ":" + std::to_string(lineno) + ": unknown key '" +
                    key + "'");
  }
  c.validate();
  return c;
}

ViewSet corrupt_views(const ViewSet& vs, const CorruptionSpec& c,
                      std::uint64_t seed) {
  c.validate();
  ViewSet out;
  out.views.reserve(vs.views.size());
  for (std::size_t vi = 0; vi < vs.views.size(); ++vi) {
    DepthImage img = vs.views[vi];
    auto rng = make_rng(derive_seed(seed, vi));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    if (c.orientation_error_deg > 0) {
      std::normal_distribution<double> ang(0.0, c.orientation_error_deg *
                                                    std::numbers::pi / 180.0);
      Vec3 axis{unit(rng) * 2 - 1, unit(rng) * 2 - 1, unit(rng) * 2 - 1};
      if (axis.norm() < 1e-9) axis = {0, 0, 1};
      img.pose.rotation =
          Mat3::axis_angle(axis.normalized(), ang(rng)) * img.pose.rotation;
    }

    if (c.shape_warp > 0) {
      double fu = 1.0 + std::floor(unit(rng) * 2.0);  // 1 or 2 cycles
      double fv = 1.0 + std::floor(unit(rng) * 2.0);
      double pu = unit(rng), pv = unit(rng);
      for (int v = 0; v < img.height; ++v)
        for (int u = 0; u < img.width; ++u) {
          double& d = img.at(u, v);
          if (d <= 0) continue;
          double w = std::sin(2 * std::numbers::pi *
                              (fu * u / img.width + pu)) *
                     std::sin(2 * std::numbers::pi *
                              (fv * v / img.height + pv));
          d = std::max(1e-3, d + c.shape_warp * w);
        }
    }

    if (c.jitter_sigma > 0) {
      std::normal_distribution<double> noise(0.0, c.jitter_sigma);
      for (double& d : img.depth)
        if (d > 0) d = std::max(1e-3, d + noise(rng));
    }

    if (c.ghost_rate > 0) {
      double dmin = std::numeric_limits<double>::infinity(), dmax = 0.0;
      std::vector<std::size_t> empty_px;
      for (std::size_t i = 0; i < img.depth.size(); ++i) {
        if (img.depth[i] > 0) {
          dmin = std::min(dmin, img.depth[i]);
          dmax = std::max(dmax, img.depth[i]);
        } else {
          empty_px.push_back(i);
        }
      }
      if (dmax > 0 && !empty_px.empty()) {
        std::size_t ghosts = static_cast<std::size_t>(
            std::llround(c.ghost_rate * img.nonzero_count()));
        std::uniform_real_distribution<double> range(0.5 * dmin, 1.2 * dmax);
        for (std::size_t gi = 0; gi < ghosts && !empty_px.empty(); ++gi) {
          std::uniform_int_distribution<std::size_t> pick(0, empty_px.size() - 1);
          std::size_t slot = pick(rng);
          img.depth[empty_px[slot]] = range(rng);
          empty_px[slot] = empty_px.back();
          empty_px.pop_back();
        }
      }
    }

    if (c.dropout_rate > 0) {
      for (double& d : img.depth)
        if (d > 0 && unit(rng) < c.dropout_rate) d = 0.0;
    }

    out.views.push_back(std::move(img));
  }
  return out;
}

// ---- dataset assembly --------------------------------------------------------

ObjectSpec random_object_spec(Category c, std::mt19937_64& rng) {
  auto range = [&](double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(rng);
  };
  ObjectSpec spec;
  spec.category = c;
  switch (c) {
    case Category::box:
      spec.dims = {range(0.6, 1.4), range(0.6, 1.4), range(0.5, 1.2)};
      break;
    case Category::l_shape: {
      double w = range(0.8, 1.5), d = range(0.8, 1.5);
      spec.dims = {w, d, range(0.4, 1.0), range(0.3, 0.6 * w),
                   range(0.3, 0.6 * d)};
      break;
    }
    case Category::chair_like:
      spec.dims = {range(0.4, 0.6), range(0.4, 0.6), range(0.35, 0.5),
                   range(0.05, 0.1), range(0.4, 0.6)};
      break;
    case Category::desk_like:
      spec.dims = {range(0.9, 1.5), range(0.5, 0.8), range(0.6, 0.8),
                   range(0.04, 0.08)};
      break;
    case Category::car_like: {
      double bl = range(1.0, 1.6);
      spec.dims = {bl, range(0.5, 0.8), range(0.3, 0.5), range(0.4, 0.7 * bl),
                   range(0.25, 0.45)};
      break;
    }
  }
  spec.yaw = range(0.0, 2.0 * std::numbers::pi);
  spec.translation = {range(-0.3, 0.3), range(-0.3, 0.3), 0.0};
  return spec;
}

Dataset build_dataset(const SynthConfig& cfg) {
  if (cfg.count == 0) throw UsageError("build_dataset: count must be positive");
  if (cfg.categories.empty())
    throw UsageError("build_dataset: need at least one category");
  cfg.corruption.validate();

  Dataset ds;
  ds.samples.reserve(cfg.count);
  for (std::size_t s = 0; s < cfg.count; ++s) {
    std::uint64_t sample_seed = derive_seed(cfg.seed, s);
    auto rng = make_rng(sample_seed);
    Category cat = cfg.categories[s % cfg.categories.size()];
    ObjectSpec spec = random_object_spec(cat, rng);

    PointCloud dense =
        sample_object(spec, cfg.surface_samples, derive_seed(sample_seed, 1));
    PointCloud gt = resample(dense, cfg.m, derive_seed(sample_seed, 2));
    gt.source = CloudSource::ground_truth;

    ViewSet views = render_views(dense, cfg.views, cfg.rig);
    ViewSet corrupted =
        corrupt_views(views, cfg.corruption, derive_seed(sample_seed, 3));
    PointCloud fused = union_views(corrupted);
    PointCloud input = resample(fused, cfg.n, derive_seed(sample_seed, 4));

    // One shared frame per pair: the input's normalization also places the
    // target, so the mapping the model must learn stays well-posed.
    auto [input_norm, params] = normalize(input);
    SamplePair pair;
    pair.input = std::move(input_norm);
    pair.ground_truth = apply_normalize(gt, params);
    ds.samples.push_back(std::move(pair));
  }
  return ds;
}

std::vector<std::pair<std::string, std::string>> synth_config_kv(
    const SynthConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::string cats;
  for (std::size_t i = 0; i < cfg.categories.size(); ++i)
    cats += (i ? "," : "") + category_name(cfg.categories[i]);
  auto num = [](double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  };
  kv.emplace_back("categories", cats);
  kv.emplace_back("count", std::to_string(cfg.count));
  kv.emplace_back("seed", std::to_string(cfg.seed));
  kv.emplace_back("n", std::to_string(cfg.n));
  kv.emplace_back("m", std::to_string(cfg.m));
  kv.emplace_back("views", std::to_string(cfg.views));
  kv.emplace_back("surface_samples", std::to_string(cfg.surface_samples));
  kv.emplace_back("image_width", std::to_string(cfg.rig.width));
  kv.emplace_back("image_height", std::to_string(cfg.rig.height));
  kv.emplace_back("square_side", num(cfg.rig.square_side));
  kv.emplace_back("camera_height", num(cfg.rig.camera_height));
  kv.emplace_back("fov_deg", num(cfg.rig.fov_deg));
  kv.emplace_back("dropout_rate", num(cfg.corruption.dropout_rate));
  kv.emplace_back("ghost_rate", num(cfg.corruption.ghost_rate));
  kv.emplace_back("jitter_sigma", num(cfg.corruption.jitter_sigma));
  kv.emplace_back("orientation_error_deg",
                  num(cfg.corruption.orientation_error_deg));
  kv.emplace_back("shape_warp", num(cfg.corruption.shape_warp));
  return kv;
}

}  // namespace r2p
