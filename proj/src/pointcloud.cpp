#include "r2p/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "r2p/error.hpp"
#include "r2p/rng.hpp"

namespace r2p {

std::size_t DepthImage::nonzero_count() const {
  std::size_t n = 0;
  for (double d : depth)
    if (d > 0.0) ++n;
  return n;
}

void DepthImage::validate() const {
  if (width <= 0 || height <= 0 ||
      depth.size() != static_cast<std::size_t>(width) * height)
    throw UsageError("depth image: buffer does not match width*height");
  for (double d : depth)
    if (!(d >= 0.0) || !std::isfinite(d))
      throw UsageError("depth image: depths must be finite and >= 0");
  // R^T R == I and det == +1 within 1e-9.
  Mat3 rtr = pose.rotation.transposed() * pose.rotation;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double want = i == j ? 1.0 : 0.0;
      if (std::abs(rtr(i, j) - want) > 1e-9)
        throw UsageError("depth image: rotation is not orthonormal");
    }
  if (std::abs(pose.rotation.det() - 1.0) > 1e-9)
    throw UsageError("depth image: rotation determinant is not +1");
}

PointCloud depth_to_cloud(const DepthImage& img) {
  if (img.intrinsics.fx == 0.0 || img.intrinsics.fy == 0.0)
    throw UsageError("depth_to_cloud: invalid intrinsics (zero focal length)");
  PointCloud out;
  out.source = CloudSource::view_converted;
  out.points.reserve(img.nonzero_count());
  const Intrinsics& in = img.intrinsics;
  for (int v = 0; v < img.height; ++v)
    for (int u = 0; u < img.width; ++u) {
      double d = img.at(u, v);
      if (d <= 0.0) continue;
      Vec3 cam{(u - in.cx) * d / in.fx, (v - in.cy) * d / in.fy, d};
      out.points.push_back(img.pose.to_world(cam));
    }
  return out;
}

DepthImage project_cloud(const PointCloud& pc, const Intrinsics& intr,
                         const Pose& pose, int width, int height) {
  DepthImage img;
  img.width = width;
  img.height = height;
  img.depth.assign(static_cast<std::size_t>(width) * height, 0.0);
  img.intrinsics = intr;
  img.pose = pose;
  for (const Vec3& p : pc.points) {
    Vec3 cam = pose.to_camera(p);
    if (cam.z <= 0.0) continue;
    int u = static_cast<int>(std::lround(intr.fx * cam.x / cam.z + intr.cx));
    int v = static_cast<int>(std::lround(intr.fy * cam.y / cam.z + intr.cy));
    if (u < 0 || u >= width || v < 0 || v >= height) continue;
    double& slot = img.at(u, v);
    if (slot == 0.0 || cam.z < slot) slot = cam.z;
  }
  return img;
}

PointCloud union_views(const ViewSet& vs) {
  if (vs.views.empty()) throw UsageError("union_views: view set is empty");
  PointCloud out;
  out.source = CloudSource::union_input;
  for (const DepthImage& img : vs.views) {
    PointCloud part = depth_to_cloud(img);
    out.points.insert(out.points.end(), part.points.begin(), part.points.end());
  }
  if (out.points.empty())
    throw UsageError("union_views: all views are empty");
  return out;
}

PointCloud resample(const PointCloud& pc, std::size_t n, std::uint64_t seed) {
  if (pc.empty()) throw UsageError("resample: input cloud is empty");
  auto rng = make_rng(seed);
  PointCloud out;
  out.source = pc.source;
  out.points.reserve(n);
  if (pc.size() >= n) {
    // Partial Fisher-Yates: the first n entries of a seeded shuffle.
    std::vector<std::size_t> idx(pc.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
      out.points.push_back(pc.points[idx[i]]);
    }
  } else {
    out.points = pc.points;
    std::uniform_int_distribution<std::size_t> pick(0, pc.size() - 1);
    while (out.points.size() < n) out.points.push_back(pc.points[pick(rng)]);
  }
  return out;
}

std::pair<PointCloud, NormalizeParams> normalize(const PointCloud& pc) {
  if (pc.empty()) throw UsageError("normalize: input cloud is empty");
  NormalizeParams p;
  Vec3 c{0, 0, 0};
  for (const Vec3& q : pc.points) c += q;
  double inv = 1.0 / static_cast<double>(pc.size());
  p.centroid = c * inv;
  double max_r = 0.0;
  for (const Vec3& q : pc.points) max_r = std::max(max_r, dist(q, p.centroid));
  p.scale = max_r > 0.0 ? max_r : 1.0;  // single-point cloud degenerates to 1
  PointCloud out;
  out.source = pc.source;
  out.points.reserve(pc.size());
  for (const Vec3& q : pc.points) out.points.push_back((q - p.centroid) * (1.0 / p.scale));
  return {std::move(out), p};
}

PointCloud denormalize(const PointCloud& pc, const NormalizeParams& p) {
  PointCloud out;
  out.source = pc.source;
  out.points.reserve(pc.size());
  for (const Vec3& q : pc.points) out.points.push_back(q * p.scale + p.centroid);
  return out;
}

PointCloud apply_normalize(const PointCloud& pc, const NormalizeParams& p) {
  PointCloud out;
  out.source = pc.source;
  out.points.reserve(pc.size());
  for (const Vec3& q : pc.points)
    out.points.push_back((q - p.centroid) * (1.0 / p.scale));
  return out;
}

// ---- file IO ---------------------------------------------------------------

namespace {

[[noreturn]] void parse_fail(const std::string& path, std::size_t line,
                             const std::string& what) {
  throw IoError(path + ":" + std::to_string(line) + ": " + what);
}

PointCloud read_xyz(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open for read: " + path);
  PointCloud pc;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p.x >> p.y >> p.z))
      parse_fail(path, lineno, "expected three coordinates");
    if (!p.finite()) parse_fail(path, lineno, "non-finite coordinate");
    pc.points.push_back(p);
  }
  return pc;
}

void write_xyz(const std::string& path, const PointCloud& pc) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for write: " + path);
  char buf[96];
  for (const Vec3& p : pc.points) {
    std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", p.x, p.y, p.z);
    os << buf;
  }
  if (!os) throw IoError("failed writing " + path);
}

PointCloud read_ply(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open for read: " + path);
  std::string line;
  std::size_t lineno = 0;
  std::size_t vertex_count = 0;
  bool in_header = true, got_ply = false;
  while (in_header && std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (lineno == 1) {
      if (tok != "ply") parse_fail(path, lineno, "missing 'ply' magic");
      got_ply = true;
      continue;
    }
    if (tok == "format") {
      std::string kind;
      ls >> kind;
      if (kind != "ascii") parse_fail(path, lineno, "only ascii PLY supported");
    } else if (tok == "element") {
      std::string name;
      ls >> name >> vertex_count;
      if (name != "vertex")
        parse_fail(path, lineno, "only 'element vertex' supported");
    } else if (tok == "end_header") {
      in_header = false;
    }
  }
  if (!got_ply || in_header) parse_fail(path, lineno, "unterminated PLY header");
  PointCloud pc;
  pc.points.reserve(vertex_count);
  for (std::size_t i = 0; i < vertex_count; ++i) {
    if (!std::getline(is, line)) parse_fail(path, lineno + i + 1, "missing vertex row");
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p.x >> p.y >> p.z))
      parse_fail(path, lineno + i + 1, "expected three coordinates");
    if (!p.finite()) parse_fail(path, lineno + i + 1, "non-finite coordinate");
    pc.points.push_back(p);
  }
  return pc;
}

void write_ply(const std::string& path, const PointCloud& pc) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open for write: " + path);
  os << "ply\n"
     << "format ascii 1.0\n"
     << "element vertex " << pc.size() << "\n"
     << "property float x\n"
     << "property float y\n"
     << "property float z\n"
     << "end_header\n";
  char buf[96];
  for (const Vec3& p : pc.points) {
    std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", p.x, p.y, p.z);
    os << buf;
  }
  if (!os) throw IoError("failed writing " + path);
}

}  // namespace

PointCloud read_cloud(const std::string& path, CloudFormat format) {
  return format == CloudFormat::xyz ? read_xyz(path) : read_ply(path);
}

void write_cloud(const std::string& path, const PointCloud& pc,
                 CloudFormat format) {
  if (format == CloudFormat::xyz)
    write_xyz(path, pc);
  else
    write_ply(path, pc);
}

namespace {
CloudFormat format_from_ext(const std::string& path) {
  auto dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  if (ext == ".xyz") return CloudFormat::xyz;
  if (ext == ".ply") return CloudFormat::ply;
  throw UsageError("unknown cloud extension (want .xyz or .ply): " + path);
}
}  // namespace

PointCloud read_cloud_auto(const std::string& path) {
  return read_cloud(path, format_from_ext(path));
}

void write_cloud_auto(const std::string& path, const PointCloud& pc) {
  write_cloud(path, pc, format_from_ext(path));
}

}  // namespace r2p
