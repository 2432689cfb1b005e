#include "r2p/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>

#include "r2p/error.hpp"
#include "r2p/rng.hpp"

namespace r2p {

std::string metric_name(MetricKind k) {
  switch (k) {
    case MetricKind::cd: return "cd";
    case MetricKind::emd: return "emd";
    case MetricKind::cd_emd: return "cd+emd";
  }
  return "?";
}

LossSpec LossSpec::variant(const std::string& name, double alpha) {
  LossSpec s;
  s.alpha = alpha;
  if (name == "l1") {
    s.d1 = MetricKind::cd;
    s.d2 = MetricKind::cd;
  } else if (name == "l2") {
    s.d1 = MetricKind::emd;
    s.d2 = MetricKind::emd;
  } else if (name == "l3") {
    s.d1 = MetricKind::cd_emd;
    s.d2 = MetricKind::cd_emd;
  } else if (name == "l4") {
    s.d1 = MetricKind::cd;
    s.d2 = MetricKind::emd;
  } else if (name == "l5") {
    s.d1 = MetricKind::emd;
    s.d2 = MetricKind::cd;
  } else {
    throw UsageError("unknown loss variant '" + name + "' (want l1..l5)");
  }
  return s;
}

std::string LossSpec::name() const {
  if (d1 == MetricKind::cd && d2 == MetricKind::cd) return "l1";
  if (d1 == MetricKind::emd && d2 == MetricKind::emd) return "l2";
  if (d1 == MetricKind::cd_emd && d2 == MetricKind::cd_emd) return "l3";
  if (d1 == MetricKind::cd && d2 == MetricKind::emd) return "l4";
  if (d1 == MetricKind::emd && d2 == MetricKind::cd) return "l5";
  return "custom";
}

void ModelConfig::validate() const {
  if (n == 0 || m == 0 || h1 == 0 || h2 == 0 || h3 == 0 || h4 == 0 ||
      d1 == 0 || d2 == 0)
    throw UsageError("model config: all sizes must be positive");
}

LinearLayer::LinearLayer(std::size_t din, std::size_t dout,
                         std::mt19937_64& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(din));
  w = Tensor::uniform({din, dout}, -bound, bound, rng, true);
  b = Tensor::uniform({dout}, -bound, bound, rng, true);
}

BatchNormLayer::BatchNormLayer(std::size_t width) {
  gamma = Tensor::full({width}, 1.0, true);
  beta = Tensor::zeros({width}, true);
}

SharedMlp::SharedMlp(std::size_t din, std::size_t hidden, std::size_t dout,
                     bool use_bn, std::mt19937_64& rng)
    : first(din, hidden, rng),
      second(hidden, dout, rng),
      norm(hidden),
      use_batchnorm(use_bn) {}

Tensor SharedMlp::forward(const Tensor& x, bool training) {
  Tensor h = first(x);
  if (use_batchnorm) h = norm(h, training);
  return second(relu(h));
}

Tensor encode(EncoderParams& block, const Tensor& pc, bool training) {
  if (pc.rank() != 3 || pc.dim(2) != 3)
    throw ShapeError("encode: expected [B,N,3] input, got " +
                     shape_str(pc.shape()));
  Tensor point_features = block.mlp1.forward(pc, training);
  Tensor global1 = max_pool_points(point_features).values;
  Tensor combined = concat_global(point_features, global1);
  Tensor refined = block.mlp2.forward(combined, training);
  return max_pool_points(refined).values;
}

Tensor decode(const DecoderParams& block, const Tensor& g, std::size_t m) {
  if (g.rank() != 2)
    throw ShapeError("decode: expected [B,H] global feature, got " +
                     shape_str(g.shape()));
  Tensor h = relu(block.fc1(g));
  h = relu(block.fc2(h));
  Tensor flat = block.fc3(h);  // [B, 3m], no activation: coordinates are unbounded
  return reshape(flat, {g.dim(0), m, 3});
}

R2PModel::R2PModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  auto rng = make_rng(seed);
  const auto& c = config_;
  enc1_.mlp1 = SharedMlp(3, c.h1, c.h2, c.use_batchnorm, rng);
  enc1_.mlp2 = SharedMlp(2 * c.h2, c.h3, c.h4, c.use_batchnorm, rng);
  dec1_.fc1 = LinearLayer(c.h4, c.d1, rng);
  dec1_.fc2 = LinearLayer(c.d1, c.d2, rng);
  dec1_.fc3 = LinearLayer(c.d2, 3 * c.m, rng);
  enc2_.mlp1 = SharedMlp(3, c.h1, c.h2, c.use_batchnorm, rng);
  enc2_.mlp2 = SharedMlp(2 * c.h2, c.h3, c.h4, c.use_batchnorm, rng);
  dec2_.fc1 = LinearLayer(c.h4, c.d1, rng);
  dec2_.fc2 = LinearLayer(c.d1, c.d2, rng);
  dec2_.fc3 = LinearLayer(c.d2, 3 * c.m, rng);
}

std::pair<Tensor, Tensor> R2PModel::forward(const Tensor& p_r, bool training) {
  if (p_r.rank() != 3 || p_r.dim(1) != config_.n || p_r.dim(2) != 3)
    throw ShapeError("forward: expected [B," + std::to_string(config_.n) +
                     ",3] input, got " + shape_str(p_r.shape()));
  Tensor p_m = decode(dec1_, encode(enc1_, p_r, training), config_.m);
  Tensor p_o = decode(dec2_, encode(enc2_, p_m, training), config_.m);
  return {std::move(p_m), std::move(p_o)};
}

std::vector<Tensor*> R2PModel::parameters() {
  std::vector<Tensor*> out;
  auto add_mlp = [&](SharedMlp& mlp) {
    out.push_back(&mlp.first.w);
    out.push_back(&mlp.first.b);
    if (config_.use_batchnorm) {
      out.push_back(&mlp.norm.gamma);
      out.push_back(&mlp.norm.beta);
    }
    out.push_back(&mlp.second.w);
    out.push_back(&mlp.second.b);
  };
  auto add_dec = [&](DecoderParams& dec) {
    for (LinearLayer* l : {&dec.fc1, &dec.fc2, &dec.fc3}) {
      out.push_back(&l->w);
      out.push_back(&l->b);
    }
  };
  add_mlp(enc1_.mlp1);
  add_mlp(enc1_.mlp2);
  add_dec(dec1_);
  add_mlp(enc2_.mlp1);
  add_mlp(enc2_.mlp2);
  add_dec(dec2_);
  return out;
}

std::vector<BatchNormLayer*> R2PModel::batchnorm_layers() {
  return {&enc1_.mlp1.norm, &enc1_.mlp2.norm, &enc2_.mlp1.norm,
          &enc2_.mlp2.norm};
}

// ---- loss -------------------------------------------------------------------

Tensor pointset_distance(const Tensor& pred,
                         const std::vector<PointCloud>& targets,
                         MetricKind kind, std::size_t emd_cap) {
  if (pred.rank() != 3 || pred.dim(2) != 3)
    throw ShapeError("pointset_distance: expected [B,M,3] prediction, got " +
                     shape_str(pred.shape()));
  const std::size_t batch = pred.dim(0);
  if (targets.size() != batch)
    throw ShapeError("pointset_distance: " + std::to_string(targets.size()) +
                     " targets for batch of " + std::to_string(batch));

  auto preds = std::make_shared<std::vector<PointCloud>>(
      tensor_to_clouds(pred, CloudSource::output));
  auto tgts = std::make_shared<std::vector<PointCloud>>(targets);
  auto matchings = std::make_shared<std::vector<Matching>>();

  const bool want_cd = kind != MetricKind::emd;
  const bool want_emd = kind != MetricKind::cd;

  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (want_cd) total += chamfer((*preds)[b], (*tgts)[b]);
    if (want_emd) {
      Matching m = (*preds)[b].size() <= emd_cap
                       ? emd_exact((*preds)[b], (*tgts)[b], emd_cap)
                       : emd_approx((*preds)[b], (*tgts)[b]);
      total += m.cost;
      matchings->push_back(std::move(m));
    }
  }
  double value = total / static_cast<double>(batch);

  const std::size_t npts = pred.dim(1);
  return Tensor::from_op(
      "pointset_distance", {pred}, {1}, {value},
      [&]() -> Tensor::BackwardFn {
        Tensor predc = pred;
        return [predc, preds, tgts, matchings, want_cd, want_emd, batch,
                npts](std::span<const double> g) {
          const double w = g[0] / static_cast<double>(batch);
          std::vector<double> dp(batch * npts * 3, 0.0);
          for (std::size_t b = 0; b < batch; ++b) {
            auto scatter = [&](const std::vector<Vec3>& pg) {
              for (std::size_t i = 0; i < npts; ++i) {
                dp[(b * npts + i) * 3 + 0] += w * pg[i].x;
                dp[(b * npts + i) * 3 + 1] += w * pg[i].y;
                dp[(b * npts + i) * 3 + 2] += w * pg[i].z;
              }
            };
            if (want_cd) scatter(chamfer_grad((*preds)[b], (*tgts)[b]));
            if (want_emd)
              scatter(emd_grad((*preds)[b], (*tgts)[b], (*matchings)[b]));
          }
          predc.accumulate_grad(dp);
        };
      });
}

Tensor r2p_loss(const Tensor& p_m, const Tensor& p_o,
                const std::vector<PointCloud>& ground_truth,
                const LossSpec& spec, std::size_t emd_cap) {
  Tensor first = pointset_distance(p_m, ground_truth, spec.d1, emd_cap);
  Tensor second = pointset_distance(p_o, ground_truth, spec.d2, emd_cap);
  return add(first, scale(second, spec.alpha));
}

// ---- tensor/cloud bridging ---------------------------------------------------

Tensor clouds_to_tensor(const std::vector<PointCloud>& clouds) {
  if (clouds.empty()) throw UsageError("clouds_to_tensor: empty batch");
  const std::size_t n = clouds.front().size();
  std::vector<double> data;
  data.reserve(clouds.size() * n * 3);
  for (const PointCloud& pc : clouds) {
    if (pc.size() != n)
      throw ShapeError("clouds_to_tensor: ragged batch (" +
                       std::to_string(pc.size()) + " vs " + std::to_string(n) +
                       " points)");
    for (const Vec3& p : pc.points) {
      data.push_back(p.x);
      data.push_back(p.y);
      data.push_back(p.z);
    }
  }
  return Tensor::from_data({clouds.size(), n, 3}, std::move(data));
}

PointCloud tensor_row_to_cloud(const Tensor& t, std::size_t b,
                               CloudSource src) {
  if (t.rank() != 3 || t.dim(2) != 3)
    throw ShapeError("tensor_row_to_cloud: expected [B,N,3], got " +
                     shape_str(t.shape()));
  PointCloud pc;
  pc.source = src;
  const std::size_t n = t.dim(1);
  pc.points.reserve(n);
  std::span<const double> d = t.data();
  const double* row = d.data() + b * n * 3;
  for (std::size_t i = 0; i < n; ++i)
    pc.points.push_back({row[i * 3], row[i * 3 + 1], row[i * 3 + 2]});
  return pc;
}

std::vector<PointCloud> tensor_to_clouds(const Tensor& t, CloudSource src) {
  std::vector<PointCloud> out;
  out.reserve(t.dim(0));
  for (std::size_t b = 0; b < t.dim(0); ++b)
    out.push_back(tensor_row_to_cloud(t, b, src));
  return out;
}

// ---- checkpoints --------------------------------------------------------------

namespace {

constexpr char kModelMagic[4] = {'R', '2', 'P', 'M'};
constexpr std::uint32_t kModelVersion = 1;

template <typename T>
void write_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw IoError("truncated checkpoint");
  return v;
}

void load_into(std::istream& is, Tensor& dst, const char* what) {
  Tensor t = load_tensor(is);
  if (t.shape() != dst.shape())
    throw IoError(std::string("checkpoint: ") + what + " has shape " +
                  shape_str(t.shape()) + ", model expects " +
                  shape_str(dst.shape()));
  std::span<double> out = dst.mutable_data();
  std::span<const double> in = t.data();
  std::copy(in.begin(), in.end(), out.begin());
}

}  // namespace

void save_model(std::ostream& os, const R2PModel& model) {
  const ModelConfig& c = model.config_;
  os.write(kModelMagic, 4);
  write_raw(os, kModelVersion);
  for (std::size_t v : {c.n, c.m, c.h1, c.h2, c.h3, c.h4, c.d1, c.d2})
    write_raw<std::uint64_t>(os, v);
  write_raw<std::uint8_t>(os, c.use_batchnorm ? 1 : 0);
  write_raw<std::uint8_t>(os, static_cast<std::uint8_t>(model.loss_spec_.d1));
  write_raw<std::uint8_t>(os, static_cast<std::uint8_t>(model.loss_spec_.d2));
  write_raw<double>(os, model.loss_spec_.alpha);

  auto& self = const_cast<R2PModel&>(model);
  for (Tensor* t : self.parameters()) save_tensor(os, *t);
  for (BatchNormLayer* bn : self.batchnorm_layers()) {
    write_raw<std::uint8_t>(os, bn->state.initialized ? 1 : 0);
    if (bn->state.initialized) {
      save_tensor(os, Tensor::from_data({bn->state.running_mean.size()},
                                        bn->state.running_mean));
      save_tensor(os, Tensor::from_data({bn->state.running_var.size()},
                                        bn->state.running_var));
    }
  }
  if (!os) throw IoError("failed writing checkpoint stream");
}

void save_model(const std::string& path, const R2PModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  save_model(os, model);
}

R2PModel load_model(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kModelMagic, 4) != 0)
    throw IoError("bad checkpoint magic (expected R2PM)");
  std::uint32_t version = read_raw<std::uint32_t>(is);
  if (version != kModelVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));

  ModelConfig c;
  c.n = read_raw<std::uint64_t>(is);
  c.m = read_raw<std::uint64_t>(is);
  c.h1 = read_raw<std::uint64_t>(is);
  c.h2 = read_raw<std::uint64_t>(is);
  c.h3 = read_raw<std::uint64_t>(is);
  c.h4 = read_raw<std::uint64_t>(is);
  c.d1 = read_raw<std::uint64_t>(is);
  c.d2 = read_raw<std::uint64_t>(is);
  c.use_batchnorm = read_raw<std::uint8_t>(is) != 0;

  LossSpec spec;
  std::uint8_t k1 = read_raw<std::uint8_t>(is);
  std::uint8_t k2 = read_raw<std::uint8_t>(is);
  if (k1 > 2 || k2 > 2) throw IoError("checkpoint: invalid loss spec");
  spec.d1 = static_cast<MetricKind>(k1);
  spec.d2 = static_cast<MetricKind>(k2);
  spec.alpha = read_raw<double>(is);

  R2PModel model(c, /*seed=*/0);
  model.loss_spec() = spec;
  for (Tensor* t : model.parameters()) load_into(is, *t, "parameter");
  for (BatchNormLayer* bn : model.batchnorm_layers()) {
    bn->state.initialized = read_raw<std::uint8_t>(is) != 0;
    if (bn->state.initialized) {
      Tensor rm = load_tensor(is);
      Tensor rv = load_tensor(is);
      if (rm.shape() != bn->gamma.shape() || rv.shape() != bn->gamma.shape())
        throw IoError("checkpoint: running statistics shape mismatch");
      bn->state.running_mean.assign(rm.data().begin(), rm.data().end());
      bn->state.running_var.assign(rv.data().begin(), rv.data().end());
    }
  }
  return model;
}

R2PModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for read: " + path);
  return load_model(is);
}

}  // namespace r2p
